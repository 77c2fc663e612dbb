"""Capacity-achieving source weights over a finite alphabet.

The mutual information J(alpha) of a shared-covariance Gaussian mixture is
concave in the weights, and its gradient along simplex directions is given
by the per-symbol divergences L_alpha(x_k) = KL(q_k || mixture).  Capacity
under an average-energy budget is therefore a concave program over the
polytope {alpha >= 0, sum alpha = 1, sum alpha_k e_k <= budget}, solved
here by projected gradient ascent with backtracking, cross-checked by a
Blahut-Arimoto style multiplicative update.  Optimality of any candidate
is certified by the first-order criterion

    max over feasible beta of  sum_k (beta_k - alpha_k) L_alpha(x_k) <= tol,

evaluated exactly over the polytope vertices.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mutual_info import _as_reduced, check_weights, symbol_divergences

_STEP_FLOOR = 1e-8
_NODE_LADDER = (24, 48, 96, 192, 384)


@dataclass(frozen=True)
class FeasibleSet:
    """Simplex intersected with an optional average-energy halfspace."""

    energies: np.ndarray
    power_budget: float | None = None

    def __post_init__(self):
        if self.energies.ndim != 1 or len(self.energies) < 1:
            raise ValueError("energies must be a nonempty vector")
        if np.any(self.energies < 0):
            raise ValueError("energies must be nonnegative")
        if self.power_budget is not None:
            if self.power_budget <= 0:
                raise ValueError("power budget must be positive")
            if float(self.energies.min()) > self.power_budget:
                raise ValueError("feasible set is empty: every symbol exceeds "
                                 "the power budget")

    @property
    def count(self) -> int:
        return len(self.energies)

    def contains(self, alpha, tol: float = 1e-8) -> bool:
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha < -tol) or abs(alpha.sum() - 1.0) > tol:
            return False
        if self.power_budget is None:
            return True
        return float(alpha @ self.energies) <= self.power_budget * (1 + tol) + tol


def feasible_vertices(feasible: FeasibleSet) -> np.ndarray:
    """All vertices of the feasible polytope, shape (V, K).

    Without a budget these are the unit vectors.  With one, they are the
    affordable unit vectors plus the points where simplex edges cross the
    energy hyperplane.
    """
    K = feasible.count
    eye = np.eye(K)
    if feasible.power_budget is None:
        return eye
    b = feasible.power_budget
    e = feasible.energies
    rows = [eye[k] for k in range(K) if e[k] <= b]
    for k in range(K):
        if e[k] > b:
            continue
        for j in range(K):
            if e[j] <= b:
                continue
            t = (b - e[k]) / (e[j] - e[k])
            if t > 0.0:
                rows.append((1.0 - t) * eye[k] + t * eye[j])
    return np.array(rows)


def project_simplex(raw) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    raw = np.asarray(raw, dtype=float)
    srt = np.sort(raw)[::-1]
    css = np.cumsum(srt) - 1.0
    rho = np.nonzero(srt * np.arange(1, len(raw) + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(raw - theta, 0.0)


def project_feasible(raw, feasible: FeasibleSet) -> np.ndarray:
    """Euclidean projection onto the feasible polytope.

    The simplex projection handles the base case; if the result violates
    the energy budget, the energy multiplier is found by bisection with a
    simplex projection nested inside (the projection of raw - lam * e onto
    the simplex spends monotonically less energy as lam grows).  The KKT
    conditions of the projection are verified to 1e-10 before returning.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (feasible.count,):
        raise ValueError("point size does not match the feasible set")
    alpha = project_simplex(raw)
    lam = 0.0
    if feasible.power_budget is not None:
        b = feasible.power_budget
        e = feasible.energies
        if float(alpha @ e) > b:
            lam_lo, lam_hi = 0.0, 1.0
            while float(project_simplex(raw - lam_hi * e) @ e) > b:
                lam_hi *= 2.0
                if lam_hi > 2.0**200:
                    raise RuntimeError("energy multiplier search diverged")
            for _ in range(200):
                mid = 0.5 * (lam_lo + lam_hi)
                if float(project_simplex(raw - mid * e) @ e) > b:
                    lam_lo = mid
                else:
                    lam_hi = mid
            lam = lam_hi
            alpha = project_simplex(raw - lam * e)
    _check_projection_kkt(raw, alpha, lam, feasible)
    return alpha


def _check_projection_kkt(raw, alpha, lam, feasible, tol=1e-10):
    scale = max(1.0, float(np.max(np.abs(raw))))
    if abs(alpha.sum() - 1.0) > tol or np.any(alpha < -tol):
        raise RuntimeError("projection left the simplex")
    shifted = raw if lam == 0.0 else raw - lam * feasible.energies
    active = alpha > tol
    # stationarity: alpha = max(shifted - theta, 0) for a single theta
    theta = shifted[active] - alpha[active]
    if theta.size and theta.max() - theta.min() > tol * scale:
        raise RuntimeError("projection stationarity violated")
    if theta.size and np.any(shifted[~active] > theta.max() + tol * scale):
        raise RuntimeError("projection complementarity violated")
    if feasible.power_budget is not None:
        used = float(alpha @ feasible.energies)
        if used > feasible.power_budget + tol * max(1.0, feasible.power_budget):
            raise RuntimeError("projection violated the power budget")


def kkt_gap(marginals, alpha, feasible: FeasibleSet) -> float:
    """First-order optimality gap max over vertices of <L, beta - alpha>."""
    marginals = np.asarray(marginals, dtype=float)
    verts = feasible_vertices(feasible)
    return float(np.max(verts @ marginals) - alpha @ marginals)


# ---------------------------------------------------------------------------
# marginal information

def _adaptive_divergences(reduced, alpha, tol):
    previous = None
    for order in _NODE_LADDER:
        L = symbol_divergences(reduced, alpha, order)
        if previous is not None and np.max(np.abs(L - previous)) < tol:
            return L, order
        previous = L
    return L, _NODE_LADDER[-1]


def marginal_information(kernel, alpha, method: str = "quadrature", *,
                         tol: float = 1e-8, nodes: int | None = None,
                         samples: int = 100_000, seed=None) -> np.ndarray:
    """Per-symbol divergences L_alpha(x_k) = KL(q_k || alpha-mixture).

    These are the ascent directions of J: along any simplex direction d,
    the directional derivative of J at alpha is sum_k d_k L_alpha(x_k), and
    the identity sum_k alpha_k L_alpha(x_k) = J(alpha) ties them to the
    mutual information itself.
    """
    reduced = _as_reduced(kernel)
    alpha = check_weights(alpha, reduced.count)
    if method == "quadrature":
        if reduced.dim > 2:
            raise ValueError("reduced dimension exceeds 2; use method='mc'")
        if nodes is not None:
            return symbol_divergences(reduced, alpha, nodes)
        L, _ = _adaptive_divergences(reduced, alpha, tol)
        return L
    if method == "mc":
        ev = _MarginalEvaluator(reduced, method="mc", samples=samples, seed=seed)
        L, _ = ev.marginals(alpha)
        return L
    raise ValueError(f"unknown method {method!r}")


class _MarginalEvaluator:
    """Evaluates marginals with frozen randomness (common random numbers).

    Freezing the Monte Carlo draws makes J(alpha) a deterministic concave
    surface, so backtracking comparisons and the KKT stopping rule behave
    exactly as in the quadrature case.
    """

    def __init__(self, reduced, method="quadrature", samples=100_000,
                 seed=None, tol=1e-8):
        self.reduced = reduced
        self.method = method
        self.stderr_scale = 0.0
        if method == "quadrature":
            if reduced.dim > 2:
                raise ValueError("reduced dimension exceeds 2; use method='mc'")
            uniform = np.full(reduced.count, 1.0 / reduced.count)
            _, self.order = _adaptive_divergences(reduced, uniform, tol)
        elif method == "mc":
            rng = np.random.default_rng(seed)
            self.draws = rng.standard_normal((samples, reduced.dim))
            means = reduced.means
            # |w_k + z - w_j|^2 expanded once; the cross term depends on k
            self.d2_base = np.sum(self.draws**2, axis=1)
        else:
            raise ValueError(f"unknown method {method!r}")

    def marginals(self, alpha):
        """Returns (L, stderr) with stderr zero for quadrature."""
        reduced = self.reduced
        if self.method == "quadrature":
            L = symbol_divergences(reduced, alpha, self.order)
            return L, np.zeros_like(L)
        means = reduced.means
        K = reduced.count
        S = len(self.draws)
        L = np.empty(K)
        se = np.empty(K)
        self._stats = np.empty((S, K))
        for k in range(K):
            y = means[k] + self.draws
            d2 = (np.sum(y**2, axis=1)[:, None] - 2.0 * y @ means.T
                  + np.sum(means**2, axis=1)[None, :])
            log_mix = logsumexp(-0.5 * d2, axis=1, b=alpha[None, :])
            stats = -0.5 * self.d2_base - log_mix
            self._stats[:, k] = stats
            L[k] = np.mean(stats)
            se[k] = np.std(stats, ddof=1) / math.sqrt(S)
        return L, se

    def value_stderr(self, alpha):
        """Standard error of J = alpha . L for the most recent marginals."""
        if self.method == "quadrature":
            return 0.0
        mixed = self._stats @ alpha
        return float(np.std(mixed, ddof=1) / math.sqrt(len(mixed)))


@dataclass
class CapacityResult:
    """Outcome of a capacity optimization run."""

    weights: np.ndarray
    capacity: float
    marginals: np.ndarray
    kkt_gap: float
    iterations: int
    converged: bool
    method: str
    stderr: float = 0.0
    seed: object = None
    trace: list = field(default_factory=list)  # rows (iter, J, kkt_gap, step)


def _effective_tol(tol, method, stderr_vec):
    if method == "quadrature":
        return tol
    return max(tol, 3.0 * float(np.max(stderr_vec, initial=0.0)))


def optimize_capacity_gradient(kernel, feasible: FeasibleSet, *,
                               tol: float = 1e-6, max_iter: int = 10_000,
                               step0: float = 0.5, method: str = "quadrature",
                               samples: int = 100_000, seed=None,
                               alpha0=None) -> CapacityResult:
    """Projected gradient ascent on the source weights.

    The update alpha <- project(alpha + eps * L) backtracks eps from step0,
    halving until the objective does not decrease (exact for quadrature,
    common-random-number exact for Monte Carlo), with a floor of 1e-8.
    Stops when the vertex KKT gap drops below tol (for Monte Carlo, below
    three standard errors if that is larger) or after max_iter updates.
    """
    reduced = _as_reduced(kernel)
    if feasible.count != reduced.count:
        raise ValueError("feasible set size does not match the kernel")
    ev = _MarginalEvaluator(reduced, method=method, samples=samples, seed=seed)
    if alpha0 is None:
        alpha0 = np.full(reduced.count, 1.0 / reduced.count)
    alpha = project_feasible(np.asarray(alpha0, dtype=float), feasible)
    L, se = ev.marginals(alpha)
    J = float(alpha @ L)
    gap = kkt_gap(L, alpha, feasible)
    eff_tol = _effective_tol(tol, method, se)
    trace = [(0, J, gap, 0.0)]
    iterations = 0
    while iterations < max_iter and gap > eff_tol:
        step = step0
        accepted = False
        while step >= _STEP_FLOOR:
            cand = project_feasible(alpha + step * L, feasible)
            Lc, sec = ev.marginals(cand)
            Jc = float(cand @ Lc)
            if Jc >= J - 1e-11 * (1.0 + abs(J)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        iterations += 1
        alpha, L, se, J = cand, Lc, sec, Jc
        gap = kkt_gap(L, alpha, feasible)
        eff_tol = _effective_tol(tol, method, se)
        trace.append((iterations, J, gap, step))
    stderr = 0.0 if method == "quadrature" else ev.value_stderr(alpha)
    return CapacityResult(weights=alpha, capacity=J, marginals=L, kkt_gap=gap,
                          iterations=iterations, converged=bool(gap <= eff_tol),
                          method=method, stderr=stderr, seed=seed, trace=trace)


def optimize_blahut_arimoto(kernel, feasible: FeasibleSet, *,
                            tol: float = 1e-6, max_iter: int = 10_000,
                            method: str = "quadrature",
                            samples: int = 100_000, seed=None,
                            alpha0=None) -> CapacityResult:
    """Multiplicative capacity iteration alpha_k <- alpha_k exp(L_k) / Z.

    With an energy budget the update is tilted by exp(-lam * e_k), with the
    smallest lam >= 0 restoring feasibility found by bisection (the energy
    spent by the tilted update is monotone in lam).  Starts uniform unless
    alpha0 is given; zero weights stay zero under the multiplicative
    update, so starts on a face explore only that face.
    """
    reduced = _as_reduced(kernel)
    if feasible.count != reduced.count:
        raise ValueError("feasible set size does not match the kernel")
    ev = _MarginalEvaluator(reduced, method=method, samples=samples, seed=seed)
    if alpha0 is None:
        alpha0 = np.full(reduced.count, 1.0 / reduced.count)
    alpha = project_feasible(np.asarray(alpha0, dtype=float), feasible)
    trace = []
    iterations = 0
    converged = False
    e = feasible.energies
    b = feasible.power_budget
    while True:
        L, se = ev.marginals(alpha)
        J = float(alpha @ L)
        gap = kkt_gap(L, alpha, feasible)
        eff_tol = _effective_tol(tol, method, se)
        trace.append((iterations, J, gap, 0.0))
        if gap <= eff_tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        iterations += 1

        def tilted(lam):
            with np.errstate(divide="ignore"):
                logw = np.where(alpha > 0, np.log(np.maximum(alpha, 1e-300)) + L
                                - lam * e, -np.inf)
            logw = logw - logsumexp(logw)
            return np.exp(logw)

        new = tilted(0.0)
        if b is not None and float(new @ e) > b:
            lam_lo, lam_hi = 0.0, 1.0
            while float(tilted(lam_hi) @ e) > b:
                lam_hi *= 2.0
                if lam_hi > 2.0**200:
                    raise RuntimeError("energy tilt search diverged")
            for _ in range(200):
                mid = 0.5 * (lam_lo + lam_hi)
                if float(tilted(mid) @ e) > b:
                    lam_lo = mid
                else:
                    lam_hi = mid
            new = tilted(lam_hi)
        alpha = new
    stderr = 0.0 if method == "quadrature" else ev.value_stderr(alpha)
    return CapacityResult(weights=alpha, capacity=J, marginals=L, kkt_gap=gap,
                          iterations=iterations, converged=converged,
                          method=method, stderr=stderr, seed=seed, trace=trace)


@dataclass(frozen=True)
class OptimalityReport:
    """First-order certificate for a candidate weight vector."""

    max_violation: float
    passed: bool
    tol: float
    marginals: np.ndarray
    best_vertex: np.ndarray


def verify_optimality(kernel, alpha, feasible: FeasibleSet,
                      tol: float = 1e-5, method: str = "quadrature", *,
                      samples: int = 100_000, seed=None) -> OptimalityReport:
    """Check max over feasible beta of <L_alpha, beta - alpha> <= tol.

    The maximum of a linear functional over the polytope is attained at a
    vertex, so the check is exact given the marginals.  By concavity the
    violation bounds the capacity shortfall from below, so PASS certifies
    alpha up to tol while any suboptimal candidate of shortfall above tol
    must FAIL.
    """
    reduced = _as_reduced(kernel)
    alpha = check_weights(alpha, reduced.count)
    if not feasible.contains(alpha):
        raise ValueError("candidate weights are not feasible")
    L = marginal_information(reduced, alpha, method=method,
                             samples=samples, seed=seed)
    verts = feasible_vertices(feasible)
    scores = verts @ L
    best = int(np.argmax(scores))
    violation = float(scores[best] - alpha @ L)
    return OptimalityReport(max_violation=violation, passed=bool(violation <= tol),
                            tol=tol, marginals=L, best_vertex=verts[best])
