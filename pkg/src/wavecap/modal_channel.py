"""Modal representation of a box waveguide and its causal input-output map.

The scalar field on an axis-aligned box decomposes over eigenfunctions of
the (negative) Laplacian; each retained mode is an independent harmonic
oscillator

    a_k'' + omega_k^2 a_k = f_k(t),      omega_k = c sqrt(lambda_k),

driven through patch couplings.  Inputs are piecewise constant on the time
grid, so per-step propagation (rotation plus particular solution) is exact
and the only modelling error is mode truncation.  Stacking the sensor
readouts of the mode bank over all steps yields a block-lower-triangular
matrix: the discrete causal channel.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

_QUAD_REL = 1e-10


class GeometryError(ValueError):
    """A patch lies outside the domain or has a degenerate support box."""


class ModelMismatchError(ValueError):
    """Inputs belong to a different boundary-condition or size convention."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box [0, L_1] x ... x [0, L_d] with wave speed c."""

    lengths: tuple[float, ...]
    wave_speed: float = 1.0

    def __post_init__(self):
        if not 1 <= len(self.lengths) <= 3:
            raise ValueError("domain must have 1, 2 or 3 axes")
        if any(length <= 0 for length in self.lengths):
            raise ValueError("domain edge lengths must be positive")
        if self.wave_speed <= 0:
            raise ValueError("wave speed must be positive")

    @property
    def dims(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with N steps; inputs are constant per step."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.steps) + 0.5) * self.dt


def axis_eigenfactor(length, bc, index, xi):
    """1-D eigenfactor of the per-axis Sturm-Liouville problem, L2-normalized.

    Dirichlet: sqrt(2/L) sin(j pi xi / L), j >= 1.
    Neumann:   sqrt(1/L) for j = 0, else sqrt(2/L) cos(j pi xi / L).
    """
    xi = np.asarray(xi, dtype=float)
    if bc == DIRICHLET:
        if index < 1:
            raise ValueError("Dirichlet axis indices start at 1")
        return math.sqrt(2.0 / length) * np.sin(index * math.pi * xi / length)
    if bc == NEUMANN:
        if index == 0:
            return np.full_like(xi, math.sqrt(1.0 / length))
        return math.sqrt(2.0 / length) * np.cos(index * math.pi * xi / length)
    raise ValueError(f"unknown boundary condition {bc!r}")


@dataclass(frozen=True)
class ModeSet:
    """The K lowest Laplacian modes, sorted by eigenvalue.

    Ties are broken lexicographically on the integer multi-index so the
    ordering is reproducible across platforms.
    """

    domain: Domain
    bc: str
    indices: np.ndarray      # (K, dims) integer multi-indices
    eigenvalues: np.ndarray  # (K,) Laplacian eigenvalues, ascending
    omegas: np.ndarray       # (K,) angular frequencies c*sqrt(eigenvalue)

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def eigenfunctions(self, points) -> np.ndarray:
        """Evaluate all K eigenfunctions at points of shape (P, dims) -> (K, P)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.domain.dims:
            raise ModelMismatchError("points have wrong dimensionality")
        out = np.ones((self.count, points.shape[0]))
        for axis in range(self.domain.dims):
            length = self.domain.lengths[axis]
            for k in range(self.count):
                out[k] *= axis_eigenfactor(length, self.bc,
                                           int(self.indices[k, axis]),
                                           points[:, axis])
        return out


def build_modes(domain: Domain, bc: str, count: int) -> ModeSet:
    """Enumerate the `count` lowest modes of -Laplacian on the box.

    Separable eigenfunctions: products of per-axis sin (Dirichlet) or cos
    (Neumann, including the constant lambda=0 mode) factors.  Any candidate
    with a per-axis index above `count` is dominated by at least `count`
    single-axis modes, so the search range [.., count] per axis is exhaustive.
    """
    if bc not in (DIRICHLET, NEUMANN):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if count < 1:
        raise ValueError("mode count must be positive")
    lo = 1 if bc == DIRICHLET else 0
    axes = [range(lo, count + 1) for _ in range(domain.dims)]
    candidates = []
    for multi in itertools.product(*axes):
        lam = sum((j * math.pi / length) ** 2
                  for j, length in zip(multi, domain.lengths))
        candidates.append((lam, multi))
    candidates.sort(key=lambda item: (item[0], item[1]))
    picked = candidates[:count]
    eigenvalues = np.array([lam for lam, _ in picked])
    indices = np.array([multi for _, multi in picked], dtype=int)
    omegas = domain.wave_speed * np.sqrt(eigenvalues)
    return ModeSet(domain, bc, indices, eigenvalues, omegas)


# ---------------------------------------------------------------------------
# patch functions and couplings

_PROFILES = ("constant", "bump")


@dataclass(frozen=True)
class PatchFunction:
    """Compactly supported profile on a sub-box of the domain.

    `constant` is the indicator of the box times `amplitude`; `bump` is the
    separable quadratic 4u(1-u) per axis (vanishing at the patch edges),
    again scaled by `amplitude`.
    """

    box: tuple[tuple[float, float], ...]
    profile: str = "constant"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        for lo, hi in self.box:
            if not lo < hi:
                raise GeometryError("patch box must have lo < hi on every axis")

    def values(self, points) -> np.ndarray:
        """Profile values at points of shape (P, dims); zero off the box."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(points.shape[0], self.amplitude)
        for axis, (lo, hi) in enumerate(self.box):
            xi = points[:, axis]
            inside = (xi >= lo) & (xi <= hi)
            out = np.where(inside, out, 0.0)
            if self.profile == "bump":
                u = np.clip((xi - lo) / (hi - lo), 0.0, 1.0)
                out = out * 4.0 * u * (1.0 - u)
        return out


def _check_box_inside(box, domain: Domain):
    if len(box) != domain.dims:
        raise GeometryError("patch box dimensionality does not match domain")
    for (lo, hi), length in zip(box, domain.lengths):
        if lo < 0.0 or hi > length:
            raise GeometryError("patch box extends outside the domain")


def axis_patch_integral(length, bc, index, lo, hi, profile):
    """Integral of the 1-D eigenfactor against one axis factor of a patch.

    Constant profiles integrate in closed form; the bump factor 4u(1-u) goes
    through adaptive quadrature at relative tolerance 1e-10.
    """
    if profile == "constant":
        if bc == DIRICHLET:
            w = index * math.pi / length
            return math.sqrt(2.0 / length) * (math.cos(w * lo) - math.cos(w * hi)) / w
        if index == 0:
            return math.sqrt(1.0 / length) * (hi - lo)
        w = index * math.pi / length
        return math.sqrt(2.0 / length) * (math.sin(w * hi) - math.sin(w * lo)) / w

    width = hi - lo

    def integrand(xi):
        u = (xi - lo) / width
        return axis_eigenfactor(length, bc, index, xi) * 4.0 * u * (1.0 - u)

    value, _ = quad(integrand, lo, hi, epsabs=1e-14, epsrel=_QUAD_REL, limit=200)
    return value


def patch_mode_integral(patch: PatchFunction, modes: ModeSet, k: int) -> float:
    """L2 inner product of eigenfunction k with the patch profile."""
    value = patch.amplitude
    for axis, (lo, hi) in enumerate(patch.box):
        value *= axis_patch_integral(modes.domain.lengths[axis], modes.bc,
                                     int(modes.indices[k, axis]), lo, hi,
                                     patch.profile)
    return value


def distributed_couplings(modes: ModeSet, inputs, sensors):
    """Couplings of volume patches to the mode bank.

    Returns (B, G): B[k, i] drives mode k from input patch i, G[j, k] reads
    mode k into sensor j.  Both are plain L2 pairings of patch profiles with
    eigenfunctions.
    """
    for patch in list(inputs) + list(sensors):
        _check_box_inside(patch.box, modes.domain)
    B = np.empty((modes.count, len(inputs)))
    G = np.empty((len(sensors), modes.count))
    for k in range(modes.count):
        for i, patch in enumerate(inputs):
            B[k, i] = patch_mode_integral(patch, modes, k)
        for j, patch in enumerate(sensors):
            G[j, k] = patch_mode_integral(patch, modes, k)
    return B, G


# ---------------------------------------------------------------------------
# exact oscillator propagation

@dataclass
class BankTrajectory:
    """Sampled trajectories of a bank of forced oscillators."""

    values: np.ndarray                    # (K, N+1) amplitudes at grid nodes
    velocities: np.ndarray                # (K, N+1)
    midpoint_values: np.ndarray | None    # (K, N) amplitudes at step midpoints
    step_integrals: np.ndarray | None     # (K, N) exact per-step integrals of a


def _propagation_coeffs(omegas, h):
    """Exact one-step update coefficients for a'' + w^2 a = f, f constant.

    Returns (cos_wh, sin_over_w, minus_w_sin, gain_a, int_f) where

        a+  = a cos(wh) + v sin(wh)/w + f (1-cos(wh))/w^2
        v+  = -a w sin(wh) + v cos(wh) + f sin(wh)/w
        int = a sin(wh)/w + v (1-cos(wh))/w^2 + f (h - sin(wh)/w)/w^2

    with the w -> 0 limits h, h^2/2 and h^3/6 substituted where needed.
    """
    w = np.asarray(omegas, dtype=float)
    wh = w * h
    cos_wh = np.cos(wh)
    sin_wh = np.sin(wh)
    zero = w == 0.0
    wsafe = np.where(zero, 1.0, w)
    sin_over_w = np.where(zero, h, sin_wh / wsafe)
    gain_a = np.where(zero, 0.5 * h * h, (1.0 - cos_wh) / wsafe**2)
    minus_w_sin = -w * sin_wh
    int_f = np.where(zero, h**3 / 6.0, (h - sin_over_w) / wsafe**2)
    return cos_wh, sin_over_w, minus_w_sin, gain_a, int_f


def oscillator_bank_response(omegas, forcing, grid: TimeGrid, a0=None, v0=None,
                             midpoints=False, step_integrals=False) -> BankTrajectory:
    """Propagate a'' + w^2 a = f for a bank of modes, exactly per step.

    Parameters
    ----------
    omegas : (K,) angular frequencies, >= 0.
    forcing : (K, N) per-step constant forcing samples.
    grid : TimeGrid with N steps.
    a0, v0 : optional (K,) initial state, zero by default.
    midpoints, step_integrals : also record amplitudes at step midpoints
        and the exact integral of a over each step.

    The free update is a rotation, so energy w^2 a^2 + v^2 is conserved to
    roundoff over arbitrarily many steps.
    """
    omegas = np.asarray(omegas, dtype=float)
    forcing = np.asarray(forcing, dtype=float)
    K = omegas.shape[0]
    N = grid.steps
    if forcing.shape != (K, N):
        raise ModelMismatchError("forcing must have shape (modes, steps)")
    if np.any(omegas < 0):
        raise ValueError("omegas must be nonnegative")
    h = grid.dt
    cos_wh, sin_over_w, minus_w_sin, gain_a, int_f = _propagation_coeffs(omegas, h)
    if midpoints:
        cos_h2, sin_over_w_h2, _, gain_a_h2, _ = _propagation_coeffs(omegas, 0.5 * h)

    a = np.zeros(K) if a0 is None else np.array(a0, dtype=float)
    v = np.zeros(K) if v0 is None else np.array(v0, dtype=float)
    values = np.empty((K, N + 1))
    velocities = np.empty((K, N + 1))
    mids = np.empty((K, N)) if midpoints else None
    ints = np.empty((K, N)) if step_integrals else None
    values[:, 0] = a
    velocities[:, 0] = v
    for j in range(N):
        f = forcing[:, j]
        if midpoints:
            mids[:, j] = a * cos_h2 + v * sin_over_w_h2 + f * gain_a_h2
        if step_integrals:
            ints[:, j] = a * sin_over_w + v * gain_a + f * int_f
        a, v = (a * cos_wh + v * sin_over_w + f * gain_a,
                a * minus_w_sin + v * cos_wh + f * sin_over_w)
        values[:, j + 1] = a
        velocities[:, j + 1] = v
    return BankTrajectory(values, velocities, mids, ints)


def oscillator_response(omega, forcing, grid: TimeGrid, a0=0.0, adot0=0.0):
    """Exact response of a single mode; returns (a, adot) at the grid nodes."""
    traj = oscillator_bank_response(np.array([float(omega)]),
                                    np.asarray(forcing, dtype=float)[None, :],
                                    grid, a0=np.array([a0]), v0=np.array([adot0]))
    return traj.values[0], traj.velocities[0]


def energy(amplitudes, velocities, modes: ModeSet) -> float:
    """Modal energy sum_k (omega_k^2 a_k^2 + adot_k^2); conserved when unforced."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    if amplitudes.shape != (modes.count,) or velocities.shape != (modes.count,):
        raise ModelMismatchError("state size does not match the mode set")
    return float(np.sum(modes.omegas**2 * amplitudes**2 + velocities**2))


# ---------------------------------------------------------------------------
# the causal channel matrix

@dataclass(frozen=True)
class ChannelOperator:
    """Discrete causal map from stacked input samples to stacked drift samples.

    Row block j holds the m sensor readouts at time t_{j+1} (end of step j);
    column block l holds the n input samples applied on [t_l, t_{l+1}).
    Stacking is time-major: entry (j*m + s, l*n + i).  Causality makes the
    matrix block lower triangular, with nonzero diagonal blocks because an
    input acts over the whole step it is applied on.
    """

    matrix: np.ndarray
    n_inputs: int
    n_sensors: int
    grid: TimeGrid

    def stack_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_inputs, self.grid.steps):
            raise ModelMismatchError("input must have shape (n_inputs, steps)")
        return x.T.ravel()

    def unstack_output(self, stacked) -> np.ndarray:
        return np.asarray(stacked, dtype=float).reshape(self.grid.steps,
                                                        self.n_sensors).T

    def apply(self, x) -> np.ndarray:
        """Drift samples F_{t_j}(x) as an (n_sensors, N) array."""
        return self.unstack_output(self.matrix @ self.stack_input(x))


def assemble_channel_matrix(modes: ModeSet, B, G, grid: TimeGrid) -> ChannelOperator:
    """Build the block-Toeplitz causal channel matrix.

    Column (l, i) is the sensor readout of the mode bank driven by unit
    forcing B[:, i] on step l, evaluated at all later node times; time
    invariance means only the response to a step-0 kick is ever propagated.
    """
    B = np.asarray(B, dtype=float)
    G = np.asarray(G, dtype=float)
    if B.shape[0] != modes.count or G.shape[1] != modes.count:
        raise ModelMismatchError("coupling shapes do not match the mode set")
    K, n = B.shape
    m = G.shape[0]
    N = grid.steps
    M = np.zeros((m * N, n * N))
    row_block = np.arange(m)
    for i in range(n):
        forcing = np.zeros((K, N))
        forcing[:, 0] = B[:, i]
        traj = oscillator_bank_response(modes.omegas, forcing, grid)
        resp = (G @ traj.values[:, 1:]).T        # (N, m): readout at t_1..t_N
        for l in range(N):
            rows = (np.arange(l, N)[:, None] * m + row_block).ravel()
            M[rows, l * n + i] = resp[: N - l].ravel()
    return ChannelOperator(M, n, m, grid)


def drift_samples(channel: ChannelOperator, x) -> np.ndarray:
    """Noise-free sensor drift F_{t_j}(x), shape (n_sensors, N)."""
    return channel.apply(x)


def simulate_output_paths(channel: ChannelOperator, x, paths: int, seed) -> np.ndarray:
    """Sample observation increments dy_j = F_j(x) dt + sqrt(dt) g_j.

    Returns shape (paths, n_sensors, N).  Reproducible for a given seed.
    """
    drift = channel.apply(x)
    dt = channel.grid.dt
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((paths, channel.n_sensors, channel.grid.steps))
    return drift[None, :, :] * dt + math.sqrt(dt) * noise


def simulate_output(channel: ChannelOperator, x, seed) -> np.ndarray:
    """One observation-increment path, shape (n_sensors, N)."""
    return simulate_output_paths(channel, x, 1, seed)[0]


def operator_norm(channel: ChannelOperator, tol=1e-8, max_iter=10_000) -> float:
    """Largest singular value of the channel matrix by power iteration."""
    M = channel.matrix
    if not np.any(M):
        return 0.0
    MtM = M.T @ M
    rng = np.random.default_rng(1234)        # fixed start: deterministic output
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = MtM @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_sigma = math.sqrt(norm)
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-300):
            return new_sigma
        sigma = new_sigma
    return sigma
