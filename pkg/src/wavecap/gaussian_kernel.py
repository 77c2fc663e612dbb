"""Gaussian channel kernels induced by the causal channel operator.

Conditioned on the transmitted symbol x, the stacked observation increments
are Gaussian:

    dy_j = F_j(x) dt + noise,   Cov(noise) = dt I  (+ Q2 for source noise),

so the channel is a finite Gaussian mixture once an input alphabet is
fixed.  Means are stored as drift samples F_j(x); every consumer applies
the dt increment scaling consistently, which happens in one place
(`whiten_and_reduce`).  Because all symbols share the covariance, mutual
information only depends on the whitened mean geometry, which lives in a
space of dimension at most (#symbols - 1) after span reduction.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cholesky, solve_triangular

from .modal_channel import (ChannelOperator, ModeSet, ModelMismatchError,
                            TimeGrid, _propagation_coeffs)


@dataclass(frozen=True)
class SignalAlphabet:
    """Finite set of input symbols, each an (n, N) array of step samples."""

    symbols: np.ndarray   # (K_sym, n, N)
    dt: float

    def __post_init__(self):
        if self.symbols.ndim != 3 or self.symbols.shape[0] < 1:
            raise ValueError("alphabet needs at least one (n, N) symbol")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        flat = self.symbols.reshape(self.symbols.shape[0], -1)
        for a in range(len(flat)):
            for b in range(a + 1, len(flat)):
                if np.array_equal(flat[a], flat[b]):
                    raise ValueError(f"symbols {a} and {b} are identical arrays")

    @property
    def count(self) -> int:
        return self.symbols.shape[0]

    @property
    def energies(self) -> np.ndarray:
        """Per-symbol signal energies sum over channels and steps of x^2 dt."""
        return np.sum(self.symbols**2, axis=(1, 2)) * self.dt


@dataclass(frozen=True)
class NoiseSpec:
    """Per-mode source-noise gains and driving covariance diagonal."""

    gains: np.ndarray    # (K_modes,) velocity-equation noise gains sigma_k
    q0_diag: np.ndarray  # (K_modes,) spectral weights of the driving noise

    def __post_init__(self):
        if self.gains.shape != self.q0_diag.shape:
            raise ValueError("gains and q0_diag must have matching shapes")
        if np.any(self.q0_diag < 0):
            raise ValueError("driving covariance diagonal must be nonnegative")

    @property
    def active(self) -> bool:
        return bool(np.any(self.gains != 0.0))


@dataclass(frozen=True)
class ChannelKernel:
    """Gaussian mixture representation of the channel for a fixed alphabet.

    means[k] stacks the drift samples F_j(x_k) time-major; `cov` is the
    covariance of the observation increments (None means the white-noise
    form dt I).  `energies` carries the per-symbol input energies for
    power-constrained optimization.
    """

    means: np.ndarray              # (K_sym, m*N)
    dt: float
    energies: np.ndarray           # (K_sym,)
    cov: np.ndarray | None = None  # (m*N, m*N) or None

    @property
    def count(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class ReducedKernel:
    """Whitened, span-reduced kernel: means in <= (K-1) dims, unit covariance."""

    means: np.ndarray    # (K_sym, d)
    energies: np.ndarray
    dt: float

    @property
    def count(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def kernel_means(channel: ChannelOperator, alphabet: SignalAlphabet) -> np.ndarray:
    """Stacked drift samples M x_k for every symbol, shape (K_sym, m*N)."""
    n, N = channel.n_inputs, channel.grid.steps
    if alphabet.symbols.shape[1:] != (n, N):
        raise ModelMismatchError("alphabet symbols do not match the channel shape")
    return np.stack([channel.matrix @ channel.stack_input(x)
                     for x in alphabet.symbols])


def build_kernel(channel: ChannelOperator, alphabet: SignalAlphabet,
                 q2: np.ndarray | None = None) -> ChannelKernel:
    """Assemble the Gaussian kernel; pass q2 to include source noise."""
    cov = None
    if q2 is not None:
        mN = channel.n_sensors * channel.grid.steps
        if q2.shape != (mN, mN):
            raise ModelMismatchError("q2 does not match the stacked output shape")
        cov = channel.grid.dt * np.eye(mN) + q2
    return ChannelKernel(means=kernel_means(channel, alphabet),
                         dt=channel.grid.dt, energies=alphabet.energies, cov=cov)


def noise_covariance_q1(grid: TimeGrid, n_sensors: int) -> np.ndarray:
    """White observation noise on increments: dt I of size (m*N, m*N)."""
    return grid.dt * np.eye(n_sensors * grid.steps)


# ---------------------------------------------------------------------------
# source-noise covariance

def _hk_split(omega, nodes):
    """Separable split h(t - r) = sum_a u_a(t) v_a(r) of the kick response.

    h(s) is the integrated velocity-impulse response of one mode:
    (1 - cos(omega s)) / omega^2, or s^2/2 for the zero mode.  Returns
    (u at nodes, v as callables evaluated later at quadrature points).
    """
    if omega > 0:
        u = np.stack([np.full_like(nodes, 1.0 / omega**2),
                      np.cos(omega * nodes) / omega**2,
                      np.sin(omega * nodes) / omega**2])
        v = [lambda r: np.ones_like(r),
             lambda r: -np.cos(omega * r),
             lambda r: -np.sin(omega * r)]
    else:
        u = np.stack([0.5 * nodes**2, nodes, np.ones_like(nodes)])
        v = [lambda r: np.ones_like(r),
             lambda r: -r,
             lambda r: 0.5 * r**2]
    return u, v


def q2_node_kernel(modes: ModeSet, noise: NoiseSpec, G, grid: TimeGrid,
                   quad_order: int = 12) -> np.ndarray:
    """Covariance of the integrated source-noise response at the grid nodes.

    Entry block (i, j) is Cov(eta(t_i), eta(t_j)) for the m-sensor process
    eta(t) = integral to t of the sensor readout of the stochastic
    convolution; per mode the r-integral of h(t_i - r) h(t_j - r) over
    [0, min(t_i, t_j)] is evaluated by per-step Gauss-Legendre quadrature
    of a rank-3 separable split (relative accuracy far beyond 1e-8 at the
    default order).  Shape (m*(N+1), m*(N+1)), time-major.
    """
    G = np.asarray(G, dtype=float)
    if G.shape[1] != modes.count or noise.gains.shape != (modes.count,):
        raise ModelMismatchError("coupling or noise shapes do not match the modes")
    m = G.shape[0]
    N = grid.steps
    nodes = grid.nodes()
    gl_x, gl_w = leggauss(quad_order)
    # quadrature points per step, shape (N, Q)
    half = 0.5 * grid.dt
    pts = nodes[:-1, None] + half * (gl_x[None, :] + 1.0)
    wts = half * gl_w

    min_idx = np.minimum(np.arange(N + 1)[:, None], np.arange(N + 1)[None, :])
    out = np.zeros((m * (N + 1), m * (N + 1)))
    for k in range(modes.count):
        scale = noise.gains[k] ** 2 * noise.q0_diag[k]
        if scale == 0.0:
            continue
        u, v_funcs = _hk_split(modes.omegas[k], nodes)
        v = np.stack([f(pts) for f in v_funcs])            # (3, N, Q)
        # cumulative integrals W_ab(t_s) = int_0^{t_s} v_a v_b dr, (3, 3, N+1)
        per_step = np.einsum("anq,bnq,q->abn", v, v, wts)
        W = np.concatenate([np.zeros((3, 3, 1)), np.cumsum(per_step, axis=2)],
                           axis=2)
        lattice = np.einsum("ai,bj,abij->ij", u, u, W[:, :, min_idx])
        out += scale * np.kron(lattice, np.outer(G[:, k], G[:, k]))
    return out


def source_noise_covariance_q2(modes: ModeSet, noise: NoiseSpec, G,
                               grid: TimeGrid) -> np.ndarray:
    """Source-noise covariance on the observation increments, (m*N, m*N).

    Second difference of the node kernel over both time indices, then
    symmetrized and clipped to positive semidefinite.  A warning is issued
    if clipping removes an eigenvalue below -1e-10 * trace, which would
    indicate an actual assembly problem rather than roundoff.
    """
    m = np.asarray(G).shape[0]
    N = grid.steps
    node = q2_node_kernel(modes, noise, G, grid)
    C = node.reshape(N + 1, m, N + 1, m)
    inc = (C[1:, :, 1:, :] - C[1:, :, :-1, :]
           - C[:-1, :, 1:, :] + C[:-1, :, :-1, :])
    q2 = inc.reshape(m * N, m * N)
    q2 = 0.5 * (q2 + q2.T)
    eigvals, eigvecs = np.linalg.eigh(q2)
    trace = float(np.trace(q2))
    if eigvals.min() < -1e-10 * max(trace, 1e-300):
        warnings.warn("source-noise covariance has a significantly negative "
                      f"eigenvalue {eigvals.min():.3e}; clipping to PSD")
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * eigvals) @ eigvecs.T


def simulate_stochastic_convolution(modes: ModeSet, noise: NoiseSpec, G,
                                    grid: TimeGrid, paths: int,
                                    seed) -> np.ndarray:
    """Monte Carlo reference for `q2_node_kernel`: sampled eta at the nodes.

    Each mode is propagated with its exact discrete transition (rotation of
    (a, v) plus exact update of the running integral b) and an exact
    per-step Gaussian increment for the augmented state (a, v, b); the
    increment covariance is computed once per mode by Gauss-Legendre
    quadrature of the impulse-response outer product.  Returns
    (paths, m, N+1) samples of eta(t) = G b(t).
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[0]
    N = grid.steps
    h = grid.dt
    rng = np.random.default_rng(seed)
    out = np.zeros((paths, m, N + 1))
    gl_x, gl_w = leggauss(30)
    uu = 0.5 * h * (gl_x + 1.0)
    ww = 0.5 * h * gl_w
    for k in range(modes.count):
        scale2 = noise.gains[k] ** 2 * noise.q0_diag[k]
        if scale2 == 0.0:
            continue
        w = modes.omegas[k]
        cos_wh, sin_over_w, minus_w_sin, gain_a, _ = _propagation_coeffs(
            np.array([w]), h)
        if w > 0:
            phi = np.stack([np.sin(w * uu) / w, np.cos(w * uu),
                            (1.0 - np.cos(w * uu)) / w**2])
        else:
            phi = np.stack([uu, np.ones_like(uu), 0.5 * uu**2])
        Qd = scale2 * np.einsum("aq,bq,q->ab", phi, phi, ww)
        L = np.linalg.cholesky(Qd + 1e-300 * np.eye(3))
        a = np.zeros(paths)
        v = np.zeros(paths)
        b = np.zeros(paths)
        traj_b = np.empty((paths, N + 1))
        traj_b[:, 0] = 0.0
        for j in range(N):
            kick = rng.standard_normal((paths, 3)) @ L.T
            b = b + a * sin_over_w[0] + v * gain_a[0] + kick[:, 2]
            a, v = (a * cos_wh[0] + v * sin_over_w[0] + kick[:, 0],
                    a * minus_w_sin[0] + v * cos_wh[0] + kick[:, 1])
            traj_b[:, j + 1] = b
        out += traj_b[:, None, :] * G[:, k][None, :, None]
    return out


# ---------------------------------------------------------------------------
# whitening and span reduction

def whiten_and_reduce(kernel: ChannelKernel, rank_tol: float = 1e-9) -> ReducedKernel:
    """Whiten the mixture and project the means onto the span of differences.

    With a shared covariance the mutual information of the mixture depends
    only on the whitened means' geometry, so the kernel reduces to at most
    (count - 1) dimensions.  Pairwise Mahalanobis distances are preserved to
    1e-10 and verified before returning; identical means reduce to dimension
    zero.  A singular covariance is regularized by +1e-12 trace I with a
    warning.
    """
    increments = kernel.means * kernel.dt
    if kernel.cov is None:
        white = increments / math.sqrt(kernel.dt)
    else:
        cov = kernel.cov
        try:
            L = cholesky(cov, lower=True)
        except np.linalg.LinAlgError:
            warnings.warn("covariance is singular on the mean span; "
                          "regularizing by 1e-12 * trace")
            jitter = 1e-12 * max(float(np.trace(cov)), 1e-300)
            L = cholesky(cov + jitter * np.eye(cov.shape[0]), lower=True)
        white = solve_triangular(L, increments.T, lower=True).T

    full_dist = _pairwise_distances(white)
    centered = white - white[0]
    left, singulars, _ = np.linalg.svd(centered, full_matrices=False)
    if singulars.size and singulars[0] > 0:
        dim = int(np.sum(singulars > rank_tol * singulars[0]))
    else:
        dim = 0
    reduced = left[:, :dim] * singulars[:dim]
    err = np.max(np.abs(_pairwise_distances(reduced) - full_dist), initial=0.0)
    if err > 1e-10 * max(1.0, full_dist.max(initial=0.0)):
        raise RuntimeError(f"span reduction distorted distances by {err:.3e}")
    return ReducedKernel(means=reduced, energies=kernel.energies, dt=kernel.dt)


def _pairwise_distances(points) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=2))


def girsanov_log_rnd(channel: ChannelOperator, x, y_increments) -> float:
    """Log Radon-Nikodym derivative of the drifted law against pure noise.

    For observed increments dy and candidate input x this is the discrete
    Girsanov sum  sum_j <F_j(x), dy_j> - (1/2) sum_j |F_j(x)|^2 dt; its
    exponential has unit mean under the drift-free measure.
    """
    drift = channel.apply(x)
    y_increments = np.asarray(y_increments, dtype=float)
    if y_increments.shape != drift.shape:
        raise ModelMismatchError("increments must have shape (n_sensors, steps)")
    dt = channel.grid.dt
    return float(np.sum(drift * y_increments) - 0.5 * np.sum(drift**2) * dt)
