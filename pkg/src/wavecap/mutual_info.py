"""Mutual information of the symbol-to-observation channel, three ways.

All three estimators target I(symbol; observation path) for a finite
alphabet with weights alpha:

* `mi_quadrature` integrates the whitened Gaussian mixture exactly with
  tensor Gauss-Hermite rules (reduced dimension at most two);
* `mi_monte_carlo` samples the mixture and averages the log density ratio;
* `mi_duncan` simulates observation paths and accumulates the filter
  identity I = (1/2) E int (|F_t(x)|^2 - |F_hat_t|^2) dt, with the exact
  recursive Bayes posterior over symbols supplying F_hat.

The first two operate on the reduced kernel; the Duncan route runs on the
path model directly, so agreement across the three checks the whole
pipeline.  A quadratic norm bound caps every estimate.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, roots_hermite, softmax

from .gaussian_kernel import (ChannelKernel, NoiseSpec, ReducedKernel,
                              SignalAlphabet, build_kernel, whiten_and_reduce)
from .modal_channel import ChannelOperator, operator_norm

_NODE_LADDER = (24, 48, 96, 192, 384)


class UnsupportedModelError(ValueError):
    """The requested estimator does not cover this noise model."""


@dataclass(frozen=True)
class MIEstimate:
    """A mutual-information estimate in nats, with sampling error if any."""

    value: float
    stderr: float
    method: str
    count: int          # quadrature nodes per axis, samples, or paths
    seed: object = None


def check_weights(alpha, count) -> np.ndarray:
    """Validate that alpha is a probability vector of the right length."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (count,):
        raise ValueError(f"expected {count} weights, got shape {alpha.shape}")
    if np.any(alpha < -1e-12) or abs(alpha.sum() - 1.0) > 1e-9:
        raise ValueError("weights must lie on the probability simplex")
    return np.clip(alpha, 0.0, None)


def _as_reduced(kernel) -> ReducedKernel:
    if isinstance(kernel, ReducedKernel):
        return kernel
    if isinstance(kernel, ChannelKernel):
        return whiten_and_reduce(kernel)
    raise TypeError("expected a ChannelKernel or ReducedKernel")


def _gh_grid(dim, order):
    """Tensor Gauss-Hermite nodes and probabilist-normalized weights."""
    x, w = roots_hermite(order)
    if dim == 1:
        nodes = x[:, None]
        weights = w / math.sqrt(math.pi)
    else:
        nodes = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
        weights = np.outer(w, w).ravel() / math.pi
    return nodes, weights


def symbol_divergences(reduced: ReducedKernel, alpha, order: int) -> np.ndarray:
    """KL(q_k || mixture) per symbol by Gauss-Hermite with `order` nodes/axis.

    The integration variable is centered on each symbol mean in turn, so the
    rule sees a standard Gaussian regardless of how far apart the means are.
    """
    means = reduced.means
    K, dim = means.shape
    if dim == 0:
        return np.zeros(K)
    nodes, weights = _gh_grid(dim, order)
    shifted = math.sqrt(2.0) * nodes                       # (P, d)
    sq = np.sum(shifted**2, axis=1)
    out = np.empty(K)
    for k in range(K):
        y = means[k] + shifted                             # (P, d)
        d2 = (np.sum(y**2, axis=1)[:, None] - 2.0 * y @ means.T
              + np.sum(means**2, axis=1)[None, :])         # (P, K)
        log_mix = logsumexp(-0.5 * d2, axis=1, b=alpha[None, :])
        out[k] = weights @ (-0.5 * sq - log_mix)
    return out


def mi_quadrature(kernel, alpha, tol: float = 1e-8,
                  nodes: int | None = None) -> MIEstimate:
    """Deterministic mutual information of the reduced Gaussian mixture.

    Only available for reduced dimension <= 2; higher-dimensional mean
    geometries should use `mi_monte_carlo`.  The per-axis node count is
    doubled until the value moves by less than `tol`, unless `nodes` pins
    it (useful for finite-difference work where adaptive switching would
    add noise).
    """
    reduced = _as_reduced(kernel)
    alpha = check_weights(alpha, reduced.count)
    if reduced.dim == 0:
        return MIEstimate(0.0, 0.0, "quadrature", 0)
    if reduced.dim > 2:
        raise ValueError("reduced dimension exceeds 2; use mi_monte_carlo")
    if nodes is not None:
        value = float(alpha @ symbol_divergences(reduced, alpha, nodes))
        return MIEstimate(value, 0.0, "quadrature", nodes)
    previous = None
    for order in _NODE_LADDER:
        value = float(alpha @ symbol_divergences(reduced, alpha, order))
        if previous is not None and abs(value - previous) < tol:
            return MIEstimate(value, 0.0, "quadrature", order)
        previous = value
    warnings.warn("Gauss-Hermite ladder exhausted without meeting tolerance")
    return MIEstimate(value, 0.0, "quadrature", _NODE_LADDER[-1])


def mi_monte_carlo(kernel, alpha, samples: int = 100_000,
                   seed=None) -> MIEstimate:
    """Monte Carlo mutual information: sample (k, y), average the log ratio.

    Draws are generated in one vectorized pass in index order, so the
    result is a pure function of the seed.
    """
    reduced = _as_reduced(kernel)
    alpha = check_weights(alpha, reduced.count)
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    means = reduced.means
    ks = rng.choice(reduced.count, size=samples, p=alpha / alpha.sum())
    z = rng.standard_normal((samples, reduced.dim))
    y = means[ks] + z
    d2 = (np.sum(y**2, axis=1)[:, None] - 2.0 * y @ means.T
          + np.sum(means**2, axis=1)[None, :])
    log_mix = logsumexp(-0.5 * d2, axis=1, b=alpha[None, :])
    stats = -0.5 * np.sum(z**2, axis=1) - log_mix
    value = float(np.mean(stats))
    stderr = float(np.std(stats, ddof=1) / math.sqrt(samples))
    return MIEstimate(value, stderr, "monte_carlo", samples, seed)


def mi_duncan(channel: ChannelOperator, alphabet: SignalAlphabet, alpha,
              paths: int = 10_000, seed=None,
              source_noise: NoiseSpec | None = None) -> MIEstimate:
    """Path-space mutual information via the filter energy identity.

    Simulates observation increments under randomly drawn symbols, runs the
    exact recursive Bayes posterior over symbols (per-symbol Girsanov
    increments), and averages

        (1/2) sum_j (|F_j(x_k)|^2 - |F_hat_j|^2) dt,

    where F_hat uses the posterior available at the start of each step, so
    the predictor is causal.  Valid for white observation noise only; a
    nonzero source-noise spec is rejected.
    """
    if source_noise is not None and source_noise.active:
        raise UnsupportedModelError(
            "the filter identity estimator supports white observation noise "
            "only; source noise requires mi_quadrature or mi_monte_carlo")
    K = alphabet.count
    alpha = check_weights(alpha, K)
    if paths < 2:
        raise ValueError("need at least two paths")
    drift = np.stack([channel.apply(x) for x in alphabet.symbols])  # (K, m, N)
    dt = channel.grid.dt
    N = channel.grid.steps
    rng = np.random.default_rng(seed)
    ks = rng.choice(K, size=paths, p=alpha / alpha.sum())
    noise = rng.standard_normal((paths, channel.n_sensors, N))
    increments = drift[ks] * dt + math.sqrt(dt) * noise

    with np.errstate(divide="ignore"):
        log_pi = np.broadcast_to(np.log(alpha), (paths, K)).copy()
    accum = np.zeros(paths)
    for j in range(N):
        Fj = drift[:, :, j]                                # (K, m)
        pi = softmax(log_pi, axis=1)
        f_hat = pi @ Fj                                    # (paths, m)
        f_true = Fj[ks]
        accum += 0.5 * dt * (np.sum(f_true**2, axis=1) - np.sum(f_hat**2, axis=1))
        dy = increments[:, :, j]
        log_pi = log_pi + dy @ Fj.T - 0.5 * dt * np.sum(Fj**2, axis=1)[None, :]
        log_pi -= logsumexp(log_pi, axis=1, keepdims=True)
    value = float(np.mean(accum))
    stderr = float(np.std(accum, ddof=1) / math.sqrt(paths))
    return MIEstimate(value, stderr, "duncan", paths, seed)


def mi_upper_bound(alphabet: SignalAlphabet, alpha,
                   channel: ChannelOperator) -> float:
    """Quadratic capacity bound (1/2) ||M||^2 T * mean input energy.

    ||M|| is the largest singular value of the stacked channel matrix
    (power iteration to 1e-8), which equals the L2-to-L2 norm of the
    discretized input-to-drift map because the dt factors on both sides
    cancel.  The information carried by any input distribution is at most
    half the mean drift energy, so for horizons T >= 1 this dominates
    every estimate.
    """
    alpha = check_weights(alpha, alphabet.count)
    sigma = operator_norm(channel)
    mean_energy = float(alpha @ alphabet.energies)
    return 0.5 * sigma**2 * channel.grid.horizon * mean_energy
