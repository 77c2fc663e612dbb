"""Mutual information estimators: quadrature, Monte Carlo, filter identity."""

import math

import numpy as np
import pytest

from oracles import binary_gaussian_mi, gaussian_mixture_mi_grid
from wavecap import (DIRICHLET, Domain, NoiseSpec, PatchFunction,
                     ReducedKernel, SignalAlphabet, TimeGrid,
                     UnsupportedModelError, assemble_channel_matrix,
                     build_kernel, build_modes, check_weights,
                     distributed_couplings, mi_duncan, mi_monte_carlo,
                     mi_quadrature, mi_upper_bound,
                     source_noise_covariance_q2)


def _channel(N=128, T=2.0, scale=10.0):
    modes = build_modes(Domain((math.pi,)), DIRICHLET, 4)
    grid = TimeGrid(T, N)
    B, G = distributed_couplings(modes, [PatchFunction(((0.4, 1.1),))],
                                 [PatchFunction(((1.8, 2.6),))])
    return modes, grid, G, assemble_channel_matrix(modes, B * scale, G, grid)


def _line_kernel(offsets, energies=None):
    means = np.asarray(offsets, dtype=float)[:, None]
    if energies is None:
        energies = np.ones(len(means))
    return ReducedKernel(means=means, energies=np.asarray(energies, float),
                         dt=0.01)


# ---------------------------------------------------------------------------
# weight validation

def test_check_weights_accepts_and_clips():
    out = check_weights([0.5, 0.5 + 1e-13, -1e-13], 3)
    assert np.all(out >= 0.0)


def test_check_weights_rejects_bad_input():
    with pytest.raises(ValueError):
        check_weights([0.5, 0.5], 3)
    with pytest.raises(ValueError):
        check_weights([0.7, 0.4], 2)
    with pytest.raises(ValueError):
        check_weights([1.1, -0.1], 2)


# ---------------------------------------------------------------------------
# quadrature

def test_quadrature_single_symbol_zero():
    _, grid, _, ch = _channel(N=16)
    kern = build_kernel(ch, SignalAlphabet(np.ones((1, 1, 16)), grid.dt))
    est = mi_quadrature(kern, [1.0])
    assert est.value == 0.0 and est.stderr == 0.0


def test_quadrature_degenerate_weights_zero():
    est = mi_quadrature(_line_kernel([-1.5, 1.5]), [1.0, 0.0])
    assert abs(est.value) <= 1e-12


def test_quadrature_matches_binary_oracle():
    est = mi_quadrature(_line_kernel([-1.5, 1.5]), [0.3, 0.7])
    oracle = binary_gaussian_mi(3.0, (0.3, 0.7))
    np.testing.assert_allclose(est.value, oracle, atol=1e-8)


def test_quadrature_matches_planar_oracle():
    means = np.array([[0.0, 0.0], [2.2, 0.0], [0.8, 1.7]])
    alpha = np.array([0.5, 0.2, 0.3])
    kern = ReducedKernel(means=means, energies=np.ones(3), dt=0.01)
    est = mi_quadrature(kern, alpha)
    oracle = gaussian_mixture_mi_grid(means, alpha)
    np.testing.assert_allclose(est.value, oracle, atol=1e-8)


def test_quadrature_rejects_high_dimension():
    means = np.vstack([np.zeros(3), np.eye(3) * 2.0])
    kern = ReducedKernel(means=means, energies=np.ones(4), dt=0.01)
    with pytest.raises(ValueError, match="mi_monte_carlo"):
        mi_quadrature(kern, np.full(4, 0.25))


def test_quadrature_fixed_nodes():
    kern = _line_kernel([-1.0, 1.0])
    pinned = mi_quadrature(kern, [0.5, 0.5], nodes=96)
    adaptive = mi_quadrature(kern, [0.5, 0.5])
    assert pinned.count == 96
    np.testing.assert_allclose(pinned.value, adaptive.value, atol=1e-9)


# ---------------------------------------------------------------------------
# Monte Carlo

def test_monte_carlo_zero_dimension_exact_zero():
    kern = ReducedKernel(means=np.zeros((2, 0)), energies=np.ones(2), dt=0.01)
    est = mi_monte_carlo(kern, [0.5, 0.5], samples=100, seed=0)
    assert est.value == 0.0


def test_monte_carlo_matches_quadrature():
    kern = _line_kernel([-1.0, 1.0])
    quad = mi_quadrature(kern, [0.4, 0.6])
    mc = mi_monte_carlo(kern, [0.4, 0.6], samples=50_000, seed=11)
    assert mc.stderr > 0
    assert abs(mc.value - quad.value) <= 3 * mc.stderr


def test_monte_carlo_seed_determinism():
    kern = _line_kernel([-1.0, 0.5, 2.0])
    a = mi_monte_carlo(kern, [0.3, 0.3, 0.4], samples=5_000, seed=42)
    b = mi_monte_carlo(kern, [0.3, 0.3, 0.4], samples=5_000, seed=42)
    c = mi_monte_carlo(kern, [0.3, 0.3, 0.4], samples=5_000, seed=43)
    assert a.value == b.value
    assert a.value != c.value


def test_monte_carlo_rejects_tiny_sample():
    with pytest.raises(ValueError):
        mi_monte_carlo(_line_kernel([-1.0, 1.0]), [0.5, 0.5], samples=1)


def test_monte_carlo_with_source_noise_covariance():
    modes, grid, G, ch = _channel(N=24)
    noise = NoiseSpec(np.full(4, 0.4), np.ones(4))
    q2 = source_noise_covariance_q2(modes, noise, G, grid)
    base = np.ones((1, 24))
    alph = SignalAlphabet(np.stack([base, -base]), grid.dt)
    kern = build_kernel(ch, alph, q2=q2)
    quad = mi_quadrature(kern, [0.5, 0.5])
    mc = mi_monte_carlo(kern, [0.5, 0.5], samples=50_000, seed=3)
    assert abs(mc.value - quad.value) <= 3 * mc.stderr
    # source noise strictly degrades the white-noise information
    white = mi_quadrature(build_kernel(ch, alph), [0.5, 0.5])
    assert quad.value < white.value


# ---------------------------------------------------------------------------
# filter identity

def test_duncan_single_symbol_exact_zero():
    _, grid, _, ch = _channel(N=16)
    alph = SignalAlphabet(np.ones((1, 1, 16)), grid.dt)
    est = mi_duncan(ch, alph, [1.0], paths=50, seed=0)
    assert est.value == 0.0 and est.stderr == 0.0


def test_duncan_degenerate_weights_zero():
    _, grid, _, ch = _channel(N=16)
    symbols = np.stack([np.zeros((1, 16)), np.ones((1, 16))])
    est = mi_duncan(ch, SignalAlphabet(symbols, grid.dt), [1.0, 0.0],
                    paths=50, seed=0)
    assert est.value == 0.0


def test_duncan_matches_quadrature():
    _, grid, _, ch = _channel()
    symbols = np.stack([np.ones((1, 128)), -0.4 * np.ones((1, 128))])
    alph = SignalAlphabet(symbols, grid.dt)
    alpha = [0.5, 0.5]
    quad = mi_quadrature(build_kernel(ch, alph), alpha)
    dun = mi_duncan(ch, alph, alpha, paths=10_000, seed=21)
    assert abs(dun.value - quad.value) <= 3 * dun.stderr


def test_duncan_rejects_source_noise():
    _, grid, _, ch = _channel(N=16)
    symbols = np.stack([np.zeros((1, 16)), np.ones((1, 16))])
    alph = SignalAlphabet(symbols, grid.dt)
    noise = NoiseSpec(np.array([0.3]), np.array([1.0]))
    with pytest.raises(UnsupportedModelError):
        mi_duncan(ch, alph, [0.5, 0.5], paths=50, seed=0, source_noise=noise)
    # inactive spec is fine
    quiet = NoiseSpec(np.zeros(1), np.ones(1))
    mi_duncan(ch, alph, [0.5, 0.5], paths=50, seed=0, source_noise=quiet)


def test_duncan_seed_determinism():
    _, grid, _, ch = _channel(N=32)
    symbols = np.stack([np.ones((1, 32)), -np.ones((1, 32))])
    alph = SignalAlphabet(symbols, grid.dt)
    a = mi_duncan(ch, alph, [0.5, 0.5], paths=200, seed=5)
    b = mi_duncan(ch, alph, [0.5, 0.5], paths=200, seed=5)
    assert a.value == b.value


# ---------------------------------------------------------------------------
# quadratic bound

def test_upper_bound_zero_energy():
    _, grid, _, ch = _channel(N=16)
    alph = SignalAlphabet(np.zeros((1, 1, 16)), grid.dt)
    assert mi_upper_bound(alph, [1.0], ch) == 0.0


def test_upper_bound_zero_channel():
    modes = build_modes(Domain((math.pi,)), DIRICHLET, 2)
    grid = TimeGrid(2.0, 16)
    ch = assemble_channel_matrix(modes, np.zeros((2, 1)), np.ones((1, 2)), grid)
    alph = SignalAlphabet(np.ones((1, 1, 16)), grid.dt)
    assert mi_upper_bound(alph, [1.0], ch) == 0.0


def test_upper_bound_dominates_estimates():
    _, grid, _, ch = _channel()
    symbols = np.stack([np.ones((1, 128)), -0.4 * np.ones((1, 128))])
    alph = SignalAlphabet(symbols, grid.dt)
    alpha = [0.5, 0.5]
    bound = mi_upper_bound(alph, alpha, ch)
    quad = mi_quadrature(build_kernel(ch, alph), alpha)
    assert quad.value <= bound


def test_estimates_respect_entropy_range():
    kern = _line_kernel([-1.2, 0.3, 1.9])
    alpha = [0.2, 0.5, 0.3]
    for est in (mi_quadrature(kern, alpha),
                mi_monte_carlo(kern, alpha, samples=20_000, seed=9)):
        assert est.value >= -3 * est.stderr
        assert est.value <= math.log(3) + 3 * est.stderr
