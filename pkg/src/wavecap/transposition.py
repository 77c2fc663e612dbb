"""Boundary-driven fields by transposition.

A field driven through its Dirichlet boundary data is too rough for the
usual variational solve; its space-time Fourier coefficients are instead
read off from adjoint problems.  For each basis function f of L2((0,T) x
domain), solve the backward wave problem with source f and zero terminal
data, and pair the normal derivative of that solution with the boundary
data.  With zero initial conditions the coefficient of f is exactly

    c_f = -c^2 * integral over (0,T) x boundary of (d psi_f / d nu) u,

and the field is sum_f c_f f.  Everything here runs on the modal bank of
`modal_channel`: the backward solves reduce to reversed oscillator runs and
the boundary pairing reduces to endpoint derivatives of the Dirichlet
eigenfactors.

Time discretization: functions of time are represented by their values on
the N step midpoints and paired with the step-constant inner product
sum_l f_l g_l dt.  Midpoint-sampled cosines are exactly orthogonal in that
inner product, so the default time basis is exactly orthonormal.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .modal_channel import (DIRICHLET, Domain, GeometryError, ModeSet,
                            ModelMismatchError, TimeGrid, axis_patch_integral,
                            oscillator_bank_response)


@dataclass(frozen=True)
class BoundaryPatch:
    """Source patch on one face of the box.

    `axis`/`side` select the face (side "lo" is xi_axis = 0, "hi" is
    xi_axis = L_axis).  `box` gives the support intervals along the
    remaining axes, empty in one dimension where a face is a single point
    and the patch is just a weight.
    """

    axis: int
    side: str
    box: tuple[tuple[float, float], ...] = ()
    profile: str = "constant"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.side not in ("lo", "hi"):
            raise ValueError("side must be 'lo' or 'hi'")
        if self.profile not in ("constant", "bump"):
            raise ValueError(f"unknown profile {self.profile!r}")
        for lo, hi in self.box:
            if not lo < hi:
                raise GeometryError("patch box must have lo < hi on every axis")

    def values(self, face_points) -> np.ndarray:
        """Profile values at points on the face, shape (P, dims-1)."""
        face_points = np.asarray(face_points, dtype=float)
        if face_points.ndim == 1:
            face_points = face_points[:, None]
        out = np.full(face_points.shape[0], self.amplitude)
        for axis, (lo, hi) in enumerate(self.box):
            xi = face_points[:, axis]
            inside = (xi >= lo) & (xi <= hi)
            out = np.where(inside, out, 0.0)
            if self.profile == "bump":
                u = np.clip((xi - lo) / (hi - lo), 0.0, 1.0)
                out = out * 4.0 * u * (1.0 - u)
        return out


def _normal_derivative_endpoint(length, index, side):
    """d/dnu of the Dirichlet eigenfactor at a face of its axis."""
    scale = math.sqrt(2.0 / length) * index * math.pi / length
    if side == "hi":
        return scale * (-1.0) ** index
    return -scale


def boundary_couplings(modes: ModeSet, patches) -> np.ndarray:
    """Modal forcing weights of Dirichlet boundary patches.

    Returns b of shape (K, n) with b[k, i] = -c^2 * integral over the face
    of (d psi_k / d nu) phi_i.  Feeding b into the oscillator bank turns
    boundary data into the same forced-mode dynamics as a volume source, so
    the output of this function plugs straight into
    `modal_channel.assemble_channel_matrix`.
    """
    if modes.bc != DIRICHLET:
        raise ModelMismatchError("boundary couplings require Dirichlet modes")
    domain = modes.domain
    c2 = domain.wave_speed**2
    b = np.empty((modes.count, len(patches)))
    for i, patch in enumerate(patches):
        if not 0 <= patch.axis < domain.dims:
            raise GeometryError("patch axis outside the domain")
        other_axes = [a for a in range(domain.dims) if a != patch.axis]
        if len(patch.box) != len(other_axes):
            raise GeometryError("face box must cover the non-normal axes")
        for (lo, hi), axis in zip(patch.box, other_axes):
            if lo < 0.0 or hi > domain.lengths[axis]:
                raise GeometryError("patch box extends outside the face")
        for k in range(modes.count):
            value = patch.amplitude * _normal_derivative_endpoint(
                domain.lengths[patch.axis], int(modes.indices[k, patch.axis]),
                patch.side)
            for (lo, hi), axis in zip(patch.box, other_axes):
                value *= axis_patch_integral(domain.lengths[axis], modes.bc,
                                             int(modes.indices[k, axis]),
                                             lo, hi, patch.profile)
            b[k, i] = -c2 * value
    return b


def boundary_data_norm(signals, patches, domain: Domain, grid: TimeGrid) -> float:
    """L2 norm of u(t, xi) = sum_i x_i(t) phi_i(xi) over (0,T) x boundary.

    Assumes the patches have disjoint supports.  In one dimension the
    surface measure is counting measure on the two endpoints.
    """
    signals = np.asarray(signals, dtype=float)
    total = 0.0
    for i, patch in enumerate(patches):
        surf = patch.amplitude**2
        for lo, hi in patch.box:
            if patch.profile == "constant":
                surf *= hi - lo
            else:
                width = hi - lo
                surf *= quad(lambda xi: (4.0 * ((xi - lo) / width)
                                         * (1.0 - (xi - lo) / width))**2,
                             lo, hi, epsrel=1e-10)[0]
        total += surf * float(np.sum(signals[i] ** 2)) * grid.dt
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# backward (adjoint) solves

@dataclass(frozen=True)
class AdjointProblem:
    """Backward wave problem: source given modally, zero terminal data.

    `source_modal` holds midpoint samples of the modal source coefficients,
    shape (K, N); the solution satisfies psi(T) = psi'(T) = 0 and the same
    homogeneous Dirichlet condition as the mode set.
    """

    source_modal: np.ndarray


@dataclass
class AdjointSolution:
    """Backward solve output on the grid; terminal columns are exactly zero."""

    values: np.ndarray          # (K, N+1) modal coefficients at nodes
    derivatives: np.ndarray     # (K, N+1) time derivatives at nodes
    step_integrals: np.ndarray  # (K, N) exact per-step integrals


def _backward_bank(omegas, source, grid: TimeGrid) -> AdjointSolution:
    # time-reversed forward solve: q(s) = psi(T - s) obeys the same
    # oscillator equation with the forcing order reversed
    reversed_forcing = np.asarray(source, dtype=float)[:, ::-1]
    traj = oscillator_bank_response(omegas, reversed_forcing, grid,
                                    step_integrals=True)
    return AdjointSolution(values=traj.values[:, ::-1].copy(),
                           derivatives=-traj.velocities[:, ::-1].copy(),
                           step_integrals=traj.step_integrals[:, ::-1].copy())


def adjoint_solve(problem: AdjointProblem, modes: ModeSet,
                  grid: TimeGrid) -> AdjointSolution:
    """Solve psi'' + omega^2 psi = f backward from zero terminal data.

    Implemented as a time-reversed forward solve, so the exact per-step
    propagator applies unchanged and the terminal state is exactly zero.
    """
    source = np.asarray(problem.source_modal, dtype=float)
    if source.shape != (modes.count, grid.steps):
        raise ModelMismatchError("source must have shape (modes, steps)")
    return _backward_bank(modes.omegas, source, grid)


# ---------------------------------------------------------------------------
# space-time bases and the transposed solution

def cosine_time_basis(grid: TimeGrid, count: int) -> np.ndarray:
    """Orthonormal cosine basis of L2(0, T), sampled at step midpoints.

    Row r holds tau_r at the N midpoints: tau_0 = 1/sqrt(T) and
    tau_r = sqrt(2/T) cos(r pi t / T).  For count <= N these rows are
    exactly orthonormal in the step-constant inner product.
    """
    if not 1 <= count <= grid.steps:
        raise ValueError("time basis size must be between 1 and the step count")
    t = grid.midpoints()
    basis = np.empty((count, grid.steps))
    basis[0] = 1.0 / math.sqrt(grid.horizon)
    for r in range(1, count):
        basis[r] = math.sqrt(2.0 / grid.horizon) * np.cos(r * math.pi * t / grid.horizon)
    return basis


def _time_gram(time_basis, dt):
    return (time_basis * dt) @ time_basis.T


def transposed_solution(signals, patches, time_basis, modes: ModeSet,
                        grid: TimeGrid) -> np.ndarray:
    """Fourier coefficients of the boundary-driven field, via adjoint solves.

    Parameters
    ----------
    signals : (n, N) per-patch boundary signals, constant per step.
    patches : boundary patches defining u(t, xi) = sum_i x_i(t) phi_i(xi).
    time_basis : (R, N) midpoint samples of time profiles; the space-time
        basis is the tensor set {psi_k tau_r}.
    modes, grid : Dirichlet mode set and time grid.

    Returns coefficients c of shape (K, R).  Never touches the forward
    problem: each coefficient is the boundary pairing of u with the normal
    derivative of a backward solve.  If the time profiles are not
    orthonormal a warning is issued and the Gram system is solved instead.
    """
    signals = np.asarray(signals, dtype=float)
    time_basis = np.asarray(time_basis, dtype=float)
    R, N = time_basis.shape
    if N != grid.steps:
        raise ModelMismatchError("time basis must be sampled on the step midpoints")
    b = boundary_couplings(modes, patches)
    if signals.shape != (len(patches), N):
        raise ModelMismatchError("signals must have shape (patches, steps)")
    g = b @ signals                                   # (K, N) modal forcing

    # one backward pass for all (mode, time-profile) pairs
    K = modes.count
    omegas = np.repeat(modes.omegas, R)
    source = np.tile(time_basis, (K, 1))
    sol = _backward_bank(omegas, source, grid)
    step_ints = sol.step_integrals.reshape(K, R, N)

    raw = np.einsum("kl,krl->kr", g, step_ints)
    gram = _time_gram(time_basis, grid.dt)
    if np.max(np.abs(gram - np.eye(R))) > 1e-8:
        warnings.warn("time basis is not orthonormal; solving the Gram system")
        raw = np.linalg.solve(gram, raw.T).T
    return raw


def reconstruct_field(coefficients, time_basis) -> np.ndarray:
    """Modal field samples sum_r c_{k,r} tau_r at the step midpoints, (K, N)."""
    return np.asarray(coefficients, dtype=float) @ np.asarray(time_basis, dtype=float)


def direct_boundary_field(signals, patches, modes: ModeSet,
                          grid: TimeGrid) -> np.ndarray:
    """Forward modal solve of the boundary-driven field; per-step averages.

    The boundary data enters as modal forcing through `boundary_couplings`;
    step averages (exact integrals / dt) match the step-constant function
    representation used by `transposed_solution`.
    """
    signals = np.asarray(signals, dtype=float)
    b = boundary_couplings(modes, patches)
    g = b @ signals
    traj = oscillator_bank_response(modes.omegas, g, grid, step_integrals=True)
    return traj.step_integrals / grid.dt


def field_l2_distance(field_a, field_b, grid: TimeGrid) -> float:
    """Relative L2((0,T) x domain) distance between two modal field samplings."""
    field_a = np.asarray(field_a, dtype=float)
    field_b = np.asarray(field_b, dtype=float)
    diff = np.sum((field_a - field_b) ** 2) * grid.dt
    ref = np.sum(field_b**2) * grid.dt
    if ref == 0.0:
        return math.sqrt(diff)
    return math.sqrt(diff / ref)
