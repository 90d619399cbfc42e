"""Two-step codebook construction: 1-D beam synthesis and SIM phase fitting.

Step one synthesizes linear-array beamformers per angle axis with a relaxed
Gerchberg-Saxton iteration; step two fits the SIM phase stack to their
Kronecker product by alternating over layers, each layer solved with the
proximal-distance / majorization-minimization (PDMM) iteration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import effective_matrix, propagate, ula_vector

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget; ``trace`` holds its history."""

    def __init__(self, msg, residual=None, trace=None):
        super().__init__(msg)
        self.residual = residual
        self.trace = trace


@dataclass(frozen=True)
class PdmmParams:
    """Penalty schedule of the PDMM iteration.

    ``mu0`` is expressed in units of ``||C||_2^2`` so that the schedule does
    not depend on the physical scale of the channel; ``mu_cap`` likewise.
    """

    mu0: float = 0.1
    epsilon: float = 2.0
    l_num: int = 4
    inner_tol: float = 1e-4
    outer_tol: float = 1e-5
    max_inner: int = 2000
    max_outer: int = 200
    mu_cap: float = 1e8

    def __post_init__(self):
        if self.mu0 <= 0 or self.epsilon <= 1 or self.l_num < 1:
            raise ValueError("need mu0 > 0, epsilon > 1, l_num >= 1")
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ValueError("tolerances must be positive")


def unit_modulus_projection(x: np.ndarray) -> np.ndarray:
    """Nearest unit-modulus vector; exact zeros map to 1."""
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    out = np.ones_like(x)
    nz = mag > 0
    out[nz] = x[nz] / mag[nz]
    return out


def pdmm_projection_bound(c_norm: float, v_norm: float, n: int, mu: float) -> float:
    """Upper bound on ``||phi_{k+1} - z_k||`` for penalty ``mu``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return c_norm * (v_norm + n * c_norm) / mu


class _ShiftedSolver:
    """Solves ``(C^H C + s I) x = b`` for many shifts from one eigendecomposition."""

    def __init__(self, gram):
        self.evals, self.evecs = np.linalg.eigh(gram)
        self.evals = np.clip(self.evals, 0.0, None)

    def solve(self, shift, b):
        return self.evecs @ ((self.evecs.conj().T @ b) / (self.evals + shift))


@dataclass
class PdmmRecord:
    """Per-iterate diagnostics, filled only when requested."""

    mu: list = field(default_factory=list)
    proj_error: list = field(default_factory=list)
    bound: list = field(default_factory=list)


def pdmm_fit_layer(C, v, params: PdmmParams = PdmmParams(), init=None, record: PdmmRecord | None = None):
    """Minimize ``||C phi - v||^2`` over unit-modulus ``phi``.

    Iterates ``phi <- (C^H C + mu I)^{-1} (C^H v + mu * Pi(phi))`` with ``mu``
    multiplied by ``epsilon`` every ``l_num`` iterations, and stops once the
    new iterate is within ``inner_tol`` of the previous projection.  The
    returned vector is always exactly unit-modulus.
    """
    C = np.asarray(C, dtype=complex)
    n = C.shape[1]
    gram = C.conj().T @ C
    solver = _ShiftedSolver(gram)
    c_norm = float(np.sqrt(solver.evals[-1])) if solver.evals[-1] > 0 else 0.0
    scale = c_norm**2 if c_norm > 0 else 1.0
    rhs = C.conj().T @ v
    v_norm = float(np.linalg.norm(v))

    z = unit_modulus_projection(np.ones(n) if init is None else init)
    mu = params.mu0 * scale
    mu_cap = params.mu_cap * scale
    err = np.inf
    for it in range(params.max_inner):
        phi = solver.solve(mu, rhs + mu * z)
        err = float(np.linalg.norm(phi - z))
        if record is not None:
            record.mu.append(mu)
            record.proj_error.append(err)
            record.bound.append(pdmm_projection_bound(c_norm, v_norm, n, mu))
        z = unit_modulus_projection(phi)
        if err <= params.inner_tol:
            return z
        if (it + 1) % params.l_num == 0:
            mu = min(mu * params.epsilon, mu_cap)
    raise ConvergenceError(
        f"PDMM did not converge in {params.max_inner} iterations (last error {err:.3g})",
        residual=err,
    )


@dataclass
class AoResult:
    stack: np.ndarray
    residuals: list
    """Squared residual ``||G w1 - v||^2`` after every sweep (entry 0: initial)."""
    converged: bool = True

    @property
    def residual(self) -> float:
        return self.residuals[-1]


def ao_pdmm(interlayer, w1, v, init, params: PdmmParams = PdmmParams(), record=None, strict: bool = True) -> AoResult:
    """Fit a phase stack so that ``G w1`` approximates ``v``.

    Sweeps the layers in order, each layer fitted by :func:`pdmm_fit_layer`
    with the others held fixed.  Stops when the squared residual changes by
    at most ``outer_tol * ||v||^2`` between sweeps.  Running out of sweeps
    raises unless ``strict`` is false, in which case the last stack comes
    back with ``converged=False``.
    """
    stack = np.array(init, dtype=complex, copy=True)
    v = np.asarray(v, dtype=complex)
    scale = max(float(np.vdot(v, v).real), 1e-300)
    res = [float(np.linalg.norm(propagate(interlayer, stack, w1) - v) ** 2)]
    for _ in range(params.max_outer):
        for layer in range(stack.shape[0]):
            C = effective_matrix(interlayer, stack, layer, w1)
            stack[layer] = pdmm_fit_layer(C, v, params, stack[layer], record)
        res.append(float(np.linalg.norm(propagate(interlayer, stack, w1) - v) ** 2))
        if abs(res[-1] - res[-2]) <= params.outer_tol * scale:
            stack.setflags(write=False)
            return AoResult(stack, res)
    if not strict:
        stack.setflags(write=False)
        return AoResult(stack, res, converged=False)
    raise ConvergenceError(
        f"AO-PDMM did not converge in {params.max_outer} sweeps", residual=res[-1], trace=res
    )


# ---------------------------------------------------------------------------
# step one: 1-D beam synthesis


def sample_grid(count: int = 180) -> np.ndarray:
    """Cell-centered samples of [-1, 1]."""
    return -1 + (2 * np.arange(count) + 1) / count


@dataclass
class GsResult:
    v: np.ndarray
    delta: np.ndarray
    residuals: list


def gs_design(grid, gain, array_len: int, iters: int = 200, tol: float = 1e-6) -> GsResult:
    """Relaxed Gerchberg-Saxton design of a linear-array beamformer.

    Approximately solves ``min ||A^H v - gain * delta||`` with ``|delta| = 1``
    by alternating a least-squares fit of ``v`` with a phase update of
    ``delta`` on the pass band.  In the stop band the target is exactly zero.
    The phase reference starts as a quadratic (chirp) sequence, which spreads
    energy evenly across the aperture.  Iteration stops early once the
    residual improves by less than ``tol`` (relative).
    """
    grid = np.asarray(grid, dtype=float)
    gain = np.asarray(gain, dtype=float)
    if not np.any(gain > 0):
        raise ValueError("desired gain has an empty pass band")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    AH = ula_vector(grid, array_len).conj().T  # (S, m)
    pinv = np.linalg.pinv(AH)
    s = len(grid)
    delta = np.exp(1j * np.pi * np.arange(s) ** 2 / s)
    target = gain * delta
    v = pinv @ target
    residuals = []
    for _ in range(iters):
        y = AH @ v
        delta = np.where(gain > 0, unit_modulus_projection(y), delta)
        target = gain * delta
        v = pinv @ target
        residuals.append(float(np.linalg.norm(AH @ v - target)))
        if len(residuals) > 1 and residuals[-2] - residuals[-1] <= tol * max(residuals[-2], 1e-300):
            break
    return GsResult(v, delta, residuals)


def desired_planar(v_x, v_y) -> np.ndarray:
    """Planar beamformer from the per-axis ones (vartheta factor first)."""
    return np.kron(v_x, v_y)


def tscc_gap_bound(A, eps_sim: float) -> float:
    """Bound ``||A||_2 * eps_sim`` on the excess residual of the two-step design."""
    if eps_sim < 0:
        raise ValueError("eps_sim must be non-negative")
    return float(np.linalg.norm(A, 2)) * eps_sim


def tscc_gap(realized, v_x, v_y, grid_x, grid_y, gain_x, gain_y, delta_x, delta_y):
    """Measured quantities of the two-step gap analysis.

    Returns ``(excess, bound)`` where ``excess`` is the two-step residual minus
    the propagated step-one error and ``bound`` is ``||A||_2 eps_sim`` with
    ``A = A_x kron A_y`` over all sample pairs.
    """
    ax = ula_vector(grid_x, len(v_x))
    ay = ula_vector(grid_y, len(v_y))
    tx = gain_x * delta_x
    ty = gain_y * delta_y
    ex = float(np.linalg.norm(ax.conj().T @ v_x - tx))
    ey = float(np.linalg.norm(ay.conj().T @ v_y - ty))
    # A^H x for A = A_x kron A_y without forming A
    m = realized.reshape(len(v_x), len(v_y))
    pattern = ax.conj().T @ m @ ay.conj()
    e_tscc = float(np.linalg.norm(pattern - np.outer(tx, ty)))
    eps_sim = float(np.linalg.norm(realized - np.kron(v_x, v_y)))
    a_norm = float(np.linalg.norm(ax, 2) * np.linalg.norm(ay, 2))
    excess = e_tscc - (float(np.linalg.norm(ax.conj().T @ v_x)) * ey + float(np.linalg.norm(gain_y)) * ex)
    return excess, a_norm * eps_sim
