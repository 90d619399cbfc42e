"""QoS-constrained sum-rate maximization over SIM phases and powers (VD-BSUM).

The sum rate is replaced by its WMMSE surrogate and minimized block-wise:
closed-form receive gains ``u`` and weights ``zeta``, then a power block and
one block per SIM layer.  Each block runs a PDMM loop whose projections onto
the budget, unit-modulus and per-user SINR sets are computed in closed form;
the SINR projections use an increasing-penalty dual decomposition (IPDD)
that splits the bilinear constraint into two half-space projections.

Powers are amplitudes: ``p_k ** 2`` is user ``k``'s transmit power in watts.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ChannelSet, SimGeometry, effective_matrix, make_user, propagate, random_stack
from .tscc import ConvergenceError, PdmmParams, _ShiftedSolver, pdmm_projection_bound, unit_modulus_projection

log = logging.getLogger(__name__)

DENOM_FLOOR = 1e-14


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class IpddParams:
    eta0: float = 100.0
    rho_shrink: float = 0.8
    tol: float = 1e-4
    max_iters: int = 100
    pdmm: PdmmParams = PdmmParams(max_inner=150)
    outer_tol: float = 1e-4
    max_outer: int = 200
    qos_step: float = 0.5

    def __post_init__(self):
        if not 0 < self.rho_shrink < 1:
            raise ValueError("rho_shrink must lie in (0, 1)")
        if self.eta0 <= 0 or self.tol <= 0:
            raise ValueError("eta0 and tol must be positive")


@dataclass(frozen=True)
class SrmInstance:
    channels: ChannelSet
    noise_power: np.ndarray
    p_max: float
    rate_threshold: float = 0.0

    def __post_init__(self):
        k = len(self.channels.users)
        if k < 1:
            raise ValueError("instance needs at least one user")
        if self.channels.feeds.shape[0] != k:
            raise ValueError(f"need one feed antenna per user (M = K = {k})")
        noise = np.broadcast_to(np.asarray(self.noise_power, dtype=float), (k,)).copy()
        if np.any(noise <= 0):
            raise ValueError("noise powers must be positive")
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        if self.rate_threshold < 0:
            raise ValueError("rate_threshold must be non-negative")
        noise.setflags(write=False)
        object.__setattr__(self, "noise_power", noise)

    @property
    def num_users(self) -> int:
        return len(self.channels.users)

    @property
    def gamma_th(self) -> float:
        return 2.0**self.rate_threshold - 1.0

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.channels.geometry.signature().encode())
        h.update(self.channels.user_matrix.tobytes())
        h.update(self.noise_power.tobytes())
        h.update(np.array([self.p_max, self.rate_threshold]).tobytes())
        return h.hexdigest()[:16]


@dataclass
class SrmSolution:
    stack: np.ndarray
    power: np.ndarray
    rates: np.ndarray
    sum_rate: float
    aux_u: np.ndarray = None
    aux_zeta: np.ndarray = None
    trace: list = field(default_factory=list)
    converged: bool = False
    infeasible: bool = False
    feasibility: dict = field(default_factory=dict)
    weights: np.ndarray = None


def make_instance(
    geom: SimGeometry,
    num_users: int = 3,
    seed: int = 0,
    p_max_dbm: float = 30.0,
    noise_dbm: float = -80.0,
    rate_threshold: float = 0.0,
    distance=(5.0, 10.0),
) -> SrmInstance:
    """Seeded users at random visible directions and distances."""
    if geom.num_antennas != num_users:
        raise ValueError("geometry must have one antenna per user")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    users = []
    for _ in range(num_users):
        theta = rng.uniform(np.pi / 6, 5 * np.pi / 6)
        phi = rng.uniform(-np.pi / 3, np.pi / 3)
        vt, nu = np.sin(theta) * np.sin(phi), np.cos(theta)
        users.append(make_user(geom, vt, nu, rng.uniform(*distance)))
    ch = ChannelSet.build(geom, users)
    return SrmInstance(ch, dbm_to_watts(noise_dbm), dbm_to_watts(p_max_dbm), rate_threshold)


# ---------------------------------------------------------------------------
# rates and WMMSE variables


def effective_gains(instance: SrmInstance, stack) -> np.ndarray:
    """``H[k, i] = h_k^H G w_i``."""
    ch = instance.channels
    y = propagate(ch.interlayer, np.asarray(stack), ch.feeds.T)
    return ch.user_matrix.conj() @ y


def sinr_and_rate(instance: SrmInstance, stack, p):
    p = np.asarray(p, dtype=float)
    pw = np.abs(effective_gains(instance, stack)) ** 2 * (p**2)[None, :]
    signal = np.diag(pw)
    interference = pw.sum(axis=1) - signal
    sinr = signal / (interference + instance.noise_power)
    rate = np.log2(1.0 + sinr)
    return sinr, rate, float(rate.sum())


def update_u(instance: SrmInstance, stack, p, gains=None) -> np.ndarray:
    H = effective_gains(instance, stack) if gains is None else gains
    p = np.asarray(p, dtype=float)
    total = (np.abs(H) ** 2 * (p**2)[None, :]).sum(axis=1) + instance.noise_power
    return np.diag(H) * p / total


def update_zeta(instance: SrmInstance, stack, p, u=None, gains=None) -> np.ndarray:
    H = effective_gains(instance, stack) if gains is None else gains
    u = update_u(instance, stack, p, H) if u is None else u
    return 1.0 / np.real(1.0 - np.conj(u) * np.diag(H) * np.asarray(p, dtype=float))


def surrogate(instance: SrmInstance, stack, p, u, zeta, gains=None) -> float:
    """WMMSE objective ``sum zeta_k (G_k + 1) - log zeta_k``."""
    H = effective_gains(instance, stack) if gains is None else gains
    p = np.asarray(p, dtype=float)
    total = (np.abs(H) ** 2 * (p**2)[None, :]).sum(axis=1) + instance.noise_power
    g = np.abs(u) ** 2 * total - 2 * np.real(np.conj(u) * np.diag(H) * p)
    return float(np.sum(zeta * (g + 1) - np.log(zeta)))


def jain_index(rates) -> float:
    r = np.asarray(rates, dtype=float)
    if np.any(r < 0):
        raise ValueError("rates must be non-negative")
    if not np.any(r > 0):
        raise ValueError("Jain index undefined for all-zero rates")
    return float(r.sum() ** 2 / (len(r) * np.sum(r**2)))


# ---------------------------------------------------------------------------
# power projections


def proj_power_budget(p_hat, p_max: float, tol: float = 1e-13) -> np.ndarray:
    """Closest non-negative ``p`` with ``sum p**2 <= p_max``."""
    if p_max <= 0:
        raise ValueError("p_max must be positive")
    pos = np.maximum(np.asarray(p_hat, dtype=float), 0.0)
    if np.sum(pos**2) <= p_max:
        return pos
    # sum (pos / (1 + rho))^2 = p_max has the root sqrt(|pos|^2 / p_max) - 1
    lo, hi = 0.0, math.sqrt(np.sum(pos**2) / p_max)
    assert np.sum((pos / (1 + hi)) ** 2) <= p_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum((pos / (1 + mid)) ** 2) > p_max:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * (1 + hi):
            break
    return pos / (1 + hi)


def halfspace_projection(x, c, offset: float):
    """Project real ``x`` onto ``{y : c @ y + offset <= 0}``."""
    viol = float(c @ x) + offset
    if viol <= 0:
        return np.array(x, dtype=float)
    den = float(c @ c)
    if den < DENOM_FLOOR:
        raise ConvergenceError(f"degenerate half-space (|c|^2 = {den:.3g})")
    return x - viol / den * c


def proj_qos_power(p_hat, instance: SrmInstance, k: int, stack=None, params: IpddParams = IpddParams(), gains=None) -> np.ndarray:
    """Approximate projection of ``p_hat`` onto user ``k``'s SINR set.

    Splits ``a_k p_k z_k >= gamma (sum_{i != k} a_i p_i z_i + sigma^2)`` with
    ``z = p`` and alternates the two half-space projections, a dual update
    and ``eta <- rho * eta`` until ``||p - z|| <= tol``.
    """
    gamma = instance.gamma_th
    p_hat = np.asarray(p_hat, dtype=float)
    if gamma == 0:
        return p_hat.copy()
    H = effective_gains(instance, stack) if gains is None else gains
    a = np.abs(H[k]) ** 2 / instance.noise_power[k]  # sigma_k^2 normalized to 1
    sign = np.full(len(a), gamma)
    sign[k] = -1.0  # c = gamma * b - a, elementwise
    z = p_hat.copy()
    w = np.zeros_like(p_hat)
    eta = params.eta0
    off = gamma
    for _ in range(params.max_iters):
        z_t = z + eta * w
        base = (2 * p_hat + z_t / eta) / (2 + 1 / eta)
        p = halfspace_projection(base, sign * a * z, off)
        z_h = p - eta * w
        z = halfspace_projection(z_h, sign * a * p, off)
        w = w + (z - p) / eta
        eta *= params.rho_shrink
        if np.linalg.norm(p - z) <= params.tol * max(1.0, np.linalg.norm(p_hat)):
            return p
    raise ConvergenceError(f"QoS power projection for user {k} did not converge", residual=float(np.linalg.norm(p - z)))


def power_coefficients(gains, u, zeta, p=None):
    """``a_i``, ``b_i`` of the power subproblem ``sum a_i p_i^2 - 2 b_i p_i``."""
    weight = zeta * np.abs(u) ** 2
    a = (weight[:, None] * np.abs(gains) ** 2).sum(axis=0)
    b = np.real(zeta * np.conj(u) * np.diag(gains))
    return a, b


def _pdmm(x0, projections, solve, scale, params: IpddParams, record=None, bound=None):
    """Shared PDMM loop of the power and phase blocks.

    ``projections(x)`` returns the list of projections of ``x``; ``solve(mu,
    total)`` returns the penalized minimizer.  Stops once an updated iterate
    lies within ``tol`` of the average of its own projections.  Returns
    ``(x, settled)``; a projection that fails to converge is replaced by its
    input point and leaves ``settled`` false.
    """
    pp = params.pdmm
    mu = pp.mu0 * scale
    x = x0
    for it in range(pp.max_inner):
        projs, clean = projections(x)
        total = np.sum(projs, axis=0)
        gap = float(np.linalg.norm(x - total / len(projs)))
        if record is not None:
            record.append((gap, None if bound is None else bound(mu)))
        if it > 0 and gap <= params.tol:
            return x, clean
        x = solve(mu, total)
        if (it + 1) % pp.l_num == 0:
            mu = min(mu * pp.epsilon, pp.mu_cap * scale)
    log.debug("PDMM block stopped at max_inner with gap %.3g", gap)
    return x, False


def _safe(fn, x):
    try:
        return fn(x), True
    except ConvergenceError as exc:
        log.debug("projection skipped: %s", exc)
        return x, False


def power_block(instance: SrmInstance, stack, u, zeta, p0, params: IpddParams = IpddParams(), gains=None, record=None, status=None):
    """PDMM over powers with budget and per-user SINR projections.

    Returns the budget projection of the final iterate.  When ``status`` is a
    list, whether the block settled is appended to it.
    """
    H = effective_gains(instance, stack) if gains is None else gains
    a, b = power_coefficients(H, u, zeta)
    k_users = instance.num_users

    def projections(x):
        out = [proj_power_budget(x, instance.p_max)]
        clean = True
        for k in range(k_users):
            y, ok = _safe(lambda v: proj_qos_power(v, instance, k, params=params, gains=H), x)
            out.append(y)
            clean &= ok
        return out, clean

    def solve(mu, total):
        return (b + mu * total) / (a + mu * (k_users + 1))

    p, ok = _pdmm(np.asarray(p0, dtype=float), projections, solve, max(float(a.max()), 1e-300), params, record)
    if status is not None:
        status.append(ok)
    return proj_power_budget(p, instance.p_max)


# ---------------------------------------------------------------------------
# phase projections


def layer_rows(instance: SrmInstance, stack, layer: int) -> np.ndarray:
    """``R[k, i] = h_k^H C_i`` (shape K x K x N), ``C_i`` the layer-``layer`` effective matrix of feed ``i``."""
    ch = instance.channels
    hs = ch.user_matrix.conj()
    return np.stack(
        [hs @ effective_matrix(ch.interlayer, stack, layer, ch.feeds[i]) for i in range(instance.num_users)],
        axis=1,
    )


def _qos_matrix(rows, p, k, gamma, sigma2):
    """``(gamma E_k - D_k) / sigma_k^2`` as a callable ``x -> Q x``."""
    coef = (p**2) * gamma
    coef[k] = -(p[k] ** 2)
    r = rows[k]  # (K, N): h_k^H C_i

    def apply(x):
        return (r.conj().T @ (coef * (r @ x))) / sigma2

    return apply


def proj_qos_phase(phi_hat, instance: SrmInstance, k: int, layer: int, stack, p, params: IpddParams = IpddParams(), rows=None):
    """Approximate projection of ``phi_hat`` onto user ``k``'s SINR set for one layer.

    The constraint ``Re{phi^H (gamma E_k - D_k) kappa} + gamma sigma^2 <= 0`` is
    split with ``kappa = phi``; both IPDD steps are exact projections onto a
    complex half-space.
    """
    gamma = instance.gamma_th
    phi_hat = np.asarray(phi_hat, dtype=complex)
    if gamma == 0:
        return phi_hat.copy()
    rows = layer_rows(instance, stack, layer) if rows is None else rows
    Q = _qos_matrix(rows, np.asarray(p, dtype=float), k, gamma, instance.noise_power[k])
    off = gamma  # gamma * sigma^2 in normalized units

    def half(x, q):
        viol = float(np.real(np.vdot(q, x))) + off
        if viol <= 0:
            return x
        den = float(np.real(np.vdot(q, q)))
        if den < DENOM_FLOOR:
            raise ConvergenceError(f"degenerate QoS constraint for user {k} (denominator {den:.3g})")
        return x - viol / den * q

    kappa = phi_hat.copy()
    v = np.zeros_like(phi_hat)
    eta = params.eta0
    for _ in range(params.max_iters):
        k_t = kappa + eta * v
        base = (phi_hat + k_t / (2 * eta)) / (1 + 1 / (2 * eta))
        phi = half(base, Q(kappa))
        kappa = half(phi - eta * v, Q(phi))
        v = v + (kappa - phi) / eta
        eta *= params.rho_shrink
        if np.linalg.norm(phi - kappa) <= params.tol * max(1.0, np.linalg.norm(phi_hat)):
            return phi
    raise ConvergenceError(
        f"QoS phase projection for user {k} did not converge", residual=float(np.linalg.norm(phi - kappa))
    )


def phase_coefficients(rows, u, zeta, p):
    """``B`` and ``d`` of the layer subproblem ``phi^H B phi - 2 Re{d^H phi}``."""
    weight = zeta * np.abs(u) ** 2  # over receiving users k
    K, _, n = rows.shape
    B = np.zeros((n, n), dtype=complex)
    for i in range(K):
        r = rows[:, i, :]  # (K, N)
        B += (p[i] ** 2) * (r.conj().T * weight) @ r
    d = np.zeros(n, dtype=complex)
    for k in range(K):
        d += zeta[k] * u[k] * p[k] * rows[k, k].conj()
    return B, d


def phase_block(instance: SrmInstance, layer: int, u, zeta, p, stack, params: IpddParams = IpddParams(), record=None, status=None):
    """PDMM over one layer's phases; output is exactly unit-modulus.

    ``record`` collects ``(gap, projection-error bound)`` per iterate.
    """
    p = np.asarray(p, dtype=float)
    rows = layer_rows(instance, stack, layer)
    B, d = phase_coefficients(rows, u, zeta, p)
    solver = _ShiftedSolver(0.5 * (B + B.conj().T))
    k_users = instance.num_users
    scale = max(float(solver.evals[-1]), 1e-300)

    def projections(x):
        out = [unit_modulus_projection(x)]
        clean = True
        for k in range(k_users):
            y, ok = _safe(lambda v: proj_qos_phase(v, instance, k, layer, stack, p, params, rows), x)
            out.append(y)
            clean &= ok
        return out, clean

    def solve(mu, total):
        return solver.solve(mu * (k_users + 1), d + mu * total)

    def bound(mu):
        return pdmm_projection_bound(math.sqrt(scale), float(np.linalg.norm(d)), len(d), mu)

    phi, ok = _pdmm(np.array(stack[layer], dtype=complex), projections, solve, scale, params, record, bound)
    if status is not None:
        status.append(ok)
    return unit_modulus_projection(phi)


# ---------------------------------------------------------------------------
# solver


def feasibility_report(instance: SrmInstance, stack, p) -> dict:
    sinr, _, _ = sinr_and_rate(instance, stack, p)
    gamma = instance.gamma_th
    return {
        "budget_slack": float(instance.p_max - np.sum(np.asarray(p) ** 2)),
        "min_power": float(np.min(p)),
        "modulus_error": float(np.max(np.abs(np.abs(stack) - 1.0))),
        "sinr_ratio": [float(s / gamma) if gamma > 0 else math.inf for s in sinr],
    }


def default_init(instance: SrmInstance, seed: int = 0):
    g = instance.channels.geometry
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    stack = random_stack(rng, g.num_layers, g.num_elements)
    p = np.full(instance.num_users, math.sqrt(instance.p_max / instance.num_users))
    return stack, p


def _budget_power(a, b, p_max: float) -> np.ndarray:
    """Exact minimizer of ``sum a_i p_i^2 - 2 b_i p_i`` over the budget set."""
    b = np.maximum(b, 0.0)
    p = b / a
    if np.sum(p**2) <= p_max:
        return p
    lo, hi = 0.0, math.sqrt(np.sum(b**2) / p_max)
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        lo, hi = (nu, hi) if np.sum((b / (a + nu)) ** 2) > p_max else (lo, nu)
    return b / (a + hi)


def _mm_phase(B, d, phi, steps: int = 10) -> np.ndarray:
    """Majorize-minimize steps for ``phi^H B phi - 2 Re{d^H phi}`` on the torus."""
    B = 0.5 * (B + B.conj().T)
    lam = float(np.linalg.eigvalsh(B)[-1])
    for _ in range(steps):
        phi = unit_modulus_projection(lam * phi - B @ phi + d)
    return phi


def _min_qos_power(instance: SrmInstance, gains) -> np.ndarray | None:
    """Least-power ``p`` meeting every SINR target for fixed gains, if any."""
    g = np.abs(gains) ** 2
    direct = np.diag(g)
    if np.any(direct <= 0):
        return None
    gamma = instance.gamma_th
    F = gamma * g / direct[:, None]
    np.fill_diagonal(F, 0.0)
    try:
        q = np.linalg.solve(np.eye(len(direct)) - F, gamma * instance.noise_power / direct)
    except np.linalg.LinAlgError:
        return None
    if np.any(q < 0) or q.sum() > instance.p_max:
        return None
    return np.sqrt(q)


def _balanced_power(instance: SrmInstance, gains, iters: int = 200) -> np.ndarray | None:
    """Full-budget power split equalizing ``sinr_k / gamma`` over users."""
    g = np.abs(gains) ** 2
    direct = np.diag(g)
    if np.any(direct <= 0):
        return None
    q = np.full(len(direct), instance.p_max / len(direct))
    for _ in range(iters):
        interf = g @ q - direct * q + instance.noise_power
        q = q * interf / (direct * q)
        q *= instance.p_max / q.sum()
    return np.sqrt(q)


def _score(instance: SrmInstance, stack, p, u, zeta):
    # (worst relative QoS shortfall, surrogate); compared lexicographically
    sinr, _, _ = sinr_and_rate(instance, stack, p)
    gamma = instance.gamma_th
    viol = float(np.max(np.maximum(gamma * (1 + 1e-6) - sinr, 0.0)) / gamma) if gamma > 0 else 0.0
    return viol, surrogate(instance, stack, p, u, zeta)


def _better(new, old, slack=1e-12):
    if new[0] < old[0] - slack:
        return True
    return new[0] <= old[0] + slack and new[1] <= old[1] + slack * max(1.0, abs(old[1]))


def vd_bsum(instance: SrmInstance, init=None, params: IpddParams = IpddParams(), seed: int = 0) -> SrmSolution:
    """Block-wise WMMSE ascent of the QoS-constrained sum rate.

    Each outer iteration updates ``u``, ``zeta``, the powers and every layer in
    turn.  Candidate block outputs are ranked by QoS violation first and
    surrogate second.  A PDMM output that ranks worse than the current point
    is replaced by an exact budget-constrained power step (or least-power
    QoS power control, or an SINR-balancing split) or a majorize-minimize phase step, shortened until it
    helps, and the block is skipped if nothing does.  Users below their SINR target get their rate weight
    raised by ``qos_step`` times the relative shortfall.

    Stops once the sum rate moves by at most ``outer_tol`` with every target
    met.  The result is flagged infeasible when the final point misses a
    target; ``feasibility["unsettled"]`` counts the trailing outer iterations
    in which some QoS projection did not converge.
    """
    stack, p = default_init(instance, seed) if init is None else init
    stack = np.array(stack, dtype=complex)
    p = np.asarray(p, dtype=float).copy()
    gamma = instance.gamma_th
    weights = np.ones(instance.num_users)
    _, rates, r_sum = sinr_and_rate(instance, stack, p)
    trace = [r_sum]
    converged = False
    u = zeta = None
    unsettled = 0
    for _ in range(params.max_outer):
        H = effective_gains(instance, stack)
        u = update_u(instance, stack, p, H)
        zeta = weights * update_zeta(instance, stack, p, u, H)
        status = []
        best = _score(instance, stack, p, u, zeta)
        power_steps = (
            lambda: power_block(instance, stack, u, zeta, p, params, H, status=status),
            lambda: _budget_power(*power_coefficients(H, u, zeta), instance.p_max),
            lambda: _min_qos_power(instance, H) if best[0] > 0 else None,
            lambda: _balanced_power(instance, H) if best[0] > 0 else None,
        )
        for step in power_steps:
            cand = step()
            if cand is None:
                continue
            score = _score(instance, stack, cand, u, zeta)
            if _better(score, best):
                p, best = cand, score
                break
        for layer in range(stack.shape[0]):
            trial = stack.copy()
            trial[layer] = phase_block(instance, layer, u, zeta, p, stack, params, status=status)
            score = _score(instance, trial, p, u, zeta)
            if not _better(score, best):
                B, d = phase_coefficients(layer_rows(instance, stack, layer), u, zeta, p)
                target = _mm_phase(B, d, stack[layer])
                for t in 0.5 ** np.arange(7):
                    trial[layer] = unit_modulus_projection(stack[layer] + t * (target - stack[layer]))
                    score = _score(instance, trial, p, u, zeta)
                    if _better(score, best):
                        break
            if _better(score, best):
                stack, best = trial, score
        unsettled = 0 if all(status) else unsettled + 1
        sinr, rates, r_sum = sinr_and_rate(instance, stack, p)
        trace.append(r_sum)
        short = sinr < gamma * (1 - 1e-4)
        if gamma > 0:
            weights = weights + params.qos_step * np.maximum(1.0 - sinr / gamma, 0.0)
        if abs(trace[-1] - trace[-2]) <= params.outer_tol and not short.any():
            converged = True
            break
    sinr, rates, r_sum = sinr_and_rate(instance, stack, p)
    infeasible = bool(np.any(sinr < gamma * (1 - 1e-3)))
    stack.setflags(write=False)
    return SrmSolution(
        stack=stack, power=p, rates=rates, sum_rate=r_sum, aux_u=u, aux_zeta=zeta, trace=trace,
        converged=converged, infeasible=infeasible,
        feasibility={**feasibility_report(instance, stack, p), "unsettled": unsettled}, weights=weights,
    )


def random_phase_baseline(instance: SrmInstance, trials: int, rng) -> SrmSolution:
    """Best sum rate over ``trials`` random stacks with an equal power split."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    g = instance.channels.geometry
    p = np.full(instance.num_users, math.sqrt(instance.p_max / instance.num_users))
    best = None
    for _ in range(trials):
        stack = random_stack(rng, g.num_layers, g.num_elements)
        _, rates, r_sum = sinr_and_rate(instance, stack, p)
        if best is None or r_sum > best.sum_rate:
            best = SrmSolution(stack=stack, power=p.copy(), rates=rates, sum_rate=r_sum, trace=[r_sum])
    best.feasibility = feasibility_report(instance, best.stack, best.power)
    return best


def complexity(num_users: int, num_antennas: int, n: int, num_layers: int, t_p: int, t_phi: int) -> int:
    """Operation count ``K^2 M N + K^2 T_p + L K N^2 T_phi + L N^3``."""
    k, m = num_users, num_antennas
    return k * k * m * n + k * k * t_p + num_layers * k * n * n * t_phi + num_layers * n**3
