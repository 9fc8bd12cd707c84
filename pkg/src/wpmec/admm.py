"""ADMM decomposition of the joint mode selection / time allocation problem.

Each device keeps private copies ``x_i`` of the WPT fraction and ``tau_i``
of its offloading time.  The copies are tied to the coupling variables
``(a, z)`` -- which live in ``{a + sum(z) <= 1, a, z >= 0}`` -- by the
multipliers ``beta`` and ``gamma``.  One iteration is

1. per-device maximisation of the augmented Lagrangian over
   ``(x_i, tau_i, m_i)``; both modes are solved and the better one kept,
2. projection-like update of ``(a, z)`` with a bisection on the multiplier
   of the time budget,
3. dual ascent on ``beta`` and ``gamma``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, NonConvergenceError, SubproblemError
from .exact import ModeRestrictedProblem, optimize_given_modes
from .model import Allocation, ModeAssignment, psi_inverse, weighted_sum_rate
from .report import SolveReport, TraceRecord
from .scalar import newton_decreasing_root

COUPLING_TOL = 1e-10
# default penalty in units of eps = B / (v_u ln 2); with c = eps the
# iterates can cycle between mode vectors when path loss is low
DEFAULT_STEP_MULTIPLE = 6.0
_X_TOL = 1e-13
_U_TOL = 1e-12


@dataclass(frozen=True)
class AdmmConfig:
    c: float = None  # defaults to DEFAULT_STEP_MULTIPLE * eps
    sigma1_coeff: float = 0.0005
    max_iter: int = 10000
    init_a: float = 0.9
    init_multiplier: float = -100.0
    subproblem_tol: float = 1e-8
    polish: bool = True

    def __post_init__(self):
        if self.c is not None and not self.c > 0:
            raise InvalidInputError(f"c must be positive, got {self.c!r}")
        if not self.sigma1_coeff > 0:
            raise InvalidInputError(f"sigma1_coeff must be positive, got {self.sigma1_coeff!r}")
        if int(self.max_iter) < 1:
            raise InvalidInputError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if not 0 <= self.init_a <= 1:
            raise InvalidInputError(f"init_a must lie in [0, 1], got {self.init_a!r}")
        if not self.subproblem_tol > 0:
            raise InvalidInputError("subproblem_tol must be positive")

    def step_size(self, system):
        if self.c is None:
            return DEFAULT_STEP_MULTIPLE * system.epsilon
        return float(self.c)


@dataclass
class DualState:
    beta: np.ndarray
    gamma: np.ndarray


@dataclass
class CouplingState:
    a: float
    z: np.ndarray
    psi: float = 0.0  # multiplier of the time budget found by the last update


@dataclass
class LocalState:
    x: np.ndarray
    tau: np.ndarray
    m: np.ndarray
    value: np.ndarray = field(default=None)


# ---------------------------------------------------------------------------
# local step: per-device subproblems


def _psi(s):
    if s < 1e-3:
        return s * s * (0.5 - s * (2.0 / 3 - s * (0.75 - s * (0.8 - s * 5.0 / 6))))
    return math.log1p(s) - s / (1 + s)


def _psi_log(u):
    if u > 30:
        return u + math.log1p(math.exp(-u)) - 1.0 / (1.0 + math.exp(-u))
    return _psi(math.exp(u))


def _slope_log(u):
    # d psi(e^u) / du = (s / (1 + s))^2
    if u < -700:
        return 0.0
    return 1.0 / (1.0 + math.exp(-u)) ** 2


def _log1p_over(u):
    """``ln(1 + s) / s`` for ``s = e**u``."""
    if u > 30:
        return (u + math.log1p(math.exp(-u))) * math.exp(-u)
    s = math.exp(u)
    if s < 1e-8:
        return 1.0 - 0.5 * s
    return math.log1p(s) / s


def local_branch_value(coef, beta, gamma, a_l, z_l, c, x, tau):
    """Augmented Lagrangian of one device in local-computing mode."""
    return (coef * x ** (1.0 / 3.0) + beta * x + gamma * tau
            - 0.5 * c * (x - a_l) ** 2 - 0.5 * c * (tau - z_l) ** 2)


def local_branch_gradient(coef, beta, gamma, a_l, z_l, c, x, tau):
    """Gradient of :func:`local_branch_value` for ``x > 0``."""
    return (coef / 3.0 * x ** (-2.0 / 3.0) + beta - c * (x - a_l),
            gamma - c * (tau - z_l))


def offload_branch_value(W, rho, beta, gamma, a_l, z_l, c, x, tau):
    """Augmented Lagrangian of one device in offloading mode (``W = w eps``)."""
    rate = W * tau * math.log1p(rho * x / tau) if tau > 0 and x > 0 else 0.0
    return rate + beta * x + gamma * tau - 0.5 * c * (x - a_l) ** 2 - 0.5 * c * (tau - z_l) ** 2


def offload_branch_gradient(W, rho, beta, gamma, a_l, z_l, c, x, tau):
    """Gradient of :func:`offload_branch_value` at an interior point."""
    D = tau + rho * x
    gx = W * rho * tau / D + beta - c * (x - a_l)
    gt = W * (math.log1p(rho * x / tau) - rho * x / D) + gamma - c * (tau - z_l)
    return gx, gt


def solve_local_branch(coef, beta, gamma, a_l, z_l, c):
    """Maximizer ``(x, tau, value)`` of the local-computing branch."""
    tau = max(z_l + gamma / c, 0.0)
    base = max(a_l + beta / c, 0.0)
    if coef <= 0:
        x = base
    else:
        # above base + (coef/3c)^(3/5) the derivative is negative
        hi = base + (coef / (3.0 * c)) ** 0.6
        x = newton_decreasing_root(
            lambda v: local_branch_gradient(coef, beta, gamma, a_l, z_l, c, v, tau)[0],
            lambda v: -2.0 * coef / 9.0 * v ** (-5.0 / 3.0) - c,
            0.0, hi, tol_x=_X_TOL * max(hi, 1e-300),
            x0=min(max(a_l, base), hi) if base > 0 else None)
    return x, tau, local_branch_value(coef, beta, gamma, a_l, z_l, c, x, tau)


def _inner_log_ratio(W, rho, kappa, c, x):
    """``u = ln(rho x / tau)`` at the optimal ``tau`` for a fixed ``x > 0``.

    Solves ``W psi(e^u) + kappa - c rho x e^(-u) = 0`` (increasing in ``u``).
    """
    crx = c * rho * x

    def f(u):
        return -(W * _psi_log(u) + kappa - crx * math.exp(-u))

    def df(u):
        return -(W * _slope_log(u) + crx * math.exp(-u))

    # start from tau = max(z + gamma/c, rho x) and walk out to a bracket
    u0 = 0.0 if kappa >= 0 else math.log(max(rho * x * c / max(-kappa, 1e-300), 1e-300))
    lo, hi, step = u0 - 1.0, u0 + 1.0, 1.0
    while f(lo) < 0:
        step *= 2
        lo -= step
    step = 1.0
    while f(hi) > 0:
        step *= 2
        hi += step
    return newton_decreasing_root(f, df, lo, hi, tol_x=_U_TOL)


def solve_offload_branch(W, rho, beta, gamma, a_l, z_l, c):
    """Maximizer ``(x, tau, value)`` of the offloading branch.

    The partial maximum over ``tau`` is concave in ``x``; its slope is the
    envelope derivative ``W rho / (1 + s) + beta - c (x - a)``.
    """
    kappa = gamma + c * z_l
    tau0 = max(z_l + gamma / c, 0.0)
    if rho <= 0 or W <= 0:
        slope0 = beta + c * a_l
    elif kappa >= 0:
        slope0 = W * rho + beta + c * a_l
    else:
        s0 = float(psi_inverse(-kappa / W))
        slope0 = W * rho / (1.0 + s0) + beta + c * a_l
    if slope0 <= 0:
        return 0.0, tau0, offload_branch_value(W, rho, beta, gamma, a_l, z_l, c, 0.0, tau0)
    if rho <= 0 or W <= 0:
        x = a_l + beta / c
        return x, tau0, offload_branch_value(W, rho, beta, gamma, a_l, z_l, c, x, tau0)

    last = {}

    def inner(x):
        if last.get("x") != x:
            last["x"], last["u"] = x, _inner_log_ratio(W, rho, kappa, c, x)
        return last["u"]

    def g1(x):
        em = math.exp(min(-inner(x), 700.0))  # 1 / s
        return W * rho * em / (1.0 + em) + beta - c * (x - a_l)

    def g2(x):
        u = inner(x)
        em = math.exp(min(-u, 700.0))
        t = 1.0 / (1.0 + em)                    # s / (1 + s)
        q = W * t * t / x                       # cross partial F_x,tau
        fxx = -W * rho * t * (1.0 - t) / x - c
        ftt = -W * t * t * math.exp(min(u, 700.0)) / (rho * x) - c
        return fxx - q * q / ftt

    hi = a_l + (W * rho + beta) / c
    x = newton_decreasing_root(g1, g2, 0.0, hi, tol_x=_X_TOL * hi, x0=min(max(a_l, 0.5 * hi), hi))
    u = inner(x)
    tau = rho * x * math.exp(-u) if u < 745 else 0.0
    f = W * rho * x * _log1p_over(u)
    value = f + beta * x + gamma * tau - 0.5 * c * (x - a_l) ** 2 - 0.5 * c * (tau - z_l) ** 2
    return x, tau, value


def solve_device_subproblem(dev, sys, beta_i, gamma_i, a_l, z_l, c, tol=1e-8, index=None):
    """Best ``(x_i, tau_i, m_i, value)`` over both computing modes.

    Ties within ``1e-12`` of the objective scale go to local computing.
    """
    if not c > 0:
        raise InvalidInputError(f"c must be positive, got {c!r}")
    if not (math.isfinite(beta_i) and math.isfinite(gamma_i)):
        raise InvalidInputError("multipliers must be finite")
    coef = dev.w * sys.eta1 * (dev.h / dev.k) ** (1.0 / 3.0)
    W = dev.w * sys.epsilon
    rho = sys.eta2 * dev.h ** 2
    try:
        x0, t0, v0 = solve_local_branch(coef, beta_i, gamma_i, a_l, z_l, c)
    except NonConvergenceError as exc:
        raise SubproblemError(f"device {index}: local branch did not converge",
                              device=index, branch=0) from exc
    try:
        x1, t1, v1 = solve_offload_branch(W, rho, beta_i, gamma_i, a_l, z_l, c)
    except NonConvergenceError as exc:
        raise SubproblemError(f"device {index}: offloading branch did not converge",
                              device=index, branch=1) from exc
    scale = max(1.0, abs(v0), abs(v1))
    if v1 - v0 > 1e-12 * scale:
        return x1, t1, 1, v1
    return x0, t0, 0, v0


def step_local(inst, dual, coupling, cfg, map_fn=map):
    """Solve every device subproblem; ``map_fn`` may be a pool's ``map``."""
    c = cfg.step_size(inst.system)
    n = inst.N

    def one(i):
        return solve_device_subproblem(inst.devices[i], inst.system, float(dual.beta[i]),
                                       float(dual.gamma[i]), float(coupling.a),
                                       float(coupling.z[i]), c, cfg.subproblem_tol, index=i)

    out = list(map_fn(one, range(n)))
    return LocalState(x=np.array([o[0] for o in out]), tau=np.array([o[1] for o in out]),
                      m=np.array([o[2] for o in out], dtype=int),
                      value=np.array([o[3] for o in out]))


# ---------------------------------------------------------------------------
# coupling step


def _coupling_at(psi, xbar, bsum, tau, gamma, c, n):
    a = max(xbar - (bsum + psi) / (c * n), 0.0)
    z = np.maximum(tau - (gamma + psi) / c, 0.0)
    return a, z


def step_coupling(local, dual, c):
    """Maximize the Lagrangian over ``(a, z)`` subject to the time budget.

    Returns the closed-form maximizer for the budget multiplier ``psi``,
    with ``psi = 0`` when the unconstrained maximizer already fits and a
    bisection on ``psi`` otherwise.
    """
    x, tau = np.asarray(local.x, float), np.asarray(local.tau, float)
    beta, gamma = np.asarray(dual.beta, float), np.asarray(dual.gamma, float)
    n = x.size
    xbar, bsum = math.fsum(x) / n, math.fsum(beta)

    def total(psi):
        a, z = _coupling_at(psi, xbar, bsum, tau, gamma, c, n)
        return math.fsum([a, *z])

    if total(0.0) <= 1.0:
        a, z = _coupling_at(0.0, xbar, bsum, tau, gamma, c, n)
        return CouplingState(a, z, 0.0)
    lo = 0.0
    hi = max(c * math.fsum(x) - bsum, float(np.max(c * tau - gamma))) + 1.0
    psi = hi
    for _ in range(400):
        psi = 0.5 * (lo + hi)
        gap = total(psi) - 1.0
        if abs(gap) <= COUPLING_TOL or not lo < psi < hi:
            break
        if gap > 0:
            lo = psi
        else:
            hi = psi
    # the total is piecewise linear; finish with an exact solve on the active set
    a, z = _coupling_at(psi, xbar, bsum, tau, gamma, c, n)
    act_z = z > 0
    slope = (1.0 / (c * n) if a > 0 else 0.0) + np.count_nonzero(act_z) / c
    if slope > 0:
        cand = psi + (total(psi) - 1.0) / slope
        if lo <= cand <= hi:
            ca, cz = _coupling_at(cand, xbar, bsum, tau, gamma, c, n)
            if abs(math.fsum([ca, *cz]) - 1.0) <= abs(total(psi) - 1.0):
                psi, a, z = cand, ca, cz
    a, z = _exact_budget(a, z)
    return CouplingState(a, z, psi)


def _exact_budget(a, z):
    """Nudge the largest entry so that ``fsum([a, *z])`` is exactly 1."""
    z = z.copy()
    for _ in range(4):
        gap = 1.0 - math.fsum([a, *z])
        if gap == 0:
            break
        j = int(np.argmax(z)) if z.size else 0
        if z.size and z[j] >= a:
            z[j] = max(z[j] + gap, 0.0)
        else:
            a = max(a + gap, 0.0)
    return a, z


# ---------------------------------------------------------------------------
# multiplier step and stopping rule


def update_multipliers(dual, local, coupling, c):
    return DualState(beta=dual.beta - c * (local.x - coupling.a),
                     gamma=dual.gamma - c * (local.tau - coupling.z))


def primal_residual(local, coupling):
    return math.fsum(np.abs(local.x - coupling.a)) + math.fsum(np.abs(local.tau - coupling.z))


def coupling_change(new, old):
    return abs(new.a - old.a) + math.fsum(np.abs(new.z - old.z))


def check_stop(record, n, sigma1_coeff, iteration):
    """Both stopping tests, with strict inequalities and ``sigma1 = coeff * N``."""
    if iteration < 1:
        return False
    sigma1 = sigma1_coeff * n
    return record.primal_residual < 2 * sigma1 and record.coupling_change < sigma1


# ---------------------------------------------------------------------------
# driver


def initial_state(inst, cfg):
    n = inst.N
    dual = DualState(beta=np.full(n, float(cfg.init_multiplier)),
                     gamma=np.full(n, float(cfg.init_multiplier)))
    coupling = CouplingState(float(cfg.init_a), np.full(n, (1.0 - cfg.init_a) / n))
    return dual, coupling


def coupling_allocation(coupling, modes):
    z = np.where(np.asarray(modes) == 1, coupling.z, 0.0)
    return Allocation(coupling.a, z)


def iterate(inst, cfg=AdmmConfig(), map_fn=map):
    """Yield ``(local, coupling, dual, dual_before, record)`` after every ADMM iteration."""
    c = cfg.step_size(inst.system)
    dual, coupling = initial_state(inst, cfg)
    for it in range(1, int(cfg.max_iter) + 1):
        local = step_local(inst, dual, coupling, cfg, map_fn)
        new_coupling = step_coupling(local, dual, c)
        dual_before = dual
        dual = update_multipliers(dual, local, new_coupling, c)
        modes = ModeAssignment(local.m)
        record = TraceRecord(
            iter=it,
            primal_residual=primal_residual(local, new_coupling),
            coupling_change=coupling_change(new_coupling, coupling),
            objective=weighted_sum_rate(inst, modes, coupling_allocation(new_coupling, local.m)),
            modes=modes.bits,
        )
        coupling = new_coupling
        yield local, coupling, dual, dual_before, record


def run(inst, cfg=AdmmConfig(), map_fn=map):
    """Run ADMM to the stopping rule (or ``max_iter``) and build a report.

    With ``cfg.polish`` the reported allocation is the exact optimum for the
    final mode vector; the coupling iterate is kept in ``raw_*``.
    """
    trace = []
    converged = False
    local = coupling = None
    for local, coupling, _, _, record in iterate(inst, cfg, map_fn):
        trace.append(record)
        if check_stop(record, inst.N, cfg.sigma1_coeff, record.iter):
            converged = True
            break
    modes = ModeAssignment(local.m)
    raw = coupling_allocation(coupling, local.m)
    raw_obj = weighted_sum_rate(inst, modes, raw)
    if cfg.polish:
        alloc, obj = optimize_given_modes(ModeRestrictedProblem(inst, modes))
        if obj < raw_obj:
            alloc, obj = raw, raw_obj
    else:
        alloc, obj = raw, raw_obj
    return SolveReport("admm", obj, modes.m, alloc, iterations=len(trace), converged=converged,
                       trace=trace, raw_objective=raw_obj, raw_allocation=raw, T=inst.system.T)


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
