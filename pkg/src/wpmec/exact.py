"""Exact time allocation for a fixed mode set, mode enumeration and baselines.

Once the mode set is fixed the problem is concave in ``(a, tau)``.  With a
single multiplier ``nu`` on ``a + sum(tau) <= 1`` the KKT conditions read

    w_j eps psi(s_j) = nu                                     (each offloader)
    C/3 a^(-2/3) + sum_j w_j eps rho_j / (1 + s_j) = nu        (WPT fraction)
    a (1 + sum_j rho_j / s_j) = 1                              (time budget)

where ``s_j = rho_j a / tau_j`` and ``C`` is the summed local-rate
coefficient of the mode-0 devices.  Each ``s_j`` depends on ``nu`` alone,
so a single monotone root in ``log(nu)`` gives the whole allocation.
"""

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInputError
from .model import (Allocation, ModeAssignment, psi, psi_inverse_log, psi_log, psi_log_slope,
                    weighted_sum_rate)
from .report import SolveReport
from .scalar import maximize_concave_1d, newton_decreasing_root

ENUMERATION_CAP = 20
TAU_MIN = 1e-12
_ROOT_TOL = 1e-13


@dataclass(frozen=True)
class ModeRestrictedProblem:
    inst: object
    modes: ModeAssignment

    def __post_init__(self):
        object.__setattr__(self, "modes", ModeAssignment.coerce(self.modes, self.inst.N))

    @property
    def offloaders(self):
        return np.array([i for i, m in enumerate(self.modes) if m == 1], dtype=int)

    @property
    def local_sum(self):
        """Weighted local-rate coefficient ``C`` of the mode-0 devices."""
        mask = np.array(self.modes.m) == 0
        return float(np.sum((self.inst.w * self.inst.local_coeff)[mask]))


def _log_s(lam, weps):
    return psi_inverse_log(lam / weps)


def inner_tau_allocation(prob, a):
    """Optimal offloading times for a fixed WPT fraction ``a``.

    Maximizes ``sum_j w_j eps tau_j ln(1 + rho_j a / tau_j)`` subject to
    ``sum_j tau_j = 1 - a``.  Returns a length-``N`` array with zeros for
    mode-0 devices.
    """
    J = prob.offloaders
    if J.size == 0:
        raise InvalidInputError("inner_tau_allocation needs at least one offloading device")
    if not 0 <= a < 1:
        raise InvalidInputError(f"a must lie in [0, 1), got {a!r}")
    inst = prob.inst
    tau = np.zeros(inst.N)
    budget = 1.0 - a
    rho_a = inst.rho[J] * a
    active = rho_a > 0
    if not np.any(active):
        tau[J] = budget / J.size
        return tau
    Ja, rho_a = J[active], rho_a[active]
    weps = inst.w[Ja] * inst.system.epsilon

    def excess(ell):
        return math.fsum(rho_a * np.exp(-_log_s(math.exp(ell), weps))) - budget

    def slope(ell):
        u = _log_s(math.exp(ell), weps)
        t = rho_a * np.exp(-u)
        return -float(np.sum(t * psi_log(u) / psi_log_slope(u)))

    n = Ja.size
    lam_lo = float(np.min(weps * psi(rho_a * n / budget)))
    lam_hi = float(np.max(weps * psi(rho_a / TAU_MIN)))
    lo, hi = math.log(lam_lo), math.log(lam_hi)
    while excess(hi) > 0:
        hi += max(1.0, hi - lo)
    ell = newton_decreasing_root(excess, slope, lo, hi, tol_x=_ROOT_TOL)
    t = rho_a * np.exp(-_log_s(math.exp(ell), weps))
    tau[Ja] = t * (budget / math.fsum(t))
    return tau


def value_function(prob, a):
    """Best objective for a fixed WPT fraction ``a`` (concave in ``a``)."""
    if prob.offloaders.size == 0 or a >= 1:
        tau = np.zeros(prob.inst.N)
    else:
        tau = inner_tau_allocation(prob, a)
    return weighted_sum_rate(prob.inst, prob.modes, Allocation(a, tau))


def optimize_by_golden_section(prob, tol_x=1e-9):
    """Reference route: golden section on ``a`` over the value function."""
    if prob.offloaders.size == 0:
        return Allocation(1.0, np.zeros(prob.inst.N)), value_function(prob, 1.0)
    a, _ = maximize_concave_1d(lambda x: value_function(prob, x), 0.0, 1.0 - 1e-12, tol_x)
    tau = inner_tau_allocation(prob, a)
    alloc = Allocation(a, tau)
    return alloc, weighted_sum_rate(prob.inst, prob.modes, alloc)


def _curv(s):
    # s / (1 + s)^2, finite at s = 0 and s = inf
    with np.errstate(divide="ignore"):
        return 1.0 / (s + 2.0 + 1.0 / s)


class _Precomputed:
    """Per-instance arrays reused across mode sets during enumeration."""

    def __init__(self, inst):
        self.inst = inst
        self.local = inst.w * inst.local_coeff
        self.rho = inst.rho
        self.weps = inst.w * inst.system.epsilon
        self.A = self.weps * self.rho


def _solve(pre, modes):
    inst = pre.inst
    m = np.array(modes.m)
    J = np.flatnonzero((m == 1) & (pre.rho > 0))
    C = float(np.sum(pre.local[m == 0]))
    tau = np.zeros(inst.N)
    if J.size == 0:
        return Allocation(1.0, tau)
    A, rho, weps = pre.A[J], pre.rho[J], pre.weps[J]
    sumA = float(np.sum(A))

    cache = {}

    def state(ell):
        # (u, s, du/dell) of every offloader at multiplier exp(ell)
        hit = cache.get(ell)
        if hit is None:
            u = _log_s(math.exp(ell), weps)
            with np.errstate(over="ignore"):
                s = np.exp(u)
            hit = cache[ell] = (u, s, psi_log(u) / psi_log_slope(u))
        return hit

    def h(ell):
        _, s, _ = state(ell)
        return float(np.sum(A / (1 + s))) * math.exp(-ell) - 1.0

    def dh(ell):
        _, s, g = state(ell)
        return float(np.sum(A * (-1.0 / (1 + s) - g * _curv(s)))) * math.exp(-ell)

    hi = math.log(sumA)
    lo = hi - 1.0
    while h(lo) < 0:
        lo -= 2 * (hi - lo)
    ell_r = newton_decreasing_root(h, dh, lo, hi, tol_x=_ROOT_TOL)

    if C <= 0:
        ell = ell_r
    else:
        log_c3 = math.log(C / 3.0)

        def phi(ell):
            u, s, _ = state(ell)
            R = math.exp(ell) - float(np.sum(A / (1 + s)))
            if R <= 0:
                return math.inf
            with np.errstate(over="ignore"):
                return 1.5 * (log_c3 - math.log(R)) + math.log1p(float(np.sum(rho * np.exp(-u))))

        def dphi(ell):
            u, s, g = state(ell)
            R = math.exp(ell) - float(np.sum(A / (1 + s)))
            dR = math.exp(ell) + float(np.sum(A * g * _curv(s)))
            with np.errstate(over="ignore"):
                q = rho * np.exp(-u)
            return -1.5 * dR / R - float(np.sum(q * g)) / (1.0 + float(np.sum(q)))

        step = 1.0
        hi = ell_r + step
        while phi(hi) > 0:
            step *= 2
            hi = ell_r + step
        ell = newton_decreasing_root(phi, dphi, ell_r, hi, tol_x=_ROOT_TOL)
    # recover a from the budget; this stays accurate when C is negligible
    # and nu - sum(A / (1 + s)) is pure rounding noise
    u = state(ell)[0]
    with np.errstate(over="ignore"):
        q = rho * np.exp(-u)
    a = 1.0 / (1.0 + float(np.sum(q)))
    t = q * a
    total = math.fsum([a, *t])
    a, t = a / total, t / total
    tau[J] = t
    return _clip_budget(a, tau, J)


def _clip_budget(a, tau, J):
    # rounding in the normalisation may leave a + sum(tau) a few ulps above 1
    for _ in range(4):
        over = math.fsum([a, *tau[J]]) - 1.0
        if over <= 0:
            break
        j = J[np.argmax(tau[J])]
        if tau[j] >= a:
            tau[j] = max(tau[j] - over, 0.0)
        else:
            a = max(a - over, 0.0)
    return Allocation(a, tau)


def optimize_given_modes(prob):
    """Optimal ``(Allocation, objective)`` for a fixed mode set."""
    pre = _Precomputed(prob.inst)
    alloc = _solve(pre, prob.modes)
    return alloc, weighted_sum_rate(prob.inst, prob.modes, alloc)


def _mode_vector(index, n):
    return tuple((index >> (n - 1 - i)) & 1 for i in range(n))


def _best_in_range(inst, start, stop):
    pre = _Precomputed(inst)
    n = inst.N
    best_val, best_idx = -math.inf, None
    for idx in range(start, stop):
        modes = ModeAssignment(_mode_vector(idx, n))
        val = weighted_sum_rate(inst, modes, _solve(pre, modes))
        if val > best_val:
            best_val, best_idx = val, idx
    return best_val, best_idx


def default_workers():
    try:
        return max(1, int(os.environ.get("WPMEC_WORKERS", "1")))
    except ValueError:
        return 1


def enumerate_optimal(inst, cap=ENUMERATION_CAP, workers=None):
    """Exhaustive search over all ``2**N`` mode sets.

    Mode sets are visited in lexicographic order and only a strictly
    better objective replaces the incumbent, so ties go to the smallest
    mode vector.  Chunks are reduced in order, which makes the result
    independent of ``workers``.
    """
    n = inst.N
    if n > cap:
        raise CapacityError(f"enumeration is capped at N = {cap} devices (got N = {n})", cap=cap)
    workers = default_workers() if workers is None else max(1, int(workers))
    total = 1 << n
    if workers == 1 or total < 64:
        chunks = [_best_in_range(inst, 0, total)]
    else:
        bounds = np.linspace(0, total, min(workers * 4, total) + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_best_in_range, inst, int(lo), int(hi))
                    for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            chunks = [f.result() for f in futs]
    best_val, best_idx = -math.inf, None
    for val, idx in chunks:
        if val > best_val:
            best_val, best_idx = val, idx
    modes = ModeAssignment(_mode_vector(best_idx, n))
    alloc, obj = optimize_given_modes(ModeRestrictedProblem(inst, modes))
    return SolveReport("optimal", obj, modes.m, alloc, iterations=total, T=inst.system.T)


def _fixed(inst, mode, name):
    modes = ModeAssignment((mode,) * inst.N)
    alloc, obj = optimize_given_modes(ModeRestrictedProblem(inst, modes))
    return SolveReport(name, obj, modes.m, alloc, T=inst.system.T)


def offloading_only(inst):
    return _fixed(inst, 1, "offload-only")


def local_only(inst):
    return _fixed(inst, 0, "local-only")


def all_mode_sets(n):
    return itertools.product((0, 1), repeat=n)
