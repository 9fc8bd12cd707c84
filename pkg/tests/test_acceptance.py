"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The expensive sweeps are module-scoped fixtures so criteria that share a
scenario family reuse one run.
"""

import math
import time

import numpy as np
import pytest

from oracles import (brute_force_optimum, constants, coupling_kkt_violations, random_subproblem,
                     subproblem_grid)
from wpmec.admm import (AdmmConfig, check_stop, iterate, local_branch_gradient,
                        local_branch_value, offload_branch_gradient, offload_branch_value, run,
                        solve_device_subproblem)
from wpmec.exact import enumerate_optimal, local_only, offloading_only
from wpmec.experiments import ScenarioSpec, random_scenario, run_sweep, write_results
from wpmec.model import SystemParams, default_channel, instance_from_distances

SYS = SystemParams()


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def fig3a():
    return _timed(lambda: run_sweep(ScenarioSpec("fig3a")))


@pytest.fixture(scope="module")
def fig3b():
    return _timed(lambda: run_sweep(ScenarioSpec("fig3b")))


@pytest.fixture(scope="module")
def fig4():
    return _timed(lambda: run_sweep(ScenarioSpec("fig4", seed=2024, optimal_max_n=0)))


def _ratios(res, key):
    return [getattr(res, key)[j] / res.rate_optimal[j] for j in range(len(res.values))]


def test_criterion_1_near_optimal_across_path_loss(fig3a, report_criterion):
    res, secs = fig3a
    r = _ratios(res, "rate_admm")
    worst = int(np.argmin(r))
    ok = min(r) >= 0.99 and len(r) == 11 and secs < 120
    report_criterion(1, ok, f"min admm/optimal = {min(r):.5f} at d_e = {res.values[worst]} "
                            f"(need >= 0.99 at all 11 points); sweep took {secs:.0f} s (< 120 s)")
    assert ok


def test_criterion_2_baselines_collapse(fig3a, report_criterion):
    res, _ = fig3a
    off = dict(zip(res.values, _ratios(res, "rate_offload_only")))
    loc = dict(zip(res.values, _ratios(res, "rate_local_only")))
    low = [loc[v] for v in (2.0, 2.2, 2.4)]
    ok = off[4.0] <= 0.01 and all(0.10 <= x <= 0.30 for x in low)
    report_criterion(2, ok, f"offload-only/optimal at d_e=4 is {off[4.0]:.5f} (<= 0.01); "
                            f"local-only/optimal at d_e 2.0-2.4 is "
                            f"{', '.join(f'{x:.3f}' for x in low)} (in [0.10, 0.30])")
    assert ok


def test_criterion_3_distance_sweep(fig3b, report_criterion):
    res, _ = fig3b
    off = dict(zip(res.values, _ratios(res, "rate_offload_only")))
    loc = dict(zip(res.values, _ratios(res, "rate_local_only")))
    adm = _ratios(res, "rate_admm")
    ok = 0.2 <= off[6.85] <= 0.5 and 0.2 <= loc[3.85] <= 0.5 and min(adm) >= 0.99
    report_criterion(3, ok, f"offload-only/optimal at d_A=6.85 is {off[6.85]:.3f}; "
                            f"local-only/optimal at d_A=3.85 is {loc[3.85]:.3f} "
                            f"(both in [0.2, 0.5]); min admm/optimal = {min(adm):.5f} (>= 0.99)")
    assert ok


def test_criterion_4_gains_over_baselines(fig4, report_criterion):
    res, secs = fig4
    off_gain = [a / o for a, o in zip(res.rate_admm, res.rate_offload_only)]
    loc_gain = [a / l for a, l in zip(res.rate_admm, res.rate_local_only)]
    rows = [row for block in res.draws for row in block]
    wins = sum(r["admm"] >= max(r["offload_only"], r["local_only"]) * (1 - 1e-6) for r in rows)
    share = wins / len(rows)
    ok = (min(off_gain) >= 1.05 and min(loc_gain) >= 1.30 and share >= 0.95
          and len(rows) == 11 * 20 and secs < 600)
    report_criterion(4, ok, f"min mean gain over offload-only {min(off_gain):.3f} (>= 1.05), "
                            f"over local-only {min(loc_gain):.3f} (>= 1.30); admm >= best "
                            f"baseline on {wins}/{len(rows)} instances (>= 95%); "
                            f"{secs:.0f} s (< 600 s)")
    assert ok


def _per_iteration_seconds(n, iters, repeats=3):
    d, w = random_scenario(n, 77)
    inst = instance_from_distances(d, w)
    cfg = AdmmConfig(max_iter=iters)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in iterate(inst, cfg):
            pass
        best = min(best, (time.perf_counter() - t0) / iters)
    return best


def test_criterion_5_iterations_and_linear_cost(report_criterion):
    res = run_sweep(ScenarioSpec("fig5", seed=2024, grid=(10, 30), optimal_max_n=0))
    ratio = res.iters_mean[1] / res.iters_mean[0]
    sizes = np.array([10.0, 100.0, 1000.0])
    times = np.array([_per_iteration_seconds(10, 40), _per_iteration_seconds(100, 10),
                      _per_iteration_seconds(1000, 3, repeats=2)])
    # least squares on relative error, so the small-N point is not drowned out
    A = np.column_stack([sizes, np.ones(3)]) / times[:, None]
    (alpha, beta), *_ = np.linalg.lstsq(A, np.ones(3), rcond=None)
    resid = np.abs(alpha * sizes + beta - times) / times
    ok = ratio < 2 and resid.max() < 0.2
    report_criterion(5, ok, f"mean iterations N=30 / N=10 = {res.iters_mean[1]:.1f} / "
                            f"{res.iters_mean[0]:.1f} = {ratio:.2f} (< 2); per-iteration time "
                            f"{', '.join(f'{t * 1e3:.1f} ms' for t in times)} at N = 10, 100, "
                            f"1000, max relative residual of linear fit {resid.max():.3f} (< 0.2)")
    assert ok


def test_criterion_6_oracle_equivalence(report_criterion):
    rng = np.random.default_rng(6)
    worst_enum = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 3))
        inst = instance_from_distances(rng.uniform(2.5, 5.2, n), rng.integers(1, 3, n),
                                       channel=default_channel(rng.uniform(2.0, 4.0)))
        oracle = brute_force_optimum(inst)
        worst_enum = max(worst_enum, abs(enumerate_optimal(inst).objective - oracle) / oracle)

    eta1, eta2, eps = constants(SYS)
    worst_sub, branch_miss, checked = 0.0, 0, 0
    while checked < 50:
        dev, beta, gamma, a_l, z_l, c = random_subproblem(rng, SYS)
        x, tau, m, value = solve_device_subproblem(dev, SYS, beta, gamma, a_l, z_l, c)
        if x >= 1.8 or tau >= 1.8:  # keep the optimum inside the [0, 2]^2 grid
            continue
        checked += 1
        coef = dev.w * eta1 * (dev.h / dev.k) ** (1 / 3)
        v0, v1 = subproblem_grid(coef, dev.w * eps, eta2 * dev.h ** 2, beta, gamma, a_l, z_l, c)
        best = max(v0, v1)
        worst_sub = max(worst_sub, abs(value - best) / max(abs(best), 1.0))
        if abs(v1 - v0) > 1e-3 * max(abs(v0), abs(v1)) and m != int(v1 > v0):
            branch_miss += 1
    ok = worst_enum <= 1e-3 and worst_sub <= 1e-3 and branch_miss == 0
    report_criterion(6, ok, f"enumeration vs joint grid: worst relative gap {worst_enum:.2e}; "
                            f"subproblem vs 2-D grid: worst {worst_sub:.2e}, "
                            f"{branch_miss} branch mismatches (limits 1e-3, 1e-3, 0)")
    assert ok


def _feasible(alloc, modes):
    tau = np.asarray(alloc.tau)
    used = math.fsum([alloc.a] + [t for t, m in zip(tau, modes) if m == 1])
    return alloc.a >= 0 and np.all(tau >= 0) and used <= 1 + 1e-9


def test_criterion_7_invariants(tmp_path, report_criterion):
    failures = []

    # feasibility of every solver output
    insts = [ScenarioSpec("fig3a").instance(v) for v in (2.0, 2.8, 4.0)]
    insts += [ScenarioSpec("fig3b").instance(6.85)]
    insts += [ScenarioSpec("fig4", seed=5).instance(n, k) for n in (10, 20, 30) for k in (0, 1)]
    outputs = 0
    for inst in insts:
        reps = [run(inst), run(inst, AdmmConfig(polish=False)), offloading_only(inst),
                local_only(inst)]
        if inst.N <= 10:
            reps.append(enumerate_optimal(inst))
        for rep in reps:
            outputs += 1
            if not _feasible(rep.allocation, rep.modes):
                failures.append(f"infeasible {rep.method} output")
            if rep.raw_allocation is not None and not _feasible(rep.raw_allocation, rep.modes):
                failures.append("infeasible raw ADMM iterate")

    # coupling-step KKT bundle and multiplier identity along full trajectories
    steps = 0
    for inst in insts[:4] + insts[-2:]:
        cfg = AdmmConfig()
        c = cfg.step_size(inst.system)
        for local, coup, dual, before, rec in iterate(inst, cfg):
            steps += 1
            bad = coupling_kkt_violations(local, before, coup, c)
            if bad:
                failures.append(f"coupling step {bad} at iteration {rec.iter}")
            if not (np.array_equal(dual.beta, before.beta - c * (local.x - coup.a)) and
                    np.array_equal(dual.gamma, before.gamma - c * (local.tau - coup.z))):
                failures.append(f"multiplier identity at iteration {rec.iter}")
            if check_stop(rec, inst.N, cfg.sigma1_coeff, rec.iter):
                break

    # analytic gradients against central differences
    rng = np.random.default_rng(77)
    worst = 0.0
    eta1, eta2, eps = constants(SYS)
    for _ in range(1000):
        dev, beta, gamma, a_l, z_l, c = random_subproblem(rng, SYS)
        coef, W, rho = dev.w * eta1 * (dev.h / dev.k) ** (1 / 3), dev.w * eps, eta2 * dev.h ** 2
        x, tau = rng.uniform(0.01, 1.0, size=2)
        h = 1e-6 * max(x, tau)
        for value, grad, p in ((offload_branch_value, offload_branch_gradient, (W, rho)),
                               (local_branch_value, local_branch_gradient, (coef,))):
            f = lambda xx, tt: value(*p, beta, gamma, a_l, z_l, c, xx, tt)
            fd = np.array([(f(x + h, tau) - f(x - h, tau)) / (2 * h),
                           (f(x, tau + h) - f(x, tau - h)) / (2 * h)])
            an = np.array(grad(*p, beta, gamma, a_l, z_l, c, x, tau))
            worst = max(worst, float(np.max(np.abs(fd - an)) / np.max(np.abs(an))))
    if worst > 1e-4:
        failures.append(f"gradient mismatch {worst:.2e}")

    # byte-identical reruns, also across worker counts
    spec = ScenarioSpec("fig4", seed=9, draws=3, grid=(10, 14), optimal_max_n=10)
    paths = []
    for j, workers in enumerate((1, 1, 2)):
        p = tmp_path / f"run{j}.csv"
        write_results(run_sweep(spec, workers=workers), p)
        paths.append(p.read_bytes())
    inst = ScenarioSpec("fig3a").instance(2.4)
    same_enum = enumerate_optimal(inst, workers=1).to_dict() == \
        enumerate_optimal(inst, workers=2).to_dict()
    if not (paths[0] == paths[1] == paths[2] and same_enum):
        failures.append("reruns differ")

    ok = not failures
    report_criterion(7, ok, f"{outputs} solver outputs feasible, {steps} ADMM steps with "
                            f"coupling-step KKT and exact multiplier updates, worst gradient error "
                            f"{worst:.1e} (<= 1e-4), reruns byte-identical"
                     + ("" if ok else f"; failures: {failures[:5]}"))
    assert ok
