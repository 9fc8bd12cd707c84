import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_for_modes, local_coef
from wpmec.errors import CapacityError, InvalidInputError
from wpmec.exact import (ModeRestrictedProblem, _mode_vector, all_mode_sets, enumerate_optimal,
                         inner_tau_allocation, local_only, offloading_only,
                         optimize_by_golden_section, optimize_given_modes, value_function)
from wpmec.model import (DeviceParams, Instance, SystemParams, default_channel,
                         instance_from_distances, psi, weighted_sum_rate)

SYS = SystemParams()


def dev_with_rho(rho, w=1.0):
    return DeviceParams(h=math.sqrt(rho / SYS.eta2), w=w)


def kkt_spread(prob, a, tau):
    """Relative spread of the per-device stationarity values."""
    inst = prob.inst
    vals = [inst.w[j] * SYS.epsilon * psi(inst.rho[j] * a / tau[j])
            for j in prob.offloaders if tau[j] > 1e-9]
    return (max(vals) - min(vals)) / max(vals)


def test_inner_single_device_takes_remaining_time():
    inst = Instance(SYS, (dev_with_rho(2.0),))
    tau = inner_tau_allocation(ModeRestrictedProblem(inst, (1,)), 0.3)
    assert tau[0] == 0.7


def test_inner_identical_devices_split_evenly():
    inst = Instance(SYS, (dev_with_rho(1.0), dev_with_rho(1.0)))
    tau = inner_tau_allocation(ModeRestrictedProblem(inst, (1, 1)), 0.4)
    assert tau[0] == pytest.approx(0.3, rel=1e-12)
    assert tau[1] == pytest.approx(0.3, rel=1e-12)


def test_inner_matches_simplex_grid():
    inst = Instance(SYS, (dev_with_rho(1.0, w=1.0), dev_with_rho(1.0, w=2.0)))
    prob = ModeRestrictedProblem(inst, (1, 1))
    tau = inner_tau_allocation(prob, 0.5)
    t1 = np.arange(1, 500000) * 1e-6
    t2 = 0.5 - t1
    f = SYS.epsilon * (t1 * np.log1p(0.5 / t1) + 2 * t2 * np.log1p(0.5 / t2))
    best = t1[np.argmax(f)]
    assert abs(tau[0] - best) <= 1e-5
    assert abs(tau[1] - (0.5 - best)) <= 1e-5


def test_inner_rejects_bad_inputs():
    inst = Instance(SYS, (dev_with_rho(1.0),))
    with pytest.raises(InvalidInputError):
        inner_tau_allocation(ModeRestrictedProblem(inst, (0,)), 0.5)
    with pytest.raises(InvalidInputError):
        inner_tau_allocation(ModeRestrictedProblem(inst, (1,)), 1.0)


rhos = st.lists(st.floats(1e-4, 1e3), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(rhos=rhos, ws=st.lists(st.sampled_from([1.0, 2.0]), min_size=6, max_size=6),
       a=st.floats(0.01, 0.95))
def test_inner_kkt_and_budget(rhos, ws, a):
    inst = Instance(SYS, tuple(dev_with_rho(r, w) for r, w in zip(rhos, ws)))
    prob = ModeRestrictedProblem(inst, (1,) * inst.N)
    tau = inner_tau_allocation(prob, a)
    assert math.fsum(tau) == pytest.approx(1 - a, rel=1e-12)
    assert np.all(tau >= 0)
    assert kkt_spread(prob, a, tau) <= 1e-6


def test_all_local_takes_full_frame():
    inst = instance_from_distances([2.5, 3.0, 4.1], [1, 2, 1])
    alloc, obj = optimize_given_modes(ModeRestrictedProblem(inst, (0, 0, 0)))
    assert alloc.a == 1.0 and list(alloc.tau) == [0.0, 0.0, 0.0]
    expected = math.fsum(local_coef(inst, i) for i in range(3))
    assert obj == pytest.approx(expected, rel=1e-14)


def test_single_offloader_matches_grid():
    inst = instance_from_distances([2.5], [1])
    alloc, obj = optimize_given_modes(ModeRestrictedProblem(inst, (1,)))
    a = np.arange(1, 1000000) * 1e-6
    grid = inst.system.epsilon * (1 - a) * np.log1p(inst.rho[0] * a / (1 - a))
    assert obj == pytest.approx(grid.max(), rel=1e-5)
    assert obj >= grid.max() * (1 - 1e-12)


def test_vanishing_channel_is_finite():
    inst = Instance(SYS, (DeviceParams(h=1e-15), DeviceParams(h=1e-5)))
    for modes in all_mode_sets(2):
        alloc, obj = optimize_given_modes(ModeRestrictedProblem(inst, modes))
        assert math.isfinite(obj) and obj >= 0
        alloc.check_feasible(modes)


def _fig3a(d_e, n=10):
    return instance_from_distances([2.5 + 0.3 * i for i in range(n)],
                                   [1 if i % 2 == 0 else 2 for i in range(n)],
                                   channel=default_channel(d_e))


@pytest.mark.parametrize("modes", [(1, 1, 0, 0), (0, 1, 0, 1), (1, 1, 1, 1), (1, 0, 0, 0)])
def test_closed_form_agrees_with_golden_section(modes):
    inst = _fig3a(2.4, n=4)
    prob = ModeRestrictedProblem(inst, modes)
    alloc, obj = optimize_given_modes(prob)
    ref_alloc, ref = optimize_by_golden_section(prob)
    assert obj == pytest.approx(ref, rel=1e-6)
    assert obj >= ref * (1 - 1e-9)
    alloc.check_feasible(modes)
    assert math.fsum([alloc.a, *alloc.tau]) <= 1 + 1e-9


@pytest.mark.parametrize("modes", [(1, 1, 0, 0), (0, 1, 0, 1), (1, 1, 1, 1)])
def test_value_function_peak(modes):
    prob = ModeRestrictedProblem(_fig3a(2.8, n=4), modes)
    alloc, obj = optimize_given_modes(prob)
    for da in (-1e-4, 1e-4):
        assert value_function(prob, alloc.a + da) <= obj * (1 + 1e-6)


def _random_instance(rng, n):
    d = rng.uniform(2.5, 5.2, n)
    w = rng.integers(1, 3, n)
    return instance_from_distances(d, w, channel=default_channel(rng.uniform(2.0, 4.0)))


@pytest.mark.parametrize("seed", range(8))
def test_enumeration_matches_grid_oracle(seed):
    inst = _random_instance(np.random.default_rng(100 + seed), 1 + seed % 2)
    rep = enumerate_optimal(inst)
    oracle = max(best_for_modes(inst, m) for m in all_mode_sets(inst.N))
    assert rep.objective == pytest.approx(oracle, rel=1e-4)
    assert rep.objective >= oracle * (1 - 1e-9)


def test_single_device_prefers_offloading():
    inst = instance_from_distances([2.5], [1])
    rep = enumerate_optimal(inst)
    assert rep.modes == (1,)
    assert rep.objective > 1e6
    assert local_only(inst).objective == pytest.approx(1.212e5, rel=1e-3)


def test_enumeration_relabel_invariant():
    inst = instance_from_distances([3.0, 3.0], [1, 1])
    assert enumerate_optimal(inst).objective == enumerate_optimal(inst.permuted([1, 0])).objective
    inst = instance_from_distances([2.7, 4.9, 3.3], [2, 1, 1])
    v1 = enumerate_optimal(inst).objective
    v2 = enumerate_optimal(inst.permuted([2, 0, 1])).objective
    assert v1 == pytest.approx(v2, rel=1e-12)


def test_enumeration_dominates_every_mode_set():
    inst = _fig3a(2.6, n=5)
    best = enumerate_optimal(inst)
    for modes in all_mode_sets(5):
        _, obj = optimize_given_modes(ModeRestrictedProblem(inst, modes))
        assert best.objective >= obj
    assert best.objective >= offloading_only(inst).objective
    assert best.objective >= local_only(inst).objective
    assert best.iterations == 32


def test_enumeration_cap():
    inst = instance_from_distances([3.0] * 21, [1] * 21)
    with pytest.raises(CapacityError, match="N = 20") as info:
        enumerate_optimal(inst)
    assert info.value.cap == 20


def test_enumeration_independent_of_workers():
    inst = _fig3a(2.2, n=8)
    r1 = enumerate_optimal(inst, workers=1)
    r2 = enumerate_optimal(inst, workers=3)
    assert r1.to_dict() == r2.to_dict()


def test_mode_vectors_are_lexicographic():
    assert [_mode_vector(i, 3) for i in range(8)] == list(all_mode_sets(3))


def test_ties_go_to_smallest_mode_vector(monkeypatch):
    import wpmec.exact as ex
    inst = instance_from_distances([3.0, 3.5, 4.0], [1, 1, 1])
    # every mode set scores the same, so the first one visited must win
    monkeypatch.setattr(ex, "weighted_sum_rate", lambda *args: 1.0)
    assert ex._best_in_range(inst, 0, 8) == (1.0, 0)
    assert ex._best_in_range(inst, 3, 8) == (1.0, 3)


def test_baselines():
    inst = _fig3a(2.8, n=4)
    assert local_only(inst).allocation.a == 1.0
    assert offloading_only(inst).modes == (1, 1, 1, 1)
    assert offloading_only(inst).objective <= enumerate_optimal(inst).objective


def test_offloading_collapses_at_high_path_loss():
    inst = _fig3a(4.0)
    ratio = offloading_only(inst).objective / enumerate_optimal(inst).objective
    assert 1e-4 < ratio < 1e-2


@settings(max_examples=15, deadline=None)
@given(d=st.lists(st.floats(2.5, 5.2), min_size=1, max_size=4),
       extra=st.floats(2.5, 5.2), d_e=st.floats(2.0, 4.0))
def test_adding_a_device_never_hurts(d, extra, d_e):
    ch = default_channel(d_e)
    base = instance_from_distances(d, [1] * len(d), channel=ch)
    more = instance_from_distances(d + [extra], [1] * (len(d) + 1), channel=ch)
    assert enumerate_optimal(more).objective >= enumerate_optimal(base).objective * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(d=st.lists(st.floats(2.5, 5.2), min_size=1, max_size=5), d_e=st.floats(2.0, 4.0),
       bits=st.integers(0, 31))
def test_allocation_always_feasible(d, d_e, bits):
    inst = instance_from_distances(d, [1] * len(d), channel=default_channel(d_e))
    modes = _mode_vector(bits % (1 << len(d)), len(d))
    alloc, obj = optimize_given_modes(ModeRestrictedProblem(inst, modes))
    assert alloc.a >= 0 and np.all(np.asarray(alloc.tau) >= 0)
    assert math.fsum([alloc.a, *alloc.tau]) <= 1 + 1e-9
    assert obj == weighted_sum_rate(inst, modes, alloc)
