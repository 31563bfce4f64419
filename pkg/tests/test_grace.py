import math

import numpy as np
import pytest

from fairrm.grace import (DECREASING, GPBPCOGD, GPFCFS, GPSBPC, INCREASING, GraceConfig, GraceState,
                          decreasing_step, gamma_of, gp_enhanced_rdlp, gp_log_csv, increasing_step)
from fairrm.model import StreamBank, make_instance
from fairrm.simulate import ACCEPTED, NONE, REJECTED, run_replications, simulate
from fairrm.stochastic import FCFS


def test_gamma_values():
    assert gamma_of(0.5, 0.25) == pytest.approx(2.0)
    assert gamma_of(0.1, 1e-3) == pytest.approx(math.log(1e-3) / math.log(0.9))
    with pytest.raises(ValueError):
        gamma_of(0.0, 0.5)
    with pytest.raises(ValueError):
        GraceConfig(0.5, 1.0)
    assert GraceConfig.for_horizon(0.2, 100).delta == 0.01


def test_chain_truth_tables():
    last = np.array([ACCEPTED, ACCEPTED, REJECTED, REJECTED, NONE, NONE])
    u = np.array([0.05, 0.95, 0.05, 0.95, 0.05, 0.95])
    np.testing.assert_array_equal(decreasing_step(last, u, 0.1), [True, False, False, False, True, False])
    np.testing.assert_array_equal(increasing_step(last, u, 0.1), [True, True, True, False, True, True])
    np.testing.assert_array_equal(increasing_step(last, u, 0.1, none_accepts=False),
                                  [True, True, True, False, True, False])


def test_grace_state_logs_transitions():
    st = GraceState(2, 2, log=True)
    mask = np.array([[True, False], [False, False]])
    st.enter(mask, DECREASING, 5, "capacity")
    st.enter(mask, DECREASING, 6, "capacity")  # no change, no event
    assert st.event_rows(0) == [(5, 1, 0, DECREASING, "capacity")]
    assert "(normal,decreasing)" in gp_log_csv(st.event_rows(0))
    with pytest.raises(RuntimeError):
        st.decide(np.array([1]), np.array([0]), np.array([NONE]), np.array([0.0]), 0.1)


def test_gp_fcfs_matches_fcfs_before_trigger():
    inst = make_instance([[1.0], [1.0]], [2.0, 1.0], [0.4, 0.4], T=800, m=[400])
    cfg = GraceConfig.for_horizon(0.2, inst.T)
    R = 100
    bank = StreamBank.range(0, R)
    from fairrm.model import sample_arrival_matrix
    arr = sample_arrival_matrix(inst.lam, inst.T, bank)
    pol = GPFCFS(inst, cfg)
    gp = simulate(pol, arr, bank)
    base = simulate(FCFS(inst), arr, bank)
    for k in range(R):
        t = pol.trigger_time[k] if pol.trigger_time[k] >= 0 else inst.T
        np.testing.assert_array_equal(gp.decisions[k, :t], base.decisions[k, :t])


def test_decreasing_chain_is_absorbing():
    inst = make_instance([[1.0]], [1.0], [1.0], T=400, m=[100])
    pol = GPFCFS(inst, GraceConfig.for_horizon(0.3, inst.T))
    res = simulate(pol, np.ones((200, 400), dtype=np.int16), StreamBank.range(1, 200))
    for k in range(200):
        start = pol.trigger_time[k]
        post = res.accepted[k, start:]
        if (~post).any():
            first_reject = int(np.argmin(post))
            assert not post[first_reject:].any()


def test_gp_sbpc_only_serves_priced_in_types():
    inst = make_instance([[1.0], [1.0]], [2.0, 1.0], [0.2, 0.6], T=1000, m=[300])
    res = run_replications(lambda i: GPSBPC(i, GraceConfig.for_horizon(0.1, i.T)), inst, 0, 50)
    assert not np.any(res.accepted & (res.arrivals == 2))


def test_segmented_plan_lengths_and_resolve():
    inst = make_instance([[1.0]], [1.0], [0.8], T=8000, m=[3200])
    cfg = GraceConfig.for_horizon(0.5, inst.T)
    pol = gp_enhanced_rdlp(inst, cfg, beta=1 / 3)
    assert pol.seg_len == 20 and pol.n_segments == 400
    assert pol.resolve_segment == round((8000 - 400) / 20)
    half = gp_enhanced_rdlp(inst, cfg, beta=0.5)
    assert half.resolve_segment is None


def test_segment_deficit_nonnegative_and_targets_track_plan():
    inst = make_instance([[1.0]], [1.0], [0.8], T=8000, m=[3200])
    cfg = GraceConfig(0.9, 1e-6)
    res = run_replications(lambda i: gp_enhanced_rdlp(i, cfg, beta=1 / 3, record_segments=True), inst, 0, 50)
    w, y = res.extras["segment_w"], res.extras["segment_y"]
    assert np.all(w >= 0)
    # the mean first-segment target is about p * lambda * len = 0.5 * 0.8 * 20
    assert y[:, 0, 0].mean() == pytest.approx(8.0, abs=1.0)
    # over the whole run the policy accepts about the fluid plan
    assert res.accepted.sum(axis=1).mean() == pytest.approx(3200, rel=0.05)


def test_gp_bpc_ogd_rejects_during_warmup():
    inst = make_instance([[1.0], [1.0]], [1.0, 0.05], [0.3, 0.4], T=1000, m=[500])
    pol = GPBPCOGD(inst, GraceConfig.for_horizon(0.5, inst.T))
    res = run_replications(lambda i: GPBPCOGD(i, GraceConfig.for_horizon(0.5, i.T)), inst, 0, 20)
    assert not res.accepted[:, :pol.warmup_len].any()
    assert np.all(res.extras["shadow_u"] <= res.extras["shadow_arrivals"])
