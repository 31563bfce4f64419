import numpy as np
import pytest

from fairrm.adversarial import (BookingLimits, GPBookingLimits, Nesting, cr_csv, default_booking_limits,
                                default_nested_limits, empirical_cr, generate_adversarial, nesting_warnings,
                                parse_family)
from fairrm.grace import GraceConfig
from fairrm.model import make_instance
from fairrm.simulate import run_replications


def template(m):
    return make_instance([[1.0], [1.0]], [2.0, 1.0], [0.5, 0.5], T=int(4 * m), m=[m])


def test_family_shapes():
    assert parse_family("block_permutations(4)").k == 4
    for fam in ("low_first", "high_first", "alternating"):
        (seq,) = generate_adversarial(fam, 10)
        assert seq.T == 40
        np.testing.assert_array_equal(seq.counts, [20, 20])
    assert generate_adversarial("low_first", 3)[0].events[0] == 2
    assert len(generate_adversarial("single_type_flood", 5)) == 2
    assert len(generate_adversarial("block_permutations(3)", 5)) == 8
    with pytest.raises(ValueError):
        generate_adversarial("nope", 5)


def test_booking_limits_cap_each_type():
    inst = make_instance(np.ones((3, 1)), [3, 2, 1], [0.3, 0.3, 0.3], T=500, m=[100])
    b = [10, 20, 30]
    res = run_replications(lambda i: BookingLimits(i, b), inst, 0, 20)
    assert np.all(res.accepted_counts(3) <= np.array(b))


def test_nesting_caps_each_group():
    inst = make_instance(np.ones((3, 1)), [3, 2, 1], [0.3, 0.3, 0.3], T=500, m=[100])
    b = [100, 40, 15]
    res = run_replications(lambda i: Nesting(i, b), inst, 0, 20)
    s = res.accepted_counts(3)
    group = np.cumsum(s[:, ::-1], axis=1)[:, ::-1]
    assert np.all(group <= np.array(b))


def test_nesting_checks():
    with pytest.raises(ValueError):
        Nesting(make_instance([[1.0, 1.0]], [1], [0.5], T=10, m=[1, 1]), [1])
    assert nesting_warnings([5, 7], 10)
    assert not nesting_warnings([10, 5], 10)


def test_default_limits_follow_plan():
    inst = make_instance(np.ones((3, 1)), [3, 2, 1], [0.1, 0.3, 0.3], T=400, m=[100])
    np.testing.assert_array_equal(default_booking_limits(inst), [40, 60, 0])
    np.testing.assert_array_equal(default_nested_limits(inst), [100, 60, 0])


def test_gp_booking_limits_zero_quota_type_is_closed():
    inst = make_instance(np.ones((2, 1)), [2.0, 1.0], [0.5, 0.5], T=200, m=[100])
    cfg = GraceConfig.for_horizon(0.1, inst.T)
    res = run_replications(lambda i: GPBookingLimits(i, cfg, [200, 0]), inst, 0, 50)
    assert not np.any(res.accepted & (res.arrivals == 2))
    assert not res.depleted.any()


def test_abundance_gives_ratio_one():
    def roomy(m):
        return make_instance([[1.0], [1.0]], [2.0, 1.0], [0.5, 0.5], T=int(4 * m), m=[8 * m])
    builders = {"bl": lambda i: BookingLimits(i, [10 ** 6, 10 ** 6])}
    rows, cr = empirical_cr(builders, roomy, ["low_first", "alternating"], [10, 100, 1000])
    assert all(v == pytest.approx(1.0) for v in cr.values())
    assert cr_csv(rows).startswith("m_scale,family,instance_id,policy,revenue,opt,ratio")


def test_booking_limit_ratio_is_scale_invariant():
    _, cr = empirical_cr({"bl": lambda i: BookingLimits(i, [int(i.m[0]) // 2] * 2)}, template,
                         ["low_first", "high_first", "alternating", "single_type_flood"], [100, 1000, 10000])
    vals = [cr[("bl", m)] for m in (100, 1000, 10000)]
    assert max(vals) - min(vals) < 1e-12


def test_gp_booking_limits_gap_shrinks_with_scale():
    def builders(m):
        return {"bl": lambda i: BookingLimits(i, [m // 2] * 2),
                "gp_bl": lambda i: GPBookingLimits(i, GraceConfig.for_horizon(0.5, i.T), [m // 2] * 2)}
    gaps = []
    for m in (100, 1000):
        _, cr = empirical_cr(builders(m), template, ["low_first", "alternating"], [m], replications=100,
                             randomized=["gp_bl"])
        gaps.append(cr[("bl", m)] - cr[("gp_bl", m)])
    assert 0 < gaps[1] < gaps[0]


def test_gp_nesting_respects_every_group():
    from fairrm.adversarial import GPNesting
    inst = make_instance(np.ones((3, 1)), [3, 2, 1], [0.3, 0.3, 0.3], T=500, m=[100])
    b = [90, 40, 15]
    res = run_replications(lambda i: GPNesting(i, GraceConfig.for_horizon(0.3, i.T), b), inst, 0, 50)
    s = res.accepted_counts(3)
    group = np.cumsum(s[:, ::-1], axis=1)[:, ::-1]
    assert np.all(group <= np.array(b))
