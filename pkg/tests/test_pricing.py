import json
import math

import numpy as np
import pytest

from fairrm.grace import GraceConfig
from fairrm.model import StreamBank, make_instance, sample_arrival_matrix
from fairrm.pricing import (PricingInstance, finite_offers_after_trigger, price_fairness_audit,
                            pricing_from_dict, pricing_loss_bound, pricing_to_dict, run_pricing, simple_pricing,
                            simulate_pricing)


def pinst(m=200, T=1000):
    inst = make_instance([[1.0, 0.5], [0.5, 1.0]], [1, 1], [0.4, 0.4], T=T, m=[m, m])
    return simple_pricing(inst, [3.0, 2.0], [0.6, 0.8])


def test_table_validation():
    inst = make_instance([[1.0]], [1.0], [0.5], T=10, m=[5])
    PricingInstance(inst, [2.0], ({1.0: 0.9, 2.0: 0.5, math.inf: 0.0},))
    with pytest.raises(ValueError, match="decrease"):
        PricingInstance(inst, [2.0], ({1.0: 0.5, 2.0: 0.5},))
    with pytest.raises(ValueError, match="missing"):
        PricingInstance(inst, [3.0], ({1.0: 0.9, 2.0: 0.5},))
    with pytest.raises(ValueError, match="infinite"):
        PricingInstance(inst, [2.0], ({2.0: 0.5, math.inf: 0.1},))
    with pytest.raises(ValueError):
        PricingInstance(inst, [-1.0], ({-1.0: 0.5},))


def test_serialization_round_trip():
    p = pinst()
    back = pricing_from_dict(json.loads(json.dumps(pricing_to_dict(p))))
    np.testing.assert_array_equal(back.prices, p.prices)
    assert back.purchase_prob == p.purchase_prob
    assert back.prob(0, math.inf) == 0.0 and back.p_bar == 3.0


def test_static_purchase_rate_in_band():
    p = pinst(m=10 ** 6)
    res = run_pricing(p, 0, 50)
    for i, q in ((1, 0.6), (2, 0.8)):
        arrived = res.arrivals == i
        rate = (res.purchased & arrived).sum() / arrived.sum()
        assert abs(rate - q) < 4 * math.sqrt(q * (1 - q) / arrived.sum())
    assert np.all(res.offers[res.arrivals == 1] == 3.0)


def test_gp_identical_to_static_before_trigger_and_coupled():
    p = pinst()
    cfg = GraceConfig.for_horizon(0.1, p.inst.T)
    R = 200
    bank = StreamBank.range(3, R)
    arr = sample_arrival_matrix(p.inst.lam, p.inst.T, bank)
    st = simulate_pricing(p, arr, bank)
    gp = simulate_pricing(p, arr, bank, cfg)
    for k in range(R):
        t = gp.trigger_time[k] if gp.trigger_time[k] >= 0 else p.inst.T
        np.testing.assert_array_equal(st.purchased[k, :t], gp.purchased[k, :t])
    assert np.all(st.revenue - gp.revenue <= pricing_loss_bound(p, cfg) + 1e-9)


def test_capacity_never_oversold():
    p = pinst(m=30, T=300)
    res = run_pricing(p, 1, 100, GraceConfig.for_horizon(0.1, 300))
    assert np.all(res.final_capacity >= 0)
    assert np.all(finite_offers_after_trigger(res, 1) >= -1)


def test_price_audit_static_and_gp():
    p = pinst()
    res = run_pricing(p, 0, 1000, GraceConfig.for_horizon(0.1, p.inst.T))
    rep = price_fairness_audit(res, 0.1, 1 / p.inst.T)
    assert rep.verdict == "PASS"
    assert all(pair.order == "price_change" for pair in rep.pairs)


def test_trace_csv_marks_closed_offers():
    p = pinst(m=20, T=200)
    res = run_pricing(p, 0, 1)
    lines = res.trace_csv(0).strip().splitlines()
    assert lines[0] == "t,type,u,offered_price,purchased,revenue"
    assert len(lines) == 201
    assert any(",inf," in line for line in lines)
