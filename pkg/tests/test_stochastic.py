import math

import numpy as np
import pytest

from fairrm.linprog import solve_dlp
from fairrm.model import StreamBank, make_instance
from fairrm.simulate import run_replications, simulate
from fairrm.stochastic import (BPCOGD, DLPPA, FCFS, RDLPPA, SBPC, RejectAll, acceptance_probabilities,
                               bid_prices, default_resolve_time, priced_in)


def two_fare(T=1000, m=300):
    return make_instance([[1.0], [1.0]], [2.0, 1.0], [0.2, 0.6], T=T, m=[m])


def test_acceptance_probabilities_convention():
    inst = make_instance([[1.0], [1.0]], [1, 1], [0.5, 0.0], T=10, m=[1])
    np.testing.assert_allclose(acceptance_probabilities(inst, [0.25, 0.0]), [0.5, 0.0])
    with pytest.raises(ValueError):
        acceptance_probabilities(inst, [0.25, 0.1])


def test_bid_price_of_two_fare_example():
    # capacity binds inside the low fare, so a unit of capacity is worth the low fare
    inst = two_fare()
    np.testing.assert_allclose(bid_prices(inst), [1.0], atol=1e-9)
    np.testing.assert_array_equal(priced_in(inst, bid_prices(inst)), [True, False])
    plenty = two_fare(m=900)
    np.testing.assert_allclose(bid_prices(plenty), [0.0], atol=1e-12)


def test_dlp_pa_acceptance_rate_matches_plan():
    inst = two_fare()
    p = acceptance_probabilities(inst, solve_dlp(inst).x_star)
    np.testing.assert_allclose(p, [1.0, 1 / 6], atol=1e-9)
    R = 400
    res = run_replications(DLPPA, inst, 2, R)
    arrived = (res.arrivals == 2).sum()
    acc = ((res.arrivals == 2) & res.accepted).sum()
    rate = acc / arrived
    assert abs(rate - 1 / 6) < 4 * math.sqrt((1 / 6) * (5 / 6) / arrived) + 0.01


def test_rdlp_resolves_once():
    inst = two_fare()
    pol = RDLPPA(inst)
    assert pol.t_star == default_resolve_time(inst.T) == 900
    with pytest.raises(ValueError):
        RDLPPA(inst, t_star=inst.T)


def test_sbpc_never_accepts_priced_out_type():
    res = run_replications(SBPC, two_fare(), 0, 50)
    assert not np.any(res.accepted & (res.arrivals == 2))


def test_reject_all_and_fcfs_extremes():
    inst = two_fare()
    res = run_replications(RejectAll, inst, 0, 5)
    assert res.revenue.sum() == 0
    fc = run_replications(FCFS, inst, 0, 5)
    # FCFS stops only when capacity is exhausted
    assert np.all((fc.final_capacity[:, 0] == 0) | ~np.any(fc.decisions == 2, axis=1))


def test_bpc_ogd_price_stays_in_box_and_follows_gradient():
    inst = make_instance([[1.0, 0.5], [0.5, 1.0]], [1.0, 0.8], [0.45, 0.45], T=500, m=[100, 100])
    res = simulate(BPCOGD(inst, record_prices=True), np.tile(np.arange(500) % 3, (2, 1)).astype(np.int16),
                   StreamBank.range(0, 2))
    path = res.extras["theta_path"]
    pol = BPCOGD(inst)
    assert np.all(path >= 0) and np.all(path <= pol.theta_bar + 1e-12)
    assert pol.eta == pytest.approx(pol.D / (pol.G * math.sqrt(inst.T)))
    # scarce resources get a positive price
    assert path[0, -1].max() > 0
