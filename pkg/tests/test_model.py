import json

import numpy as np
import pytest

from fairrm.model import (ArrivalSequence, RandomSource, StreamBank, arrival_dtype, instance_from_dict,
                          instance_to_dict, load_instance, make_instance, read_arrivals_csv,
                          sample_arrival_matrix, sample_arrivals, save_instance, scale_instance,
                          validate_instance, write_arrivals_csv)


def small():
    return make_instance([[1.0, 0.5], [0.5, 1.0]], [2.0, 1.0], [0.3, 0.4], T=50, m=[10, 12])


def test_no_arrival_probability_is_filled():
    inst = small()
    np.testing.assert_allclose(inst.lam, [0.3, 0.3, 0.4])
    np.testing.assert_allclose(inst.rates, [0.3, 0.4])
    assert (inst.n, inst.L) == (2, 2)
    assert inst.a_hi == 1.0 and inst.a_lo == 0.5 and inst.r_max == 2.0


def test_validation_reports_each_problem():
    assert validate_instance(small()).ok
    bad = make_instance([[1.0], [-1.0]], [1.0, 0.0], [0.5, 0.6, 0.1], T=10, m=[-1])
    msgs = " ".join(validate_instance(bad).violations)
    for needle in ("lambda not normalized", "negative demand", "reward must be positive", "negative capacity"):
        assert needle in msgs


def test_round_trip_through_json(tmp_path):
    inst = small()
    again = instance_from_dict(json.loads(json.dumps(instance_to_dict(inst))))
    np.testing.assert_array_equal(again.A, inst.A)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    for name in ("A", "r", "m", "lam"):
        np.testing.assert_array_equal(getattr(back, name), getattr(inst, name))
    assert back.T == inst.T


def test_scaling_keeps_ratios():
    tmpl = make_instance([[1.0]], [1.0], [0.5], q=[1.0], m_scale=10)
    assert tmpl.T == 40
    big = scale_instance(tmpl, 1000)
    assert big.m[0] == 1000 and big.T == 4000
    assert validate_instance(big).ok
    with pytest.raises(ValueError):
        scale_instance(tmpl, 0)
    st = small().stretched(500)
    np.testing.assert_allclose(st.m, [100, 120])


def test_streams_depend_only_on_seed_and_id():
    a = RandomSource(3, 7).generator("x").random(5)
    b = RandomSource(3, 7).generator("x").random(5)
    c = RandomSource(3, 7).generator("y").random(5)
    d = RandomSource(3, 8).generator("x").random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)


def test_arrivals_do_not_depend_on_batch_size():
    lam = small().lam
    full = sample_arrival_matrix(lam, 200, StreamBank.range(1, 10))
    part = sample_arrival_matrix(lam, 200, StreamBank.range(1, 4, start=6))
    np.testing.assert_array_equal(full[6:], part)
    single = sample_arrivals(lam, 200, StreamBank.range(1, 10).source(3))
    np.testing.assert_array_equal(single.events, full[3])
    assert full.dtype == arrival_dtype(2)


def test_arrival_frequencies_within_binomial_band():
    lam = np.array([0.1, 0.2, 0.3, 0.4])
    R, T = 200, 500
    arr = sample_arrival_matrix(lam, T, StreamBank.range(0, R))
    freq = np.bincount(arr.reshape(-1), minlength=4) / (R * T)
    band = 4 * np.sqrt(lam * (1 - lam) / (R * T))
    assert np.all(np.abs(freq - lam) <= band)


def test_bad_lambda_rejected():
    with pytest.raises(ValueError):
        sample_arrival_matrix([0.5, 0.6], 10, StreamBank.range(0, 1))


def test_zero_probability_type_never_arrives():
    arr = sample_arrival_matrix([0.5, 0.0, 0.5], 1000, StreamBank.range(0, 3))
    assert not np.any(arr == 1)


def test_arrivals_csv_round_trip(tmp_path):
    seq = ArrivalSequence([0, 1, 2, 2, 0, 1], 2)
    write_arrivals_csv(seq, tmp_path / "a.csv")
    back = read_arrivals_csv(tmp_path / "a.csv", 2)
    np.testing.assert_array_equal(back.events, seq.events)
    np.testing.assert_array_equal(seq.counts, [2, 2])
    with pytest.raises(ValueError):
        ArrivalSequence([0, 3], 2)
