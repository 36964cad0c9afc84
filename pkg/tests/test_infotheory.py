import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parampriv.infotheory import (bits_to_nats, data_processing_bound, fano_bound,
                                  fano_bound_raw, nats_to_bits, privacy_report)
from parampriv.model_core import ParameterPrior
from parampriv.randomizer import RandomizerPolicy, solve_randomizer


def test_binary_prior_at_largest_budget_is_vacuous():
    assert fano_bound_raw(math.log(2), 0.69, 2) < 0
    assert fano_bound(math.log(2), 0.69, 2) == 0.0


def test_sixteen_symbols_without_leakage():
    expected = (math.log(16) - 1) / math.log(16)
    assert fano_bound(math.log(16), 0.0, 16) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.6394, abs=1e-4)


def test_numerator_zero_gives_exactly_zero():
    H = math.log(10)
    assert fano_bound_raw(H, H - 1, 10) == 0.0


@pytest.mark.parametrize("args", [(1.0, 0.0, 1), (1.0, 0.0, 0), (-0.1, 0.0, 4), (1.0, -1e-3, 4)])
def test_domain_errors(args):
    with pytest.raises(ValueError):
        fano_bound(*args)


@given(H=st.floats(0, 10), I1=st.floats(0, 10), I2=st.floats(0, 10), m=st.integers(2, 1000))
def test_bound_is_a_probability_and_monotone(H, I1, I2, m):
    lo, hi = sorted((I1, I2))
    b_lo, b_hi = fano_bound(H, lo, m), fano_bound(H, hi, m)
    assert 0.0 <= b_hi <= b_lo <= 1.0
    assert fano_bound(H + 0.5, lo, m) >= b_lo


def test_data_processing_bound_examples():
    assert data_processing_bound([0.5, 0.5], RandomizerPolicy.independent([0.3, 0.7], 2)) == 0.0
    assert data_processing_bound([0.5, 0.5], RandomizerPolicy.identity(2)) == pytest.approx(
        math.log(2))
    D = np.abs(np.subtract.outer([0.0, 1.0], np.linspace(0, 1, 6)))
    res = solve_randomizer(D, [0.5, 0.5], 0.3)
    assert data_processing_bound([0.5, 0.5], res.policy) <= 0.3 + 1e-6


def test_report_fields_and_units():
    prior = ParameterPrior(["a", "b", "c", "d"], [0.25] * 4)
    rep = privacy_report(prior, RandomizerPolicy.independent([1.0], 4), budget=0.1)
    assert rep.H_theta == pytest.approx(math.log(4))
    assert rep.I_theta_thetatilde == 0.0
    assert rep.fano_lower_bound_raw == pytest.approx((math.log(4) - 0.1 - 1) / math.log(4))
    assert 0 <= rep.fano_lower_bound <= 1
    doc = json.loads(json.dumps(rep.to_json()))
    assert doc["H_theta_bits"] == pytest.approx(2.0)
    assert doc["leakage_budget"] == 0.1


def test_report_leakage_respects_alphabet_limit():
    prior = ParameterPrior(range(3), [0.2, 0.3, 0.5])
    P = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
    rep = privacy_report(prior, RandomizerPolicy(P))
    assert rep.I_theta_thetatilde <= min(rep.H_theta, math.log(2)) + 1e-9


def test_unit_conversion_round_trip():
    assert nats_to_bits(math.log(2)) == pytest.approx(1.0)
    assert bits_to_nats(nats_to_bits(0.3)) == pytest.approx(0.3)
