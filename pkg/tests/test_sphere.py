import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from punctured_dynamics.sphere import (
    INF,
    PunctureSet,
    chart_inverse,
    chart_map,
    compute_rho,
    dominant_symbol,
    generalized_modulus,
    sphere_point,
)

finite = st.complex_numbers(min_magnitude=1e-6, max_magnitude=1e6, allow_nan=False, allow_infinity=False)


def test_sphere_point_normalises_overflow_and_rejects_nan():
    assert sphere_point(complex(math.inf, 0)) is INF
    assert sphere_point(complex(1.0, -math.inf)) is INF
    assert sphere_point(3) == 3 + 0j
    with pytest.raises(ValueError):
        sphere_point(complex(math.nan, 0))


def test_generalized_modulus_examples(S0):
    assert generalized_modulus(3 + 4j, 0, S0) == 5.0
    assert generalized_modulus(0.5, 1, S0) == 2.0
    assert generalized_modulus(INF, 1, S0) == 0.0
    assert generalized_modulus(INF, 0, S0) == math.inf
    assert generalized_modulus(0j, 1, S0) == math.inf


def test_chart_examples(S0):
    assert chart_map(7 - 2j, 0, S0) == 7 - 2j
    assert chart_map(0.5 + 0j, 1, S0) == -2.0
    assert chart_map(1j, 1, S0) == 1j
    assert abs(chart_map(1j, 1, S0)) == generalized_modulus(1j, 1, S0)
    assert chart_map(0j, 1, S0) is INF
    assert chart_map(INF, 1, S0) == 0j


def test_chart_inverse_examples(S0):
    assert chart_inverse(5j, 0, S0) == 5j
    assert chart_inverse(-2.0 + 0j, 1, S0) == 0.5
    assert chart_inverse(INF, 1, S0) == 0j
    assert chart_inverse(0j, 1, S0) is INF


def test_chart_is_minus_reciprocal():
    S = PunctureSet([1 + 1j])
    x = 0.3 - 2j
    assert chart_map(x, 1, S) == pytest.approx(-1 / (x - (1 + 1j)), rel=1e-14)


def test_chart_overflow_scaling():
    S = PunctureSet([0])
    w = chart_map(complex(1e200, 1e200), 1, S)
    assert w != 0 and abs(abs(w) - 1 / abs(complex(1e200, 1e200))) <= 1e-12 * abs(w)


@pytest.mark.parametrize("punctures, rho", [([0], 2.0), ([0, 1], 2.0), ([0, 0.1], 20.0)])
def test_rho_examples(punctures, rho):
    S = PunctureSet(punctures)
    assert compute_rho(S) == rho
    assert S.rho == rho
    # separation: only y_j is that large in chart j
    for j in S.indices:
        large = [k for k in S.indices if generalized_modulus(S.puncture(k), j, S) >= rho]
        assert large == [j]


def test_puncture_set_rejects_bad_input():
    with pytest.raises(ValueError):
        PunctureSet([0, 0])
    with pytest.raises(ValueError):
        PunctureSet([])
    with pytest.raises(ValueError):
        PunctureSet([complex(math.inf, 0)])


def test_dominant_symbol_examples(S0):
    assert dominant_symbol(10, S0, 2) == 0
    assert dominant_symbol(0.01, S0, 2) == 1
    assert dominant_symbol(1 + 1j, S0, 2) is None
    assert dominant_symbol(INF, S0, 2) == 0
    with pytest.raises(ValueError):
        dominant_symbol(10, S0, 1.5)


@given(finite, st.sampled_from([0, 1, 2]))
def test_modulus_equals_chart_modulus(x, j):
    S = PunctureSet([0, 1 + 0.5j])
    w = chart_map(x, j, S)
    assert abs(w) == pytest.approx(generalized_modulus(x, j, S), rel=1e-12)


@given(finite, st.sampled_from([0, 1, 2]))
def test_inverse_round_trip(x, j):
    S = PunctureSet([0, 1 + 0.5j])
    back = chart_inverse(chart_map(x, j, S), j, S)
    assert abs(back - x) <= 1e-12 * max(1.0, abs(x)) * 10


def test_round_trip_on_random_points():
    rng = np.random.default_rng(3)
    S = PunctureSet([0, -1j])
    pts = (rng.normal(size=10_000) + 1j * rng.normal(size=10_000)) * 5
    for j in S.indices:
        for x in pts:
            x = complex(x)
            assert abs(chart_inverse(chart_map(x, j, S), j, S) - x) <= 1e-12 * max(1.0, abs(x)) * 10
