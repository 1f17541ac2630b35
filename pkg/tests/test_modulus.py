import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from punctured_dynamics.dsl import compile_map
from punctured_dynamics.modulus import (
        SequenceCache,
    escape_threshold,
    estimate_max_modulus,
    growth_exponent,
    growth_exponent_all,
    iterated_exp,
    log_chart_modulus,
    max_modulus_sequence,
)
from punctured_dynamics.sphere import PunctureSet

RADII = (4, 8, 16, 32)


@pytest.mark.parametrize("r", [2.0, 3.0, 5.0, 10.0])
def test_circle_maximum_matches_closed_form(expz, r):
    est = estimate_max_modulus(expz, 0, 0, r)
    assert est.value_log == pytest.approx(r + 1 / r, rel=1e-9)
    assert abs(est.argmax - r) < 1e-6 * r


def test_brute_force_agrees(expz):
    # dense sampling oracle, independent of the refinement step
    r = 3.0
    theta = np.linspace(0, 2 * np.pi, 1_000_000, endpoint=False)
    z = r * np.exp(1j * theta)
    brute = float(np.max((z + 1 / z).real))
    assert estimate_max_modulus(expz, 0, 0, r).value_log >= brute - 1e-12


def test_chart_one_modulus(expz):
    # |x|_1 = r means |x| = 1/r; |f(x)|_1 = 1/|f(x)| is largest where Re(x + 1/x) is smallest
    r = 4.0
    est = estimate_max_modulus(expz, 1, 1, r)
    assert est.value_log == pytest.approx(r + 1 / r, rel=1e-9)


def test_rejects_radius_inside_separation(expz):
    with pytest.raises(ValueError):
        estimate_max_modulus(expz, 0, 0, 1.0)
    with pytest.raises(ValueError):
        estimate_max_modulus(expz, 0, 0, 3.0, n_samples=8)


def test_overflow_is_beyond_range(expz):
    # exp overflows here but the log-modulus is still known
    est = estimate_max_modulus(expz, 0, 0, 800.0)
    assert est.value_log == pytest.approx(800.00125, rel=1e-12)
    big = compile_map("exp(z)+z", expz.punctures)
    assert estimate_max_modulus(big, 0, 0, 1000.0).beyond_range


def test_indeterminate_samples_report_infinity(S0):
    f = compile_map("exp(exp(z) - exp(2*z))", S0)
    x = np.array([700 + 0j, 0.5 + 0j])
    out = log_chart_modulus(f, x, 1)
    assert out[0] == math.inf
    assert math.isfinite(out[1])


def test_sequence_closed_form(expz):
    seq = max_modulus_sequence(expz, [0, 0, 0], 3.0, 2)
    l1 = 3 + 1 / 3
    l2 = math.exp(l1) + math.exp(-l1)
    assert seq.values_log == pytest.approx([math.log(3), l1, l2], rel=1e-9)
    assert seq.strictly_increasing
    assert seq.truncated_at is None


def test_sequence_truncates(expz):
    seq = max_modulus_sequence(expz, [0] * 6, 3.0, 5)
    assert seq.truncated_at is not None
    assert len(seq.values_log) == seq.truncated_at
    with pytest.raises(ValueError):
        max_modulus_sequence(expz, [0], 3.0, 2)


def test_sequence_more_than_doubles(expz):
    seq = max_modulus_sequence(expz, [0, 1, 0, 1], 3.0, 3)
    v = [x for x in seq.values_log]
    assert all(b > 2 * a for a, b in zip(v[1:], v[2:]))


def test_cache_matches_sequence(expz):
    cache = SequenceCache(expz, 3.0)
    seq = max_modulus_sequence(expz, [0, 1, 1], 3.0, 2)
    assert [cache.term((0,)), cache.term((0, 1)), cache.term((0, 1, 1))] == seq.values_log
    assert cache.term((0, 0, 0, 0, 0, 0)) == math.inf


def test_escape_threshold_found(expz):
    assert escape_threshold(expz, range(2, 51)) == 2.0


@pytest.mark.parametrize("text", ["z", "z^2"])
def test_escape_threshold_not_found_for_polynomials(text):
    f = compile_map(text, PunctureSet([0]))
    assert escape_threshold(f, range(2, 51)) is None


def test_escape_threshold_grid_validation(expz):
    with pytest.raises(ValueError):
        escape_threshold(expz, [3, 2])
    with pytest.raises(ValueError):
        escape_threshold(expz, [1, 2])


def test_growth_exponent_values(expz, S0):
    g = growth_exponent_all(expz, RADII)
    assert g.B_hat == pytest.approx(0.93490, abs=1e-4)
    assert g.alpha_hat == 2.0 and g.rho0_hat == 4.0
    h = compile_map("z^2*exp(z)", S0)
    assert growth_exponent(h, 0, 0, RADII).B_hat == pytest.approx(0.82535, abs=1e-4)
    with pytest.raises(ValueError):
        growth_exponent(expz, 0, 0, (4, 8, 16))


def test_iterated_exp():
    assert iterated_exp(1) == 1
    assert iterated_exp(2) == math.e
    assert iterated_exp(3) == pytest.approx(float(mpmath.e ** mpmath.e), rel=1e-15)
    assert iterated_exp(4) == pytest.approx(float(mpmath.e ** (mpmath.e ** mpmath.e)), rel=1e-14)
    with pytest.raises(ValueError):
        iterated_exp(5)


@settings(max_examples=40, deadline=None)
@given(st.floats(2.0, 40.0), st.floats(1.01, 3.0))
def test_maximum_increases_with_radius(r, factor):
    f = compile_map("exp(z+1/z)", PunctureSet([0]))
    a = estimate_max_modulus(f, 0, 0, r, n_samples=256).value_log
    b = estimate_max_modulus(f, 0, 0, r * factor, n_samples=256).value_log
    assert b > a
