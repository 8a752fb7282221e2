import gmpy2
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from flatcircle.errors import (
    InvalidParameterError,
    PrecisionExhaustedError,
    RationalDetectedError,
    TuningFailedError,
)
from flatcircle.mapcore import make_flat_map
from flatcircle.numerics import prec_context
from flatcircle.rotation import (
    ContinuedFraction,
    cf_target_value,
    continued_fraction,
    first_return_times,
    is_bounded_type,
    return_sides,
    rotation_number,
    tune_parameter,
)

FIB = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144]
PELL = [1, 2, 5, 12, 29, 70, 169, 408]


def test_golden_continued_fraction(golden_value):
    cf = continued_fraction(golden_value, 10)
    assert cf.partial_quotients == tuple([1] * 10)
    assert list(cf.q) == FIB[:11]


def test_silver_continued_fraction(silver_value):
    cf = continued_fraction(silver_value, 7)
    assert cf.partial_quotients == tuple([2] * 7)
    assert list(cf.q) == PELL


def test_recurrence_example():
    cf = ContinuedFraction((1, 2, 3))
    assert list(cf.q) == [1, 1, 3, 10]
    assert list(cf.p) == [0, 1, 2, 7]


@given(st.lists(st.integers(1, 9), min_size=1, max_size=12))
@settings(max_examples=60, deadline=None)
def test_recurrence_property(a):
    cf = ContinuedFraction(tuple(a))
    for n in range(1, len(cf.q) - 1):
        assert cf.q[n + 1] == a[n] * cf.q[n] + cf.q[n - 1]
        assert cf.p[n + 1] == a[n] * cf.p[n] + cf.p[n - 1]
    # q strictly increasing from index 1
    for n in range(1, len(cf.q) - 1):
        assert cf.q[n + 1] > cf.q[n]


@given(st.lists(st.integers(1, 6), min_size=3, max_size=10))
@settings(max_examples=40, deadline=None)
def test_convergent_sandwich(a):
    cf = ContinuedFraction(tuple(a))
    with prec_context(200):
        rho = cf.value(128)
        for n in range(1, cf.depth - 1):
            lo = mpfr(cf.p[n]) / cf.q[n]
            hi = mpfr(cf.p[n + 1]) / cf.q[n + 1]
            if lo > hi:
                lo, hi = hi, lo
            assert lo <= rho <= hi
            assert abs(rho - mpfr(cf.p[n]) / cf.q[n]) < 1 / (mpfr(cf.q[n]) * cf.q[n + 1])


def test_bounded_type():
    cf = ContinuedFraction(tuple([1] * 8))
    assert is_bounded_type(cf, 2).holds
    assert not is_bounded_type(ContinuedFraction((1, 5, 1)), 3).holds
    cert = is_bounded_type([], 3)
    assert cert.holds and cert.checked_depth == 0


def test_rotation_number_of_tuned_map(golden3, golden_value):
    rho = rotation_number(golden3, tol=1e-9)
    assert abs(rho - golden_value) < 2e-9


def test_first_return_times_golden(golden3):
    cf = first_return_times(golden3, depth=10)
    assert list(cf.q) == FIB[:11]
    cf2 = continued_fraction(rotation_number(golden3, 1e-10), 10)
    assert cf.q[:10] == cf2.q[:10]


def test_first_return_times_silver(silver3):
    cf = first_return_times(silver3, depth=7)
    assert list(cf.q) == PELL


def test_return_sides_alternate(golden3):
    sides = return_sides(golden3, 8)
    # forward closest returns land right of the flat interval at even
    # index, left at odd (preimages take the mirrored sides)
    assert sides == ["left", "right"] * 4


def test_tuned_silver_q(silver_value):
    m = tune_parameter(0.5, 3, 3, silver_value, tol=1e-7, precision_bits=256)
    assert list(first_return_times(m, 5).q) == PELL[:6]


def test_rational_target_rejected():
    with pytest.raises((TuningFailedError, PrecisionExhaustedError)):
        tune_parameter(0.5, 3, 3, 0.5, tol=1e-9, precision_bits=256)


def test_rational_map_detected():
    # t = 0 has a fixed flat interval: the orbit never leaves it
    m = make_flat_map(0.5, 3, 3, 0.25, 256)
    # rho(f_{0.25}) is rational (the parameter sits deep inside a plateau)
    with pytest.raises(RationalDetectedError):
        rotation_number(m, tol=1e-12)


def test_monotone_rho_in_t():
    # Birkhoff averages suffice to check monotone dependence on a grid
    with prec_context(320):
        n = 600
        prev = None
        for i in range(0, 100):
            t = mpfr(i) / 100 + mpfr("0.004")
            m = make_flat_map(0.5, 3, 3, t, 256)
            y = m.lift(mpfr(0))
            for _ in range(n - 1):
                y = m.lift(y)
            avg = y / n
            if prev is not None:
                assert float(avg) >= float(prev) - 2.5 / n
            prev = avg


def test_continued_fraction_validation():
    with pytest.raises(InvalidParameterError):
        continued_fraction(1.5, 4)
    with pytest.raises(InvalidParameterError):
        continued_fraction(0.5, 0)
    with pytest.raises(PrecisionExhaustedError):
        continued_fraction(0.5, 40)  # rational: remainder vanishes


def test_cf_target_value_matches_surds(golden_value, silver_value):
    with prec_context(320):
        assert abs(golden_value - (gmpy2.sqrt(mpfr(5)) - 1) / 2) < mpfr(2) ** -250
        assert abs(silver_value - (gmpy2.sqrt(mpfr(2)) - 1)) < mpfr(2) ** -250
