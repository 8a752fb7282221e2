"""High-precision arithmetic helpers shared by every module.

All real arithmetic runs on gmpy2.mpfr values.  Each map caries a nominal
``precision_bits``; internal computation adds GUARD_BITS guard bits so that
accumulated round-off stays far below every contract tolerance.  Numbers are
serialized as decimal strings with enough digits to round-trip the binary
value exactly.
"""

import math

import gmpy2
from gmpy2 import mpfr

GUARD_BITS = 64


def working_precision(precision_bits):
    return precision_bits + GUARD_BITS


def prec_context(bits):
    """Context manager setting the current thread's mpfr precision."""
    return gmpy2.context(precision=bits)


def to_mpfr(x, bits):
    """Convert float/int/str/mpfr to mpfr at the given precision.

    Strings go through gmpy2's correctly rounded decimal parser, so decimal
    literals like "0.4" do not inherit binary-double rounding.
    """
    if isinstance(x, mpfr):
        return mpfr(x, bits)
    if isinstance(x, str):
        return mpfr(x, bits)
    if isinstance(x, float) or isinstance(x, int):
        return mpfr(x, bits)
    raise TypeError(f"cannot convert {type(x).__name__} to mpfr")


def decimal_digits(precision_bits):
    """Digits needed so that binary -> decimal -> binary is the identity."""
    return math.ceil(precision_bits * math.log10(2)) + 4


def to_decimal(x, precision_bits):
    """Round-trippable decimal string for an mpfr value."""
    if not isinstance(x, mpfr):
        # conversion must not round through the ambient context
        x = mpfr(x, max(precision_bits, working_precision(precision_bits)))
    if gmpy2.is_nan(x):
        return "nan"
    if gmpy2.is_infinite(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    ndig = decimal_digits(precision_bits)
    mant, exp, _ = x.digits(10, ndig)
    sign = "-" if mant.startswith("-") else ""
    mant = mant.lstrip("-")
    return f"{sign}0.{mant}e{exp}"


def from_decimal(s, precision_bits):
    return mpfr(s, precision_bits)


def frac(x):
    """Fractional part in [0, 1)."""
    return x - gmpy2.floor(x)


def circ_dist(a, b):
    """Shortest-arc distance |a, b| on R/Z."""
    d = frac(a - b)
    return min(d, 1 - d)


def arc_forward(a, b):
    """Length of the arc from a forward (counterclockwise) to b."""
    return frac(b - a)


def point_interval_dist(x, lo, hi):
    """Distance from circle point x to the closed arc [lo, hi] (lo + length
    representation, hi may exceed 1).  Zero if x lies inside."""
    rel = frac(x - lo)
    length = hi - lo
    if rel <= length:
        return mpfr(0)
    return min(rel - length, 1 - rel)
