"""Flat-interval circle maps and their monotone-branch inverses.

A map is represented through its lift F on [0, 1]:

    F(x) = t                 for x in [0, u]      (the flat interval)
    F(x) = t + I(x) / I(1)   for x in [u, 1]

with I(x) = integral_u^x (y-u)^(lr-1) (1-y)^(ll-1) dy, extended to R by
F(x + 1) = F(x) + 1.  This incomplete-beta family realizes a flat interval
U = (0, u) with critical exponents ll at the left edge and lr at the right
edge, both tunable and not necessarily integers.  For integer exponents the
antiderivative is a polynomial evaluated by Horner's rule, which is the fast
path everything else in the package leans on.
"""

import json
import math
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .errors import (
    BracketInvalidError,
    ContainsCriticalValueError,
    InvalidParameterError,
    PrecisionTooLowError,
)
from .numerics import (
    frac,
    from_decimal,
    prec_context,
    to_decimal,
    to_mpfr,
    working_precision,
)

NEWTON_DERIVATIVE_GATE = mpfr(2) ** -8


@dataclass(frozen=True)
class CirclePoint:
    """A point of S^1 = R/Z, stored as its representative in [0, 1)."""

    value: mpfr

    def __post_init__(self):
        object.__setattr__(self, "value", frac(mpfr(self.value)))


def as_point(x, bits=256):
    if isinstance(x, CirclePoint):
        return x
    return CirclePoint(frac(to_mpfr(x, bits)))


@dataclass(frozen=True)
class CircleInterval:
    """An open arc, stored as (lo, length) with lo in [0,1), 0 < length < 1.

    ``right`` may wrap past 0; ``wraps`` reports that.  ``l()`` and ``r()``
    return the endpoints as plain mpfr values.
    """

    lo: mpfr
    length: mpfr

    def __post_init__(self):
        if not (self.length > 0 and self.length < 1):
            raise InvalidParameterError(
                f"interval length must be in (0,1), got {float(self.length)}"
            )

    @classmethod
    def from_endpoints(cls, left, right):
        left = mpfr(left)
        length = frac(mpfr(right) - left)
        return cls(frac(left), length)

    def l(self):
        return self.lo

    def r(self):
        return frac(self.lo + self.length)

    @property
    def left(self):
        return CirclePoint(self.lo)

    @property
    def right(self):
        return CirclePoint(self.r())

    @property
    def wraps(self):
        return self.lo + self.length > 1

    def contains(self, x, closed=False):
        rel = frac(mpfr(x) - self.lo)
        if closed:
            return rel <= self.length or rel == 0
        return 0 < rel < self.length

    def midpoint(self):
        return frac(self.lo + self.length / 2)


class CircleMap:
    """Immutable flat-interval circle map of the incomplete-beta family.

    Safe to share across threads: construction precomputes everything and
    all evaluation methods are pure.
    """

    def __init__(self, u, ell_left, ell_right, t, precision_bits=256):
        if precision_bits < 64:
            raise InvalidParameterError("precision_bits must be >= 64")
        self.precision_bits = int(precision_bits)
        self.wprec = working_precision(self.precision_bits)
        with prec_context(self.wprec):
            self.u = to_mpfr(u, self.wprec)
            self.ell_left = to_mpfr(ell_left, self.wprec)
            self.ell_right = to_mpfr(ell_right, self.wprec)
            self.t = to_mpfr(t, self.wprec)
            if not (0 < self.u < 1):
                raise InvalidParameterError("u must be in (0, 1)")
            if not (self.ell_left > 1 and self.ell_right > 1):
                raise InvalidParameterError("critical exponents must be > 1")
            self._int_exponents = (
                self.ell_left == int(self.ell_left)
                and self.ell_right == int(self.ell_right)
            )
            self._setup_branch()

    # -- construction of the branch antiderivative --------------------------

    def _setup_branch(self):
        if self._int_exponents:
            ll, lr = int(self.ell_left), int(self.ell_right)
            cu = 1 - self.u
            # I(x) = s^lr * P(s) with s = x - u and
            # P(s) = sum_m C(ll-1, m) (1-u)^(ll-1-m) (-s)^m / (lr + m)
            self._pcoeffs = [
                mpfr(math.comb(ll - 1, m)) * cu ** (ll - 1 - m) * (-1) ** m / (lr + m)
                for m in range(ll)
            ]
            self._ilr = lr
            self.norm = self._antiderivative(mpfr(1))
        else:
            self._pcoeffs = None
            import mpmath

            with mpmath.workprec(self.wprec + 16):
                beta = mpmath.beta(self._mp(self.ell_right), self._mp(self.ell_left))
                norm = (1 - self._mp(self.u)) ** (
                    self._mp(self.ell_left) + self._mp(self.ell_right) - 1
                ) * beta
                self.norm = self._from_mp(norm)
        if not (self.norm > 0 and gmpy2.is_finite(self.norm)):
            raise PrecisionTooLowError("normalization integral did not converge")

    @staticmethod
    def _mp(x):
        import mpmath

        m, e = x.as_mantissa_exp()
        return mpmath.ldexp(mpmath.mpf(int(m)), int(e))

    def _from_mp(self, y):
        import mpmath

        sign, man, exp, _ = mpmath.mpf(y)._mpf_
        v = mpfr(int(man)) * mpfr(2) ** int(exp)
        return -v if sign else v

    def _antiderivative(self, x):
        """I(x) for x in [u, 1]."""
        s = x - self.u
        if s <= 0:
            return mpfr(0)
        if self._int_exponents:
            acc = self._pcoeffs[-1]
            for c in reversed(self._pcoeffs[:-1]):
                acc = acc * s + c
            return acc * s ** self._ilr
        import mpmath

        with mpmath.workprec(self.wprec + 16):
            z = self._mp(s / (1 - self.u))
            val = mpmath.betainc(
                self._mp(self.ell_right), self._mp(self.ell_left), 0, z, regularized=True
            )
            return self._from_mp(val) * self.norm

    # -- evaluation ----------------------------------------------------------

    def branch_fraction(self, xf):
        """I(x)/I(1) in [0, 1] for xf in [u, 1]."""
        return self._antiderivative(xf) / self.norm

    def lift(self, x):
        """F(x) for any real x; F(x+1) = F(x)+1 holds exactly."""
        with prec_context(self.wprec):
            x = mpfr(x)
            n = gmpy2.floor(x)
            xf = x - n
            if xf <= self.u:
                return self.t + n
            return self.t + self.branch_fraction(xf) + n

    def circle_apply(self, x):
        """f(x) on [0, 1)."""
        return frac(self.lift(x))

    def derivative_lift(self, x):
        """F'(x); zero on the closed flat interval and at x = 1."""
        with prec_context(self.wprec):
            x = mpfr(x)
            xf = frac(x)
            if xf <= self.u:
                return mpfr(0)
            s = xf - self.u
            return s ** (self.ell_right - 1) * (1 - xf) ** (self.ell_left - 1) / self.norm

    # -- monotone-branch inversion --------------------------------------------

    def invert_full_branch(self, y):
        """Fast inverse of the branch: x in [u, 1] with F(x) = y (mod 1)."""
        with prec_context(self.wprec):
            y = mpfr(y)
            yn = y - gmpy2.floor(y - self.t)
            return self.invert_branch_fraction(yn - self.t)

    def invert_branch_fraction(self, w):
        """x in [u, 1] with I(x)/I(1) = w, for w in [0, 1].

        Seeds a bracketed Newton iteration with a double-precision inverse
        regularized beta; every iterate is sign-checked against the bracket,
        so the enclosure property of plain bisection is preserved.
        """
        with prec_context(self.wprec):
            w = mpfr(w)
            if w <= 0:
                return mpfr(self.u)
            if w >= 1:
                return mpfr(1)
            x = self._seed(w)
            target = w * self.norm
            lo, hi = mpfr(self.u), mpfr(1)
            tol = mpfr(2) ** (-self.wprec + 4)
            # the evaluation noise of I(x) is ~ulp(target), so the residual
            # cannot be driven below this floor; stopping there still pins x
            # to relative accuracy 2^-(wprec-8) through the local power law
            r_floor = target * mpfr(2) ** (-self.wprec + 8)
            for _ in range(self.wprec + 16):
                r = self._antiderivative(x) - target
                if r > 0:
                    hi = x
                elif r < 0:
                    lo = x
                else:
                    return x
                if abs(r) <= r_floor:
                    return x
                d = (x - self.u) ** (self.ell_right - 1) * (1 - x) ** (
                    self.ell_left - 1
                )
                if d > 0:
                    xn = x - r / d
                    if not (lo < xn < hi):
                        xn = (lo + hi) / 2
                else:
                    xn = (lo + hi) / 2
                if hi - lo < tol or abs(xn - x) < tol:
                    return xn
                x = xn
            return x

    def _seed(self, w):
        """Double-precision starting point for branch inversion."""
        from scipy.special import betaincinv

        wf = float(w)
        if wf <= 0.0 or wf >= 1.0:
            z = None
        else:
            z = betaincinv(float(self.ell_right), float(self.ell_left), wf)
            if not (0.0 < z < 1.0):
                z = None
        if z is not None:
            return self.u + (1 - self.u) * mpfr(z)
        # near-edge underflow: invert the leading power law in full precision
        if w < mpfr("0.5"):
            # I(x) ~ s^lr * P(0) near u
            s = (w * self.norm / self._p_at_zero()) ** (1 / self.ell_right)
            return self.u + s
        sbar = ((1 - w) * self.norm / self._q_at_zero()) ** (1 / self.ell_left)
        return 1 - sbar

    def _p_at_zero(self):
        if self._int_exponents:
            return self._pcoeffs[0]
        return (1 - self.u) ** (self.ell_left - 1) / self.ell_right

    def _q_at_zero(self):
        # I(1) - I(1 - sbar) ~ sbar^ll * (1-u)^(lr-1) / ll
        return (1 - self.u) ** (self.ell_right - 1) / self.ell_left

    # -- serialization ---------------------------------------------------------

    def to_json_dict(self):
        # parameters are serialized at the full working precision: the tuned
        # translation t encodes devil's-staircase structure far below the
        # nominal precision, and truncating it detunes the rotation number
        return {
            "u": to_decimal(self.u, self.wprec),
            "ell_left": to_decimal(self.ell_left, self.wprec),
            "ell_right": to_decimal(self.ell_right, self.wprec),
            "t": to_decimal(self.t, self.wprec),
            "precision_bits": self.precision_bits,
        }

    @classmethod
    def from_json_dict(cls, d):
        try:
            bits = int(d["precision_bits"])
            u = d["u"]
            ll = d["ell_left"]
            lr = d["ell_right"]
            t = d["t"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParameterError(f"bad map description: {exc}") from exc
        wbits = working_precision(bits)
        return cls(
            from_decimal(str(u), wbits),
            from_decimal(str(ll), wbits),
            from_decimal(str(lr), wbits),
            from_decimal(str(t), wbits),
            precision_bits=bits,
        )

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh, parse_float=str))

    def __repr__(self):
        return (
            f"CircleMap(u={float(self.u)}, ell=({float(self.ell_left)},"
            f" {float(self.ell_right)}), t={float(self.t):.12f},"
            f" bits={self.precision_bits})"
        )


# -- module-level operation surface ------------------------------------------


def make_flat_map(u, ell_left, ell_right, t, precision_bits=256):
    """Construct the family member with the given parameters."""
    return CircleMap(u, ell_left, ell_right, t, precision_bits)


def eval_lift(circle_map, x):
    return circle_map.lift(x)


def derivative(circle_map, x):
    return circle_map.derivative_lift(x)


def invert_branch(circle_map, y, bracket):
    """Solve F(x) = y for x inside ``bracket``.

    Bisection maintains a strict enclosure; a Newton step is attempted only
    while the derivative at the current iterate exceeds 2^-8, and is
    discarded whenever it would leave the bracket.
    """
    wprec = circle_map.wprec
    with prec_context(wprec):
        lo = mpfr(bracket.lo)
        hi = lo + bracket.length
        u, t = circle_map.u, circle_map.t
        if not (u <= lo and hi <= 1):
            raise BracketInvalidError("bracket leaves the monotone branch")
        y = mpfr(y)
        yn = y - gmpy2.floor(y - t)
        flo = circle_map.t + circle_map.branch_fraction(lo)
        fhi = circle_map.t + circle_map.branch_fraction(hi)
        if not (flo <= yn <= fhi):
            # the normalized representative may sit one period off
            if flo <= yn - 1 <= fhi:
                yn -= 1
            elif flo <= yn + 1 <= fhi:
                yn += 1
            else:
                raise BracketInvalidError(
                    "F(bracket) does not straddle the target value"
                )
        scale = hi - lo
        tol = mpfr(2) ** (-wprec + 8) * scale
        x = (lo + hi) / 2
        for _ in range(wprec + 16):
            r = circle_map.t + circle_map.branch_fraction(x) - yn
            if r > 0:
                hi = x
            elif r < 0:
                lo = x
            else:
                return x
            d = circle_map.derivative_lift(x)
            xn = None
            if d > NEWTON_DERIVATIVE_GATE:
                cand = x - r / d
                if lo < cand < hi:
                    xn = cand
            if xn is None:
                xn = (lo + hi) / 2
            if hi - lo < tol:
                return (lo + hi) / 2
            x = xn
        return x


def pull_back_interval(circle_map, interval):
    """The unique interval J' with f(J') = J, disjoint from the open flat
    interval.  J must not contain the critical value t in its interior."""
    with prec_context(circle_map.wprec):
        t_pos = frac(circle_map.t)
        rel = frac(t_pos - interval.lo)
        if 0 < rel < interval.length:
            raise ContainsCriticalValueError(
                "interval contains the critical value; rational or degenerate"
            )
        wa = frac(mpfr(interval.lo) - circle_map.t)
        wb = frac(mpfr(interval.lo) + interval.length - circle_map.t)
        if wb == 0:
            wb = mpfr(1)
        if not wa < wb:
            raise ContainsCriticalValueError("degenerate pull-back")
        xa = circle_map.invert_branch_fraction(wa)
        xb = circle_map.invert_branch_fraction(wb)
        return CircleInterval(frac(xa), xb - xa)
