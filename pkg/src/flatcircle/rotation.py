"""Rotation numbers, continued fractions and parameter tuning.

The rotation number is computed combinatorially.  The orbit of the flat
interval's edge is scanned for one-sided closest approaches in the
*circular-order* sense: iterate k is an event when the orbit point enters
the gap between the reference and its current nearest orbit neighbour on
one side.  Because the order of any orbit of f matches the order of the
rigid rotation, the event times are exactly the semiconvergent denominators
j q_n + q_{n-1} of rho, arranged in runs of length a_{n+1} whose increments
are the previous convergent denominator.  Decoding those runs recovers the
partial quotients with an exact integer cross-check at every step, and the
current left/right nearest events always bracket rho with gap
1/(q q') (consecutive Farey neighbours), which yields rigorous enclosures
with no O(1/n) averaging error.

Parameter tuning exploits monotone dependence of rho on the translation t:
a candidate's rotation number is located against the target's convergents
through the sign of F^{q_n}(0) - p_n, which is constant in x unless
rho = p_n/q_n exactly, so finitely many lift iterates decide each bisection
step.
"""

from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .errors import (
    CombinatoricsViolationError,
    InvalidParameterError,
    PrecisionExhaustedError,
    RationalDetectedError,
    TuningFailedError,
)
from .mapcore import make_flat_map
from .numerics import frac, prec_context, to_mpfr, working_precision

DEFAULT_MAX_ORBIT = 20_000_000


@dataclass(frozen=True)
class ContinuedFraction:
    """Partial quotients a_1..a_N with convergent data.

    q uses the standard indexing: q[0] = 1, q[1] = a_1 and
    q[n+1] = a[n+1] q[n] + q[n-1].  The numerators use p[0] = 0, p[1] = 1
    and the same recurrence, so p[n]/q[n] are the convergents with even n
    below the value and odd n above.
    """

    partial_quotients: tuple
    p: tuple = ()
    q: tuple = ()

    def __post_init__(self):
        a = tuple(int(x) for x in self.partial_quotients)
        if not a:
            raise InvalidParameterError("need at least one partial quotient")
        if any(ai < 1 for ai in a):
            raise InvalidParameterError("partial quotients must be >= 1")
        p, q = [0, 1], [1, a[0]]
        for n in range(1, len(a)):
            p.append(a[n] * p[n] + p[n - 1])
            q.append(a[n] * q[n] + q[n - 1])
        object.__setattr__(self, "partial_quotients", a)
        object.__setattr__(self, "p", tuple(p))
        object.__setattr__(self, "q", tuple(q))

    @property
    def depth(self):
        return len(self.partial_quotients)

    def convergent(self, n):
        return self.p[n], self.q[n]

    def value(self, precision_bits=256):
        """p_N/q_N at the deepest available convergent."""
        with prec_context(working_precision(precision_bits)):
            return mpfr(self.p[-1]) / self.q[-1]


@dataclass(frozen=True)
class BoundedTypeCertificate:
    M: int
    checked_depth: int
    holds: bool


def is_bounded_type(cf, M):
    """Finite-depth bounded-type check: holds iff a_n < M for all computed n.

    Accepts a ContinuedFraction or a bare sequence of partial quotients
    (possibly empty, which holds vacuously)."""
    a = cf.partial_quotients if isinstance(cf, ContinuedFraction) else tuple(cf)
    return BoundedTypeCertificate(
        M=int(M), checked_depth=len(a), holds=all(ai < M for ai in a)
    )


def continued_fraction(rho, depth, precision_bits=256):
    """Partial quotients of rho in (0,1) by the Gauss map at working precision."""
    if depth < 1:
        raise InvalidParameterError("depth must be >= 1")
    wprec = working_precision(precision_bits)
    with prec_context(wprec):
        x = to_mpfr(rho, wprec)
        if not (0 < x < 1):
            raise InvalidParameterError("rho must lie in (0, 1)")
        floor_guard = mpfr(2) ** (-wprec + 16)
        a = []
        for _ in range(depth):
            if x < floor_guard:
                raise PrecisionExhaustedError(
                    f"Gauss-map remainder vanished at depth {len(a)}; "
                    "rho is rational to working precision"
                )
            inv = 1 / x
            ai = int(gmpy2.floor(inv))
            a.append(ai)
            x = inv - ai
        return ContinuedFraction(tuple(a))


@dataclass
class _Event:
    k: int
    p: int
    side: str


class _ReturnScanner:
    """Order-based one-sided closest-approach detector with rational guard."""

    def __init__(self, circle_map, ref_lo, ref_width):
        self.map = circle_map
        self.ref_lo = ref_lo
        self.width = ref_width
        self.guard = mpfr(2) ** (-circle_map.precision_bits + 16)
        self.left_gap = None
        self.right_gap = None
        self.events = []

    def feed(self, k, lift_value):
        pos = frac(lift_value)
        rel = frac(pos - self.ref_lo)
        if rel <= self.width + self.guard or rel >= 1 - self.guard:
            raise RationalDetectedError(
                f"orbit entered the flat interval at iterate {k}; "
                "rotation number is rational to working precision"
            )
        gap_right = rel - self.width  # arc from r(ref) forward to pos
        gap_left = 1 - rel  # arc from pos forward to l(ref)
        if self.left_gap is None:
            if gap_right < gap_left:
                self.right_gap, self.left_gap = gap_right, gap_left
                self.events.append(_Event(k, int(gmpy2.floor(lift_value)), "right"))
            else:
                self.left_gap, self.right_gap = gap_left, gap_right
                self.events.append(_Event(k, int(gmpy2.floor(lift_value)) + 1, "left"))
            return True
        if gap_right < self.right_gap:
            self.right_gap = gap_right
            self.events.append(_Event(k, int(gmpy2.floor(lift_value)), "right"))
            return True
        if gap_left < self.left_gap:
            self.left_gap = gap_left
            self.events.append(_Event(k, int(gmpy2.floor(lift_value)) + 1, "left"))
            return True
        return False


def _decode_runs(events):
    """Partial quotients from one-sided closest-approach events.

    Event times are the semiconvergent denominators, arranged in runs
    q_{n-1} + j q_n (j = 1..a_{n+1}); within a run all events approach from
    one side and consecutive runs alternate sides.  A run's continuation
    time coincides with the next run's start time, so the side flips are
    what delimit runs.  Two special cases at the start: the first event's
    side is not combinatorially meaningful (it is the nearest neighbour on
    both sides), and event 2 decides a_1: a point landing between the
    reference and event 1 on the upper side means 2*rho mod 1 < rho, i.e.
    rho > 1/2 and a_1 = 1.

    Only completed runs yield a partial quotient.  Returns
    (partial_quotients, q_list, side_of_each_convergent).
    """
    if not events or events[0].k != 1:
        raise CombinatoricsViolationError("first closest approach must be iterate 1")
    if len(events) == 1:
        return [], [1], []
    if events[1].k != 2:
        raise CombinatoricsViolationError("iterate 2 must improve one side")
    a, q, conv_sides = [], [1], []
    if events[1].side == "right":
        # rho > 1/2: a_1 = 1, and event 1 is the convergent q_1 = 1
        a.append(1)
        q.append(1)
        conv_sides.append("left")
        prev_q, cur_q = 1, 1
        idx = 1
    else:
        # rho < 1/2: events 1, 2, ... with side 'left' form the first run
        m, idx = 1, 1
        while (
            idx < len(events)
            and events[idx].side == "left"
            and events[idx].k == m + 1
        ):
            m += 1
            idx += 1
        if idx < len(events) and events[idx].k != m + 1:
            raise CombinatoricsViolationError(
                f"closest-approach time {events[idx].k} breaks the first run"
            )
        if idx == len(events):
            return [], [1], []  # first run still open
        a.append(m)
        q.append(m)
        conv_sides.append("left")
        prev_q, cur_q = 1, m
    while idx < len(events):
        side = events[idx].side
        j = 0
        while idx < len(events) and events[idx].side == side:
            expected = prev_q + (j + 1) * cur_q
            if events[idx].k != expected:
                raise CombinatoricsViolationError(
                    f"closest-approach time {events[idx].k} is not the "
                    f"semiconvergent {expected}; q so far: {q}"
                )
            j += 1
            idx += 1
        if idx == len(events):
            break  # run may be incomplete: do not emit its quotient
        a.append(j)
        q.append(prev_q + j * cur_q)
        conv_sides.append(side)
        prev_q, cur_q = cur_q, q[-1]
    return a, q, conv_sides


STALL_FACTOR = 64


def _scan(circle_map, start, ref_lo, ref_width, done):
    """Iterate the lift from `start`; stop once done(scanner) is true.

    For a bounded-type rotation number consecutive closest-approach times
    grow by at most a few partial-quotient factors, so a long eventless
    stretch means the orbit has locked onto an attracting periodic cycle
    whose nearest point the records can no longer improve past."""
    scanner = _ReturnScanner(circle_map, ref_lo, ref_width)
    y = mpfr(start)
    k = 0
    last_event = 0
    while k < DEFAULT_MAX_ORBIT:
        y = circle_map.lift(y)
        k += 1
        if scanner.feed(k, y):
            last_event = k
            if done(scanner):
                return scanner
        elif k > 10_000 and k > STALL_FACTOR * max(last_event, 1):
            raise RationalDetectedError(
                f"no closest return between iterates {last_event} and {k}; "
                "the rotation number is rational (mode-locked) at this "
                "tolerance"
            )
    raise PrecisionExhaustedError(
        f"closest-return scan exceeded {DEFAULT_MAX_ORBIT} iterates"
    )


def rotation_number(circle_map, tol=1e-12):
    """Rotation number with |result - rho| <= tol.

    The nearest approaches on the two sides of the starting point give lift
    approximants p'/q' <= rho <= p/q that bracket the rotation number.  For
    an irrational-to-resolution map these are consecutive Farey neighbours
    with p q' - p' q = 1, so the enclosure width is exactly 1/(q q'); in
    general the width (p q' - p' q)/(q q') is computed exactly in integers
    and the scan stops once it drops below tol, which also covers maps that
    mode-lock onto a deep rational within tolerance.
    """
    if not to_mpfr(tol, 64) > 0:
        raise InvalidParameterError("tol must be positive")
    with prec_context(circle_map.wprec):
        tolm = to_mpfr(tol, circle_map.wprec)

        def bracket(scanner):
            left = right = None
            for e in scanner.events[1:]:  # event 1's side is not meaningful
                if e.side == "left":
                    left = e
                else:
                    right = e
            return left, right

        def done(scanner):
            left, right = bracket(scanner)
            if left is None or right is None:
                return False
            num = left.p * right.k - right.p * left.k
            if num < 0:
                raise CombinatoricsViolationError(
                    "side records bracket in the wrong order"
                )
            return mpfr(num) <= tolm * (mpfr(left.k) * right.k)

        scanner = _scan(circle_map, mpfr(0), mpfr(0), mpfr(0), done)
        left, right = bracket(scanner)
        lo = mpfr(right.p) / right.k  # approaches from above the reference
        hi = mpfr(left.p) / left.k
        return (lo + hi) / 2


def first_return_times(circle_map, depth=10):
    """Dynamically observed return structure of the orbit of r(U).

    Returns a ContinuedFraction holding q_0..q_depth (standard indexing, so the
    q tuple has depth+1 entries).  Raises rational-detected if the orbit
    re-enters the flat interval."""
    if depth < 1:
        raise InvalidParameterError("depth must be >= 1")
    with prec_context(circle_map.wprec):

        def done(scanner):
            a, q, _ = _decode_runs(scanner.events)
            return len(q) >= depth + 1

        scanner = _scan(
            circle_map, mpfr(circle_map.u), mpfr(0), mpfr(circle_map.u), done
        )
        a, q, _ = _decode_runs(scanner.events)
        return ContinuedFraction(tuple(a[:depth]))


def return_sides(circle_map, depth=8):
    """Side of the flat interval ('left'/'right') of each closest return q_n,
    n = 1..depth (the flat-interval reference makes sides well defined)."""
    with prec_context(circle_map.wprec):

        def done(scanner):
            _, _, sides = _decode_runs(scanner.events)
            return len(sides) >= depth

        scanner = _scan(
            circle_map, mpfr(circle_map.u), mpfr(0), mpfr(circle_map.u), done
        )
        _, _, sides = _decode_runs(scanner.events)
        return sides[:depth]


def _compare_with_target(circle_map, target_cf, depth, plateau_guard):
    """Locate rho(f) against the target: 0 inside the depth-level sandwich,
    -1 strictly below the target, +1 strictly above."""
    y = mpfr(0)
    k = 0
    for n in range(1, depth + 1):
        pn, qn = target_cf.p[n], target_cf.q[n]
        while k < qn:
            y = circle_map.lift(y)
            k += 1
        s = y - pn
        below = n % 2 == 0  # even convergents sit below the target
        if abs(s) < plateau_guard:
            # rho(f) = p_n/q_n exactly, which is never the irrational target
            return -1 if below else +1
        if (s > 0) != below:
            return +1 if s > 0 else -1
    return 0


def tune_parameter(u, ell_left, ell_right, target_rho, tol=1e-9, precision_bits=256):
    """Bisection on t for a family member with |rho(f_t) - target| <= tol.

    rho(f_t) is non-decreasing in t with rho(f_0) = 0 and rho(f_1) = 1, so
    [0, 1] always brackets a target in (0, 1).  The returned map's dynamical
    return times are verified against the target's continued fraction.
    """
    wprec = working_precision(precision_bits)
    with prec_context(wprec):
        target = to_mpfr(target_rho, wprec)
        if not (0 < target < 1):
            raise TuningFailedError("target rotation number must be in (0, 1)")
        tolm = to_mpfr(tol, wprec)
        if not tolm > 0:
            raise InvalidParameterError("tol must be positive")
        depth = 2
        try:
            cf = continued_fraction(target, depth + 1, precision_bits)
            while mpfr(cf.q[depth]) * cf.q[depth + 1] < 1 / tolm:
                depth += 1
                cf = continued_fraction(target, depth + 1, precision_bits)
        except PrecisionExhaustedError as exc:
            raise TuningFailedError(
                "target is rational (or indistinguishable from rational "
                "at this precision)"
            ) from exc
        plateau_guard = mpfr(2) ** (-wprec + 24)
        # Consistency-check depth: |p/q - target| <= tol forces any mode-lock
        # denominator to satisfy q^2 >= c/tol, so a return-time scan kept two
        # orders of magnitude below 1/tol in q_d q_{d+1} never reaches the
        # locked regime a within-tolerance map may legally contain.
        verify_depth = 2
        while (
            verify_depth + 1 < depth
            and verify_depth < 12
            and mpfr(cf.q[verify_depth + 1]) * cf.q[verify_depth + 2] * 400 < 1 / tolm
        ):
            verify_depth += 1
        lo, hi = mpfr(0), mpfr(1)
        width_floor = mpfr(2) ** (-wprec + 32)
        while True:
            mid = (lo + hi) / 2
            candidate = make_flat_map(u, ell_left, ell_right, mid, precision_bits)
            side = _compare_with_target(candidate, cf, depth, plateau_guard)
            if side == 0:
                observed = first_return_times(candidate, depth=verify_depth)
                expected = tuple(cf.q[: len(observed.q)])
                if tuple(observed.q) != expected:
                    raise CombinatoricsViolationError(
                        "tuned map's dynamical return times disagree with the target"
                    )
                return candidate
            if side < 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < width_floor:
                raise PrecisionExhaustedError(
                    "tuning bisection stalled at arithmetic resolution"
                )


def cf_target_value(pattern, depth=24, precision_bits=256):
    """Value of the continued fraction whose quotients repeat `pattern`.

    The pattern is extended periodically until the convergent error drops
    below the working resolution, so the result is exact to precision."""
    pattern = tuple(int(x) for x in pattern)
    if not pattern or any(x < 1 for x in pattern):
        raise InvalidParameterError("continued-fraction pattern must be positive")
    wprec = working_precision(precision_bits)
    with prec_context(wprec):
        terms = list(pattern)
        while len(terms) < depth:
            terms.extend(pattern)
        cf = ContinuedFraction(tuple(terms))
        while mpfr(cf.q[-1]) * cf.q[-1] < mpfr(2) ** (precision_bits + 8):
            terms.extend(pattern)
            cf = ContinuedFraction(tuple(terms))
        return cf.value(precision_bits)
