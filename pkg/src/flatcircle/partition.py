"""Dynamical partitions, their combinatorics, and cross-ratio tools.

The backward chain f^0 = U, f^-1, f^-2, ... is computed once per map by
repeated monotone-branch pull-back and cached; the partition of level n is
a view over the first q_{n+1} + q_n chain intervals together with the
complementary gaps.  Gap kinds and indices are not assigned geometrically:
the index difference of the two bounding preimages must equal q_n (long
gap) or q_{n+1} (short gap), which doubles as an exact combinatorial
integrity check at every level.

Each chain endpoint carries an error radius propagated through the
pull-backs (solver tolerance plus the inverse-derivative amplification of
the incoming radius); invariant checks compare lengths only up to these
radii.
"""

import bisect
import threading
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .errors import (
    ChainEntersFlatError,
    CombinatoricsViolationError,
    DegenerateQuadrupleError,
    InvalidParameterError,
    PrecisionExhaustedError,
    RationalDetectedError,
)
from .numerics import arc_forward, frac, prec_context
from .rotation import first_return_times


@dataclass(frozen=True)
class PartitionElement:
    kind: str  # "preimage" | "long_gap" | "short_gap"
    index: int
    level: int
    lo: mpfr
    length: mpfr
    err_radius: mpfr

    @property
    def hi(self):
        return self.lo + self.length  # may exceed 1 for a wrapping arc

    def r(self):
        return frac(self.lo + self.length)

    def l(self):
        return self.lo

    def contains(self, x, closed=False):
        rel = frac(mpfr(x) - self.lo)
        if closed:
            return rel <= self.length or rel == 0
        return 0 < rel < self.length

    def is_gap(self):
        return self.kind != "preimage"


class BackwardChain:
    """Lazily extended pull-back chain of the flat interval.

    Thread-safe single-writer extension; read access to finished entries is
    lock-free because lists only grow.
    """

    def __init__(self, circle_map):
        self.map = circle_map
        self._lock = threading.RLock()
        with prec_context(circle_map.wprec):
            self.los = [mpfr(0)]
            self.his = [mpfr(circle_map.u)]
            self.radii = [mpfr(0)]
            self._solver_tol = mpfr(2) ** (-circle_map.wprec + 8)
            self._min_width = mpfr(2) ** (-circle_map.precision_bits + 32)

    def __len__(self):
        return len(self.los)

    def ensure(self, index):
        if index < len(self.los):
            return
        with self._lock:
            with prec_context(self.map.wprec):
                while len(self.los) <= index:
                    self._extend_one()

    def _extend_one(self):
        m = self.map
        lo, hi, rad = self.los[-1], self.his[-1], self.radii[-1]
        t_rel = frac(m.t - lo)
        if 0 < t_rel < hi - lo:
            raise RationalDetectedError(
                f"preimage {len(self.los) - 1} contains the critical value; "
                "the rotation number is rational"
            )
        wa = frac(lo - m.t)
        wb = frac(hi - m.t)
        if wb == 0:
            wb = mpfr(1)
        if not wa < wb:
            raise CombinatoricsViolationError(
                f"pull-back of preimage {len(self.los) - 1} is degenerate"
            )
        xa = m.invert_branch_fraction(wa)
        xb = m.invert_branch_fraction(wb)
        width = xb - xa
        if width < self._min_width:
            raise PrecisionExhaustedError(
                f"preimage {len(self.los)} narrower than 2^-(bits-32); "
                "raise precision_bits to go deeper"
            )
        da = m.derivative_lift(xa)
        db = m.derivative_lift(xb)
        dmin = min(da, db)
        if not dmin > 0:
            raise PrecisionExhaustedError(
                "pull-back endpoint landed on a critical point"
            )
        new_rad = rad / dmin + self._solver_tol
        if new_rad > width / 4:
            raise PrecisionExhaustedError(
                f"error radius exceeds a quarter preimage width at index "
                f"{len(self.los)}"
            )
        self.los.append(frac(xa))
        self.his.append(frac(xa) + width)
        self.radii.append(new_rad)

    def interval(self, i):
        self.ensure(i)
        return self.los[i], self.his[i], self.radii[i]


def backward_chain(circle_map):
    chain = getattr(circle_map, "_backward_chain", None)
    if chain is None:
        chain = BackwardChain(circle_map)
        circle_map._backward_chain = chain
    return chain


def return_times(circle_map, depth):
    """Cached dynamical return-time data q_0..q_depth for the map."""
    cached = getattr(circle_map, "_return_cf", None)
    if cached is None or cached.depth < depth:
        cached = first_return_times(circle_map, depth=depth)
        circle_map._return_cf = cached
    return cached


@dataclass(frozen=True)
class DynamicalPartition:
    level: int
    elements: tuple  # circularly ordered, starting at the flat interval
    q: tuple  # q_0..q_{level+2} when available
    wprec: int

    _sorted_los: list = field(repr=False, default=None, compare=False)
    _order: list = field(repr=False, default=None, compare=False)

    def preimages(self):
        return [e for e in self.elements if e.kind == "preimage"]

    def gaps(self):
        return [e for e in self.elements if e.kind != "preimage"]

    def element(self, kind, index):
        for e in self.elements:
            if e.kind == kind and e.index == index:
                return e
        raise KeyError((kind, index))

    def locate(self, x):
        """The element whose closure contains x; boundary points resolve to
        the preimage whose endpoint they are (endpoints belong to K_f)."""
        with prec_context(self.wprec):
            x = frac(mpfr(x))
            los = self._sorted_los
            pos = bisect.bisect_right(los, x) - 1
            e = self.elements[self._order[pos]]
            rel = frac(x - e.lo)
            if rel <= e.err_radius:
                return self._boundary_owner(pos, at_lo=True)
            if rel >= e.length - e.err_radius:
                return self._boundary_owner(pos, at_lo=False)
            return e

    def _boundary_owner(self, pos, at_lo):
        n = len(self.elements)
        e = self.elements[self._order[pos]]
        if at_lo:
            prev = self.elements[self._order[(pos - 1) % n]]
            return e if e.kind == "preimage" else prev
        nxt = self.elements[self._order[(pos + 1) % n]]
        return nxt if nxt.kind == "preimage" else e

    def max_gap(self):
        return max(e.length for e in self.elements if e.kind != "preimage")

    def min_element_width(self):
        return min(e.length for e in self.elements)

    def tiling_defect(self):
        with prec_context(self.wprec):
            total = sum((e.length for e in self.elements), mpfr(0))
            return abs(total - 1)


def build_partition(circle_map, level):
    """Dynamical partition of the given level.

    Preimages f^-i for 0 <= i <= q_{level+1} + q_level - 1 plus the
    complementary gaps, labelled long/short by the exact index-difference
    rule, circularly ordered starting at the flat interval.
    Partitions are cached per (map, level).
    """
    if level < 1:
        raise InvalidParameterError("partition level must be >= 1")
    cache = getattr(circle_map, "_partition_cache", None)
    if cache is None:
        cache = {}
        circle_map._partition_cache = cache
    if level in cache:
        return cache[level]
    with prec_context(circle_map.wprec):
        cf = return_times(circle_map, depth=level + 2)
        q = cf.q
        qn, qn1 = q[level], q[level + 1]
        count = qn + qn1
        chain = backward_chain(circle_map)
        chain.ensure(count - 1)
        order = sorted(range(count), key=lambda i: chain.los[i])
        elements = []
        for pos in range(count):
            i1 = order[pos]
            i2 = order[(pos + 1) % count]
            lo1, hi1, rad1 = chain.los[i1], chain.his[i1], chain.radii[i1]
            lo2, rad2 = chain.los[i2], chain.radii[i2]
            elements.append(
                PartitionElement("preimage", i1, level, lo1, hi1 - lo1, rad1)
            )
            gap_len = frac(lo2 - hi1)
            gap_rad = rad1 + rad2
            if gap_len <= gap_rad:
                raise CombinatoricsViolationError(
                    f"preimages {i1} and {i2} overlap at level {level}",
                    element=(i1, i2),
                )
            if i1 - i2 == qn:
                kind, idx = "long_gap", i2
            elif i2 - i1 == qn:
                kind, idx = "long_gap", i1
            elif i2 - i1 == qn1:
                kind, idx = "short_gap", i1
            elif i1 - i2 == qn1:
                kind, idx = "short_gap", i2
            else:
                raise CombinatoricsViolationError(
                    f"gap between preimages {i1} and {i2} matches neither "
                    f"q_{level}={qn} nor q_{level + 1}={qn1}",
                    element=(i1, i2),
                )
            elements.append(
                PartitionElement(kind, idx, level, frac(hi1), gap_len, gap_rad)
            )
        # rotate so the flat interval (index 0) comes first
        start = next(
            k for k, e in enumerate(elements) if e.kind == "preimage" and e.index == 0
        )
        elements = elements[start:] + elements[:start]
        _check_side_convention(elements, level, qn, qn1)
        part = DynamicalPartition(
            level=level, elements=tuple(elements), q=tuple(q),
            wprec=circle_map.wprec,
        )
        # locate() helpers: elements sorted by lo
        order2 = sorted(range(len(elements)), key=lambda k: elements[k].lo)
        object.__setattr__(part, "_sorted_los", [elements[k].lo for k in order2])
        object.__setattr__(part, "_order", order2)
        cache[level] = part
        return part


def _check_side_convention(elements, level, qn, qn1):
    """Level-n long gap 0 sits left of U for n even, right for n odd;
    the short gap 0 takes the opposite side."""
    left_of_u = elements[-1]  # element just before U in circular order
    right_of_u = elements[1]
    even = level % 2 == 0
    expect_left = ("long_gap", 0) if even else ("short_gap", 0)
    expect_right = ("short_gap", 0) if even else ("long_gap", 0)
    got_left = (left_of_u.kind, left_of_u.index)
    got_right = (right_of_u.kind, right_of_u.index)
    if got_left != expect_left or got_right != expect_right:
        raise CombinatoricsViolationError(
            f"level-{level} gaps adjacent to the flat interval are "
            f"{got_left}/{got_right}, expected {expect_left}/{expect_right}"
        )


@dataclass
class RefinementReport:
    ok: bool
    checked_long_gaps: int
    checked_short_gaps: int
    split_census: dict  # coarse long-gap index -> (n_preimages, n_long, n_short)


def verify_refinement(coarse, fine):
    """Check the one-level refinement bookkeeping between two partitions.

    Every coarse short gap must reappear verbatim as a fine long gap, and
    every coarse long gap must split into a_{n+2} preimages, a_{n+2} long
    gaps, and one short gap with the exact indices i + q_n + j q_{n+1}.
    Raises combinatorics-violation with the offending element on failure.
    """
    if fine.level != coarse.level + 1:
        raise InvalidParameterError("fine partition must be one level deeper")
    n = coarse.level
    q = coarse.q
    qn, qn1 = q[n], q[n + 1]
    if len(q) < n + 3:
        raise InvalidParameterError("coarse partition lacks q_{n+2} data")
    a_next = (q[n + 2] - q[n]) // q[n + 1]
    census = {}
    short_checked = 0
    with prec_context(fine.wprec):
        fine_by_key = {(e.kind, e.index): e for e in fine.elements}
        for e in coarse.elements:
            if e.kind == "short_gap":
                twin = fine_by_key.get(("long_gap", e.index))
                if twin is None or twin.lo != e.lo or twin.length != e.length:
                    raise CombinatoricsViolationError(
                        f"coarse short gap {e.index} is not a verbatim fine long gap",
                        element=e,
                    )
                short_checked += 1
            elif e.kind == "long_gap":
                i = e.index
                expected = []
                for j in range(1, a_next + 1):
                    expected.append(("preimage", i + qn + j * qn1))
                for j in range(a_next):
                    expected.append(("long_gap", i + qn + j * qn1))
                expected.append(("short_gap", i))
                covered = mpfr(0)
                for key in expected:
                    child = fine_by_key.get(key)
                    if child is None:
                        raise CombinatoricsViolationError(
                            f"long gap {i}: missing child {key}", element=e
                        )
                    rel = frac(child.lo - e.lo)
                    tol = e.err_radius + child.err_radius
                    if rel > e.length + tol or rel + child.length > e.length + tol:
                        raise CombinatoricsViolationError(
                            f"long gap {i}: child {key} escapes its parent", element=e
                        )
                    covered += child.length
                if abs(covered - e.length) > e.err_radius * (len(expected) + 1) * 4:
                    raise CombinatoricsViolationError(
                        f"long gap {i}: children do not tile the gap", element=e
                    )
                census[i] = (a_next, a_next, 1)
    return RefinementReport(
        ok=True,
        checked_long_gaps=len(census),
        checked_short_gaps=short_checked,
        split_census=census,
    )


def refinement_parent(cf_q, level, kind, index):
    """The level-`level` element enclosing the given level-(level+1) element,
    by the exact index arithmetic of the refinement rule."""
    qn, qn1 = cf_q[level], cf_q[level + 1]
    if kind == "short_gap":
        # fine short gaps are split products of the long gap with that index
        return ("long_gap", index)
    if kind == "long_gap":
        if index < qn:
            return ("short_gap", index)  # verbatim reappearance
        return ("long_gap", (index - qn) % qn1)
    if kind == "preimage":
        if index < qn + qn1:
            return ("preimage", index)
        return ("long_gap", (index - qn) % qn1)
    raise InvalidParameterError(f"unknown element kind {kind}")


def critical_orbit_distances(circle_map, depth):
    """|f^0, f^{q_n}| for n = 0..depth: distance from the q_n-th forward
    image of the flat interval to its nearer endpoint."""
    cached = getattr(circle_map, "_orbit_dists", None)
    if cached is not None and len(cached) > depth:
        return cached[: depth + 1]
    with prec_context(circle_map.wprec):
        cf = return_times(circle_map, depth=depth)
        q = cf.q
        u = circle_map.u
        dists = []
        y = mpfr(u)
        k = 0
        for n in range(depth + 1):
            while k < q[n]:
                y = circle_map.lift(y)
                k += 1
            pos = frac(y)
            if pos <= u:
                raise RationalDetectedError("critical orbit re-entered the flat")
            dists.append(min(pos - u, 1 - pos))
        circle_map._orbit_dists = dists
        return dists


def scaling_tau(circle_map, n):
    """tau_n = |f^0, f^{q_n}| / |f^0, f^{q_{n-2}}|."""
    if n < 2:
        raise InvalidParameterError("tau_n needs n >= 2")
    d = critical_orbit_distances(circle_map, n)
    return d[n] / d[n - 2]


@dataclass
class GeometryReport:
    levels: list
    tau: list  # tau_n per level (None for n < 2)
    min_preimage_to_gap: list  # min over preimages of |f^-j|/|adjacent gap|
    max_gap_length_per_level: list
    adjacent_gap_min_ratio: list  # min over adjacent gap pairs of small/large
    comparability_alpha_bounds: list  # (alpha, C1, C2) pairs


def comparability_stats(circle_map, levels):
    """Empirical geometry of the partitions at the given levels.

    Reports, per level: tau_n, the worst preimage-to-adjacent-gap ratio, the
    largest gap, and the worst adjacent-gap ratio; plus per-depth bounds
    (C1, C2) with C1^alpha <= |f^-i|/|F| <= C2^alpha over preimages of level
    n+alpha inside gaps of level n (n = levels[0]).
    """
    levels = sorted(levels)
    report = GeometryReport([], [], [], [], [], [])
    with prec_context(circle_map.wprec):
        parts = {n: build_partition(circle_map, n) for n in levels}
        for n in levels:
            part = parts[n]
            elements = part.elements
            m = len(elements)
            min_pg = None
            min_adj = None
            for k, e in enumerate(elements):
                if e.kind == "preimage":
                    g1 = elements[k - 1]
                    g2 = elements[(k + 1) % m]
                    for g in (g1, g2):
                        r = e.length / g.length
                        if min_pg is None or r < min_pg:
                            min_pg = r
                    adj = min(g1.length, g2.length) / max(g1.length, g2.length)
                    if min_adj is None or adj < min_adj:
                        min_adj = adj
            report.levels.append(n)
            report.tau.append(scaling_tau(circle_map, n) if n >= 2 else None)
            report.min_preimage_to_gap.append(min_pg)
            report.max_gap_length_per_level.append(part.max_gap())
            report.adjacent_gap_min_ratio.append(min_adj)
        base = parts[levels[0]]
        for alpha in range(1, len(levels)):
            deep_level = levels[0] + alpha
            if deep_level not in parts:
                continue
            deep = parts[deep_level]
            lo_ratio, hi_ratio = None, None
            base_gaps = [e for e in base.elements if e.kind != "preimage"]
            for pre in deep.preimages():
                if pre.index < base.q[base.level] + base.q[base.level + 1]:
                    continue  # already a preimage at the base level
                for g in base_gaps:
                    rel = frac(pre.lo - g.lo)
                    if rel + pre.length <= g.length:
                        r = pre.length / g.length
                        lo_ratio = r if lo_ratio is None else min(lo_ratio, r)
                        hi_ratio = r if hi_ratio is None else max(hi_ratio, r)
                        break
            if lo_ratio is not None:
                c1 = lo_ratio ** (mpfr(1) / alpha)
                c2 = hi_ratio ** (mpfr(1) / alpha)
                report.comparability_alpha_bounds.append((alpha, c1, c2))
    return report


# -- cross-ratio tools ---------------------------------------------------------


def cross_ratio(a, b, c, d):
    """Cr(a,b,c,d) = |b-a||d-c| / (|c-a||d-b|) for cyclically ordered points.

    The four points must sit on a common arc in the order a, b, c, d; the
    arcs are measured from a without wrapping."""
    bits = max(
        [x.precision for x in (a, b, c, d) if isinstance(x, mpfr)], default=113
    )
    with prec_context(bits + 16):
        pa = frac(mpfr(a))
        ab = arc_forward(pa, frac(mpfr(b)))
        ac = arc_forward(pa, frac(mpfr(c)))
        ad = arc_forward(pa, frac(mpfr(d)))
        if not (ab <= ac <= ad):
            raise InvalidParameterError("quadruple is not in cyclic order a,b,c,d")
        num = ab * (ad - ac)
        den = ac * (ad - ab)
        if den == 0:
            raise DegenerateQuadrupleError("cross-ratio denominator distance is zero")
        return num / den


def _arcs_overlap(lo1, len1, lo2, len2):
    return frac(lo2 - lo1) < len1 or frac(lo1 - lo2) < len2


@dataclass
class ChainResult:
    log_ratios: list  # log(Cr_i / Cr_0), i = 1..steps
    multiplicity: int  # max coverage count of the (a_i, d_i) arcs


def cross_ratio_chain(circle_map, quad, steps):
    """Forward cross-ratio chain with the admissibility checks.

    Each step maps the quadruple by f; if an inner arc (b_i, c_i) meets the
    flat interval the chain requirement fails and chain-enters-flat is
    raised.  Returns the log distortions and the observed multiplicity of
    the outer arcs."""
    with prec_context(circle_map.wprec):
        pa = frac(mpfr(quad[0]))
        offs = [arc_forward(pa, frac(mpfr(x))) for x in quad]
        if not (offs[0] == 0 and offs[1] <= offs[2] <= offs[3]):
            raise InvalidParameterError("quadruple is not in cyclic order")
        u = mpfr(circle_map.u)
        arcs = []
        log_ratios = []
        cr0 = None
        base = pa
        for step in range(steps + 1):
            pts = [frac(base + o) for o in offs]
            arcs.append((pts[0], offs[3]))
            inner_lo = pts[1]
            inner_len = offs[2] - offs[1]
            if inner_len > 0 and _arcs_overlap(inner_lo, inner_len, mpfr(0), u):
                raise ChainEntersFlatError(
                    f"inner arc meets the flat interval at step {step}",
                    step=step,
                )
            num = offs[1] * (offs[3] - offs[2])
            den = offs[2] * (offs[3] - offs[1])
            if den == 0 or num == 0:
                raise DegenerateQuadrupleError(
                    f"cross-ratio degenerated at step {step}"
                )
            cr = num / den
            if step == 0:
                cr0 = cr
            else:
                log_ratios.append(gmpy2.log(cr / cr0))
            if step < steps:
                rep = base
                lifts = [circle_map.lift(rep + o) for o in offs]
                base = frac(lifts[0])
                offs = [lv - lifts[0] for lv in lifts]
                if not (offs[1] <= offs[2] <= offs[3] and offs[3] < 1):
                    raise CombinatoricsViolationError(
                        f"quadruple order broke at step {step + 1}"
                    )
        return ChainResult(log_ratios=log_ratios, multiplicity=_max_coverage(arcs))


def _max_coverage(arcs):
    """Maximum number of arcs covering a single circle point."""
    events = []
    base_cover = 0
    probe = mpfr(0)
    for lo, length in arcs:
        events.append((frac(lo), 1))
        events.append((frac(lo + length), -1))
        if frac(probe - lo) < length:
            base_cover += 1
    # open arcs: at a shared endpoint the closing arc releases before the
    # opening arc claims, hence -1 sorts first
    events.sort(key=lambda e: (e[0], e[1]))
    cover = base_cover
    best = base_cover
    for _, delta in events:
        cover += delta
        best = max(best, cover)
    return best
