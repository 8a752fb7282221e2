"""Conjugacy on the Cantor set and its reflection extension to the circle.

Two maps with matching return-time structure induce label-preserving
partition correspondences: the conjugacy on the non-wandering set is code
matching (a point's nested gap labels transfer verbatim to the other map).
Off the Cantor set, a point interior to a preimage is evaluated by
*unfolding*: the preimage's reflection skeleton maps it affinely back onto
the neighbourhood the reflection came from, the image is evaluated there
(recursively, one generation down), and the result is folded into the
corresponding preimage on the other side with that side's reflection
scale.  Evaluation terminates once the enclosing element is narrower than
the requested resolution, below which the extension is affine.

The same machinery drives the abstract nested-interval-system extension;
there the reflection neighbourhoods are the adjacent same-level intervals,
taken at the smallest level for which the two one-sided spans fit inside
the hole on both systems simultaneously.
"""

import threading
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .errors import (
    CodeInvalidError,
    CombinatoricsViolationError,
    InFlatError,
    InPreimageError,
    InvalidParameterError,
    MismatchedCombinatoricsError,
    NoSuchKError,
    RationalDetectedError,
    ResolutionExhaustedError,
)
from .mapcore import CircleInterval
from .numerics import frac, prec_context, to_mpfr
from .partition import (
    backward_chain,
    build_partition,
    refinement_parent,
    return_times,
)

MAX_UNFOLD_HOPS = 256
DEFAULT_MAX_LEVEL = 18


@dataclass(frozen=True)
class Code:
    """Nested gap labels (kind, index) of a non-wandering point, levels 1..depth."""

    entries: tuple

    @property
    def depth(self):
        return len(self.entries)


@dataclass(frozen=True)
class ReflectionSkeleton:
    """Reflection data of a preimage host.

    Two-sided: the neighbourhoods (l(f^{-j-q_k}), f^{-j}) and
    (f^{-j}, r(f^{-j-q_{k+1}})) reflect into the host with the scale that
    makes the two reflected spans abut at ``touch``; the abutting point is
    the image of a Cantor endpoint, so the spans meet in exactly one point.
    One-sided (CL/CR, for extreme children that share an endpoint with a
    sibling): a single neighbourhood reflects across the non-abutting
    endpoint and fills the host completely.
    """

    host_index: int
    generation: int
    k: int
    one_sided: str | None  # None | "CL" | "CR"
    left_index: int | None
    right_index: int | None
    alpha_f: mpfr
    alpha_g: mpfr
    d_left_f: mpfr | None
    d_right_f: mpfr | None
    d_left_g: mpfr | None
    d_right_g: mpfr | None
    touch_f: mpfr | None
    touch_g: mpfr | None


@dataclass(frozen=True)
class ExtremeChild:
    """Generation-(m+1) preimage abutting its sibling at the touch point."""

    kind: str
    index: int
    generation: int
    side: str  # "left": abuts the touch from the left (right extreme)
    lo_f: mpfr
    length_f: mpfr
    lo_g: mpfr
    length_g: mpfr

    @property
    def lo(self):
        return self.lo_f

    @property
    def length(self):
        return self.length_f


class ConjugacyEvaluator:
    """Evaluates the conjugacy phi between two maps of equal return structure.

    ``resolution`` is the evaluation tolerance epsilon; ``max_level`` caps
    the partition depth used for locating points.  The effective level
    budget is clamped to the depth at which the two maps' dynamical
    return times verifiably agree, so evaluation never trusts structure
    beyond the combinatorially certified range.
    """

    def __init__(self, map_f, map_g, resolution=1e-6, max_level=DEFAULT_MAX_LEVEL):
        if map_f.precision_bits != map_g.precision_bits:
            raise InvalidParameterError("maps must share precision_bits")
        self.map_f = map_f
        self.map_g = map_g
        self.wprec = max(map_f.wprec, map_g.wprec)
        self.precision_bits = map_f.precision_bits
        with prec_context(self.wprec):
            self.resolution = to_mpfr(resolution, self.wprec)
            if not self.resolution > 0:
                raise InvalidParameterError("resolution must be positive")
        self.max_level = int(max_level)
        self._lock = threading.RLock()
        self._partitions = {}  # (side, level) -> DynamicalPartition
        self._by_key = {}  # (side, level) -> {(kind, index): element}
        self._skeletons = {}  # host index -> ReflectionSkeleton
        self.level_budget, self.q = self._verify_combinatorics()
        self.terminal_level = self._pick_terminal_level()

    def _pick_terminal_level(self):
        """Uniform stop level for every evaluation path.

        Terminating all paths on one fixed partition keeps the piecewise
        pieces glued exactly at shared element endpoints, which makes phi
        exactly monotone; a width-based stop would let one path's terminal
        gap properly contain structure another path resolves, and the
        mismatch gets amplified by the reflection scales.  Two demands fix
        the level: the source-side gaps must be below the resolution, and
        every preimage wide enough to unfold must have its reflection
        neighbours inside the terminal partition's index range, so that
        every evaluation path can discover them.  The image side may be
        coarser (its granularity is recorded; it only affects how closely
        phi-hat tracks the ideal extension, never monotonicity).
        """
        with prec_context(self.wprec):
            base = None
            for level in range(2, self.level_budget + 1):
                if self.partition("f", level).max_gap() < self.resolution:
                    base = level
                    break
            if base is None:
                raise ResolutionExhaustedError(
                    f"level budget {self.level_budget} cannot support "
                    f"resolution {float(self.resolution)}; raise max_level "
                    "or the resolution"
                )
            # all unfoldable hosts already appear in the base partition
            # (anything born deeper is narrower than a base-level gap)
            need = self.q[base + 1] + self.q[base] - 1
            for e in self.partition("f", base).preimages():
                if e.length >= self.resolution:
                    k, _ = self._find_k(e.index)
                    need = max(need, e.index + self.q[k + 1])
            for level in range(base, self.level_budget + 1):
                if self.q[level + 1] + self.q[level] - 1 >= need:
                    self.image_granularity = self.partition("g", level).max_gap()
                    return level
        raise ResolutionExhaustedError(
            f"reflection neighbours need preimage index {need}, beyond the "
            f"verified level budget {self.level_budget}; raise max_level"
        )

    def _verify_combinatorics(self):
        depth = self.max_level + 2
        qf = qg = None
        while depth >= 4:
            try:
                qf = return_times(self.map_f, depth).q
                qg = return_times(self.map_g, depth).q
                break
            except (RationalDetectedError, CombinatoricsViolationError):
                depth -= 2  # a map mode-locks beyond this depth; shrink the window
        if qf is None or qg is None:
            raise MismatchedCombinatoricsError(
                "could not establish a common return-time structure"
            )
        common = 0
        while common < min(len(qf), len(qg)) and qf[common] == qg[common]:
            common += 1
        budget = min(self.max_level, common - 3)
        if budget < 2:
            raise MismatchedCombinatoricsError(
                f"maps agree only to q-depth {common}; no usable level budget"
            )
        return budget, tuple(qf[:common])

    # -- cached structure ----------------------------------------------------

    def _map(self, side):
        return self.map_f if side == "f" else self.map_g

    def partition(self, side, level):
        key = (side, level)
        part = self._partitions.get(key)
        if part is None:
            with self._lock:
                part = self._partitions.get(key)
                if part is None:
                    part = build_partition(self._map(side), level)
                    k = min(len(part.q), len(self.q))
                    if tuple(part.q[:k]) != tuple(self.q[:k]):
                        raise MismatchedCombinatoricsError(
                            f"level-{level} partition disagrees with the "
                            "verified return times"
                        )
                    self._partitions[key] = part
                    self._by_key[key] = {
                        (e.kind, e.index): e for e in part.elements
                    }
        return part

    def element(self, side, level, kind, index):
        self.partition(side, level)
        return self._by_key[(side, level)][(kind, index)]

    def _classify(self, side, level, x):
        """(element, boundary) with boundary in {None, 'lo', 'hi'}."""
        part = self.partition(side, level)
        e = part.locate(x)
        rel = frac(mpfr(x) - e.lo)
        if rel <= e.err_radius or rel >= 1 - e.err_radius:
            return e, "lo"
        if abs(rel - e.length) <= e.err_radius:
            return e, "hi"
        return e, None

    # -- coding and the Cantor conjugacy --------------------------------------

    def encode(self, x, depth, side="f"):
        """Gap labels of x for levels 1..depth.

        Raises in-flat if x lies in the open flat interval and
        in-preimage(j, level) if x is interior to a preimage; preimage
        endpoints belong to the non-wandering set and are coded by the gap
        whose closure contains them."""
        if depth < 1 or depth > self.level_budget:
            raise InvalidParameterError(
                f"depth must be in [1, {self.level_budget}]"
            )
        m = self._map(side)
        with prec_context(self.wprec):
            p = frac(to_mpfr(x, self.wprec))
            if 0 < p < m.u:
                raise InFlatError("point lies in the open flat interval")
            entries = []
            for level in range(1, depth + 1):
                e, boundary = self._classify(side, level, p)
                if e.kind == "preimage":
                    if boundary is None:
                        raise InPreimageError(e.index, level)
                    neighbour = self._adjacent_gap(side, level, e, boundary)
                    entries.append((neighbour.kind, neighbour.index))
                else:
                    entries.append((e.kind, e.index))
            return Code(tuple(entries))

    def _adjacent_gap(self, side, level, preimage, boundary):
        part = self.partition(side, level)
        idx = part.elements.index(preimage)
        n = len(part.elements)
        if boundary == "lo":
            return part.elements[(idx - 1) % n]
        return part.elements[(idx + 1) % n]

    def phi0(self, code):
        """Enclosure of phi0 at a coded point: the same-labelled gap of the
        other map at the code's deepest level."""
        if code.depth < 1 or code.depth > self.level_budget:
            raise CodeInvalidError("code depth outside the level budget")
        for level, (kind, index) in enumerate(code.entries, start=1):
            if kind not in ("long_gap", "short_gap"):
                raise CodeInvalidError(f"entry {level} is not a gap label")
            qn, qn1 = self.q[level], self.q[level + 1]
            limit = qn1 if kind == "long_gap" else qn
            if not 0 <= index < limit:
                raise CodeInvalidError(
                    f"entry {level}: index {index} out of range for {kind}"
                )
            if level > 1:
                parent = refinement_parent(self.q, level - 1, kind, index)
                if parent != code.entries[level - 2]:
                    raise CodeInvalidError(
                        f"entry {level} {(kind, index)} is not nested in "
                        f"{code.entries[level - 2]}"
                    )
            kind_last, index_last = kind, index
        e = self.element("g", code.depth, kind_last, index_last)
        return CircleInterval(e.lo, e.length)

    def decode(self, code, side="f"):
        """The gap of the deepest code level, as an interval enclosure."""
        kind, index = code.entries[-1]
        e = self.element(side, code.depth, kind, index)
        return CircleInterval(e.lo, e.length)

    # -- reflection skeletons ---------------------------------------------------

    def skeleton(self, host_index):
        """Two-sided reflection skeleton of the generation-0 preimage f^-j."""
        sk = self._skeletons.get(host_index)
        if sk is not None:
            return sk
        with self._lock, prec_context(self.wprec):
            sk = self._skeletons.get(host_index)
            if sk is None:
                sk = self._build_skeleton(host_index)
                self._skeletons[host_index] = sk
        return sk

    def _chain_interval(self, side, i):
        chain = backward_chain(self._map(side))
        lo, hi, rad = chain.interval(i)
        return lo, hi, rad

    def _side_of(self, host_lo, host_hi, nb_lo, nb_hi):
        dl = frac(host_lo - nb_hi)
        dr = frac(nb_lo - host_hi)
        return "L" if dl < dr else "R"

    def _find_k(self, j):
        """Smallest k whose q_k/q_{k+1} neighbours satisfy the reflection
        inequality for both maps simultaneously, with matching sides."""
        for k in range(1, len(self.q) - 1):
            qk, qk1 = self.q[k], self.q[k + 1]
            data = {}
            feasible = True
            for side in ("f", "g"):
                h_lo, h_hi, _ = self._chain_interval(side, j)
                a_lo, a_hi, _ = self._chain_interval(side, j + qk)
                b_lo, b_hi, _ = self._chain_interval(side, j + qk1)
                side_a = self._side_of(h_lo, h_hi, a_lo, a_hi)
                side_b = self._side_of(h_lo, h_hi, b_lo, b_hi)
                if side_a == side_b:
                    feasible = False
                    break
                if side_a == "L":
                    left_idx, right_idx = j + qk, j + qk1
                    l_lo, r_lo, r_hi = a_lo, b_lo, b_hi
                else:
                    left_idx, right_idx = j + qk1, j + qk
                    l_lo, r_lo, r_hi = b_lo, a_lo, a_hi
                d_l = frac(h_lo - l_lo)
                d_r = frac(r_hi - h_hi)
                width = h_hi - h_lo
                if d_l + d_r > width:
                    feasible = False
                    break
                alpha = width / (d_l + d_r)
                data[side] = (alpha, d_l, d_r, frac(h_lo + alpha * d_l), left_idx, right_idx)
            if feasible and (data["f"][4], data["f"][5]) == (data["g"][4], data["g"][5]):
                return k, data
        raise NoSuchKError(
            f"no return scale satisfies the reflection inequality for host {j} "
            f"within the verified depth {len(self.q)}"
        )

    def _build_skeleton(self, j):
        k, data = self._find_k(j)
        af = data["f"]
        ag = data["g"]
        # stitch consistency: every evaluation path must be able to discover
        # the neighbours through the terminal partition (guaranteed by the
        # terminal-level computation; kept as a hard invariant)
        in_range = self.q[self.terminal_level + 1] + self.q[self.terminal_level] - 1
        if max(af[4], af[5]) > in_range:
            raise ResolutionExhaustedError(
                f"host {j}: reflection neighbours exceed the terminal "
                f"partition range; raise max_level"
            )
        return ReflectionSkeleton(
            host_index=j,
            generation=0,
            k=k,
            one_sided=None,
            left_index=af[4],
            right_index=af[5],
            alpha_f=af[0],
            alpha_g=ag[0],
            d_left_f=af[1],
            d_right_f=af[2],
            d_left_g=ag[1],
            d_right_g=ag[2],
            touch_f=af[3],
            touch_g=ag[3],
        )

    def extreme_children(self, host_index):
        """The two generation-1 children of a host that abut at its touch
        point: reflections of the skeleton's own neighbour preimages."""
        sk = self.skeleton(host_index)
        with prec_context(self.wprec):
            out = []
            for side_label, nb_index in (
                ("left", sk.left_index),
                ("right", sk.right_index),
            ):
                lo_f, hi_f, _ = self._chain_interval("f", nb_index)
                lo_g, hi_g, _ = self._chain_interval("g", nb_index)
                len_f = (hi_f - lo_f) * sk.alpha_f
                len_g = (hi_g - lo_g) * sk.alpha_g
                if side_label == "left":
                    child_lo_f = frac(sk.touch_f - len_f)
                    child_lo_g = frac(sk.touch_g - len_g)
                else:
                    child_lo_f = sk.touch_f
                    child_lo_g = sk.touch_g
                out.append(
                    ExtremeChild(
                        kind="preimage",
                        index=nb_index,
                        generation=1,
                        side=side_label,
                        lo_f=child_lo_f,
                        length_f=len_f,
                        lo_g=child_lo_g,
                        length_g=len_g,
                    )
                )
            return tuple(out)

    def reflection_skeleton(self, host, generation=0):
        """Public skeleton accessor.

        generation 0: host is a partition preimage element; returns the
        two-sided skeleton.  generation >= 1: host must be an extreme child
        (see ``extreme_children``); returns the one-sided CL/CR skeleton
        whose single reflected span fills the host exactly, its far end
        landing on the host's abutting endpoint."""
        if generation == 0:
            if getattr(host, "kind", None) != "preimage":
                raise InvalidParameterError("host must be a preimage element")
            return self.skeleton(host.index)
        if not isinstance(host, ExtremeChild):
            raise InvalidParameterError(
                "generation >= 1 skeletons exist for extreme children only"
            )
        return self._one_sided_skeleton(host)

    def _one_sided_skeleton(self, child):
        """CL (host abuts on its right) / CR (abuts on its left) variant.

        In unfolded coordinates the child is the neighbour preimage
        f^{-index}; its reflected frame mirrors sides, so the one-sided
        condition is checked on the neighbour's opposite flank and the
        scale alpha_c = |host| / d is reflection-invariant."""
        want = "R" if child.side == "left" else "L"
        with prec_context(self.wprec):
            for k in range(1, len(self.q) - 1):
                ok = True
                dists = {}
                for side in ("f", "g"):
                    n_lo, n_hi, _ = self._chain_interval(side, child.index)
                    c_lo, c_hi, _ = self._chain_interval(
                        side, child.index + self.q[k]
                    )
                    if self._side_of(n_lo, n_hi, c_lo, c_hi) != want:
                        ok = False
                        break
                    if want == "R":
                        d = frac(c_hi - n_hi)
                    else:
                        d = frac(n_lo - c_lo)
                    if d > n_hi - n_lo:
                        ok = False
                        break
                    dists[side] = d / (n_hi - n_lo)
                if ok:
                    variant = "CL" if child.side == "left" else "CR"
                    return ReflectionSkeleton(
                        host_index=child.index,
                        generation=child.generation,
                        k=k,
                        one_sided=variant,
                        left_index=None,
                        right_index=None,
                        alpha_f=1 / dists["f"],
                        alpha_g=1 / dists["g"],
                        d_left_f=dists["f"] * child.length_f
                        if variant == "CL"
                        else None,
                        d_right_f=dists["f"] * child.length_f
                        if variant == "CR"
                        else None,
                        d_left_g=dists["g"] * child.length_g
                        if variant == "CL"
                        else None,
                        d_right_g=dists["g"] * child.length_g
                        if variant == "CR"
                        else None,
                        touch_f=None,
                        touch_g=None,
                    )
            raise NoSuchKError(
                f"one-sided inequality unsatisfied for child {child.index}"
            )

    # -- the extension -----------------------------------------------------------

    def phi(self, x):
        """phi(x) for any circle point.

        The flat interval is a host like any other preimage (index 0): its
        interior is filled by the reflected Cantor structure, which is what
        keeps symmetric triples straddling the flat boundary bounded when
        the two maps have different critical exponents."""
        with prec_context(self.wprec):
            p = frac(to_mpfr(x, self.wprec))
            folds = []
            val = None
            for _hop in range(MAX_UNFOLD_HOPS):
                result = self._descend(p)
                if result[0] == "value":
                    val = result[1]
                    break
                _, j, rel = result
                sk = self.skeleton(j)
                lo_f, hi_f, _ = self._chain_interval("f", j)
                lo_g, hi_g, _ = self._chain_interval("g", j)
                touch_rel = sk.alpha_f * sk.d_left_f
                if rel <= touch_rel:
                    p = frac(lo_f - rel / sk.alpha_f)
                    folds.append(("L", lo_g, sk.alpha_g))
                else:
                    rel_r = (hi_f - lo_f) - rel
                    p = frac(frac(hi_f) + rel_r / sk.alpha_f)
                    folds.append(("R", frac(hi_g), sk.alpha_g))
            if val is None:
                raise ResolutionExhaustedError(
                    f"phi recursion exceeded {MAX_UNFOLD_HOPS} unfold hops"
                )
            for side, endpoint, alpha in reversed(folds):
                if side == "L":
                    d = frac(endpoint - val)
                    val = frac(endpoint + alpha * d)
                else:
                    d = frac(val - endpoint)
                    val = frac(endpoint - alpha * d)
            return val

    def _descend(self, p):
        """Locate p: ('value', v) when resolved, ('unfold', host_index, rel)
        when p is interior to a preimage wider than the resolution.

        Resolved cases: an exact endpoint of a preimage (a point of the
        non-wandering set, mapped label-to-label), the interior of a
        preimage narrower than the resolution (affine), or the terminal
        partition level (affine across the gap).  There is deliberately no
        width-based stop for gaps above the terminal level: all paths must
        terminate on the same partition for the pieces to glue exactly."""
        eps = self.resolution
        for level in range(1, self.terminal_level + 1):
            e, boundary = self._classify("f", level, p)
            if e.kind == "preimage":
                if boundary is not None:
                    twin_lo, twin_hi, _ = self._chain_interval("g", e.index)
                    return (
                        "value",
                        twin_lo if boundary == "lo" else frac(twin_hi),
                    )
                if e.length >= eps:
                    return ("unfold", e.index, frac(p - e.lo))
                twin_lo, twin_hi, _ = self._chain_interval("g", e.index)
                rel = frac(p - e.lo) / e.length
                return ("value", frac(twin_lo + rel * (twin_hi - twin_lo)))
            if boundary is not None:
                twin = self.element("g", level, e.kind, e.index)
                return (
                    "value",
                    twin.lo if boundary == "lo" else frac(twin.lo + twin.length),
                )
            if level == self.terminal_level:
                twin = self.element("g", level, e.kind, e.index)
                rel = frac(p - e.lo) / e.length
                return ("value", frac(twin.lo + rel * twin.length))
        raise ResolutionExhaustedError("descend fell through the terminal level")


def conjugacy_defect(evaluator, depth=8, samples=1000, seed=0):
    """Conjugacy check on coded points: enclosures of phi0(f(x)) and
    g(phi0(x)) must intersect.

    Points are sampled uniformly and rejected while uncodable at the given
    depth.  Returns a dict with the intersection rate and defect distances
    (0 for intersecting enclosures)."""
    import random

    rng = random.Random(seed)
    ev = evaluator
    f, g = ev.map_f, ev.map_g
    with prec_context(ev.wprec):
        max_defect = mpfr(0)
        sum_defect = mpfr(0)
        hits = 0
        tested = 0
        rejected = 0
        while tested < samples:
            x = mpfr(rng.getrandbits(64)) / mpfr(2) ** 64
            try:
                code_x = ev.encode(x, depth)
                fx = frac(f.lift(x))
                # x itself may sit in a preimage one index past the depth-d
                # range, in which case f(x) is not depth-d codable: reject.
                code_fx = ev.encode(fx, depth)
            except (InFlatError, InPreimageError):
                rejected += 1
                continue
            enc_fx = ev.phi0(code_fx)
            enc_x = ev.phi0(code_x)
            g_lo = g.lift(enc_x.lo)
            g_hi = g.lift(enc_x.lo + enc_x.length)
            g_img_lo = frac(g_lo)
            g_img_len = g_hi - g_lo
            defect = _arc_gap(g_img_lo, g_img_len, enc_fx.lo, enc_fx.length)
            if defect == 0:
                hits += 1
            else:
                max_defect = max(max_defect, defect)
            sum_defect += defect
            tested += 1
        return {
            "samples": tested,
            "rejected": rejected,
            "intersecting": hits,
            "intersection_rate": hits / tested if tested else 0.0,
            "max_defect": max_defect,
            "mean_defect": sum_defect / tested if tested else mpfr(0),
        }


def _arc_gap(lo1, len1, lo2, len2):
    """Distance between two arcs on the circle (0 if they meet)."""
    d12 = frac(lo2 - (lo1 + len1))
    d21 = frac(lo1 - (lo2 + len2))
    if frac(lo2 - lo1) < len1 or frac(lo1 - lo2) < len2:
        return mpfr(0)
    return min(d12, d21)


# -- abstract nested interval systems -----------------------------------------


class NestedIntervalSystem:
    """Finite-depth nested interval family defining a Cantor set.

    ``levels[n]`` is the ordered tuple of closed intervals of level n; each
    level-(n+1) interval must lie inside a level-n interval, and
    consecutive intervals of one level must have comparable lengths (ratio
    within [c, 1/c] for the declared constant c)."""

    def __init__(self, levels, comparability=0.1, precision_bits=256):
        from .numerics import working_precision

        self.precision_bits = precision_bits
        self.wprec = working_precision(precision_bits)
        with prec_context(self.wprec):
            self.comparability = to_mpfr(comparability, self.wprec)
            self.levels = []
            for raw in levels:
                lvl = sorted(
                    (CircleInterval(frac(to_mpfr(iv[0], self.wprec)),
                                    to_mpfr(iv[1], self.wprec))
                     if not isinstance(iv, CircleInterval) else iv
                     for iv in raw),
                    key=lambda iv: iv.lo,
                )
                self.levels.append(tuple(lvl))
            self._validate()

    @property
    def counts(self):
        return tuple(len(lvl) for lvl in self.levels)

    @property
    def depth(self):
        return len(self.levels)

    def _validate(self):
        c = self.comparability
        for n, lvl in enumerate(self.levels):
            if not lvl:
                raise InvalidParameterError(f"level {n} is empty")
            for a, b in zip(lvl, lvl[1:]):
                r = a.length / b.length
                if not (c <= r <= 1 / c):
                    raise InvalidParameterError(
                        f"level {n}: consecutive intervals not {float(c)}-comparable"
                    )
            if n > 0:
                for iv in lvl:
                    if self._enclosing(n - 1, iv) is None:
                        raise InvalidParameterError(
                            f"level {n} interval at {float(iv.lo)} has no parent"
                        )

    def _enclosing(self, level, iv):
        slack = mpfr(2) ** (-self.wprec + 16)
        for parent in self.levels[level]:
            rel = frac(iv.lo - parent.lo)
            if rel <= parent.length + slack and rel + iv.length <= parent.length + slack:
                return parent
        return None

    @classmethod
    def middle_removal(cls, removed_fraction, depth, base=(0, "0.9"),
                       precision_bits=256):
        """The classic construction: each interval keeps its two outer
        (1 - removed)/2 pieces.  Yields 2^n intervals at level n.  The
        removed fraction accepts "1/3"-style ratio strings."""
        from .numerics import working_precision

        wprec = working_precision(precision_bits)
        with prec_context(wprec):
            if isinstance(removed_fraction, str) and "/" in removed_fraction:
                num, den = removed_fraction.split("/", 1)
                r = to_mpfr(num, wprec) / to_mpfr(den, wprec)
            else:
                r = to_mpfr(removed_fraction, wprec)
            if not (0 < r < 1):
                raise InvalidParameterError("removed fraction must be in (0,1)")
            keep = (1 - r) / 2
            lo = to_mpfr(base[0], wprec)
            ln = to_mpfr(base[1], wprec)
            levels = [[(lo, ln)]]
            for _ in range(depth):
                nxt = []
                for a, length in levels[-1]:
                    nxt.append((a, length * keep))
                    nxt.append((frac(a + length - length * keep), length * keep))
                levels.append(nxt)
            return cls(levels, comparability=min(keep, 1 - keep) / 2,
                       precision_bits=precision_bits)


class NestedConjugacyEvaluator:
    """phi for two combinatorially identical nested interval systems."""

    def __init__(self, sys_f, sys_g, resolution=1e-6):
        if sys_f.counts != sys_g.counts:
            raise MismatchedCombinatoricsError(
                f"level counts differ: {sys_f.counts} vs {sys_g.counts}"
            )
        self.sys_f = sys_f
        self.sys_g = sys_g
        self.wprec = max(sys_f.wprec, sys_g.wprec)
        self.precision_bits = max(sys_f.precision_bits, sys_g.precision_bits)
        with prec_context(self.wprec):
            self.resolution = to_mpfr(resolution, self.wprec)

    def _level_los(self, system, n):
        key = "_los_cache"
        cache = getattr(system, key, None)
        if cache is None:
            cache = {}
            setattr(system, key, cache)
        if n not in cache:
            cache[n] = [iv.lo for iv in system.levels[n]]
        return cache[n]

    def _locate_interval(self, system, n, p):
        """Index of the level-n interval whose closure contains p, else None."""
        import bisect

        los = self._level_los(system, n)
        pos = bisect.bisect_right(los, p) - 1
        candidates = [pos % len(los)]
        if pos < 0:
            candidates = [len(los) - 1]
        for c in candidates:
            iv = system.levels[n][c]
            rel = frac(p - iv.lo)
            if rel <= iv.length or rel == 0:
                return c
        return None

    def phi(self, x):
        with prec_context(self.wprec):
            p = frac(to_mpfr(x, self.wprec))
            folds = []
            val = None
            for _hop in range(MAX_UNFOLD_HOPS):
                res = self._descend(p)
                if res[0] == "value":
                    val = res[1]
                    break
                _, level, idx, p_new, end_g, alpha_g, side = res
                folds.append((side, end_g, alpha_g))
                p = p_new
            if val is None:
                raise ResolutionExhaustedError("nested phi exceeded hop budget")
            for side, endpoint, alpha in reversed(folds):
                if side == "L":
                    d = frac(endpoint - val)
                    val = frac(endpoint + alpha * d)
                else:
                    d = frac(val - endpoint)
                    val = frac(endpoint - alpha * d)
            return val

    def _descend(self, p):
        """All paths terminate on the deepest constructed level (or on exact
        interval endpoints, which are Cantor points); holes unfold.  As in
        the dynamical case, no width-based early stop: uniform terminal
        structure keeps the piecewise-affine pieces glued exactly."""
        sf, sg = self.sys_f, self.sys_g
        deepest = None  # (level, index) of the deepest interval containing p
        for n in range(sf.depth):
            idx = self._locate_interval(sf, n, p)
            if idx is None:
                return self._hole(p, n, deepest)
            iv_f = sf.levels[n][idx]
            iv_g = sg.levels[n][idx]
            rel = frac(p - iv_f.lo)
            if rel == 0 or rel <= mpfr(2) ** (-self.wprec + 8):
                return ("value", iv_g.lo)
            if abs(rel - iv_f.length) <= mpfr(2) ** (-self.wprec + 8):
                return ("value", frac(iv_g.lo + iv_g.length))
            deepest = (n, idx)
        # inside a deepest-level interval: affine below the constructed depth
        n, idx = deepest
        iv_f = sf.levels[n][idx]
        iv_g = sg.levels[n][idx]
        rel = frac(p - iv_f.lo)
        return ("value", frac(iv_g.lo + rel / iv_f.length * iv_g.length))

    def _hole(self, p, born_level, parent):
        """p lies in a hole first visible at born_level; reflect-unfold."""
        sf, sg = self.sys_f, self.sys_g
        n0 = born_level
        # hole endpoints: nearest level-n0 interval endpoints around p
        left_f, right_f = self._hole_bounds(sf, n0, p)
        left_g, right_g = self._hole_bounds_by_index(sg, n0, left_f[1], right_f[1])
        hole_f = frac(right_f[0] - left_f[0])
        hole_g = frac(right_g[0] - left_g[0])
        # snap to the bounding Cantor endpoints: repeated unfolds otherwise
        # contract arithmetic noise toward them without ever terminating
        snap = mpfr(2) ** (-self.wprec + 16)
        rel0 = frac(p - left_f[0])
        if rel0 <= snap:
            return ("value", left_g[0])
        if hole_f - rel0 <= snap:
            return ("value", right_g[0])
        for m in range(n0, sf.depth):
            dlf = self._neighbor_length(sf, m, left_f[0], "left")
            drf = self._neighbor_length(sf, m, right_f[0], "right")
            dlg = self._neighbor_length(sg, m, left_g[0], "left")
            drg = self._neighbor_length(sg, m, right_g[0], "right")
            if dlf + drf <= hole_f and dlg + drg <= hole_g:
                alpha_f = hole_f / (dlf + drf)
                alpha_g = hole_g / (dlg + drg)
                touch_rel = alpha_f * dlf
                rel = frac(p - left_f[0])
                if rel <= touch_rel:
                    p_new = frac(left_f[0] - rel / alpha_f)
                    return ("unfold", m, None, p_new, left_g[0], alpha_g, "L")
                rel_r = hole_f - rel
                p_new = frac(right_f[0] + rel_r / alpha_f)
                return ("unfold", m, None, p_new, right_g[0], alpha_g, "R")
        # the constructed depth carries no structure fine enough to reflect
        # into this hole; below the available data the extension is affine
        rel = frac(p - left_f[0]) / hole_f
        return ("value", frac(left_g[0] + rel * hole_g))

    def _hole_bounds(self, system, n, p):
        """((left endpoint value, interval idx), (right endpoint value, idx))."""
        import bisect

        los = self._level_los(system, n)
        pos = bisect.bisect_right(los, p) - 1
        left_idx = pos % len(los)
        right_idx = (pos + 1) % len(los)
        left_iv = system.levels[n][left_idx]
        right_iv = system.levels[n][right_idx]
        return (
            (frac(left_iv.lo + left_iv.length), left_idx),
            (right_iv.lo, right_idx),
        )

    def _hole_bounds_by_index(self, system, n, left_idx, right_idx):
        left_iv = system.levels[n][left_idx]
        right_iv = system.levels[n][right_idx]
        return (
            (frac(left_iv.lo + left_iv.length), left_idx),
            (right_iv.lo, right_idx),
        )

    def _neighbor_length(self, system, m, endpoint, side):
        """Reflection-neighbourhood width at level m: distance from the far
        endpoint of the nearest level-m interval on the given side of the
        hole endpoint (any sub-holes in between are part of the span)."""
        import bisect

        los = self._level_los(system, m)
        if side == "left":
            pos = bisect.bisect_left(los, endpoint) - 1
            iv = system.levels[m][pos % len(los)]
            return frac(endpoint - iv.lo)
        pos = bisect.bisect_left(los, endpoint)
        iv = system.levels[m][pos % len(los)]
        return frac(frac(iv.lo + iv.length) - endpoint)


def extend_cantor_homeomorphism(sys_f, sys_g, resolution=1e-6):
    """Evaluator whose phi matches codes on the Cantor sets and extends by
    the same reflection scheme used for the dynamical conjugacy."""
    return NestedConjugacyEvaluator(sys_f, sys_g, resolution=resolution)
