"""Quantitative experiments: quasi-symmetry estimation, transition-map
distortion, and cross-ratio distortion sweeps.

All sampling is deterministic: each sample's generator is seeded from
(seed, scale index, sample index) alone, so reports are bit-identical
across runs and independent of evaluation order.
"""

import random
from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import (
    ChainEntersFlatError,
    DegenerateTripleError,
    InvalidParameterError,
    LevelTooShallowError,
)
from .numerics import circ_dist, frac, prec_context, to_mpfr
from .partition import backward_chain, build_partition, cross_ratio_chain, return_times

# |A| = |B| = min(SIZE_FACTOR * |f^{-q_n}|, SIZE_CAP * |U|).  The proof only
# requires the sets to be comparable with the preimage; these constants make
# the symmetric test point land inside the pulled-back set on the reference
# family, which the bare preimage width does not (every level would be
# inconclusive).
TRANSITION_SIZE_FACTOR = 16
TRANSITION_SIZE_CAP = "0.3"


@dataclass
class QsReport:
    samples: int
    scale_bins: list  # (scale, max_ratio, p99_ratio) per scale
    global_max: float
    triples_rejected: int

    def stability(self, head=3):
        """max ratio over the `head` finest scales vs the `head` coarsest."""
        fine = max(b[1] for b in self.scale_bins[-head:])
        coarse = max(b[1] for b in self.scale_bins[:head])
        return fine, coarse


def qs_ratio(evaluator, x, y, z):
    """Symmetrized quasi-symmetry ratio max(r, 1/r) of a symmetric triple,
    r = |phi(x), phi(y)| / |phi(y), phi(z)|."""
    with prec_context(evaluator.wprec):
        x = frac(to_mpfr(x, evaluator.wprec))
        y = frac(to_mpfr(y, evaluator.wprec))
        z = frac(to_mpfr(z, evaluator.wprec))
        d1 = circ_dist(x, y)
        d2 = circ_dist(y, z)
        spacing_tol = mpfr(2) ** (-evaluator.precision_bits + 24)
        if abs(d1 - d2) > spacing_tol:
            raise DegenerateTripleError(
                f"triple spacing asymmetric: {float(d1)} vs {float(d2)}"
            )
        if not (d1 > 2 * evaluator.resolution and d2 > 2 * evaluator.resolution):
            raise DegenerateTripleError("triple spacing below 2x resolution")
        px, py, pz = evaluator.phi(x), evaluator.phi(y), evaluator.phi(z)
        num = circ_dist(px, py)
        den = circ_dist(py, pz)
        if num == 0 or den == 0:
            raise DegenerateTripleError("triple collapsed under phi")
        r = num / den
        return max(r, 1 / r)


def estimate_Q(evaluator, scales, samples_per_scale, seed=0):
    """Deterministic sampled lower bound on the quasi-symmetry constant.

    Triple centres are uniform on the circle with half-width taken from the
    scale list; identical inputs and seed reproduce the report bit for bit.
    """
    with prec_context(evaluator.wprec):
        scales = [to_mpfr(s, evaluator.wprec) for s in scales]
        if not scales:
            raise InvalidParameterError("need at least one scale")
        for s in scales:
            if not (2 * evaluator.resolution < s < mpfr(1) / 4):
                raise InvalidParameterError(
                    f"scale {float(s)} outside (2*resolution, 1/4)"
                )
        scales = sorted(scales, reverse=True)  # coarse -> fine
        bins = []
        rejected = 0
        tested = 0
        for si, s in enumerate(scales):
            ratios = []
            for i in range(samples_per_scale):
                rng = random.Random(
                    (seed * 1_000_003 + si * 8191 + i) & ((1 << 63) - 1)
                )
                c = mpfr(rng.getrandbits(64)) / mpfr(2) ** 64
                try:
                    r = qs_ratio(evaluator, frac(c - s), c, frac(c + s))
                except DegenerateTripleError:
                    rejected += 1
                    continue
                ratios.append(float(r))
                tested += 1
            if ratios:
                arr = np.asarray(ratios)
                bins.append((float(s), float(arr.max()), float(np.percentile(arr, 99))))
            else:
                bins.append((float(s), float("nan"), float("nan")))
        global_max = max(b[1] for b in bins if not np.isnan(b[1]))
        return QsReport(
            samples=tested,
            scale_bins=bins,
            global_max=global_max,
            triples_rejected=rejected,
        )


@dataclass
class TransitionEntry:
    level: int  # 1-based index into the return-time sequence
    q: int  # the return time q used (P = f^{-q})
    conclusive: bool
    side: str | None  # which flank hosted the symmetric point
    ratio: float | None  # symmetrized image ratio (> 1 when distortion blows up)
    set_width: float  # |A| = |B|
    pull_a_fraction: float  # |f^{-q}(A)| / |P|
    pull_b_fraction: float  # |f^{-q}(B)| / |P|


@dataclass
class TransitionDistortionReport:
    entries: list

    def ratios(self):
        return {e.level: e.ratio for e in self.entries if e.conclusive}


def transition_distortion(circle_map, level):
    """Distortion witness of the transition map f^q on P = f^{-q}.

    A and B sit at the two ends of the flat interval; their pull-backs
    occupy the ends of P.  The test triple is z, y = the inner pull-back
    endpoints and x the point mirroring z across y; the symmetrized image
    ratio of the equal arcs (x,y), (y,z) under f^q grows without bound in
    the level, which is the non-quasi-symmetry certificate.  When x escapes
    the pulled-back set on both flanks the level is reported inconclusive
    rather than silently adjusted.
    """
    if level < 1:
        raise InvalidParameterError("level must be >= 1")
    with prec_context(circle_map.wprec):
        cf = return_times(circle_map, depth=level + 1)
        if level > len(cf.q) - 1:
            raise InvalidParameterError(f"no return time q_{level} available")
        qn = cf.q[level - 1]  # 1-based: level n uses the n-th sequence entry
        u = circle_map.u
        chain = backward_chain(circle_map)
        chain.ensure(qn)
        p_lo, p_hi, _ = chain.interval(qn)
        p_len = p_hi - p_lo
        if p_len >= u / 4:
            raise LevelTooShallowError(
                f"|f^-{qn}| = {float(p_len)} >= |U|/4; construction degenerate"
            )
        w = min(TRANSITION_SIZE_FACTOR * p_len, mpfr(TRANSITION_SIZE_CAP) * u)

        def pull(y0, steps):
            y = mpfr(y0)
            for _ in range(steps):
                y = circle_map.invert_full_branch(y)
            return y

        def push(x0, steps):
            x = mpfr(x0)
            for _ in range(steps):
                x = frac(circle_map.lift(x))
            return x

        r_a = pull(w, qn)  # r(f^{-q}(A)), A = (0, w)
        l_b = pull(u - w, qn)  # l(f^{-q}(B)), B = (u-w, u)
        pull_a = frac(r_a - p_lo)
        pull_b = frac(p_hi - l_b)
        central = frac(l_b - r_a)
        entry = TransitionEntry(
            level=level,
            q=int(qn),
            conclusive=False,
            side=None,
            ratio=None,
            set_width=float(w),
            pull_a_fraction=float(pull_a / p_len),
            pull_b_fraction=float(pull_b / p_len),
        )
        den_img = (u - w) - w  # |f^q(y), f^q(z)| = |U \ (A u B)|
        x_a = frac(r_a - central)
        if frac(x_a - p_lo) <= pull_a:  # x inside f^{-q}(A)
            fx = push(x_a, qn)
            num_img = circ_dist(fx, w)
            if num_img > 0:
                r = den_img / num_img
                entry.conclusive = True
                entry.side = "A"
                entry.ratio = float(max(r, 1 / r))
                return entry
        x_b = frac(l_b + central)  # mirrored flank
        if frac(p_hi - x_b) <= pull_b:
            fx = push(x_b, qn)
            num_img = circ_dist(fx, u - w)
            if num_img > 0:
                r = den_img / num_img
                entry.conclusive = True
                entry.side = "B"
                entry.ratio = float(max(r, 1 / r))
                return entry
        return entry


def transition_report(circle_map, levels):
    entries = [transition_distortion(circle_map, n) for n in levels]
    return TransitionDistortionReport(entries=entries)


@dataclass
class CrossRatioSummary:
    level: int
    steps: int
    trials: int
    admissible: int
    skipped: int
    max_abs_log_ratio: float | None
    multiplicity_max: int | None


def cross_ratio_bound_suite(circle_map, level, trials, seed=0):
    """Cross-ratio distortion over admissible chains inside level-n gaps.

    Quadruples are sampled inside long gaps of index >= q_level (whose
    forward orbits stay clear of the flat interval for q_level steps);
    chains that still enter the flat are skipped and counted."""
    if trials == 0:
        return CrossRatioSummary(level, 0, 0, 0, 0, None, None)
    with prec_context(circle_map.wprec):
        part = build_partition(circle_map, level)
        q_level = part.q[level]
        gaps = [
            e
            for e in part.elements
            if e.kind == "long_gap" and e.index >= q_level
        ]
        if not gaps:
            raise InvalidParameterError(f"no admissible gaps at level {level}")
        max_log = None
        mult = None
        admissible = 0
        skipped = 0
        for i in range(trials):
            rng = random.Random((seed * 2_000_003 + i * 524_287) & ((1 << 63) - 1))
            g = gaps[rng.randrange(len(gaps))]
            offs = sorted(rng.uniform(0.02, 0.98) for _ in range(4))
            if min(b - a for a, b in zip(offs, offs[1:])) < 0.005:
                skipped += 1
                continue
            pts = [frac(g.lo + mpfr(o) * g.length) for o in offs]
            try:
                res = cross_ratio_chain(circle_map, pts, int(q_level))
            except ChainEntersFlatError:
                skipped += 1
                continue
            admissible += 1
            m = max(abs(float(v)) for v in res.log_ratios) if res.log_ratios else 0.0
            max_log = m if max_log is None else max(max_log, m)
            mult = (
                res.multiplicity
                if mult is None
                else max(mult, res.multiplicity)
            )
        return CrossRatioSummary(
            level=level,
            steps=int(q_level),
            trials=trials,
            admissible=admissible,
            skipped=skipped,
            max_abs_log_ratio=max_log,
            multiplicity_max=mult,
        )
