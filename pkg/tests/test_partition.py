import random

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from flatcircle.errors import (
    ChainEntersFlatError,
    CombinatoricsViolationError,
    DegenerateQuadrupleError,
    InvalidParameterError,
)
from flatcircle.numerics import frac, prec_context
from flatcircle.partition import (
    DynamicalPartition,
    build_partition,
    comparability_stats,
    cross_ratio,
    cross_ratio_chain,
    refinement_parent,
    return_times,
    scaling_tau,
    verify_refinement,
)

FIB = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89]


def test_level1_structure(golden3):
    p = build_partition(golden3, 1)
    kinds = [(e.kind, e.index) for e in p.elements]
    assert kinds == [
        ("preimage", 0),
        ("long_gap", 0),
        ("preimage", 1),
        ("long_gap", 1),
        ("preimage", 2),
        ("short_gap", 0),
    ]


@pytest.mark.parametrize("level", range(1, 9))
def test_element_counts(golden3, level):
    p = build_partition(golden3, level)
    qn, qn1 = p.q[level], p.q[level + 1]
    assert len(p.elements) == 2 * (qn + qn1)
    assert sum(1 for e in p.elements if e.kind == "preimage") == qn + qn1
    assert sum(1 for e in p.elements if e.kind == "long_gap") == qn1
    assert sum(1 for e in p.elements if e.kind == "short_gap") == qn


def test_tiling(golden3, silver3):
    for m in (golden3, silver3):
        for level in (1, 4, 8):
            p = build_partition(m, level)
            assert float(p.tiling_defect()) < 1e-40


def test_index_dynamics(golden3):
    # f maps element i endpoint-to-endpoint onto element i-1
    m = golden3
    p = build_partition(m, 5)
    with prec_context(m.wprec):
        by_idx = {e.index: e for e in p.elements if e.kind == "preimage"}
        for i in range(1, 6):
            e, prev = by_idx[i], by_idx[i - 1]
            img_lo = frac(m.lift(e.lo))
            img_hi = frac(m.lift(e.lo + e.length))
            assert min(abs(img_lo - prev.lo), 1 - abs(img_lo - prev.lo)) < 1e-60
            prev_hi = frac(prev.lo + prev.length)
            assert min(abs(img_hi - prev_hi), 1 - abs(img_hi - prev_hi)) < 1e-60


def test_cyclic_order_matches_rotation(golden3, silver3, golden_value, silver_value):
    for m, rho in ((golden3, golden_value), (silver3, silver_value)):
        for level in (4, 8):
            p = build_partition(m, level)
            count = p.q[level] + p.q[level + 1]
            with prec_context(m.wprec):
                from flatcircle.partition import backward_chain

                chain = backward_chain(m)
                order_map = sorted(range(count), key=lambda i: chain.los[i])
                order_rot = sorted(range(count), key=lambda i: frac(-i * rho))
                # cyclic sequences must agree after aligning at index 0
                k1 = order_map.index(0)
                k2 = order_rot.index(0)
                assert (
                    order_map[k1:] + order_map[:k1]
                    == order_rot[k2:] + order_rot[:k2]
                )


def test_refinement_census_golden(golden3):
    for level in range(1, 8):
        rep = verify_refinement(
            build_partition(golden3, level), build_partition(golden3, level + 1)
        )
        assert rep.ok
        assert all(v == (1, 1, 1) for v in rep.split_census.values())


def test_refinement_census_silver(silver3):
    for level in range(1, 7):
        rep = verify_refinement(
            build_partition(silver3, level), build_partition(silver3, level + 1)
        )
        assert all(v == (2, 2, 1) for v in rep.split_census.values())


def test_short_gap_becomes_long(golden3):
    coarse = build_partition(golden3, 4)
    fine = build_partition(golden3, 5)
    for e in coarse.elements:
        if e.kind == "short_gap":
            twin = fine.element("long_gap", e.index)
            assert twin.lo == e.lo and twin.length == e.length


def test_refinement_detects_corruption(golden3):
    coarse = build_partition(golden3, 3)
    fine = build_partition(golden3, 4)
    # swap two gap labels in a forged copy of the fine partition
    elements = list(fine.elements)
    gaps = [k for k, e in enumerate(elements) if e.kind == "long_gap"]
    a, b = gaps[0], gaps[1]
    ea, eb = elements[a], elements[b]
    elements[a] = type(ea)(ea.kind, eb.index, ea.level, ea.lo, ea.length, ea.err_radius)
    elements[b] = type(eb)(eb.kind, ea.index, eb.level, eb.lo, eb.length, eb.err_radius)
    forged = DynamicalPartition(
        level=fine.level, elements=tuple(elements), q=fine.q, wprec=fine.wprec
    )
    with pytest.raises(CombinatoricsViolationError):
        verify_refinement(coarse, forged)


def test_refinement_parent_arithmetic(golden3):
    fine = build_partition(golden3, 6)
    coarse = build_partition(golden3, 5)
    coarse_by_key = {(e.kind, e.index): e for e in coarse.elements}
    with prec_context(golden3.wprec):
        for e in fine.elements:
            kind, idx = refinement_parent(fine.q, 5, e.kind, e.index)
            parent = coarse_by_key[(kind, idx)]
            rel = frac(e.lo - parent.lo)
            assert rel <= parent.length + parent.err_radius
            assert rel + e.length <= parent.length + 4 * parent.err_radius


def test_tau_in_unit_interval(golden3):
    for n in range(2, 13):
        tau = scaling_tau(golden3, n)
        assert 0 < tau < 1


def test_tau_floor(golden3):
    taus = [float(scaling_tau(golden3, n)) for n in range(4, 13)]
    assert min(taus) > 1e-3


def test_gap_decay_slope(golden3):
    levels = range(2, 11)
    gaps = [float(build_partition(golden3, n).max_gap()) for n in levels]
    slope = np.polyfit(list(levels), np.log(gaps), 1)[0]
    assert slope <= -0.3


def test_monotone_decay_two_levels(golden3):
    # the flat interval is an element of every level, so the decaying
    # quantity is the largest gap, not the largest element
    for n in (2, 4, 6, 8):
        assert build_partition(golden3, n + 2).max_gap() < build_partition(
            golden3, n
        ).max_gap()


def test_comparability_stats(golden3):
    rep = comparability_stats(golden3, [4, 5, 6, 7, 8])
    assert all(float(x) > 0 for x in rep.min_preimage_to_gap)
    assert all(float(x) > 0 for x in rep.adjacent_gap_min_ratio)
    # adjacent-gap floor degrades slowly: consecutive levels within factor 2
    vals = [float(x) for x in rep.adjacent_gap_min_ratio]
    for a, b in zip(vals, vals[1:]):
        assert b > a / 2
    for alpha, c1, c2 in rep.comparability_alpha_bounds:
        assert 0 < float(c1) <= float(c2) < 1


def test_cross_ratio_examples():
    assert float(cross_ratio(0, 0.25, 0.5, 0.75)) == 0.25
    assert abs(float(cross_ratio(0, 0.1, 0.2, 0.4)) - 1 / 3) < 1e-12


def test_cross_ratio_degenerate_limit():
    # numerator collapses as b -> a
    for eps in (1e-3, 1e-6, 1e-9):
        assert float(cross_ratio(0, eps, 0.2, 0.4)) < eps * 10


def test_cross_ratio_errors():
    with pytest.raises(InvalidParameterError):
        cross_ratio(0, 0.3, 0.2, 0.4)
    with pytest.raises(DegenerateQuadrupleError):
        cross_ratio(0, 0, 0, 0.4)


@given(
    st.floats(0.001, 0.2),
    st.floats(0.25, 0.45),
    st.floats(0.5, 0.7),
    st.floats(0.75, 0.95),
    st.floats(0.01, 0.9),
)
@settings(max_examples=50, deadline=None)
def test_cross_ratio_scale_invariance(a, b, c, d, scale):
    with prec_context(200):
        cr1 = cross_ratio(mpfr(a), mpfr(b), mpfr(c), mpfr(d))
        cr2 = cross_ratio(
            mpfr(a) * scale, mpfr(b) * scale, mpfr(c) * scale, mpfr(d) * scale
        )
        assert abs(cr1 - cr2) < 1e-30


def test_chain_inside_gap(golden3):
    p = build_partition(golden3, 6)
    g = next(e for e in p.elements if e.kind == "long_gap" and e.index >= p.q[6])
    with prec_context(golden3.wprec):
        pts = [frac(g.lo + g.length * mpfr(o)) for o in (0.1, 0.3, 0.6, 0.9)]
        res = cross_ratio_chain(golden3, pts, int(p.q[6]))
        assert len(res.log_ratios) == int(p.q[6])
        assert all(gmpy2.is_finite(v) for v in res.log_ratios)
        assert res.multiplicity >= 1


def test_chain_zero_steps(golden3):
    p = build_partition(golden3, 4)
    g = p.gaps()[2]
    with prec_context(golden3.wprec):
        pts = [frac(g.lo + g.length * mpfr(o)) for o in (0.1, 0.3, 0.6, 0.9)]
        res = cross_ratio_chain(golden3, pts, 0)
        assert res.log_ratios == []


def test_chain_enters_flat(golden3):
    m = golden3
    with prec_context(m.wprec):
        # inner arc straddles the flat interval immediately
        pts = [frac(mpfr(x)) for x in (0.95, 0.99, 0.2, 0.3)]
        with pytest.raises(ChainEntersFlatError):
            cross_ratio_chain(m, pts, 3)


def test_locate(golden3):
    p = build_partition(golden3, 6)
    with prec_context(golden3.wprec):
        rng = random.Random(4)
        for _ in range(200):
            x = mpfr(rng.random())
            e = p.locate(x)
            rel = frac(x - e.lo)
            assert rel <= e.length + e.err_radius
        # boundary points resolve to the adjoining preimage
        pre = p.preimages()[3]
        assert p.locate(pre.lo).kind == "preimage"
        assert p.locate(frac(pre.lo + pre.length)).kind == "preimage"
