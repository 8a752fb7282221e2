"""Acceptance suite.

One test per criterion; each prints a `[criterion N] PASS ...` line with the
measured quantities (visible with `pytest -s tests/test_acceptance.py`).
Thresholds marked as regression values were recorded on the first green run
of this suite and guard against silent degradation.
"""

import json
import random
import time

import numpy as np
import pytest
from gmpy2 import mpfr

from flatcircle.analysis import cross_ratio_bound_suite, estimate_Q, transition_report
from flatcircle.cli import main as cli_main
from flatcircle.conjugacy import (
    ConjugacyEvaluator,
    NestedIntervalSystem,
    conjugacy_defect,
    extend_cantor_homeomorphism,
)
from flatcircle.numerics import circ_dist, frac, prec_context
from flatcircle.partition import backward_chain, build_partition, scaling_tau, verify_refinement
from flatcircle.rotation import first_return_times, tune_parameter

FIB10 = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55]

# regression floors recorded on the first green run
REFERENCE_TAU_MIN = 0.2125  # min tau_n over n in [4, 12], golden exponent 3


def _report(n, msg):
    print(f"\n[criterion {n}] PASS: {msg}")


def test_criterion_01_return_time_consistency(golden_value):
    t0 = time.perf_counter()
    m = tune_parameter(0.5, 3, 3, golden_value, tol=1e-9, precision_bits=256)
    cf = first_return_times(m, depth=10)
    elapsed = time.perf_counter() - t0
    assert list(cf.q[:10]) == FIB10
    assert elapsed < 60
    _report(1, f"q[:10] == Fibonacci, tuned and scanned in {elapsed:.1f} s")


def test_criterion_02_partition_combinatorics(
    golden3, silver3, golden_value, silver_value
):
    censuses = {}
    for name, m, rho, split in (
        ("golden", golden3, golden_value, (1, 1, 1)),
        ("silver", silver3, silver_value, (2, 2, 1)),
    ):
        chain = backward_chain(m)
        for level in range(1, 9):
            p = build_partition(m, level)
            assert float(p.tiling_defect()) < 1e-40
            count = p.q[level] + p.q[level + 1]
            with prec_context(m.wprec):
                order_map = sorted(range(count), key=lambda i: chain.los[i])
                order_rot = sorted(range(count), key=lambda i: frac(-i * rho))
            k1, k2 = order_map.index(0), order_rot.index(0)
            assert order_map[k1:] + order_map[:k1] == order_rot[k2:] + order_rot[:k2]
            if level < 8:
                rep = verify_refinement(p, build_partition(m, level + 1))
                assert all(v == split for v in rep.split_census.values())
        censuses[name] = split
    _report(2, f"levels 1..8 tiled, rotation-ordered; splits {censuses}")


def test_criterion_03_gap_decay(golden3):
    levels = list(range(2, 11))
    gaps = [float(build_partition(golden3, n).max_gap()) for n in levels]
    slope = float(np.polyfit(levels, np.log(gaps), 1)[0])
    assert slope <= -0.3
    _report(3, f"log max-gap slope {slope:.3f} <= -0.3 over levels 2..10")


def test_criterion_04_bounded_geometry(golden3):
    taus = [float(scaling_tau(golden3, n)) for n in range(4, 13)]
    tmin = min(taus)
    assert tmin >= 0.5 * REFERENCE_TAU_MIN
    assert tmin >= 1e-3
    _report(4, f"min tau over [4,12] = {tmin:.4f} (reference {REFERENCE_TAU_MIN})")


def test_criterion_05_conjugacy_defect(evaluator_g34):
    t0 = time.perf_counter()
    rep = conjugacy_defect(evaluator_g34, depth=8, samples=1000, seed=17)
    elapsed = time.perf_counter() - t0
    assert rep["samples"] == 1000
    assert rep["intersection_rate"] == 1.0
    assert float(rep["max_defect"]) == 0.0
    assert elapsed < 300
    _report(5, f"1000/1000 enclosures intersect (depth 8) in {elapsed:.0f} s")


def test_criterion_06_phi_well_formedness(evaluator_g34, golden3):
    ev = evaluator_g34
    rng = random.Random(23)
    violations = 0
    with prec_context(ev.wprec):
        for _ in range(10_000):
            c = mpfr(rng.getrandbits(64)) / mpfr(2) ** 64
            s1 = mpfr(rng.uniform(1e-6, 0.2))
            s2 = mpfr(rng.uniform(1e-6, 0.2))
            px = ev.phi(frac(c - s1))
            py = ev.phi(c)
            pz = ev.phi(frac(c + s2))
            if frac(py - px) + frac(pz - py) > 1:
                violations += 1
    assert violations == 0
    ev_id = ConjugacyEvaluator(golden3, golden3, resolution=2.0**-16, max_level=18)
    with prec_context(ev_id.wprec):
        worst = mpfr(0)
        for _ in range(1000):
            x = mpfr(rng.getrandbits(64)) / mpfr(2) ** 64
            worst = max(worst, circ_dist(ev_id.phi(x), x))
        assert worst <= 2 * ev_id.resolution
    _report(
        6,
        f"0/10000 order violations; f=g max|phi-x| = {float(worst):.2e} <= 2eps",
    )


def test_criterion_07_empirical_quasi_symmetry(evaluator_g34):
    scales = [mpfr(2) ** -k for k in range(6, 19)]
    rep = estimate_Q(evaluator_g34, scales, 770, seed=7)
    assert rep.samples >= 10_000
    assert np.isfinite(rep.global_max)
    fine, coarse = rep.stability()
    assert fine <= 2 * coarse
    _report(
        7,
        f"global max {rep.global_max:.2f}; finest3 {fine:.2f} <= 2 x coarsest3 "
        f"{coarse:.2f} over scales 2^-6..2^-18",
    )


def test_criterion_08_cross_ratio_bound(golden3):
    summaries = {}
    for level in (6, 9):
        s = cross_ratio_bound_suite(golden3, level, 240, seed=29)
        assert s.admissible >= 200
        assert s.max_abs_log_ratio is not None and np.isfinite(s.max_abs_log_ratio)
        summaries[level] = s.max_abs_log_ratio
    assert summaries[9] <= 2 * summaries[6]
    _report(
        8,
        f"max |log Cr ratio|: level 6 = {summaries[6]:.4f}, "
        f"level 9 = {summaries[9]:.4f} (<= 2x)",
    )


def test_criterion_09_transition_growth(golden3):
    rep = transition_report(golden3, [4, 6, 8, 10])
    assert all(e.conclusive for e in rep.entries)
    ratios = [e.ratio for e in rep.entries]
    assert all(a < b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] >= 3 * ratios[0]
    _report(
        9,
        "ratios " + ", ".join(f"{r:.2f}" for r in ratios) + f"; growth x{ratios[-1] / ratios[0]:.1f}",
    )


def test_criterion_10_appendix_demo():
    sys_a = NestedIntervalSystem.middle_removal("1/3", 12, base=(0, "0.9"))
    sys_b = NestedIntervalSystem.middle_removal("1/5", 12, base=(0, "0.9"))
    ev = extend_cantor_homeomorphism(sys_a, sys_b, resolution=1e-6)
    with prec_context(ev.wprec):
        n = 4096
        vals = [ev.phi(mpfr(i) / n) for i in range(n)]
        for a, b in zip(vals, vals[1:]):
            assert frac(b - a) < mpfr("0.9")
        for level in (0, 4, 8):
            for k in (0, -1):
                iv_a = sys_a.levels[level][k]
                iv_b = sys_b.levels[level][k]
                assert circ_dist(ev.phi(iv_a.lo), iv_b.lo) <= ev.resolution
    scales = [mpfr(2) ** -k for k in range(5, 15)]
    rep = estimate_Q(ev, scales, 400, seed=31)
    fine, coarse = rep.stability()
    assert np.isfinite(rep.global_max)
    assert fine <= 2 * coarse
    _report(
        10,
        f"phi monotone on 4096 grid; endpoints exact; Q max {rep.global_max:.2f}, "
        f"stability {fine:.2f} vs {coarse:.2f}",
    )


def test_criterion_11_cli_determinism(cli_maps, tmp_path):
    artifacts = []
    for tag in ("x", "y"):
        qs = tmp_path / f"qs_{tag}.json"
        geom = tmp_path / f"geom_{tag}.csv"
        trans = tmp_path / f"trans_{tag}.csv"
        assert cli_main([
            "qs-check", str(cli_maps["g3"]), str(cli_maps["g4"]),
            "--samples", "130", "--scales", "2^-6:2^-9", "--seed", "11",
            "--resolution", "1e-4", "--max-level", "16", "--out", str(qs),
        ]) == 0
        assert cli_main([
            "geometry", str(cli_maps["g3"]), "--levels", "4..8",
            "--out", str(geom),
        ]) == 0
        assert cli_main([
            "transition", str(cli_maps["g3"]), "--levels", "4:8",
            "--out", str(trans), "--no-plot",
        ]) == 0
        artifacts.append(
            (
                qs.read_bytes(),
                (tmp_path / f"qs_{tag}.png").read_bytes(),
                geom.read_bytes(),
                (tmp_path / f"geom_{tag}.png").read_bytes(),
                trans.read_bytes(),
            )
        )
    assert artifacts[0] == artifacts[1]
    _report(11, "qs-check, geometry, transition outputs byte-identical on re-run")
