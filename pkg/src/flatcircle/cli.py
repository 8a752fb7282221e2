"""Command-line interface.

One experiment per invocation; outputs are written atomically (temp file
plus rename) and are deterministic functions of the configuration and
seed.  Validation problems exit 2, numerical failures (precision
exhausted, rational rotation number detected, ...) exit 3, each with a
single machine-parsable JSON line on stderr.  Report commands render a
companion PNG figure next to the delimited output unless --no-plot is
given.
"""

import argparse
import json
import os
import sys
import tempfile

from gmpy2 import mpfr

from . import plots
from .analysis import cross_ratio_bound_suite, estimate_Q, transition_report
from .conjugacy import (
    ConjugacyEvaluator,
    NestedIntervalSystem,
    conjugacy_defect,
    extend_cantor_homeomorphism,
)
from .errors import ConfigError, FlatCircleError, InvalidParameterError
from .mapcore import CircleMap
from .numerics import frac, prec_context, to_decimal, to_mpfr, working_precision
from .partition import build_partition, comparability_stats, return_times
from .rotation import (
    cf_target_value,
    first_return_times,
    rotation_number,
    tune_parameter,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _atomic_write(path, data):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".flatcircle-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, data, default_stdout=True):
    out = getattr(args, "out", None)
    if out:
        _atomic_write(out, data)
    elif default_stdout:
        sys.stdout.write(data)


def _figure_path(out):
    base, _ = os.path.splitext(out)
    return base + ".png"


def _want_plot(args):
    return getattr(args, "out", None) and not args.no_plot


def _load_map(path):
    if not os.path.exists(path):
        raise ConfigError(f"map file not found: {path}")
    return CircleMap.load(path)


def _parse_levels(spec):
    for sep in ("..", ":"):
        if sep in spec:
            a, b = spec.split(sep, 1)
            return list(range(int(a), int(b) + 1))
    return [int(x) for x in spec.split(",")]


def _parse_scales(spec):
    def one(tok):
        tok = tok.strip()
        if tok.startswith("2^"):
            return mpfr(2) ** int(tok[2:])
        return mpfr(tok)

    if ":" in spec:
        a, b = spec.split(":", 1)
        sa, sb = one(a), one(b)
        lo, hi = (sb, sa) if sa > sb else (sa, sb)
        scales = []
        s = hi
        while s >= lo * mpfr("0.999"):
            scales.append(s)
            s = s / 2
        return scales
    return [one(t) for t in spec.split(",")]


def _parse_fraction(spec):
    if "/" in spec:
        a, b = spec.split("/", 1)
        return mpfr(a) / mpfr(b)
    return mpfr(spec)


# -- subcommand implementations -------------------------------------------------


def _cmd_tune(args):
    bits = args.precision
    if args.target_cf:
        pattern = [int(x) for x in args.target_cf.split(",") if x.strip()]
        target = cf_target_value(pattern, depth=args.depth, precision_bits=bits)
        from .rotation import ContinuedFraction

        terms = (pattern * (args.depth // len(pattern) + 2))[: args.depth + 1]
        cf = ContinuedFraction(tuple(terms))
        tol = args.tol if args.tol else 1 / (mpfr(cf.q[args.depth - 1]) * cf.q[args.depth])
    elif args.target_rho:
        target = to_mpfr(args.target_rho, working_precision(bits))
        tol = args.tol or "1e-9"
    else:
        raise ConfigError("one of --target-cf / --target-rho is required")
    m = tune_parameter(
        args.u, args.ell_left, args.ell_right, target, tol=tol, precision_bits=bits
    )
    data = json.dumps(m.to_json_dict(), indent=2) + "\n"
    _emit(args, data)
    return 0


def _cmd_rotnum(args):
    m = _load_map(args.map)
    rho = rotation_number(m, tol=args.tol)
    cf = first_return_times(m, depth=args.depth)
    payload = {
        "rho": to_decimal(rho, m.precision_bits),
        "cf": list(cf.partial_quotients),
        "q": list(cf.q),
    }
    _emit(args, json.dumps(payload, indent=2) + "\n")
    return 0


def _cmd_partition(args):
    m = _load_map(args.map)
    part = build_partition(m, args.level)
    bits = m.precision_bits
    rows = [
        {
            "kind": e.kind,
            "index": e.index,
            "level": e.level,
            "left": to_decimal(e.lo, bits),
            "right": to_decimal(frac(e.lo + e.length), bits),
            "err_radius": to_decimal(e.err_radius, bits),
        }
        for e in part.elements
    ]
    _emit(args, json.dumps(rows, indent=2) + "\n")
    if _want_plot(args):
        plots.plot_partition(
            part.elements, _figure_path(args.out), title=f"partition level {args.level}"
        )
    return 0


def _cmd_geometry(args):
    m = _load_map(args.map)
    levels = _parse_levels(args.levels)
    rep = comparability_stats(m, levels)
    bits = m.precision_bits
    lines = ["level,tau,min_preimage_gap_ratio,max_gap,adjacent_gap_min_ratio"]
    for i, lv in enumerate(rep.levels):
        tau = to_decimal(rep.tau[i], bits) if rep.tau[i] is not None else ""
        lines.append(
            f"{lv},{tau},{to_decimal(rep.min_preimage_to_gap[i], bits)},"
            f"{to_decimal(rep.max_gap_length_per_level[i], bits)},"
            f"{to_decimal(rep.adjacent_gap_min_ratio[i], bits)}"
        )
    _emit(args, "\n".join(lines) + "\n")
    if _want_plot(args):
        plots.plot_geometry(rep, _figure_path(args.out))
    return 0


def _build_evaluator(args):
    f = _load_map(args.fmap)
    g = _load_map(args.gmap)
    return ConjugacyEvaluator(
        f, g, resolution=args.resolution, max_level=args.max_level
    )


def _cmd_conjugate(args):
    ev = _build_evaluator(args)
    bits = ev.precision_bits
    n = args.grid
    lines = ["x,phi_x"]
    xs, ys = [], []
    with prec_context(ev.wprec):
        for i in range(n):
            x = mpfr(i) / n
            y = ev.phi(x)
            xs.append(x)
            ys.append(y)
            lines.append(f"{to_decimal(x, bits)},{to_decimal(y, bits)}")
    _emit(args, "\n".join(lines) + "\n")
    if _want_plot(args):
        plots.plot_phi(xs, ys, _figure_path(args.out))
    return 0


def _cmd_conjugacy_defect(args):
    ev = _build_evaluator(args)
    rep = conjugacy_defect(ev, depth=args.depth, samples=args.samples, seed=args.seed)
    bits = ev.precision_bits
    payload = {
        "samples": rep["samples"],
        "rejected": rep["rejected"],
        "intersecting": rep["intersecting"],
        "intersection_rate": rep["intersection_rate"],
        "max_defect": to_decimal(rep["max_defect"], bits),
        "mean_defect": to_decimal(rep["mean_defect"], bits),
        "depth": args.depth,
    }
    _emit(args, json.dumps(payload, indent=2) + "\n")
    return 0


def _qs_payload(report, resolution_bits=None, extra=None):
    payload = {
        "samples": report.samples,
        "triples_rejected": report.triples_rejected,
        "global_max": report.global_max,
        "scale_bins": [
            {"scale": b[0], "max_ratio": b[1], "p99_ratio": b[2]}
            for b in report.scale_bins
        ],
    }
    fine, coarse = report.stability()
    payload["stability"] = {
        "finest3_max": fine,
        "coarsest3_max": coarse,
        "ratio": fine / coarse,
    }
    if extra:
        payload.update(extra)
    return payload


def _cmd_qs_check(args):
    ev = _build_evaluator(args)
    scales = _parse_scales(args.scales)
    per_scale = max(1, args.samples // len(scales))
    rep = estimate_Q(ev, scales, per_scale, seed=args.seed)
    payload = _qs_payload(
        rep,
        extra={
            "resolution": float(ev.resolution),
            "terminal_level": ev.terminal_level,
            "image_granularity": float(ev.image_granularity),
            "seed": args.seed,
        },
    )
    _emit(args, json.dumps(payload, indent=2) + "\n")
    if _want_plot(args):
        plots.plot_qs(rep, _figure_path(args.out))
    return 0


def _cmd_transition(args):
    m = _load_map(args.map)
    levels = _parse_levels(args.levels)
    rep = transition_report(m, levels)
    lines = ["n,q_n,ratio,comparability_floor"]
    for e in rep.entries:
        ratio = repr(e.ratio) if e.ratio is not None else ""
        floor = repr(min(e.pull_a_fraction, e.pull_b_fraction))
        lines.append(f"{e.level},{e.q},{ratio},{floor}")
    _emit(args, "\n".join(lines) + "\n")
    if _want_plot(args):
        plots.plot_transition(rep.entries, _figure_path(args.out))
    return 0


def _cmd_crossratio(args):
    m = _load_map(args.map)
    summary = cross_ratio_bound_suite(m, args.level, args.trials, seed=args.seed)
    payload = {
        "level": summary.level,
        "steps": summary.steps,
        "trials": summary.trials,
        "admissible": summary.admissible,
        "skipped": summary.skipped,
        "max_abs_log_ratio": summary.max_abs_log_ratio,
        "multiplicity_max": summary.multiplicity_max,
        "seed": args.seed,
    }
    _emit(args, json.dumps(payload, indent=2) + "\n")
    if _want_plot(args):
        plots.plot_crossratio([summary], _figure_path(args.out))
    return 0


def _cmd_appendix_demo(args):
    bits = args.precision
    sys_a = NestedIntervalSystem.middle_removal(
        _parse_fraction(args.middle_a), args.depth, base=(0, args.base),
        precision_bits=bits,
    )
    sys_b = NestedIntervalSystem.middle_removal(
        _parse_fraction(args.middle_b), args.depth, base=(0, args.base),
        precision_bits=bits,
    )
    ev = extend_cantor_homeomorphism(sys_a, sys_b, resolution=args.resolution)
    with prec_context(ev.wprec):
        n = args.grid
        lines = ["x,phi_x"]
        xs, ys = [], []
        for i in range(n):
            x = mpfr(i) / n
            y = ev.phi(x)
            xs.append(x)
            ys.append(y)
            lines.append(f"{to_decimal(x, bits)},{to_decimal(y, bits)}")
    _atomic_write(args.out + "_phi.csv", "\n".join(lines) + "\n")
    scales = _parse_scales(args.scales)
    rep = estimate_Q(ev, scales, max(1, args.samples // len(scales)), seed=args.seed)
    payload = _qs_payload(rep, extra={"seed": args.seed, "depth": args.depth})
    _atomic_write(args.out + "_qs.json", json.dumps(payload, indent=2) + "\n")
    if not args.no_plot:
        plots.plot_phi(xs, ys, args.out + ".png", title="nested-system conjugacy")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="flatcircle", description=__doc__)
    p.add_argument("--config", help="JSON file supplying defaults for any flag")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(func=fn)
        sp.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
        return sp

    sp = add("tune", _cmd_tune, help="tune the translation parameter to a target rotation number")
    sp.add_argument("--target-cf", help="repeating partial-quotient pattern, e.g. 1,1")
    sp.add_argument("--target-rho", help="target rotation number as a decimal string")
    sp.add_argument("--depth", type=int, default=26, help="convergent depth defining the tolerance")
    sp.add_argument("--tol", help="explicit tolerance (overrides --depth)")
    sp.add_argument("--u", default="0.5", help="right endpoint of the flat interval")
    sp.add_argument("--ell-left", default="3")
    sp.add_argument("--ell-right", default="3")
    sp.add_argument("--precision", type=int, default=256)
    sp.add_argument("--out")

    sp = add("rotnum", _cmd_rotnum, help="rotation number and return-time data")
    sp.add_argument("map")
    sp.add_argument("--tol", default="1e-9")
    sp.add_argument("--depth", type=int, default=10)
    sp.add_argument("--out")

    sp = add("partition", _cmd_partition, help="dynamical partition as JSON intervals")
    sp.add_argument("map")
    sp.add_argument("--level", type=int, required=True)
    sp.add_argument("--out")

    sp = add("geometry", _cmd_geometry, help="per-level geometry CSV")
    sp.add_argument("map")
    sp.add_argument("--levels", default="4..12")
    sp.add_argument("--out")

    sp = add("conjugate", _cmd_conjugate, help="phi sampled on a uniform grid")
    sp.add_argument("fmap")
    sp.add_argument("gmap")
    sp.add_argument("--resolution", default="1e-4")
    sp.add_argument("--max-level", type=int, default=18)
    sp.add_argument("--grid", type=int, default=4096)
    sp.add_argument("--out")

    sp = add("conjugacy-defect", _cmd_conjugacy_defect, help="phi0 conjugacy defect on coded points")
    sp.add_argument("fmap")
    sp.add_argument("gmap")
    sp.add_argument("--resolution", default="1e-4")
    sp.add_argument("--max-level", type=int, default=18)
    sp.add_argument("--depth", type=int, default=8)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")

    sp = add("qs-check", _cmd_qs_check, help="empirical quasi-symmetry report")
    sp.add_argument("fmap")
    sp.add_argument("gmap")
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--scales", default="2^-6:2^-18")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--resolution", default=str(2.0**-20))
    sp.add_argument("--max-level", type=int, default=24)
    sp.add_argument("--out")

    sp = add("transition", _cmd_transition, help="transition-map distortion ratios")
    sp.add_argument("map")
    sp.add_argument("--levels", default="4:10")
    sp.add_argument("--out")

    sp = add("crossratio", _cmd_crossratio, help="cross-ratio distortion suite")
    sp.add_argument("map")
    sp.add_argument("--level", type=int, default=8)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")

    sp = add("appendix-demo", _cmd_appendix_demo, help="abstract nested-interval extension demo")
    sp.add_argument("--middle-a", default="1/3")
    sp.add_argument("--middle-b", default="1/5")
    sp.add_argument("--depth", type=int, default=10)
    sp.add_argument("--base", default="0.9", help="length of the level-0 base interval")
    sp.add_argument("--grid", type=int, default=4096)
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--scales", default="2^-5:2^-12")
    sp.add_argument("--resolution", default="1e-6")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--precision", type=int, default=256)
    sp.add_argument("--out", required=True, help="output prefix")

    return p


def _merge_config(parser, argv):
    """Config-file values become parser defaults; explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    if not os.path.exists(known.config):
        raise ConfigError(f"config file not found: {known.config}")
    with open(known.config) as fh:
        try:
            cfg = json.load(fh, parse_float=str)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    # find the subcommand parser to learn its valid destinations
    sub_actions = [
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    ]
    commands = sub_actions[0].choices if sub_actions else {}
    cmd = next((a for a in argv if a in commands), None)
    if cmd is None:
        raise ConfigError("config given but no subcommand recognized")
    sp = commands[cmd]
    valid = {a.dest for a in sp._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in valid:
            raise ConfigError(f"unknown config key: {key}")
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return argv


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _merge_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except FlatCircleError as exc:
        sys.stderr.write(
            json.dumps({"error": exc.code, "message": str(exc)}) + "\n"
        )
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "config", "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
