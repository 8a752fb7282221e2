"""Matplotlib figure rendering for the CLI report paths.

Every report command writes a PNG next to its delimited output.  Figures
are rendered with the Agg backend and fixed metadata so that re-running a
command reproduces the file byte for byte.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SAVE_KW = dict(dpi=130, metadata={"Software": "flatcircle"})


def _finish(fig, path):
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_partition(elements, path, title="dynamical partition"):
    """Interval diagram: preimages as filled bars, gaps colour-coded."""
    fig, ax = plt.subplots(figsize=(9, 2.4))
    colors = {"preimage": "#30557d", "long_gap": "#d88f32", "short_gap": "#76a65c"}
    for e in elements:
        lo = float(e["left"]) if isinstance(e, dict) else float(e.lo)
        ln = (
            float(e["right"]) - float(e["left"])
            if isinstance(e, dict)
            else float(e.length)
        )
        if ln < 0:
            ln += 1.0
        kind = e["kind"] if isinstance(e, dict) else e.kind
        ax.barh(0, ln, left=lo, height=0.5, color=colors[kind], edgecolor="none")
    ax.set_xlim(0, 1)
    ax.set_yticks([])
    ax.set_xlabel("circle position")
    ax.set_title(title, fontsize=10)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in colors.values()]
    ax.legend(handles, colors.keys(), loc="upper right", fontsize=7, ncol=3)
    fig.tight_layout()
    return _finish(fig, path)


def plot_geometry(report, path):
    """tau_n, max gap (log scale) and ratio floors per level."""
    fig, axes = plt.subplots(1, 3, figsize=(10, 3))
    lv = report.levels
    tau = [float(t) if t is not None else float("nan") for t in report.tau]
    axes[0].plot(lv, tau, "o-", color="#30557d")
    axes[0].set_xlabel("level")
    axes[0].set_title(r"scaling $\tau_n$", fontsize=10)
    axes[1].semilogy(lv, [float(x) for x in report.max_gap_length_per_level], "s-", color="#d88f32")
    axes[1].set_xlabel("level")
    axes[1].set_title("max gap", fontsize=10)
    axes[2].plot(lv, [float(x) for x in report.min_preimage_to_gap], "o-", label="preimage/gap")
    axes[2].plot(lv, [float(x) for x in report.adjacent_gap_min_ratio], "s-", label="adjacent gaps")
    axes[2].set_xlabel("level")
    axes[2].set_title("comparability floors", fontsize=10)
    axes[2].legend(fontsize=7)
    fig.tight_layout()
    return _finish(fig, path)


def plot_phi(xs, ys, path, title="conjugacy phi"):
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.plot([float(x) for x in xs], [float(y) for y in ys], ",", color="#30557d")
    ax.plot([0, 1], [0, 1], lw=0.5, color="#aaaaaa")
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\varphi(x)$")
    ax.set_title(title, fontsize=10)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    fig.tight_layout()
    return _finish(fig, path)


def plot_qs(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    scales = [b[0] for b in report.scale_bins]
    ax.loglog(scales, [b[1] for b in report.scale_bins], "o-", label="max ratio")
    ax.loglog(scales, [b[2] for b in report.scale_bins], "s-", label="p99 ratio")
    ax.set_xlabel("triple scale")
    ax.set_ylabel("symmetrized ratio")
    ax.set_title("empirical quasi-symmetry", fontsize=10)
    ax.legend(fontsize=8)
    ax.invert_xaxis()
    fig.tight_layout()
    return _finish(fig, path)


def plot_transition(entries, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    lv = [e.level for e in entries if e.conclusive]
    rt = [e.ratio for e in entries if e.conclusive]
    ax.semilogy(lv, rt, "o-", color="#b0413e")
    bad = [e.level for e in entries if not e.conclusive]
    for b in bad:
        ax.axvline(b, color="#cccccc", lw=0.8, ls="--")
    ax.set_xlabel("level n")
    ax.set_ylabel("image ratio")
    ax.set_title("transition-map distortion (dashed: inconclusive)", fontsize=9)
    fig.tight_layout()
    return _finish(fig, path)


def plot_crossratio(summaries, path):
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    levels = [s.level for s in summaries]
    vals = [s.max_abs_log_ratio if s.max_abs_log_ratio is not None else 0 for s in summaries]
    ax.bar([str(v) for v in levels], vals, color="#76a65c")
    ax.set_xlabel("partition level")
    ax.set_ylabel("max |log Cr ratio|")
    ax.set_title("cross-ratio distortion along chains", fontsize=10)
    fig.tight_layout()
    return _finish(fig, path)
