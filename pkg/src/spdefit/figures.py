"""Static SVG figures for experiment results."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def emit_figures(result, out_dir) -> list[Path]:
    """Write the standard diagnostic plots; returns the created paths.

    Produces nothing (and no directory) when there are no checkpoints or no
    usable replications.
    """
    checkpoints = sorted(result.aggregates)
    good = [r for r in result.records if not r.degenerate]
    if not checkpoints or not good:
        return []

    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    have_bias = all(n in r.b_n for r in good for n in checkpoints)

    # estimation error vs prefix size, with the predicted-scale reference line
    ns = np.array(checkpoints, dtype=float)
    med = np.array([result.aggregates[n]["median_abs_error"] for n in checkpoints])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(ns, med, "o-", label="median |estimate - truth|")
    if have_bias:
        b_last = np.array([np.median([r.b_n[n] for r in good])
                           for n in checkpoints])
        if np.all(b_last > 0) and med[0] > 0:
            ref = b_last * (med[0] / b_last[0])
            ax.loglog(ns, ref, "--", color="gray",
                      label="scale sequence b_N (anchored)")
            if len(ns) >= 2:
                slope = np.polyfit(np.log(ns), np.log(b_last), 1)[0]
                ax.set_title("error decay (b_N slope ~ %.2f)" % slope)
    ax.set_xlabel("number of modes N")
    ax.set_ylabel("error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = out_dir / "error_vs_modes.svg"
    fig.savefig(p)
    plt.close(fig)
    written.append(p)

    if not have_bias:
        return written

    # histogram of the normalized statistics at the final checkpoint
    n_last = checkpoints[-1]
    stats = np.array([r.normalized_stat[n_last] for r in good])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(stats, bins=max(10, int(math.sqrt(stats.size))), density=True,
            alpha=0.7, label="normalized statistics")
    xs = np.linspace(-4, 4, 200)
    ax.plot(xs, np.exp(-xs**2 / 2) / math.sqrt(2 * math.pi), "k-",
            label="standard normal")
    ax.set_title("normalized statistics at N = %d" % n_last)
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = out_dir / "normalized_hist.svg"
    fig.savefig(p)
    plt.close(fig)
    written.append(p)

    # QQ plot against standard normal quantiles
    from scipy.special import ndtri
    srt = np.sort(stats)
    qs = ndtri((np.arange(1, srt.size + 1) - 0.5) / srt.size)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(qs, srt, ".", ms=3)
    lim = [min(qs[0], srt[0]), max(qs[-1], srt[-1])]
    ax.plot(lim, lim, "k--", lw=1)
    ax.set_xlabel("normal quantiles")
    ax.set_ylabel("sample quantiles")
    ax.set_title("QQ plot, N = %d" % n_last)
    fig.tight_layout()
    p = out_dir / "normalized_qq.svg"
    fig.savefig(p)
    plt.close(fig)
    written.append(p)
    return written
