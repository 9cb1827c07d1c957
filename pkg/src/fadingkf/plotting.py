"""Optional PNG rendering of simulation outputs (Agg backend, no display)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.0,
}
# keeps PNG bytes independent of the matplotlib version
_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_traces(traces, trace_M, path, thresholds=()):
    """log2 Tr(P_k) for a handful of paths, with Tr(M) and the thresholds."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, tr in traces:
            ax.plot(range(1, tr.horizon + 1), tr.log2_trace, label=f"path {i}", alpha=0.8)
        ax.axhline(math.log2(trace_M), color="k", ls="--", label="Tr(M)")
        for c in thresholds:
            ax.axhline(math.log2(c), color="tab:red", ls=":", lw=0.8)
        ax.set_xlabel("k")
        ax.set_ylabel("log2 Tr(P_k)")
        ax.legend(loc="upper left", fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def plot_dichotomy(report, path):
    """Exceedance and tail-return fractions against horizon, one line per threshold."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, sharey=True, figsize=(8.0, 3.4))
        for c in report.thresholds:
            rows = [report.row(c, h) for h in report.horizons]
            ax1.errorbar(report.horizons, [r.p_exceed for r in rows],
                         yerr=[r.se_exceed for r in rows], marker="o", ms=3, label=f"C={c:g}")
            ax2.errorbar(report.horizons, [r.p_tail for r in rows],
                         yerr=[r.se_tail for r in rows], marker="o", ms=3, label=f"C={c:g}")
        ax1.set_title("P(max Tr > C)")
        ax2.set_title("P(tail min Tr <= C)")
        for ax in (ax1, ax2):
            ax.set_xlabel("horizon")
            ax.set_ylim(-0.05, 1.05)
        ax1.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, path)
