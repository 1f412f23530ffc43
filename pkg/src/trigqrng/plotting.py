"""Figure rendering for sweep tables and analysis reports.

Figures are written to files next to the delimited output; nothing here is
interactive.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .core import StatsReport  # noqa: E402

_AXIS_LABELS = {
    "rate": "trigger rate [MHz]",
    "tau_pd": "detector pulse width [ns]",
}


def sweep_figure(points, axis: str):
    """Measured a1 with 1-sigma error bars against the closed-form prediction."""
    xs = [p.axis_value for p in points]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(
        xs,
        [p.a1_hat for p in points],
        yerr=[p.a1_err for p in points],
        fmt="o",
        ms=4,
        capsize=2,
        label="simulated",
    )
    ax.plot(xs, [p.a1_pred for p in points], "-", color="C3", lw=1.2, label="model")
    clamped = [p for p in points if p.truncated]
    if clamped:
        ax.plot(
            [p.axis_value for p in clamped],
            [p.a1_hat for p in clamped],
            "x",
            color="C7",
            ms=8,
            label="clamped regime",
        )
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel(_AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("lag-1 autocorrelation $a_1$")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def lag_profile_figure(report: StatsReport):
    """Autocorrelation profile with a 3-sigma band."""
    ks = [k for k, _, _ in report.autocorr]
    a = [a for _, a, _ in report.autocorr]
    err = [e for _, _, e in report.autocorr]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(ks, a, yerr=err, fmt="o", ms=3, capsize=2, label="$a_k$")
    band = 3.0 / math.sqrt(report.n)
    ax.axhspan(-band, band, color="C2", alpha=0.15, label=r"$\pm 3/\sqrt{N}$")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("lag $k$")
    ax.set_ylabel("serial autocorrelation")
    ax.set_title(f"N = {report.n}, bias = {report.bias:+.2e}")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=160)
    plt.close(fig)
