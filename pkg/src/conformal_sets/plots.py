"""Figure rendering for the report paths of the CLI.

Every function writes one PNG next to the delimited output it mirrors.
The module forces the Agg backend on import, so it must only be imported
from code paths that actually render files (the CLI does this lazily).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

# Strip the Software tag so identical inputs give identical PNG bytes
# across matplotlib patch versions.
_PNG_META = {"metadata": {"Software": None}}


def _finish(fig, path):
    fig.savefig(path, dpi=144, **_PNG_META)
    plt.close(fig)


def save_coverage_figure(report, path) -> None:
    """Per-class coverage bars with the nominal target line."""
    present = [c for c in report.per_class if c.coverage is not None]
    ys = [c.y for c in present]
    cov = [c.coverage for c in present]
    target = 1.0 - report.alpha
    colors = ["#c44e52" if c < target else "#4c72b0" for c in cov]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(ys) + 2), 3.2))
    ax.bar([str(y) for y in ys], cov, color=colors)
    ax.axhline(target, color="#222222", linewidth=1, linestyle="--",
               label=f"target {target:g}")
    ax.set_xlabel("class")
    ax.set_ylabel("coverage")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right", frameon=False)
    fig.tight_layout()
    _finish(fig, path)


def save_size_figure(report, path) -> None:
    """Per-class mean prediction-set size bars with the macro average."""
    present = [c for c in report.per_class if c.mean_size is not None]
    ys = [c.y for c in present]
    sizes = [c.mean_size for c in present]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(ys) + 2), 3.2))
    ax.bar([str(y) for y in ys], sizes, color="#55a868")
    ax.axhline(report.apss, color="#222222", linewidth=1, linestyle="--",
               label=f"macro mean {report.apss:.3g}")
    ax.set_xlabel("class")
    ax.set_ylabel("mean set size")
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    _finish(fig, path)


def save_rank_frequency_figure(freqs: dict, path) -> None:
    """Grouped bars of P(rank = k) for each named method."""
    names = list(freqs)
    k = len(freqs[names[0]].freq)
    xs = list(range(1, k + 1))
    width = 0.8 / max(1, len(names))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.4 * k + 2), 3.2))
    for j, name in enumerate(names):
        offs = [x + (j - (len(names) - 1) / 2) * width for x in xs]
        ax.bar(offs, freqs[name].freq, width=width, label=name)
    ax.set_xticks(xs)
    ax.set_xlabel("label rank")
    ax.set_ylabel("normalized frequency")
    ax.legend(frameon=False)
    fig.tight_layout()
    _finish(fig, path)


def save_sigma_figure(records, path) -> None:
    """Per-class condition-number bars; the y = 1 line marks the cutoff."""
    defined = [s for s in records if s.defined]
    ys = [str(s.y) for s in defined]
    vals = [s.sigma for s in defined]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(ys) + 2), 3.2))
    ax.bar(ys, vals, color="#8172b2")
    ax.axhline(1.0, color="#222222", linewidth=1, linestyle="--", label="1.0")
    ax.set_xlabel("class")
    ax.set_ylabel("condition number")
    ax.legend(frameon=False)
    fig.tight_layout()
    _finish(fig, path)
