"""SVG rendering of summary curves and verification reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .summaries import SummaryCurve

# fixed salt and no date stamp keep SVG output byte-identical across runs
matplotlib.rcParams["svg.hashsalt"] = "palmkit"
_META = {"Date": None}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def render_curve_svg(c: SummaryCurve, path) -> None:
    """Estimate line, dashed theoretical reference and a +-2 SE band when available.

    Elements carry the SVG ids ``estimate``, ``theoretical`` and ``se-band``.
    """
    fig, ax = plt.subplots(figsize=(5, 4))
    if c.se is not None and np.all(np.isfinite(c.se)):
        band = ax.fill_between(c.r, c.estimate - 2 * c.se, c.estimate + 2 * c.se,
                               color="0.8", linewidth=0, label="±2 SE")
        band.set_gid("se-band")
    if c.theoretical is not None:
        (th,) = ax.plot(c.r, c.theoretical, "k--", linewidth=1, label="theoretical")
        th.set_gid("theoretical")
    (est,) = ax.plot(c.r, c.estimate, color="C0", linewidth=1.5, label="estimate")
    est.set_gid("estimate")
    ax.set_xlabel("r")
    ax.set_ylabel(c.name)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def render_report_svg(reports, path, threshold: float = 3.0) -> None:
    """Horizontal bars of z-scores with the acceptance threshold marked."""
    names = [r.name for r in reports]
    z = np.array([min(r.z, 10.0) for r in reports])
    fig, ax = plt.subplots(figsize=(6, 0.3 * len(names) + 1))
    colors = ["C0" if r.passed else "C3" for r in reports]
    ax.barh(np.arange(len(names)), z, color=colors)
    ax.axvline(threshold, color="k", linestyle="--", linewidth=1)
    ax.set_yticks(np.arange(len(names)), names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("z")
    fig.tight_layout()
    _save(fig, path)
