"""Rejection-rate figures written straight to image files (Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_power_curve"]

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def plot_power_curve(table, path, *, theoretical: bool = True, title: str | None = None):
    """Rejection rate against significance level, one line per ``beta_true``.

    The dashed diagonal marks the nominal level.  With ``theoretical`` the
    local-alternative power is drawn as a dotted line in the same colour.
    Returns ``path``.
    """
    rows = table.rows
    betas = sorted({r["beta_true"] for r in rows})
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        cmap = plt.get_cmap("viridis")
        for i, b in enumerate(betas):
            sel = sorted((r for r in rows if r["beta_true"] == b), key=lambda r: r["alpha"])
            a = np.array([r["alpha"] for r in sel])
            rate = np.array([r["rate"] for r in sel])
            color = cmap(i / max(1, len(betas) - 1) * 0.85)
            ax.plot(a, rate, marker="o", ms=3, lw=1.2, color=color, label=f"beta = {b:g}")
            if theoretical:
                theo = np.array([r["theoretical"] for r in sel])
                ax.plot(a, theo, ls=":", lw=1.0, color=color)
        lo = min(r["alpha"] for r in rows)
        hi = max(r["alpha"] for r in rows)
        ax.plot([lo, hi], [lo, hi], ls="--", lw=0.8, color="0.5")
        ax.set_xlabel("significance level")
        ax.set_ylabel("rejection rate")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False, loc="center right")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return path
