"""Figures written next to the CSV outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_rates(tables, path):
    """Log-log error against h, one line per (degree, field); L2 left, DG right."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for tb in tables:
        h = tb.column("h")
        for ax, norm in zip(axes, ("L2", "DG")):
            for fld, ls in (("c", "-o"), ("u", "--s")):
                col = f"e_{norm}_{fld}"
                ax.loglog(h, tb.column(col), ls, label=f"{fld}, p={tb.p} ({tb.slopes[col]:.2f})")
    for ax, norm in zip(axes, ("L2", "DG")):
        ax.set_xlabel("h")
        ax.set_ylabel(f"{norm} error")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_summary(rows, path):
    """Min/mean/max of c and g and the displacement norm against time."""
    t = np.array([r["t"] for r in rows])
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, f in zip(axes[:2], ("c", "g")):
        ax.fill_between(t, [r[f"{f}_min"] for r in rows], [r[f"{f}_max"] for r in rows], alpha=0.3)
        ax.plot(t, [r[f"{f}_mean"] for r in rows])
        ax.set_title(f)
    axes[2].plot(t, [r["u_l2"] for r in rows])
    axes[2].set_title("|u| (L2)")
    for ax in axes:
        ax.set_xlabel("t [years]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

