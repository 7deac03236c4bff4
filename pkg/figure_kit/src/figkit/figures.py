"""Figure builders: log-log convergence panels, field heatmaps, descent traces.

No numerics are recomputed here: data, fitted slopes and labels all come
from the CSV files.  Style settings are pinned so identical inputs render
byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, Table, TrajectoryDump, interior_to_grid

_RC = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
}
_PNG_METADATA = {"Software": "figkit"}


def _save(fig, out_path):
    fig.savefig(out_path, bbox_inches="tight", metadata=_PNG_METADATA)
    plt.close(fig)


def plot_loglog(table: Table, out_path: str, x_column: str | None = None,
                guide_slopes: tuple = ()) -> dict:
    """One panel per error column with guide lines and fitted slopes.

    Returns a summary dict (panel names and legend labels) for callers
    that want to inspect what was drawn.
    """
    if x_column is None:
        x_column = "n" if "n" in table.columns else table.columns[0]
    x = table.column(x_column)
    err_cols = [c for c in table.columns
                if c not in (x_column, "m", "n", "s") ]
    if not err_cols:
        raise SchemaError(f"{table.path}: no error columns to plot")
    legend_labels = {}
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(err_cols),
                                 figsize=(3.2 * len(err_cols), 3.0), squeeze=False)
        for ax, col in zip(axes[0], err_cols):
            y = table.column(col)
            labels = []
            label = col
            if col in table.slopes:
                label += f" (fitted slope {table.slopes[col]:.2f})"
            ax.loglog(x, y, "o-", base=2, label=label)
            labels.append(label)
            for slope in guide_slopes:
                guide = y[0] * (x / x[0]) ** slope
                glabel = f"slope {slope:g}"
                ax.loglog(x, guide, "--", base=2, label=glabel)
                labels.append(glabel)
            ax.set_xlabel(x_column)
            ax.set_title(col)
            ax.legend()
            legend_labels[col] = labels
        _save(fig, out_path)
    return {"panels": err_cols, "legend_labels": legend_labels, "path": out_path}


def plot_heatmap(dump: TrajectoryDump, out_path: str, times=(0.0, 0.25, 0.5, 0.75, 1.0)) -> dict:
    """Heatmaps of the dumped nodal field at the requested times."""
    ks = [int(np.argmin(np.abs(dump.times - t))) for t in times]
    grids = [interior_to_grid(dump.level, dump.values[k]) for k in ks]
    # color limits come from the dumped nodal values, not the zero padding
    vmin = min(float(dump.values[k].min()) for k in ks)
    vmax = max(float(dump.values[k].max()) for k in ks)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(ks), figsize=(2.6 * len(ks), 2.8),
                                 squeeze=False)
        im = None
        for ax, k, grid in zip(axes[0], ks, grids):
            im = ax.imshow(grid, origin="lower", extent=(0, 1, 0, 1),
                           vmin=vmin, vmax=vmax, cmap="viridis")
            ax.set_title(f"t = {dump.times[k]:g}")
            ax.grid(False)
        fig.colorbar(im, ax=axes[0].tolist(), shrink=0.85)
        _save(fig, out_path)
    return {"times": [float(dump.times[k]) for k in ks],
            "clim": (float(vmin), float(vmax)), "path": out_path}


def plot_trace(tables: list, out_path: str) -> dict:
    """Overlayed objective-decrease curves of one or more descent traces."""
    labels = []
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.6, 3.2))
        for table in tables:
            J = table.column("J")
            if np.any(np.diff(J) > 1e-15):
                raise SchemaError(
                    f"{table.path}: objective trace is not nonincreasing")
            label = table.label or table.path
            ax.semilogy(table.column("iter"), J, "o-", label=label)
            labels.append(label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective")
        ax.legend()
        _save(fig, out_path)
    return {"labels": labels, "path": out_path}
