"""Region-report writers: CSV/JSON tables plus a rendered heatmap figure."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .optimize import BinSpec, RegionRow

CSV_COLUMNS = ["win_bin_lo", "win_bin_hi", "ov_bin_lo", "ov_bin_hi", "mean_acc", "n_evals"]


def write_region_csv(rows: list[RegionRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.win_bin_lo,
                    r.win_bin_hi,
                    r.ov_bin_lo,
                    r.ov_bin_hi,
                    "" if r.mean_acc is None else repr(r.mean_acc),
                    r.n_evals,
                ]
            )


def write_region_json(rows: list[RegionRow], path: str | Path) -> None:
    payload = [
        {
            "win_bin_lo": r.win_bin_lo,
            "win_bin_hi": r.win_bin_hi,
            "ov_bin_lo": r.ov_bin_lo,
            "ov_bin_hi": r.ov_bin_hi,
            "mean_acc": r.mean_acc,
            "n_evals": r.n_evals,
        }
        for r in rows
    ]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def render_region_heatmap(
    rows: list[RegionRow], bins: BinSpec, path: str | Path, title: str = "Mean accuracy by region"
) -> None:
    """Render the binned accuracy surface to an image file (empty bins hatched)."""
    n_w = len(bins.window_edges) - 1
    n_o = len(bins.overlap_edges) - 1
    grid = np.full((n_o, n_w), np.nan)
    for r in rows:
        wi = bins.window_edges.index(r.win_bin_lo)
        oi = bins.overlap_edges.index(r.ov_bin_lo)
        if r.mean_acc is not None:
            grid[oi, wi] = r.mean_acc

    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * n_w + 2.0), 3.5))
    masked = np.ma.masked_invalid(grid)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad(color="#dddddd")
    im = ax.imshow(masked, origin="lower", aspect="auto", cmap=cmap, vmin=0.0, vmax=1.0)
    ax.set_xticks(range(n_w))
    ax.set_xticklabels(
        [f"{bins.window_edges[i]}-{bins.window_edges[i + 1]}" for i in range(n_w)],
        rotation=45,
        ha="right",
        fontsize=8,
    )
    ax.set_yticks(range(n_o))
    ax.set_yticklabels(
        [f"{bins.overlap_edges[i]}-{bins.overlap_edges[i + 1]}%" for i in range(n_o)],
        fontsize=8,
    )
    ax.set_xlabel("window size (s)")
    ax.set_ylabel("overlap")
    ax.set_title(title, fontsize=10)
    for oi in range(n_o):
        for wi in range(n_w):
            if not np.isnan(grid[oi, wi]):
                ax.text(
                    wi, oi, f"{grid[oi, wi]:.2f}", ha="center", va="center", fontsize=7,
                    color="white" if grid[oi, wi] < 0.6 else "black",
                )
    fig.colorbar(im, ax=ax, label="mean accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
