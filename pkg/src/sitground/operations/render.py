# File Name: render.py
# Created By: ZW
# Created On: 2023-04-03
# Purpose: draw a run as a static SVG strip: one column per snapshot showing
#  ground truth, detections and the latest proposal, above one heat tile per
#  category of the conditioned location distribution.

# module imports
# ----------------------------------------------------------------------------
import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from matplotlib import rcParams
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle
from scipy import stats

from ..core.boxes import ImageDims, PixelBox
from ..core.gaussian import select
from .engine import RunResult

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
PALETTE = ("tab:blue", "tab:orange", "tab:purple", "tab:brown", "tab:pink", "tab:olive")
GT_COLOR = "tab:green"
HEAT_GRID = (36, 48)  # rows (cy), columns (cx)
TILE_INCHES = 2.2
DEFAULT_SNAPSHOTS = (0, 10, 25, 50, 100, 150, 200, 300)


# function definitions
# ----------------------------------------------------------------------------

# define location_density() which evaluates the (cx, cy) marginal of a
# conditioned category model on a grid over the unit square
def location_density(model, grid=HEAT_GRID) -> np.ndarray:
    rows, cols = grid
    xs = (np.arange(cols) + 0.5) / cols
    ys = (np.arange(rows) + 0.5) / rows
    gx, gy = np.meshgrid(xs, ys)
    loc = select(model, (0, 1))
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return stats.multivariate_normal(loc.mean, loc.cov, allow_singular=True).pdf(pts).reshape(rows, cols)


def _draw_box(ax, box: PixelBox, color, style="solid", width=1.5, label=None):
    ax.add_patch(Rectangle((box.x, box.y), box.w, box.h, fill=False, edgecolor=color,
                           linestyle=style, linewidth=width, label=label))


# define render_run() which writes the SVG strip of a run's snapshots.
# weak detections are dashed, the latest proposal is dotted grey.
def render_run(result: RunResult, dims: ImageDims, categories: Sequence[str], filepath,
               gt_boxes: Optional[Mapping[str, PixelBox]] = None) -> Path:
    fpath = Path(filepath).resolve()
    snaps = list(result.snapshots)
    if not snaps:
        raise ValueError(f"run of {result.image_id!r} has no snapshots to render")
    colors = {cat: PALETTE[i % len(PALETTE)] for i, cat in enumerate(categories)}
    rows, cols = 1 + len(categories), len(snaps)
    aspect = dims.height / dims.width

    rcParams["svg.hashsalt"] = "sitground"
    fig = Figure(figsize=(TILE_INCHES * cols, TILE_INCHES * aspect * rows + 0.6))
    FigureCanvasSVG(fig)
    axes = fig.subplots(rows, cols, squeeze=False)
    fig.suptitle(f"{result.image_id}  score {result.score:.3f}", fontsize=9)

    for j, snap in enumerate(snaps):
        ax = axes[0][j]
        ax.set_xlim(0, dims.width)
        ax.set_ylim(dims.height, 0)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(f"t = {snap.iteration}", fontsize=8)
        for cat, box in (gt_boxes or {}).items():
            if cat in colors: _draw_box(ax, box, GT_COLOR, width=1.0)
        for cat in categories:
            det = snap.detections.get(cat)
            if det is None: continue
            _draw_box(ax, det.box, colors[cat], "dashed" if det.weak else "solid", label=cat)
        if snap.proposal is not None:
            _draw_box(ax, snap.proposal.box, "grey", "dotted", width=1.0)

        for i, cat in enumerate(categories, start=1):
            tile = axes[i][j]
            tile.set_xticks([])
            tile.set_yticks([])
            if j == 0: tile.set_ylabel(cat, fontsize=8, color=colors[cat])
            cond = snap.conditioned.get(cat)
            heat = np.zeros(HEAT_GRID) if cond is None else location_density(cond)
            tile.imshow(heat, extent=(0, 1, 1, 0), cmap="magma", aspect="auto",
                        vmin=0.0, vmax=max(float(heat.max()), 1e-12))

    logger.info(f"Writing run strip for {result.image_id} to {fpath}..")
    fig.savefig(fpath, format="svg", metadata={"Date": None})
    logger.info(f"Done writing run strip to {fpath}..")
    return fpath
