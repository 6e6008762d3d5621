"""Multi-scale white-tophat extraction of building masks from the DSM.

A single structuring element cannot catch buildings of every size, so the
responses of a whole ladder of element sizes are thresholded and unioned in
ascending order. The per-scale contour images are kept because the scale at
which a building first appears doubles as a width estimate for the line
segments along its boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import (
    BinaryMask,
    Contour,
    Heightfield,
    dilate,
    erode,
    rasterize_contours,
    trace_contours,
)


@dataclass(frozen=True)
class TophatParams:
    """Structuring-element ladder and binarisation threshold."""

    scale_min: int = 10
    scale_max: int = 400
    scale_step: int = 10
    height_threshold: float = 2.5

    def __post_init__(self):
        if not (0 < self.scale_min <= self.scale_max):
            raise ValueError("require 0 < scale_min <= scale_max")
        if self.scale_step <= 0:
            raise ValueError("scale_step must be positive")
        if self.height_threshold <= 0:
            raise ValueError("height_threshold must be positive")

    def scales(self) -> list[int]:
        return list(range(self.scale_min, self.scale_max + 1, self.scale_step))


@dataclass(eq=False)
class TophatStack:
    """Per-scale cumulative building masks and their rasterised contours.

    ``cumulative_masks[i]`` is the union of all thresholded tophat responses
    up to ``scales[i]``, so the masks form a nested chain; the last one is
    the building mask.
    """

    scales: list[int]
    cumulative_masks: list[BinaryMask] = field(default_factory=list)
    contour_images: list[BinaryMask] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.scales)


def white_tophat(dsm: Heightfield, se_size: int) -> Heightfield:
    """DSM minus its opening with an se_size x se_size square element.

    Responds to bright structures smaller than the element; the response is
    non-negative on valid cells and nodata where the DSM (or its opening)
    is nodata.
    """
    if se_size < 1:
        raise ValueError("se_size must be >= 1")
    se_half = se_size // 2
    opened = dilate(erode(dsm, se_half), se_half)
    ok = dsm.valid_mask() & opened.valid_mask()
    resp = np.where(ok, dsm.values - opened.values, dsm.nodata)
    return dsm.like(resp)


def build_stack(dsm: Heightfield, params: TophatParams | None = None) -> TophatStack:
    """Threshold the tophat response at each scale and accumulate by union."""
    params = params or TophatParams()
    stack = TophatStack(scales=params.scales())
    shape = dsm.values.shape
    cum = np.zeros(shape, dtype=bool)
    for scale in stack.scales:
        resp = white_tophat(dsm, scale)
        hit = resp.valid_mask() & (resp.values > params.height_threshold)
        cum = cum | hit
        mask = BinaryMask(cum.copy())
        stack.cumulative_masks.append(mask)
        stack.contour_images.append(rasterize_contours(trace_contours(mask), shape))
    return stack


def building_mask(stack: TophatStack) -> BinaryMask:
    """Final building mask: the union over all scales."""
    if not stack.cumulative_masks:
        raise ValueError("empty tophat stack")
    return stack.cumulative_masks[-1]


def boundary_contours(stack: TophatStack) -> list[Contour]:
    """Outer contours of the final building mask; these become the data points
    of the offset-labeling optimisation."""
    return trace_contours(building_mask(stack))
