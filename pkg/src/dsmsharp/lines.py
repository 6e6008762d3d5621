"""Straight line segments on the orthophoto: detection, filtering, widths.

The detector follows the classic gradient-orientation region-growing recipe:
pixels with agreeing gradient orientations are grown into regions, each
region's principal axis becomes a candidate segment, and short or sparse
regions are dropped. It is fully deterministic for a fixed input. Detected
segments are then filtered against the DSM boundary buffer and assigned a
building-width index from the tophat contour stack.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .raster import BinaryMask, bresenham_line, dilate_mask
from .tophat import TophatStack

logger = logging.getLogger(__name__)


class UnmatchedSegmentError(ValueError):
    """A segment overlaps no tophat contour image at any scale."""


@dataclass
class LineSegment:
    """Directed segment in continuous pixel coordinates.

    ``width_index`` is the 1-based tophat scale index at which the segment
    first overlaps a building contour; None until estimated.
    """

    p1: tuple[float, float]
    p2: tuple[float, float]
    width_index: int | None = None

    def __post_init__(self):
        self.p1 = (float(self.p1[0]), float(self.p1[1]))
        self.p2 = (float(self.p2[0]), float(self.p2[1]))
        if self.p1 == self.p2:
            raise ValueError("degenerate segment: identical endpoints")

    def length(self) -> float:
        return math.hypot(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])

    def raster_points(self) -> np.ndarray:
        """Integer pixels on the Bresenham walk from p1 to p2."""
        return bresenham_line(
            round(self.p1[0]), round(self.p1[1]), round(self.p2[0]), round(self.p2[1])
        )


@dataclass(frozen=True)
class DetectorParams:
    gradient_threshold: float = 5.0
    angle_tolerance: float = 22.5  # degrees
    min_length: float = 15.0
    min_region_pixels: int = 20
    smoothing_sigma: float = 0.8  # anti-aliasing blur so staircase edges grade smoothly

    def __post_init__(self):
        if min(self.gradient_threshold, self.angle_tolerance, self.min_length) <= 0:
            raise ValueError("detector parameters must be positive")
        if self.min_region_pixels <= 0:
            raise ValueError("min_region_pixels must be positive")
        if self.angle_tolerance >= 90:
            raise ValueError("angle_tolerance must be < 90 degrees")
        if self.smoothing_sigma < 0:
            raise ValueError("smoothing_sigma must be >= 0")


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2x2 difference gradients on the (h-1, w-1) dual grid.

    The gradient at index (y, x) belongs to image point (x + 0.5, y + 0.5),
    which keeps detected lines registered with inter-pixel edges.
    """
    a = img.astype(np.float64)
    gx = (a[:-1, 1:] + a[1:, 1:] - a[:-1, :-1] - a[1:, :-1]) / 2.0
    gy = (a[1:, :-1] + a[1:, 1:] - a[:-1, :-1] - a[:-1, 1:]) / 2.0
    mag = np.hypot(gx, gy)
    return gx, gy, mag


def _angle_diff_mod_pi(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def detect_segments(gray, params: DetectorParams | None = None) -> list[LineSegment]:
    """Grow straight regions of agreeing gradient orientation into segments.

    Endpoints are ordered so p1 is lexicographically smaller. Output order is
    the deterministic seed order (strongest gradient first).
    """
    params = params or DetectorParams()
    img = gray.samples if hasattr(gray, "samples") else np.asarray(gray)
    if img.ndim != 2:
        raise ValueError("detect_segments expects a single-band image")
    if img.shape[0] < 2 or img.shape[1] < 2:
        return []
    img = img.astype(np.float64)
    if params.smoothing_sigma > 0:
        img = ndimage.gaussian_filter(img, params.smoothing_sigma, truncate=3.0, mode="reflect")

    gx, gy, mag = _gradients(img)
    gh, gw = mag.shape
    usable = mag > params.gradient_threshold
    if not usable.any():
        return []
    angle = np.arctan2(gy, gx)  # gradient orientation; comparisons are mod pi
    tol = math.radians(params.angle_tolerance)

    ys, xs = np.nonzero(usable)
    order = np.lexsort((xs, ys, -mag[ys, xs]))
    seeds = list(zip(ys[order].tolist(), xs[order].tolist()))

    visited = ~usable  # unusable pixels are never visited
    segments: list[LineSegment] = []
    neigh = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))

    for sy, sx in seeds:
        if visited[sy, sx]:
            continue
        # region grows while orientations agree with the running mean,
        # tracked through doubled angles so opposite gradients align
        region = [(sy, sx)]
        visited[sy, sx] = True
        sum_cos = math.cos(2.0 * angle[sy, sx])
        sum_sin = math.sin(2.0 * angle[sy, sx])
        queue = deque(region)
        while queue:
            cy, cx = queue.popleft()
            mean_angle = 0.5 * math.atan2(sum_sin, sum_cos)
            for dy, dx in neigh:
                ny, nx = cy + dy, cx + dx
                if ny < 0 or ny >= gh or nx < 0 or nx >= gw or visited[ny, nx]:
                    continue
                if _angle_diff_mod_pi(angle[ny, nx], mean_angle) > tol:
                    continue
                visited[ny, nx] = True
                region.append((ny, nx))
                queue.append((ny, nx))
                sum_cos += math.cos(2.0 * angle[ny, nx])
                sum_sin += math.sin(2.0 * angle[ny, nx])

        if len(region) < params.min_region_pixels:
            continue
        seg = _fit_segment(region, mag, params.min_length)
        if seg is not None:
            segments.append(seg)

    return _suppress_duplicates(segments)


def _fit_segment(region, mag, min_length) -> LineSegment | None:
    """Principal axis of a pixel region, weighted by gradient magnitude."""
    pts = np.array(region, dtype=np.float64)
    w = mag[pts[:, 0].astype(int), pts[:, 1].astype(int)]
    xs = pts[:, 1] + 0.5
    ys = pts[:, 0] + 0.5
    wsum = w.sum()
    cx = float((w * xs).sum() / wsum)
    cy = float((w * ys).sum() / wsum)
    dxs = xs - cx
    dys = ys - cy
    mxx = float((w * dxs * dxs).sum())
    myy = float((w * dys * dys).sum())
    mxy = float((w * dxs * dys).sum())
    phi = 0.5 * math.atan2(2.0 * mxy, mxx - myy)
    ux, uy = math.cos(phi), math.sin(phi)
    t = dxs * ux + dys * uy
    tmin, tmax = float(t.min()), float(t.max())
    if tmax - tmin < min_length:
        return None
    e1 = (cx + tmin * ux, cy + tmin * uy)
    e2 = (cx + tmax * ux, cy + tmax * uy)
    if e2 < e1:
        e1, e2 = e2, e1
    return LineSegment(e1, e2)


def _point_segment_distance(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    t = 0.0 if den == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / den))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _suppress_duplicates(segments: list[LineSegment], radius: float = 2.0) -> list[LineSegment]:
    """Drop segments whose endpoints both lie within radius of a longer kept one."""
    by_length = sorted(range(len(segments)), key=lambda i: (-segments[i].length(), i))
    kept: list[int] = []
    for i in by_length:
        s = segments[i]
        dup = any(
            _point_segment_distance(s.p1, segments[k].p1, segments[k].p2) <= radius
            and _point_segment_distance(s.p2, segments[k].p1, segments[k].p2) <= radius
            for k in kept
        )
        if not dup:
            kept.append(i)
    kept_set = set(kept)
    return [s for i, s in enumerate(segments) if i in kept_set]


# ---------------------------------------------------------------------------
# Filtering against the DSM boundary buffer
# ---------------------------------------------------------------------------


def _buffer_fraction_hits(points: np.ndarray, buffer_bits: np.ndarray) -> tuple[int, int]:
    h, w = buffer_bits.shape
    xs, ys = points[:, 0], points[:, 1]
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    hits = int(buffer_bits[ys[inside], xs[inside]].sum())
    return hits, len(points)


def filter_segments(
    segments: list[LineSegment],
    boundary_mask: BinaryMask,
    buffer_radius: int = 5,
) -> list[LineSegment]:
    """Keep segments with strictly more than half their raster pixels on the
    dilated DSM boundary; order is preserved."""
    if buffer_radius < 0:
        raise ValueError("buffer_radius must be >= 0")
    buffer = dilate_mask(boundary_mask, buffer_radius).bits
    out = []
    for seg in segments:
        hits, total = _buffer_fraction_hits(seg.raster_points(), buffer)
        if 2 * hits > total:
            out.append(seg)
    return out


def rasterize_segments(segments: list[LineSegment], shape: tuple[int, int]) -> BinaryMask:
    """Burn Bresenham walks of all segments into a mask of (height, width)."""
    bits = np.zeros(shape, dtype=bool)
    h, w = shape
    for seg in segments:
        pts = seg.raster_points()
        xs, ys = pts[:, 0], pts[:, 1]
        inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        bits[ys[inside], xs[inside]] = True
    return BinaryMask(bits)


# ---------------------------------------------------------------------------
# Width estimation from the tophat contour stack
# ---------------------------------------------------------------------------


def estimate_width(segment: LineSegment, stack: TophatStack, overlap_radius: int = 2) -> int:
    """1-based index of the first contour image whose buffered pixels cover
    more than half the segment's raster walk."""
    if overlap_radius < 0:
        raise ValueError("overlap_radius must be >= 0")
    pts = segment.raster_points()
    for i, cimg in enumerate(stack.contour_images):
        buffered = dilate_mask(cimg, overlap_radius).bits
        hits, total = _buffer_fraction_hits(pts, buffered)
        if 2 * hits > total:
            return i + 1
    raise UnmatchedSegmentError("unmatched segment")


def assign_widths(
    segments: list[LineSegment],
    stack: TophatStack,
    overlap_radius: int = 2,
) -> list[LineSegment]:
    """Width-annotate all segments, dropping the unmatched ones with a warning.

    Dilates each contour image once, so prefer this over estimate_width in a
    loop when annotating many segments.
    """
    buffered = [dilate_mask(ci, overlap_radius).bits for ci in stack.contour_images]
    out = []
    for seg in segments:
        pts = seg.raster_points()
        width = None
        for i, buf in enumerate(buffered):
            hits, total = _buffer_fraction_hits(pts, buf)
            if 2 * hits > total:
                width = i + 1
                break
        if width is None:
            logger.warning("dropping unmatched segment %s -> %s", seg.p1, seg.p2)
            continue
        out.append(LineSegment(seg.p1, seg.p2, width))
    return out


# ---------------------------------------------------------------------------
# Segment CSV
# ---------------------------------------------------------------------------

_CSV_HEADER = ["x1", "y1", "x2", "y2", "width_index"]


def save_segments_csv(segments: list[LineSegment], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for s in segments:
            width = "" if s.width_index is None else str(s.width_index)
            writer.writerow([repr(s.p1[0]), repr(s.p1[1]), repr(s.p2[0]), repr(s.p2[1]), width])


def load_segments_csv(path: str | Path) -> list[LineSegment]:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(_CSV_HEADER)}")
        out = []
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"{path}: bad row {row!r}")
            x1, y1, x2, y2 = (float(v) for v in row[:4])
            width = int(row[4]) if row[4] != "" else None
            out.append(LineSegment((x1, y1), (x2, y2), width))
    return out
