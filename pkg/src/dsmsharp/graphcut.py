"""Offset-label optimisation that snaps DSM boundary contours onto image lines.

Every contour pixel picks one 2-d integer offset out of an 11x11 grid. A
pixel whose shifted position lands on the buffered line raster is free, a
miss costs 10; neighbouring contour pixels pay 2 when their offsets agree
within a 5-pixel radius and 100 otherwise. The multilabel energy is
minimised by expansion moves, each solved as a two-terminal minimum cut
with integer capacities; non-submodular pairwise entries are truncated
upward so every move graph stays representable, and a move is accepted only
if it strictly lowers the true energy. The winning offsets are densified by
inverse-distance interpolation and applied as a backward bilinear warp.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow
from scipy.spatial import cKDTree

from .raster import BinaryMask, Contour, Heightfield, dilate_mask, sample_bilinear
from .lines import LineSegment, rasterize_segments

LABEL_RADIUS = 5


class OffsetLabel(NamedTuple):
    dx: int
    dy: int


def offset_labels(radius: int = LABEL_RADIUS) -> list[OffsetLabel]:
    """The (2r+1)^2 offset grid in row-major order; 121 labels at the default."""
    return [
        OffsetLabel(dx, dy)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
    ]


def _label_array(labels) -> np.ndarray:
    return np.asarray([(l[0], l[1]) for l in labels], dtype=np.int64)


@dataclass(eq=False)
class ContourProblem:
    """Data points, neighbourhood structure and cost constants of one solve.

    ``contour_spans`` holds (start, stop, closed) index ranges partitioning
    ``points`` back into the source contours; closed spans wrap their
    neighbour reach.
    """

    points: np.ndarray  # (n, 2) int pixel coordinates
    contour_spans: list[tuple[int, int, bool]]
    line_buffer: np.ndarray  # (h, w) bool
    data_cost_hit: int = 0
    data_cost_miss: int = 10
    smooth_cost_near: int = 2
    smooth_cost_far: int = 100
    smooth_radius: float = 5.0
    neighbor_reach: int = 8
    pairs: np.ndarray = field(init=False)  # (m, 2) unique unordered neighbour pairs

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64)
        self.line_buffer = np.asarray(self.line_buffer, dtype=bool)
        h, w = self.line_buffer.shape
        xs, ys = self.points[:, 0], self.points[:, 1]
        if ((xs < 0) | (xs >= w) | (ys < 0) | (ys >= h)).any():
            raise ValueError("contour points must lie inside the raster")
        if not self.data_cost_hit < self.data_cost_miss:
            raise ValueError("require data_cost_hit < data_cost_miss")
        if not self.smooth_cost_near < self.smooth_cost_far:
            raise ValueError("require smooth_cost_near < smooth_cost_far")
        self.pairs = _neighbor_pairs(self.contour_spans, self.neighbor_reach)

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(eq=False)
class Labeling:
    """One offset per problem point; ``offsets`` is (n, 2) int (dx, dy)."""

    offsets: np.ndarray

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64)

    def __len__(self) -> int:
        return self.offsets.shape[0]


@dataclass(eq=False)
class OffsetField:
    """Dense per-pixel offsets, same shape as the DSM."""

    dx: np.ndarray
    dy: np.ndarray


def _neighbor_pairs(spans, reach: int) -> np.ndarray:
    """Each point pairs with the next `reach` points along its contour;
    closed contours wrap and every unordered pair is counted once."""
    chunks = []
    for start, stop, closed in spans:
        n = stop - start
        if n < 2:
            continue
        for k in range(1, min(reach, n - 1) + 1):
            if closed:
                a = np.arange(n, dtype=np.int64)
                b = (a + k) % n
            else:
                a = np.arange(n - k, dtype=np.int64)
                b = a + k
            chunks.append(np.column_stack([a, b]) + start)
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.vstack(chunks)
    pairs = np.sort(pairs, axis=1)
    return np.unique(pairs, axis=0)


def build_problem(
    contours: list[Contour],
    segments: list[LineSegment],
    dims: tuple[int, int],
    line_buffer_radius: int = 2,
    **constants,
) -> ContourProblem:
    """Assemble the optimisation problem from traced contours and filtered
    segments. ``dims`` is (height, width)."""
    contours = [c for c in contours if len(c) > 0]
    if not contours:
        raise ValueError("nothing to adjust")
    spans = []
    start = 0
    for c in contours:
        spans.append((start, start + len(c), c.closed))
        start += len(c)
    points = np.vstack([c.points for c in contours])
    line_mask = rasterize_segments(segments, dims)
    buffer = dilate_mask(line_mask, line_buffer_radius)
    return ContourProblem(points, spans, buffer.bits, **constants)


# ---------------------------------------------------------------------------
# Energy model
# ---------------------------------------------------------------------------


def data_cost(problem: ContourProblem, point_index: int, label) -> int:
    """0 when the shifted point lands on the line buffer, else 10.
    Shifts that leave the raster count as misses."""
    x = int(problem.points[point_index, 0]) + int(label[0])
    y = int(problem.points[point_index, 1]) + int(label[1])
    h, w = problem.line_buffer.shape
    if 0 <= x < w and 0 <= y < h and problem.line_buffer[y, x]:
        return problem.data_cost_hit
    return problem.data_cost_miss


def smooth_cost(l_p, l_q, near: int = 2, far: int = 100, radius: float = 5.0) -> int:
    """2 when the two offsets differ by strictly less than the radius, else 100.
    Note the near cost applies even to identical labels."""
    ddx = l_p[0] - l_q[0]
    ddy = l_p[1] - l_q[1]
    return near if ddx * ddx + ddy * ddy < radius * radius else far


def _data_cost_table(problem: ContourProblem, labels: np.ndarray) -> np.ndarray:
    """(n_labels, n_points) int data costs."""
    h, w = problem.line_buffer.shape
    xs = problem.points[:, 0][None, :] + labels[:, 0][:, None]
    ys = problem.points[:, 1][None, :] + labels[:, 1][:, None]
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    hit = np.zeros(xs.shape, dtype=bool)
    hit[inside] = problem.line_buffer[ys[inside], xs[inside]]
    return np.where(hit, problem.data_cost_hit, problem.data_cost_miss).astype(np.int64)


def _smooth_cost_table(problem: ContourProblem, labels: np.ndarray) -> np.ndarray:
    """(n_labels, n_labels) int smooth costs."""
    d = labels[:, None, :] - labels[None, :, :]
    d2 = (d[..., 0] ** 2 + d[..., 1] ** 2).astype(np.float64)
    near = d2 < problem.smooth_radius**2
    return np.where(near, problem.smooth_cost_near, problem.smooth_cost_far).astype(np.int64)


def energy(problem: ContourProblem, labeling: Labeling) -> int:
    """Total cost: data over all points plus smoothness over neighbour pairs."""
    if len(labeling) != problem.size:
        raise ValueError("labeling size does not match problem")
    offs = labeling.offsets
    h, w = problem.line_buffer.shape
    xs = problem.points[:, 0] + offs[:, 0]
    ys = problem.points[:, 1] + offs[:, 1]
    inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    hit = np.zeros(problem.size, dtype=bool)
    hit[inside] = problem.line_buffer[ys[inside], xs[inside]]
    total = int(np.where(hit, problem.data_cost_hit, problem.data_cost_miss).sum())
    if len(problem.pairs):
        d = offs[problem.pairs[:, 0]] - offs[problem.pairs[:, 1]]
        d2 = (d[:, 0] ** 2 + d[:, 1] ** 2).astype(np.float64)
        near = d2 < problem.smooth_radius**2
        total += int(
            np.where(near, problem.smooth_cost_near, problem.smooth_cost_far).sum()
        )
    return total


# ---------------------------------------------------------------------------
# Expansion-move minimisation
# ---------------------------------------------------------------------------


def _expansion_move(problem, assign, alpha_idx, dtable, vtable):
    """Best single-alpha move as a minimum cut; returns the proposed assignment.

    The move graph uses the standard source/sink construction with variables
    for every point not already at alpha. Pairwise terms that violate
    submodularity are truncated by raising the keep/switch entry, which can
    only overestimate the proposal's energy, never underestimate it.
    """
    var = assign != alpha_idx
    nv = int(var.sum())
    if nv == 0:
        return None
    var_ids = np.nonzero(var)[0]
    idx_of = np.full(assign.shape[0], -1, dtype=np.int64)
    idx_of[var_ids] = np.arange(nv)

    theta0 = dtable[assign[var_ids], var_ids].astype(np.int64)  # keep current
    theta1 = dtable[alpha_idx, var_ids].astype(np.int64)  # switch to alpha

    rows_list = []
    cols_list = []
    caps_list = []

    pairs = problem.pairs
    if len(pairs):
        pa, pb = pairs[:, 0], pairs[:, 1]
        va, vb = var[pa], var[pb]

        both = va & vb
        if both.any():
            ia, ib = pa[both], pb[both]
            a_cost = vtable[assign[ia], assign[ib]]
            b_cost = vtable[assign[ia], alpha_idx]
            c_cost = vtable[alpha_idx, assign[ib]]
            d_cost = vtable[alpha_idx, alpha_idx]
            b_cost = np.maximum(b_cost, a_cost + d_cost - c_cost)  # truncate
            np.add.at(theta1, idx_of[ia], c_cost - a_cost)
            np.add.at(theta1, idx_of[ib], d_cost - c_cost)
            cap = b_cost + c_cost - a_cost - d_cost
            keep = cap > 0
            rows_list.append(idx_of[ia[keep]])
            cols_list.append(idx_of[ib[keep]])
            caps_list.append(cap[keep])

        only_b = vb & ~va  # a already at alpha
        if only_b.any():
            ib = pb[only_b]
            np.add.at(theta0, idx_of[ib], vtable[alpha_idx, assign[ib]])
            np.add.at(theta1, idx_of[ib], vtable[alpha_idx, alpha_idx])

        only_a = va & ~vb
        if only_a.any():
            ia = pa[only_a]
            np.add.at(theta0, idx_of[ia], vtable[assign[ia], alpha_idx])
            np.add.at(theta1, idx_of[ia], vtable[alpha_idx, alpha_idx])

    # terminal links: cutting source->i pays the switch cost, i->sink the keep cost
    base = np.minimum(theta0, theta1)
    cap_src = theta1 - base
    cap_snk = theta0 - base
    source, sink = nv, nv + 1

    nz = cap_src > 0
    rows_list.append(np.full(int(nz.sum()), source, dtype=np.int64))
    cols_list.append(np.nonzero(nz)[0])
    caps_list.append(cap_src[nz])
    nz = cap_snk > 0
    rows_list.append(np.nonzero(nz)[0])
    cols_list.append(np.full(int(nz.sum()), sink, dtype=np.int64))
    caps_list.append(cap_snk[nz])

    rows = np.concatenate(rows_list) if rows_list else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols_list) if cols_list else np.empty(0, dtype=np.int64)
    caps = np.concatenate(caps_list) if caps_list else np.empty(0, dtype=np.int64)

    graph = csr_matrix((caps, (rows, cols)), shape=(nv + 2, nv + 2), dtype=np.int64)
    flow = maximum_flow(graph, source, sink).flow
    residual = graph - flow
    residual.data = np.maximum(residual.data, 0)
    residual.eliminate_zeros()
    reach = breadth_first_order(residual, source, directed=True, return_predecessors=False)
    keep_side = np.zeros(nv + 2, dtype=bool)
    keep_side[reach] = True

    proposal = assign.copy()
    switch = ~keep_side[:nv]
    proposal[var_ids[switch]] = alpha_idx
    return proposal


def minimize(problem: ContourProblem, labels=None, energy_trace: list | None = None) -> Labeling:
    """Expansion-move descent from the all-zero labeling.

    Sweeps the label grid in fixed row-major order and accepts a move only
    when it strictly lowers the energy, so ties keep the incumbent and the
    result never exceeds the all-zero initialisation. Terminates when a full
    sweep makes no progress. When given, ``energy_trace`` collects the
    initial energy followed by the energy after each accepted move.
    """
    labels = offset_labels() if labels is None else list(labels)
    larr = _label_array(labels)
    zero_candidates = np.nonzero((larr[:, 0] == 0) & (larr[:, 1] == 0))[0]
    if len(zero_candidates) == 0:
        raise ValueError("label set must contain the zero offset")
    zero_idx = int(zero_candidates[0])

    dtable = _data_cost_table(problem, larr)
    vtable = _smooth_cost_table(problem, larr)

    assign = np.full(problem.size, zero_idx, dtype=np.int64)
    best = _assign_energy(problem, assign, dtable, vtable)
    if energy_trace is not None:
        energy_trace.append(best)

    improved = True
    while improved:
        improved = False
        for alpha_idx in range(len(labels)):
            proposal = _expansion_move(problem, assign, alpha_idx, dtable, vtable)
            if proposal is None:
                continue
            cand = _assign_energy(problem, proposal, dtable, vtable)
            if cand < best:
                assign = proposal
                best = cand
                improved = True
                if energy_trace is not None:
                    energy_trace.append(best)
    return Labeling(larr[assign])


def _assign_energy(problem, assign, dtable, vtable) -> int:
    total = int(dtable[assign, np.arange(problem.size)].sum())
    if len(problem.pairs):
        total += int(vtable[assign[problem.pairs[:, 0]], assign[problem.pairs[:, 1]]].sum())
    return total


# ---------------------------------------------------------------------------
# Densification and warping
# ---------------------------------------------------------------------------


def interpolate_offsets(
    problem: ContourProblem,
    labeling: Labeling,
    boundary_mask: BinaryMask,
    dims: tuple[int, int],
    far_distance: int = 20,
    idw_neighbors: int = 8,
) -> OffsetField:
    """Densify sparse contour offsets to every pixel.

    Anchors are the contour pixels (with their solved offsets) plus every
    pixel at Chebyshev distance >= far_distance from the boundary (offset
    zero). Remaining pixels take an inverse-square-distance weighted mean of
    their idw_neighbors nearest anchors; anchors keep their exact values.
    """
    if len(labeling) != problem.size:
        raise ValueError("labeling size does not match problem")
    h, w = dims
    dx = np.zeros((h, w), dtype=np.float64)
    dy = np.zeros((h, w), dtype=np.float64)

    uniq, first = np.unique(problem.points, axis=0, return_index=True)
    axs, ays = uniq[:, 0], uniq[:, 1]
    offs = labeling.offsets[first]
    dx[ays, axs] = offs[:, 0]
    dy[ays, axs] = offs[:, 1]

    if boundary_mask.bits.any():
        dist = ndimage.distance_transform_cdt(~boundary_mask.bits, metric="chessboard")
    else:
        dist = np.full((h, w), np.iinfo(np.int32).max, dtype=np.int64)
    anchor_mask = dist >= far_distance
    anchor_mask[ays, axs] = True

    query_ys, query_xs = np.nonzero(~anchor_mask)
    if len(query_xs) == 0:
        return OffsetField(dx, dy)

    far_ys, far_xs = np.nonzero(dist >= far_distance)
    # contour anchors first so exact offsets win any coordinate duplication
    anchor_xy = np.concatenate(
        [
            np.column_stack([axs, ays]).astype(np.float64),
            np.column_stack([far_xs, far_ys]).astype(np.float64),
        ]
    )
    anchor_dx = np.concatenate([offs[:, 0].astype(np.float64), np.zeros(len(far_xs))])
    anchor_dy = np.concatenate([offs[:, 1].astype(np.float64), np.zeros(len(far_xs))])

    k = min(idw_neighbors, len(anchor_xy))
    tree = cKDTree(anchor_xy)
    dists, idx = tree.query(np.column_stack([query_xs, query_ys]).astype(np.float64), k=k)
    if k == 1:
        dists = dists[:, None]
        idx = idx[:, None]
    weights = 1.0 / np.maximum(dists, 1e-12) ** 2
    wsum = weights.sum(axis=1)
    dx[query_ys, query_xs] = (weights * anchor_dx[idx]).sum(axis=1) / wsum
    dy[query_ys, query_xs] = (weights * anchor_dy[idx]).sum(axis=1) / wsum
    return OffsetField(dx, dy)


def warp_dsm(dsm: Heightfield, field: OffsetField) -> Heightfield:
    """Backward-map the DSM through the offset field with bilinear sampling.

    Sample positions clamp to the border; a sample whose bilinear support
    touches nodata becomes nodata. The zero field reproduces the input
    exactly.
    """
    if field.dx.shape != dsm.values.shape or field.dy.shape != dsm.values.shape:
        raise ValueError("offset field dimensions do not match the DSM")
    h, w = dsm.values.shape
    yy, xx = np.mgrid[0:h, 0:w]
    sx = xx.astype(np.float64) - field.dx
    sy = yy.astype(np.float64) - field.dy
    vals, valid = sample_bilinear(dsm, sx.ravel(), sy.ravel(), skip_nodata=False)
    out = np.where(valid, vals, dsm.nodata).reshape(h, w)
    return dsm.like(out)


# ---------------------------------------------------------------------------
# Debug dumps
# ---------------------------------------------------------------------------


def save_labeling_csv(problem: ContourProblem, labeling: Labeling, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "dx", "dy"])
        for (x, y), (dx, dy) in zip(problem.points, labeling.offsets):
            writer.writerow([int(x), int(y), int(dx), int(dy)])
