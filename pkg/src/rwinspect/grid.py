"""Conservative occupancy-grid compression of a continuous map.

A bin is occupied when it overlaps any obstacle with positive area, or when
no inspector disc placement exists anywhere inside it (which only happens
for degenerate clipped bins or bins finer than the inspector).  Free bins
are 4-connected; a compressed map is traversable when they form a single
component.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import MapError
from .geometry import Circle, InspectorSpec, MapSpec, Rect, collision_context

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ValidityReport:
    """Discretization-length checks for one inspector/map pairing."""

    epsilon: float
    satisfies_lower: bool   # epsilon >= r_I
    satisfies_upper: bool   # epsilon <= r_D / sqrt(2)
    traversable: bool
    bin_count: int          # number of free bins

    @property
    def valid(self) -> bool:
        return self.satisfies_lower and self.satisfies_upper and self.traversable


class CompressedMap:
    """Uniform square grid over [0, l_x] x [0, l_y] at side length epsilon."""

    def __init__(self, map_spec: MapSpec, epsilon: float, free: np.ndarray):
        self.map_spec = map_spec
        self.epsilon = epsilon
        self.free = free  # bool array, shape (nx, ny), True = free
        self.nx, self.ny = free.shape
        idx = np.argwhere(free)
        self.free_bins: list[tuple[int, int]] = [tuple(p) for p in idx]
        self._bin_index = {b: k for k, b in enumerate(self.free_bins)}

    @property
    def n_free(self) -> int:
        return len(self.free_bins)

    @property
    def adjacency(self) -> list[tuple[int, int]]:
        """4-connected edges among free bins, as pairs of free-bin indices."""
        edges = []
        for k, (i, j) in enumerate(self.free_bins):
            for di, dj in ((1, 0), (0, 1)):
                other = self._bin_index.get((i + di, j + dj))
                if other is not None:
                    edges.append((k, other))
        return edges

    def bin_of(self, x: float, y: float) -> tuple[int, int]:
        """Grid bin containing a point (points on l_x/l_y map to the last bin)."""
        i = min(int(x / self.epsilon), self.nx - 1)
        j = min(int(y / self.epsilon), self.ny - 1)
        return max(i, 0), max(j, 0)

    def bin_rect(self, i: int, j: int) -> tuple[float, float, float, float]:
        e = self.epsilon
        return (i * e, j * e, min((i + 1) * e, self.map_spec.l_x), min((j + 1) * e, self.map_spec.l_y))

    def free_index(self, bin_ij: tuple[int, int]) -> int:
        try:
            return self._bin_index[bin_ij]
        except KeyError:
            raise MapError(f"bin {bin_ij} is not free") from None

    def bfs_distances(self, start: int) -> np.ndarray:
        """Hop distances from one free bin to all free bins (-1 unreachable)."""
        dist = np.full(self.n_free, -1, dtype=int)
        dist[start] = 0
        queue = deque([start])
        neigh = self._neighbor_lists()
        while queue:
            k = queue.popleft()
            for m in neigh[k]:
                if dist[m] < 0:
                    dist[m] = dist[k] + 1
                    queue.append(m)
        return dist

    def _neighbor_lists(self) -> list[list[int]]:
        neigh: list[list[int]] = [[] for _ in range(self.n_free)]
        for a, b in self.adjacency:
            neigh[a].append(b)
            neigh[b].append(a)
        return neigh

    def graph_radius_to(self, k: int) -> int:
        """Eccentricity of free bin k: the farthest hop distance to it."""
        dist = self.bfs_distances(k)
        reachable = dist[dist >= 0]
        return int(reachable.max()) if reachable.size else 0

    def to_dict(self) -> dict:
        rows = ["".join("1" if self.free[i, j] else "0" for i in range(self.nx)) for j in range(self.ny)]
        return {"epsilon": self.epsilon, "nx": self.nx, "ny": self.ny, "free_rows": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _rect_overlaps(ob: Rect, x0: float, y0: float, x1: float, y1: float, pad: float) -> bool:
    # Positive-area overlap: obstacles flush with a bin edge do not occupy
    # the neighboring bin.
    return ob.xmin - pad < x1 and ob.xmax + pad > x0 and ob.ymin - pad < y1 and ob.ymax + pad > y0


def _circle_overlaps(ob: Circle, x0: float, y0: float, x1: float, y1: float, pad: float) -> bool:
    cx = min(max(ob.cx, x0), x1)
    cy = min(max(ob.cy, y0), y1)
    dx = ob.cx - cx
    dy = ob.cy - cy
    r = ob.radius + pad
    return dx * dx + dy * dy < r * r


def discretize(map_spec: MapSpec, epsilon: float, r_i: float = 0.0) -> CompressedMap:
    """Compress a map into a conservative occupancy grid.

    ``r_i`` is the inspector diameter; when positive, a bin additionally
    requires at least one collision-free inspector placement inside it to be
    free (relevant only for clipped edge bins or epsilon < r_i).  Zero keeps
    pure obstacle-overlap occupancy.
    """
    if not (0.0 < epsilon <= min(map_spec.l_x, map_spec.l_y)):
        raise MapError("invalid discretization length")
    nx = math.ceil(map_spec.l_x / epsilon - 1e-12)
    ny = math.ceil(map_spec.l_y / epsilon - 1e-12)
    free = np.ones((nx, ny), dtype=bool)
    pad = map_spec.inflation
    rects = [ob for ob in map_spec.obstacles if isinstance(ob, Rect)]
    circles = [ob for ob in map_spec.obstacles if isinstance(ob, Circle)]
    ctx = collision_context(map_spec, r_i) if r_i > 0.0 else None
    for i in range(nx):
        x0 = i * epsilon
        x1 = min(x0 + epsilon, map_spec.l_x)
        for j in range(ny):
            y0 = j * epsilon
            y1 = min(y0 + epsilon, map_spec.l_y)
            occupied = any(_rect_overlaps(ob, x0, y0, x1, y1, pad) for ob in rects) or any(
                _circle_overlaps(ob, x0, y0, x1, y1, pad) for ob in circles
            )
            if not occupied and ctx is not None and not _placement_exists(ctx, x0, y0, x1, y1, r_i):
                occupied = True
            free[i, j] = not occupied
    return CompressedMap(map_spec, epsilon, free)


def _placement_exists(ctx, x0: float, y0: float, x1: float, y1: float, r_i: float) -> bool:
    # Deterministic lattice of candidate centers, clamped to the wall-eroded
    # box.  For regular bins with side >= r_i the center always qualifies.
    cx0 = max(x0, ctx.xlo)
    cx1 = min(x1, ctx.xhi)
    cy0 = max(y0, ctx.ylo)
    cy1 = min(y1, ctx.yhi)
    if cx0 > cx1 or cy0 > cy1:
        return False
    step = max(r_i / 4.0, 1e-6)
    xs = np.arange(cx0, cx1 + step / 2, step) if cx1 > cx0 else np.array([cx0])
    ys = np.arange(cy0, cy1 + step / 2, step) if cy1 > cy0 else np.array([cy0])
    mid = ((cx0 + cx1) / 2.0, (cy0 + cy1) / 2.0)
    if ctx.is_free(*mid):
        return True
    return any(ctx.is_free(float(x), float(y)) for x in xs for y in ys)


def is_traversable(cm: CompressedMap) -> bool:
    """True iff the free bins form exactly one non-empty 4-connected component."""
    n = cm.n_free
    if n == 0:
        return False
    return int((cm.bfs_distances(0) >= 0).sum()) == n


def fundamental_length(
    map_spec: MapSpec, inspector: InspectorSpec, candidates: Sequence[float]
) -> Optional[float]:
    """Largest candidate epsilon >= r_I whose compression stays traversable."""
    if not candidates:
        raise MapError("no candidates")
    limit = min(map_spec.l_x, map_spec.l_y)
    for eps in candidates:
        if not (0.0 < eps <= limit):
            raise MapError(f"candidate {eps} outside (0, {limit}]")
    for eps in sorted(candidates, reverse=True):
        if eps < inspector.r_I:
            continue
        if is_traversable(discretize(map_spec, eps, inspector.r_I)):
            return eps
    return None


def validate(epsilon: float, inspector: InspectorSpec, cm: CompressedMap) -> ValidityReport:
    """Check both discretization inequalities and traversability."""
    return ValidityReport(
        epsilon=epsilon,
        satisfies_lower=epsilon >= inspector.r_I,
        satisfies_upper=epsilon <= inspector.r_D / SQRT2,
        traversable=is_traversable(cm),
        bin_count=cm.n_free,
    )
