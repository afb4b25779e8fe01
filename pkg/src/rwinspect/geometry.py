"""Continuous 2D environment model.

A map is a bounded rectangle with axis-aligned rectangular and circular
obstacles.  The inspector is a disc of diameter ``r_I``; outer walls act as
obstacles for motion but never block line of sight (both endpoints of a
sight line are interior).  All queries are pure functions of immutable
inputs and are safe to share across trial workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Optional, Union

from .errors import MapError

TWO_PI = 2.0 * math.pi

# Margin left between the inspector disc and the surface it stopped at, so
# that an end pose is strictly collision free.
_HIT_BACKOFF = 1e-9


class Vec2(NamedTuple):
    x: float
    y: float


class Pose(NamedTuple):
    x: float
    y: float
    heading: float  # radians in [0, 2*pi)

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)


def normalize_heading(theta: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    theta = math.fmod(theta, TWO_PI)
    return theta + TWO_PI if theta < 0.0 else theta


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangular obstacle (closed region)."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise MapError("rect must have min < max componentwise")

    def distance(self, x: float, y: float) -> float:
        dx = max(self.xmin - x, 0.0, x - self.xmax)
        dy = max(self.ymin - y, 0.0, y - self.ymax)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Circle:
    """Circular obstacle (closed disc)."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise MapError("circle radius must be positive")

    def distance(self, x: float, y: float) -> float:
        return max(math.hypot(x - self.cx, y - self.cy) - self.radius, 0.0)


Obstacle = Union[Rect, Circle]


@dataclass(frozen=True)
class SourceSpec:
    """Point emitter; strength in expected counts * m^2 per measurement interval."""

    x: float
    y: float
    strength: float

    def __post_init__(self):
        if self.strength < 0.0:
            raise MapError("source strength must be >= 0")


@dataclass(frozen=True)
class InspectorSpec:
    """Physical inspector: disc diameter, detector range, travel speed."""

    r_I: float
    r_D: float
    speed: float = 0.1           # m/s
    measure_seconds: float = 3.0

    def __post_init__(self):
        if self.r_I <= 0.0:
            raise MapError("r_I must be positive")
        if self.r_D <= self.r_I:
            raise MapError("r_D must exceed r_I")
        if self.speed <= 0.0 or self.measure_seconds <= 0.0:
            raise MapError("speed and measure_seconds must be positive")


@dataclass(frozen=True)
class MapSpec:
    """Bounded 2D environment with obstacles and a Poisson background."""

    l_x: float
    l_y: float
    obstacles: tuple[Obstacle, ...] = ()
    background: float = 0.0
    source: Optional[SourceSpec] = None
    # Optional extra clearance kept around every obstacle and wall,
    # mimicking a hardware avoidance buffer.  Zero disables it.
    inflation: float = 0.0

    def __post_init__(self):
        if self.l_x <= 0.0 or self.l_y <= 0.0:
            raise MapError("map dimensions must be positive")
        if self.background < 0.0:
            raise MapError("background must be >= 0")
        if self.inflation < 0.0:
            raise MapError("inflation must be >= 0")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for ob in self.obstacles:
            if isinstance(ob, Rect):
                inside = 0.0 <= ob.xmin and ob.xmax <= self.l_x and 0.0 <= ob.ymin and ob.ymax <= self.l_y
            else:
                inside = (
                    ob.cx - ob.radius >= 0.0
                    and ob.cx + ob.radius <= self.l_x
                    and ob.cy - ob.radius >= 0.0
                    and ob.cy + ob.radius <= self.l_y
                )
            if not inside:
                raise MapError(f"obstacle {ob} extends outside map bounds")

    @property
    def effective_source(self) -> Optional[SourceSpec]:
        """Source, treating zero strength the same as no source."""
        if self.source is None or self.source.strength == 0.0:
            return None
        return self.source

    def without_source(self) -> "MapSpec":
        return replace(self, source=None)

    def with_source(self, source: Optional[SourceSpec]) -> "MapSpec":
        return replace(self, source=source)

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.l_x and 0.0 <= y <= self.l_y

    def point_in_obstacle(self, x: float, y: float) -> bool:
        return any(ob.distance(x, y) == 0.0 for ob in self.obstacles)


# ---------------------------------------------------------------------------
# Collision queries
# ---------------------------------------------------------------------------


class _CollisionContext:
    """Precomputed geometry for disc-vs-map queries at a fixed disc radius.

    Collision is penetration, not tangency: a disc touching a wall or an
    obstacle boundary exactly is still free.
    """

    __slots__ = ("xlo", "xhi", "ylo", "yhi", "circles", "rects", "radius")

    def __init__(self, map_spec: MapSpec, r_disc: float):
        r = r_disc + map_spec.inflation
        self.radius = r
        self.xlo, self.xhi = r, map_spec.l_x - r
        self.ylo, self.yhi = r, map_spec.l_y - r
        self.circles = [
            (ob.cx, ob.cy, ob.radius + r, (ob.radius + r) ** 2)
            for ob in map_spec.obstacles
            if isinstance(ob, Circle)
        ]
        self.rects = [
            (ob.xmin, ob.ymin, ob.xmax, ob.ymax, ob.xmin - r, ob.ymin - r, ob.xmax + r, ob.ymax + r)
            for ob in map_spec.obstacles
            if isinstance(ob, Rect)
        ]

    def is_free(self, x: float, y: float) -> bool:
        if not (self.xlo <= x <= self.xhi and self.ylo <= y <= self.yhi):
            return False
        r = self.radius
        for xmin, ymin, xmax, ymax, _, _, _, _ in self.rects:
            dx = max(xmin - x, 0.0, x - xmax)
            dy = max(ymin - y, 0.0, y - ymax)
            if dx * dx + dy * dy < r * r:
                return False
        for cx, cy, reff, reff2 in self.circles:
            dx = x - cx
            dy = y - cy
            if dx * dx + dy * dy < reff2:
                return False
        return True

    def first_hit(self, x: float, y: float, ux: float, uy: float, dist: float) -> float:
        """Distance along unit direction (ux, uy) to the first collision.

        Returns ``inf`` when the whole segment of length ``dist`` is clear.
        Exact for rectangles (slab + corner arcs of the Minkowski sum) and
        circles (quadratic); grazing tangency does not count as a hit.
        """
        best = dist
        hit = math.inf
        # Outer walls: exit times of the allowed center box.
        if ux > 0.0:
            t = (self.xhi - x) / ux
            if t < best:
                best, hit = t, t
        elif ux < 0.0:
            t = (self.xlo - x) / ux
            if t < best:
                best, hit = t, t
        if uy > 0.0:
            t = (self.yhi - y) / uy
            if t < best:
                best, hit = t, t
        elif uy < 0.0:
            t = (self.ylo - y) / uy
            if t < best:
                best, hit = t, t
        for cx, cy, reff, reff2 in self.circles:
            t = _ray_circle_enter(x, y, ux, uy, cx, cy, reff2, best)
            if t < best:
                best, hit = t, t
        r = self.radius
        for xmin, ymin, xmax, ymax, oxmin, oymin, oxmax, oymax in self.rects:
            # Cheap reject against the outer bounding box of the inflated rect.
            t0 = _ray_aabb_enter(x, y, ux, uy, oxmin, oymin, oxmax, oymax, best)
            if t0 >= best:
                continue
            t = _ray_aabb_enter(x, y, ux, uy, oxmin, ymin, oxmax, ymax, best)
            if t < best:
                best, hit = t, t
            t = _ray_aabb_enter(x, y, ux, uy, xmin, oymin, xmax, oymax, best)
            if t < best:
                best, hit = t, t
            r2 = r * r
            for ccx, ccy in ((xmin, ymin), (xmin, ymax), (xmax, ymin), (xmax, ymax)):
                t = _ray_circle_enter(x, y, ux, uy, ccx, ccy, r2, best)
                if t < best:
                    best, hit = t, t
        return hit


def _ray_aabb_enter(
    x: float, y: float, ux: float, uy: float,
    xmin: float, ymin: float, xmax: float, ymax: float, tmax: float,
) -> float:
    """Entering parameter of an open axis-aligned box, or inf."""
    if ux != 0.0:
        inv = 1.0 / ux
        t1 = (xmin - x) * inv
        t2 = (xmax - x) * inv
        tx_lo, tx_hi = (t1, t2) if t1 < t2 else (t2, t1)
    else:
        if not (xmin < x < xmax):
            return math.inf
        tx_lo, tx_hi = -math.inf, math.inf
    if uy != 0.0:
        inv = 1.0 / uy
        t1 = (ymin - y) * inv
        t2 = (ymax - y) * inv
        ty_lo, ty_hi = (t1, t2) if t1 < t2 else (t2, t1)
    else:
        if not (ymin < y < ymax):
            return math.inf
        ty_lo, ty_hi = -math.inf, math.inf
    enter = max(tx_lo, ty_lo)
    exit_ = min(tx_hi, ty_hi)
    if enter >= exit_ or exit_ <= 0.0 or enter > tmax:
        return math.inf
    return max(enter, 0.0)


def _ray_circle_enter(
    x: float, y: float, ux: float, uy: float,
    cx: float, cy: float, r2: float, tmax: float,
) -> float:
    """Entering parameter of an open disc along a unit ray, or inf."""
    fx = x - cx
    fy = y - cy
    c = fx * fx + fy * fy - r2
    b = 2.0 * (fx * ux + fy * uy)
    if c <= 0.0:
        # On the boundary (or inside, which free starts rule out): blocked
        # immediately only when moving inward.
        return 0.0 if b < 0.0 else math.inf
    disc = b * b - 4.0 * c
    if disc <= 0.0:
        return math.inf
    t = (-b - math.sqrt(disc)) / 2.0
    if 0.0 <= t <= tmax:
        return t
    return math.inf


@lru_cache(maxsize=256)
def _context_cache(map_spec: MapSpec, r_disc: float) -> _CollisionContext:
    return _CollisionContext(map_spec, r_disc)


def collision_context(map_spec: MapSpec, r_I: float) -> _CollisionContext:
    """Context for an inspector of diameter ``r_I`` (disc radius r_I/2)."""
    return _context_cache(map_spec, r_I / 2.0)


# ---------------------------------------------------------------------------
# Public queries
# ---------------------------------------------------------------------------


def is_free(map_spec: MapSpec, center: Vec2 | tuple[float, float], r_I: float) -> bool:
    """True iff a disc of diameter ``r_I`` at ``center`` overlaps nothing.

    Overlap means positive penetration; touching a wall or an obstacle
    boundary exactly still counts as free.
    """
    x, y = center
    return collision_context(map_spec, r_I).is_free(x, y)


def line_of_sight(map_spec: MapSpec, a: Vec2 | tuple[float, float], b: Vec2 | tuple[float, float]) -> bool:
    """True iff the open segment (a, b) misses every obstacle interior.

    Outer walls never block sight; obstacle boundaries (tangency) do not
    block either.
    """
    ax, ay = a
    bx, by = b
    dx = bx - ax
    dy = by - ay
    for ob in map_spec.obstacles:
        if isinstance(ob, Circle):
            if _segment_point_dist2(ax, ay, dx, dy, ob.cx, ob.cy) < ob.radius * ob.radius:
                return False
        else:
            if _segment_crosses_rect(ax, ay, dx, dy, ob):
                return False
    return True


def _segment_point_dist2(ax: float, ay: float, dx: float, dy: float, px: float, py: float) -> float:
    d2 = dx * dx + dy * dy
    if d2 == 0.0:
        fx, fy = px - ax, py - ay
        return fx * fx + fy * fy
    t = ((px - ax) * dx + (py - ay) * dy) / d2
    t = min(max(t, 0.0), 1.0)
    fx = ax + t * dx - px
    fy = ay + t * dy - py
    return fx * fx + fy * fy


def _segment_crosses_rect(ax: float, ay: float, dx: float, dy: float, rect: Rect) -> bool:
    # Clip the segment parameter range to the closed rect, then check that
    # the clipped midpoint lies strictly inside (so edge-collinear segments
    # do not count as crossing the interior).
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, ax - rect.xmin), (dx, rect.xmax - ax), (-dy, ay - rect.ymin), (dy, rect.ymax - ay)):
        if p == 0.0:
            if q < 0.0:
                return False
        else:
            t = q / p
            if p < 0.0:
                if t > t0:
                    t0 = t
            else:
                if t < t1:
                    t1 = t
            if t0 > t1:
                return False
    if t0 >= t1:
        return False
    tm = 0.5 * (t0 + t1)
    mx = ax + tm * dx
    my = ay + tm * dy
    return rect.xmin < mx < rect.xmax and rect.ymin < my < rect.ymax


class TravelResult(NamedTuple):
    end: Pose
    traveled: float
    blocked: bool


def travel(map_spec: MapSpec, start: Pose, distance: float, r_I: float) -> TravelResult:
    """Advance along the start heading until ``distance`` is consumed or the
    inspector disc would penetrate an obstacle or wall.

    The stopping point is exact (continuous swept-disc intersection) up to a
    tiny backoff that keeps the end pose strictly free.
    """
    if distance < 0.0:
        raise ValueError("distance must be >= 0")
    ctx = collision_context(map_spec, r_I)
    if not ctx.is_free(start.x, start.y):
        raise ValueError("start pose in collision")
    if distance == 0.0:
        return TravelResult(start, 0.0, False)
    ux = math.cos(start.heading)
    uy = math.sin(start.heading)
    hit = ctx.first_hit(start.x, start.y, ux, uy, distance)
    if hit is math.inf or hit >= distance:
        end = Pose(start.x + distance * ux, start.y + distance * uy, start.heading)
        return TravelResult(end, distance, False)
    moved = max(hit - _HIT_BACKOFF, 0.0)
    end = Pose(start.x + moved * ux, start.y + moved * uy, start.heading)
    return TravelResult(end, moved, True)


def sample_free_pose(map_spec: MapSpec, r_I: float, rng, max_attempts: int = 100_000) -> Pose:
    """Uniform collision-free pose via rejection sampling."""
    ctx = collision_context(map_spec, r_I)
    for _ in range(max_attempts):
        x = rng.uniform(0.0, map_spec.l_x)
        y = rng.uniform(0.0, map_spec.l_y)
        if ctx.is_free(x, y):
            return Pose(x, y, rng.uniform(0.0, TWO_PI))
    raise MapError("map has no free space")


def sample_free_point(map_spec: MapSpec, rng, max_attempts: int = 100_000) -> Vec2:
    """Uniform point inside the bounds and outside every obstacle."""
    for _ in range(max_attempts):
        x = rng.uniform(0.0, map_spec.l_x)
        y = rng.uniform(0.0, map_spec.l_y)
        if not map_spec.point_in_obstacle(x, y):
            return Vec2(x, y)
    raise MapError("map has no free space")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def map_to_dict(map_spec: MapSpec) -> dict:
    obstacles = []
    for ob in map_spec.obstacles:
        if isinstance(ob, Rect):
            obstacles.append({"kind": "rect", "min": [ob.xmin, ob.ymin], "max": [ob.xmax, ob.ymax]})
        else:
            obstacles.append({"kind": "circle", "center": [ob.cx, ob.cy], "radius": ob.radius})
    doc = {
        "l_x": map_spec.l_x,
        "l_y": map_spec.l_y,
        "background": map_spec.background,
        "obstacles": obstacles,
    }
    if map_spec.source is not None:
        doc["source"] = {"x": map_spec.source.x, "y": map_spec.source.y, "strength": map_spec.source.strength}
    if map_spec.inflation:
        doc["inflation"] = map_spec.inflation
    return doc


def map_from_dict(doc: dict) -> MapSpec:
    try:
        obstacles: list[Obstacle] = []
        for entry in doc.get("obstacles", []):
            kind = entry["kind"]
            if kind == "rect":
                (xmin, ymin), (xmax, ymax) = entry["min"], entry["max"]
                obstacles.append(Rect(float(xmin), float(ymin), float(xmax), float(ymax)))
            elif kind == "circle":
                (cx, cy) = entry["center"]
                obstacles.append(Circle(float(cx), float(cy), float(entry["radius"])))
            else:
                raise MapError(f"unknown obstacle kind {kind!r}")
        source = None
        if "source" in doc and doc["source"] is not None:
            s = doc["source"]
            source = SourceSpec(float(s["x"]), float(s["y"]), float(s["strength"]))
        return MapSpec(
            l_x=float(doc["l_x"]),
            l_y=float(doc["l_y"]),
            obstacles=tuple(obstacles),
            background=float(doc.get("background", 0.0)),
            source=source,
            inflation=float(doc.get("inflation", 0.0)),
        )
    except (KeyError, TypeError) as exc:
        raise MapError(f"malformed map document: {exc}") from exc


def load_map(path) -> MapSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MapError(f"cannot read map {path}: {exc}") from exc
    return map_from_dict(doc)


def save_map(map_spec: MapSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(map_to_dict(map_spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
