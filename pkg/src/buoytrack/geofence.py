"""Polygon fences: validation, containment, and edge-triggered exit alarms.

Geometry is planar on raw (lat, lon) degrees.  Buoy fences are far smaller
than a degree, so geodesic containment buys nothing at these scales; the
known limitation is that fences must not span the antimeridian.

Containment uses ray-casting parity with an epsilon band around the edges:
points within ``eps`` degrees of any edge classify as Boundary.  Alarms are
edge-triggered on the Inside-to-Outside transition and re-arm only after
the terminal is observed Inside again, so a buoy drifting along the fence
line cannot raise an alarm storm.
"""

from __future__ import annotations

import math
import uuid
from dataclasses import dataclass
from enum import Enum

LatLon = tuple[float, float]

BOUNDARY_EPS_DEG = 1e-9


class GeofenceError(ValueError):
    """Base class for polygon validation errors."""


class TooFewVertices(GeofenceError):
    pass


class DuplicateVertex(GeofenceError):
    pass


class SelfIntersecting(GeofenceError):
    pass


class SpansAntimeridian(GeofenceError):
    pass


class Containment(Enum):
    INSIDE = "Inside"
    OUTSIDE = "Outside"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class Geofence:
    """A named polygon; only armed fences are evaluated against reports."""

    id: str
    name: str
    vertices: tuple[LatLon, ...]
    armed: bool = True


@dataclass(frozen=True)
class AlarmEvent:
    id: str
    terminal: str
    fence_id: str
    position: LatLon
    timestamp: float
    kind: str = "Exit"


def _orient(a: LatLon, b: LatLon, c: LatLon) -> float:
    """Cross product sign: >0 left turn, <0 right turn, 0 collinear."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _in_box(a: LatLon, b: LatLon, p: LatLon) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def _segments_intersect(p1: LatLon, p2: LatLon, q1: LatLon, q2: LatLon) -> bool:
    """True if the closed segments share any point (proper or touching)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _in_box(q1, q2, p1):
        return True
    if d2 == 0 and _in_box(q1, q2, p2):
        return True
    if d3 == 0 and _in_box(p1, p2, q1):
        return True
    if d4 == 0 and _in_box(p1, p2, q2):
        return True
    return False


def validate_polygon(vertices: tuple[LatLon, ...] | list[LatLon]) -> None:
    """Raise the specific GeofenceError if the ring is unusable as a fence.

    The ring is open (no repeated closing vertex).  Self-intersection is
    checked pairwise over non-adjacent edges, including improper touches.
    """
    n = len(vertices)
    if n < 3:
        raise TooFewVertices(f"polygon needs at least 3 vertices, got {n}")
    for i in range(n):
        if vertices[i] == vertices[(i + 1) % n]:
            raise DuplicateVertex(f"vertices {i} and {(i + 1) % n} are equal")
    for lat, lon in vertices:
        if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
            raise GeofenceError(f"vertex ({lat}, {lon}) out of range")
    lons = [lon for _, lon in vertices]
    if max(lons) - min(lons) >= 180.0:
        raise SpansAntimeridian("longitude extent must stay under 180 degrees")
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                raise SelfIntersecting(f"edges {i} and {j} intersect")


def _point_segment_dist(p: LatLon, a: LatLon, b: LatLon) -> float:
    px, py = p[1], p[0]
    ax, ay = a[1], a[0]
    bx, by = b[1], b[0]
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = max(0.0, min(1.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def point_in_polygon(
    p: LatLon,
    vertices: tuple[LatLon, ...] | list[LatLon],
    *,
    eps: float = BOUNDARY_EPS_DEG,
) -> Containment:
    """Classify a point against a validated ring by ray-casting parity."""
    n = len(vertices)
    for i in range(n):
        if _point_segment_dist(p, vertices[i], vertices[(i + 1) % n]) <= eps:
            return Containment.BOUNDARY
    # Horizontal ray toward +lon; half-open vertical rule so a crossing at
    # a vertex counts exactly once.
    y, x = p
    inside = False
    for i in range(n):
        ay, ax = vertices[i]
        by, bx = vertices[(i + 1) % n]
        if (ay > y) != (by > y):
            x_int = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < x_int:
                inside = not inside
    return Containment.INSIDE if inside else Containment.OUTSIDE


def evaluate_transition(
    prev: Containment | None,
    p: LatLon,
    fence: Geofence,
    terminal: str,
    now: float,
    *,
    eps: float = BOUNDARY_EPS_DEG,
) -> tuple[Containment, AlarmEvent | None]:
    """Advance one (terminal, fence) containment state, maybe raising an alarm.

    ``prev`` of None means Unknown and initializes silently.  Boundary
    counts as Inside: sitting exactly on the fence line is not an exit.
    """
    if not fence.armed:
        raise ValueError(f"fence {fence.id} is not armed")
    c = point_in_polygon(p, fence.vertices, eps=eps)
    effective = Containment.INSIDE if c is Containment.BOUNDARY else c
    if prev is Containment.INSIDE and effective is Containment.OUTSIDE:
        alarm = AlarmEvent(uuid.uuid4().hex, terminal, fence.id, p, now)
        return effective, alarm
    return effective, None


class ContainmentTable:
    """Per-(terminal, fence) containment states, updated in report order."""

    def __init__(self, *, eps: float = BOUNDARY_EPS_DEG):
        self._eps = eps
        self._states: dict[tuple[str, str], Containment] = {}

    def observe(self, terminal: str, fence: Geofence, p: LatLon, now: float) -> AlarmEvent | None:
        key = (terminal, fence.id)
        new, alarm = evaluate_transition(
            self._states.get(key), p, fence, terminal, now, eps=self._eps)
        self._states[key] = new
        return alarm

    def state(self, terminal: str, fence_id: str) -> Containment | None:
        return self._states.get((terminal, fence_id))

    def forget_fence(self, fence_id: str) -> None:
        for key in [k for k in self._states if k[1] == fence_id]:
            del self._states[key]


def vertices_from_geojson(geometry: dict) -> tuple[LatLon, ...]:
    """Extract the exterior ring of a GeoJSON Polygon as (lat, lon) pairs.

    GeoJSON stores positions as [lon, lat]; a closing vertex equal to the
    first is accepted and dropped.  Interior rings are rejected.
    """
    if not isinstance(geometry, dict) or geometry.get("type") != "Polygon":
        raise GeofenceError("geometry must be a GeoJSON Polygon")
    rings = geometry.get("coordinates")
    if not isinstance(rings, list) or not rings:
        raise GeofenceError("Polygon needs a coordinates array")
    if len(rings) > 1:
        raise GeofenceError("interior rings are not supported")
    ring = rings[0]
    if not isinstance(ring, list):
        raise GeofenceError("exterior ring must be an array of positions")
    vertices: list[LatLon] = []
    for pos in ring:
        if (not isinstance(pos, (list, tuple)) or len(pos) < 2
                or not all(isinstance(c, (int, float)) for c in pos[:2])):
            raise GeofenceError(f"bad position {pos!r}")
        vertices.append((float(pos[1]), float(pos[0])))
    if len(vertices) >= 2 and vertices[0] == vertices[-1]:
        vertices.pop()
    return tuple(vertices)


def geojson_from_vertices(vertices: tuple[LatLon, ...]) -> dict:
    """Render an open ring as a closed GeoJSON Polygon geometry."""
    ring = [[lon, lat] for lat, lon in vertices]
    ring.append(ring[0])
    return {"type": "Polygon", "coordinates": [ring]}
