"""Freeway corridor geometry: gantries, the geofence polygon and the mile-marker mapping.

Travel in the direction of control runs toward *decreasing* mile markers.
Latitude/longitude are treated as planar (x=lon, y=lat) for the polygon test,
which is adequate at corridor scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

METERS_PER_MILE = 1609.344
MPH_TO_MS = 0.44704
EARTH_RADIUS_M = 6371008.8


class ConfigurationError(ValueError):
    """Raised when corridor geometry is malformed."""


class OutsideCorridorError(ValueError):
    """Raised by queries that require a fix inside the corridor polygon."""


def mph_to_ms(mph: float) -> float:
    return mph * MPH_TO_MS


def ms_to_mph(ms: float) -> float:
    return ms / MPH_TO_MS


@dataclass(frozen=True)
class Gantry:
    id: str
    mile_marker: float
    default_limit: float = 70.0

    def __post_init__(self):
        if not 30.0 <= self.default_limit <= 70.0:
            raise ConfigurationError(
                f"gantry {self.id}: default_limit {self.default_limit} mph outside [30, 70]"
            )


@dataclass(frozen=True)
class GpsFix:
    lat: float
    lon: float
    heading: float
    speed: float
    timestamp: float

    def is_valid(self) -> bool:
        values = (self.lat, self.lon, self.heading, self.speed, self.timestamp)
        if not all(math.isfinite(v) for v in values):
            return False
        return 0.0 <= self.heading < 360.0 and -90.0 <= self.lat <= 90.0


@dataclass(frozen=True)
class GantryAhead:
    gantry: Gantry
    distance: float  # miles, along-road


# ---------------------------------------------------------------------------
# polygon primitives


def _cross(ax, ay, bx, by, px, py):
    """Twice the signed area of (a, b, p); positive when p is left of a->b."""
    return (bx - ax) * (py - ay) - (px - ax) * (by - ay)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    if _cross(ax, ay, bx, by, px, py) != 0:
        return False
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def point_in_polygon(x, y, vertices: Sequence[tuple]) -> bool:
    """Winding-number containment test; points on an edge count as inside.

    ``vertices`` is an open ring (first vertex not repeated). Works with any
    numeric type supporting exact comparison, e.g. ``fractions.Fraction``.
    """
    if len(vertices) < 3:
        raise ConfigurationError("polygon needs at least 3 vertices")
    winding = 0
    n = len(vertices)
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        if _on_segment(ax, ay, bx, by, x, y):
            return True
        if ay <= y:
            if by > y and _cross(ax, ay, bx, by, x, y) > 0:
                winding += 1
        elif by <= y and _cross(ax, ay, bx, by, x, y) < 0:
            winding -= 1
    return winding != 0


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross(*q1, *q2, *p1)
    d2 = _cross(*q1, *q2, *p2)
    d3 = _cross(*p1, *p2, *q1)
    d4 = _cross(*p1, *p2, *q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return (
        _on_segment(*q1, *q2, *p1)
        or _on_segment(*q1, *q2, *p2)
        or _on_segment(*p1, *p2, *q1)
        or _on_segment(*p1, *p2, *q2)
    )


def is_simple_polygon(vertices: Sequence[tuple]) -> bool:
    """Brute-force O(n^2) check that no two non-adjacent edges touch."""
    n = len(vertices)
    if n < 3:
        return False
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def heading_in_interval(heading: float, interval: tuple[float, float]) -> bool:
    """True if ``heading`` lies in the clockwise arc from interval[0] to interval[1]."""
    lo, hi = (a % 360.0 for a in interval)
    h = heading % 360.0
    if lo <= hi:
        return lo <= h <= hi
    return h >= lo or h <= hi


# ---------------------------------------------------------------------------
# centerline mapping


@dataclass(frozen=True)
class CenterlinePoint:
    mile_marker: float
    lat: float
    lon: float


class CenterlineMapping:
    """Piecewise-linear mapping between mile markers and lat/lon.

    Points must be ordered by strictly decreasing mile marker (direction of
    travel). Projection of arbitrary lat/lon uses a local equirectangular frame.
    """

    def __init__(self, points: Sequence[CenterlinePoint]):
        if len(points) < 2:
            raise ConfigurationError("centerline needs at least 2 points")
        for a, b in zip(points, points[1:]):
            if not b.mile_marker < a.mile_marker:
                raise ConfigurationError("centerline mile markers must strictly decrease")
        self.points = tuple(points)
        self._lat0 = math.radians(sum(p.lat for p in points) / len(points))
        self._xy = [self._to_xy(p.lat, p.lon) for p in points]

    @property
    def mm_start(self) -> float:
        return self.points[0].mile_marker

    @property
    def mm_end(self) -> float:
        return self.points[-1].mile_marker

    def _to_xy(self, lat: float, lon: float) -> tuple[float, float]:
        x = math.radians(lon) * math.cos(self._lat0) * EARTH_RADIUS_M
        y = math.radians(lat) * EARTH_RADIUS_M
        return x, y

    def _segment_index(self, mm: float) -> int:
        pts = self.points
        for i in range(len(pts) - 1):
            if mm >= pts[i + 1].mile_marker:
                return i
        return len(pts) - 2

    def latlon(self, mm: float) -> tuple[float, float]:
        """Position on the centerline at mile marker ``mm`` (extrapolates past the ends)."""
        i = self._segment_index(mm)
        a, b = self.points[i], self.points[i + 1]
        f = (a.mile_marker - mm) / (a.mile_marker - b.mile_marker)
        return a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon)

    def bearing(self, mm: float) -> float:
        """Heading (deg clockwise from north) of travel toward decreasing mile marker."""
        i = self._segment_index(mm)
        (ax, ay), (bx, by) = self._xy[i], self._xy[i + 1]
        return math.degrees(math.atan2(bx - ax, by - ay)) % 360.0

    def mile_marker(self, lat: float, lon: float) -> float:
        """Mile marker of the closest centerline point to (lat, lon)."""
        px, py = self._to_xy(lat, lon)
        best = None
        for i in range(len(self.points) - 1):
            (ax, ay), (bx, by) = self._xy[i], self._xy[i + 1]
            dx, dy = bx - ax, by - ay
            seg2 = dx * dx + dy * dy
            f = ((px - ax) * dx + (py - ay) * dy) / seg2
            if i > 0:
                f = max(f, 0.0)
            if i < len(self.points) - 2:
                f = min(f, 1.0)
            qx, qy = ax + f * dx, ay + f * dy
            d2 = (px - qx) ** 2 + (py - qy) ** 2
            if best is None or d2 < best[0]:
                a, b = self.points[i], self.points[i + 1]
                best = (d2, a.mile_marker + f * (b.mile_marker - a.mile_marker))
        return best[1]


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorridorGeometry:
    polygon: tuple[tuple[float, float], ...]  # (lat, lon) vertices, open ring
    gantries: tuple[Gantry, ...]
    direction_of_control: tuple[float, float]
    mapping: CenterlineMapping = field(compare=False)

    def __post_init__(self):
        if len(self.polygon) < 3:
            raise ConfigurationError("corridor polygon needs at least 3 vertices")
        if not self.gantries:
            raise ConfigurationError("corridor has no gantries")
        mms = [g.mile_marker for g in self.gantries]
        if any(not b < a for a, b in zip(mms, mms[1:])):
            raise ConfigurationError("gantry mile markers must strictly decrease in travel order")
        if len({g.id for g in self.gantries}) != len(self.gantries):
            raise ConfigurationError("duplicate gantry id")
        if not is_simple_polygon(self._xy_polygon):
            raise ConfigurationError("corridor polygon is not simple")
        for g in self.gantries:
            lat, lon = self.mapping.latlon(g.mile_marker)
            if not point_in_polygon(lon, lat, self._xy_polygon):
                raise ConfigurationError(f"gantry {g.id} lies outside the corridor polygon")

    @property
    def _xy_polygon(self):
        return [(lon, lat) for lat, lon in self.polygon]

    def gantry(self, gantry_id: str) -> Gantry:
        for g in self.gantries:
            if g.id == gantry_id:
                return g
        raise KeyError(gantry_id)

    def contains(self, lat: float, lon: float) -> bool:
        return point_in_polygon(lon, lat, self._xy_polygon)

    def fix_at(self, mm: float, speed: float, timestamp: float) -> GpsFix:
        """Noise-free fix on the centerline heading in the direction of control."""
        lat, lon = self.mapping.latlon(mm)
        return GpsFix(lat, lon, self.mapping.bearing(mm), speed, timestamp)


def point_in_corridor(fix: GpsFix, geom: CorridorGeometry) -> bool:
    return geom.contains(fix.lat, fix.lon)


def heading_matches(fix: GpsFix, geom: CorridorGeometry) -> bool:
    return heading_in_interval(fix.heading, geom.direction_of_control)


def gantry_ahead_of(mm: float, gantries: Sequence[Gantry]) -> Optional[GantryAhead]:
    """Nearest gantry strictly ahead (lower mile marker) of ``mm``."""
    ahead = [g for g in gantries if g.mile_marker < mm]
    if not ahead:
        return None
    g = max(ahead, key=lambda g: g.mile_marker)
    return GantryAhead(g, mm - g.mile_marker)


def next_gantry_ahead(fix: GpsFix, geom: CorridorGeometry) -> Optional[GantryAhead]:
    """Nearest gantry ahead of the fix and the along-road distance to it in miles.

    Raises:
        OutsideCorridorError: the fix is not inside the corridor polygon.
    """
    if not point_in_corridor(fix, geom):
        raise OutsideCorridorError(f"fix ({fix.lat:.6f}, {fix.lon:.6f}) is outside the corridor")
    return gantry_ahead_of(geom.mapping.mile_marker(fix.lat, fix.lon), geom.gantries)


# ---------------------------------------------------------------------------
# synthetic geometry


def _offset(lat: float, lon: float, bearing_deg: float, meters: float) -> tuple[float, float]:
    b = math.radians(bearing_deg)
    dlat = meters * math.cos(b) / EARTH_RADIUS_M
    dlon = meters * math.sin(b) / (EARTH_RADIUS_M * math.cos(math.radians(lat)))
    return lat + math.degrees(dlat), lon + math.degrees(dlon)


def synthetic_centerline(
    mm_start: float,
    mm_end: float,
    origin: tuple[float, float] = (36.05, -86.60),
    heading: float = 290.0,
    curvature: float = 4.0,
) -> CenterlineMapping:
    """A gently curving westbound centerline with one vertex per mile.

    Segment lengths match the mile-marker difference so along-road distance
    and mile-marker difference agree.
    """
    if not mm_end < mm_start:
        raise ConfigurationError("mm_end must be below mm_start")
    marks = [mm_start]
    m = math.floor(mm_start)
    if m == mm_start:
        m -= 1
    while m > mm_end:
        marks.append(float(m))
        m -= 1
    marks.append(mm_end)
    lat, lon = origin
    points = [CenterlinePoint(marks[0], lat, lon)]
    for k, (a, b) in enumerate(zip(marks, marks[1:])):
        bearing = heading + curvature * math.sin(k / 3.0)
        lat, lon = _offset(lat, lon, bearing, (a - b) * METERS_PER_MILE)
        points.append(CenterlinePoint(b, lat, lon))
    return CenterlineMapping(points)


def buffer_polygon(mapping: CenterlineMapping, half_width_m: float = 150.0) -> tuple:
    """Polygon enclosing the centerline by ``half_width_m`` on both sides."""
    pts = mapping.points
    left, right = [], []
    for i, p in enumerate(pts):
        if i == 0:
            b = mapping.bearing(p.mile_marker)
        elif i == len(pts) - 1:
            b = mapping.bearing(pts[i - 1].mile_marker - 1e-9)
        else:
            b0 = mapping.bearing(pts[i - 1].mile_marker - 1e-9)
            b1 = mapping.bearing(p.mile_marker - 1e-9)
            b = math.degrees(math.atan2(
                math.sin(math.radians(b0)) + math.sin(math.radians(b1)),
                math.cos(math.radians(b0)) + math.cos(math.radians(b1)),
            ))
        left.append(_offset(p.lat, p.lon, b - 90.0, half_width_m))
        right.append(_offset(p.lat, p.lon, b + 90.0, half_width_m))
    return tuple(left + right[::-1])


def build_corridor(
    gantries: Sequence[Gantry],
    mm_start: float,
    mm_end: float,
    heading_tolerance: float = 45.0,
    heading_center: float = 270.0,
    polygon: Optional[Sequence[tuple[float, float]]] = None,
    centerline: Optional[CenterlineMapping] = None,
    half_width_m: float = 150.0,
) -> CorridorGeometry:
    """Assemble a corridor, synthesizing centerline and polygon when not given."""
    mapping = centerline or synthetic_centerline(mm_start, mm_end)
    poly = tuple(tuple(v) for v in polygon) if polygon else buffer_polygon(mapping, half_width_m)
    interval = ((heading_center - heading_tolerance) % 360.0, (heading_center + heading_tolerance) % 360.0)
    return CorridorGeometry(poly, tuple(gantries), interval, mapping)


def gantry_chain(mm_first: float, count: int, spacing: float = 0.5, default_limit: float = 70.0) -> list[Gantry]:
    """``count`` gantries every ``spacing`` miles in the direction of travel."""
    return [
        Gantry(f"G{mm_first - i * spacing:.2f}", round(mm_first - i * spacing, 6), default_limit)
        for i in range(count)
    ]
