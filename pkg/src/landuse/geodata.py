"""Parcel polygons, point-in-polygon tests and geo-filtering.

Parcels come in as GeoJSON (RFC 7946 Polygon/MultiPolygon subset) with an
optional ``landuse`` property listing ground-truth class names. Geotagged
records are assigned to parcels by even-odd containment, falling back to a
metric boundary buffer (default 5 m) to tolerate geotag error. Metric
distances use a local equirectangular frame, which is accurate to well
under the buffer size at city-block scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .taxonomy import Taxonomy

#: meters per degree of latitude in the local planar frame
METERS_PER_DEGREE = 111320.0

DEFAULT_DILATION_M = 5.0


class GeoJSONParseError(ValueError):
    pass


class ParcelValidationError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range [-90, 90]")


@dataclass(frozen=True)
class Parcel:
    """A ground polygon: one exterior ring plus optional hole rings, each a
    closed (lon, lat) vertex sequence, with a (possibly empty) set of
    ground-truth fine class indices."""

    id: str
    rings: tuple[tuple[tuple[float, float], ...], ...]
    truth: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.rings:
            raise ParcelValidationError(f"parcel {self.id}: no rings")
        for ring in self.rings:
            _validate_ring(self.id, ring)

    @property
    def exterior(self):
        return self.rings[0]

    @property
    def holes(self):
        return self.rings[1:]


@dataclass(frozen=True)
class Assignment:
    """One geotagged image matched to one or more parcels.

    ``modes`` maps parcel id to ``"inside"`` (containment hit) or
    ``"dilated"`` (within the boundary buffer)."""

    image_id: str
    modes: dict[str, str] = field(compare=False)

    @property
    def parcel_ids(self):
        return frozenset(self.modes)

    def pairs(self):
        for parcel_id in sorted(self.modes):
            yield parcel_id, self.modes[parcel_id]


# ---------------------------------------------------------------------------
# ring validation


def _validate_ring(parcel_id: str, ring) -> None:
    if len(ring) < 4 or ring[0] != ring[-1]:
        raise ParcelValidationError(
            f"parcel {parcel_id}: ring must be closed (first vertex == last)"
            f" with >= 3 distinct vertices")
    if len(set(ring[:-1])) < 3:
        raise ParcelValidationError(
            f"parcel {parcel_id}: ring has fewer than 3 distinct vertices")
    segs = [(ring[i], ring[i + 1]) for i in range(len(ring) - 1)]
    n = len(segs)
    for i in range(n):
        for j in range(i + 1, n):
            # consecutive segments share a vertex by construction
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_cross(segs[i], segs[j]):
                raise ParcelValidationError(
                    f"parcel {parcel_id}: self-intersecting ring"
                    f" (segments {i} and {j})")


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(s1, s2) -> bool:
    (a, b), (c, d) = s1, s2
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    # collinear overlap counts as self-intersection too
    if d1 == d2 == d3 == d4 == 0:
        for p, q, r in ((a, b, c), (a, b, d), (c, d, a), (c, d, b)):
            if _on_segment_collinear(p, q, r):
                return True
    return False


def _on_segment_collinear(a, b, p) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
            and p != a and p != b)


# ---------------------------------------------------------------------------
# GeoJSON parsing


def parse_parcels(document: str, taxonomy: Taxonomy) -> list[Parcel]:
    """Parse a GeoJSON FeatureCollection into parcels.

    MultiPolygon features are split into one parcel per member polygon,
    named ``<id>#<k>``. Unknown ``landuse`` class names raise instead of
    being silently dropped.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise GeoJSONParseError(
            f"malformed GeoJSON at byte offset {e.pos}: {e.msg}") from None
    if doc.get("type") != "FeatureCollection":
        raise GeoJSONParseError("expected a FeatureCollection")

    parcels = []
    for i, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        fid = str(feature.get("id", props.get("id", f"feature{i}")))
        truth = frozenset(
            taxonomy.index(name) for name in props.get("landuse", []))
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            polys = [geom["coordinates"]]
            ids = [fid]
        elif gtype == "MultiPolygon":
            polys = geom["coordinates"]
            ids = [f"{fid}#{k}" for k in range(len(polys))]
        else:
            raise GeoJSONParseError(
                f"feature {fid}: unsupported geometry type {gtype!r}")
        for pid, rings in zip(ids, polys):
            rings = tuple(tuple(tuple(v) for v in ring) for ring in rings)
            parcels.append(Parcel(id=pid, rings=rings, truth=truth))
    return parcels


def parcel_geometry(parcel: Parcel) -> dict:
    """GeoJSON geometry dict for a parcel (always a Polygon)."""
    return {
        "type": "Polygon",
        "coordinates": [[list(v) for v in ring] for ring in parcel.rings],
    }


# ---------------------------------------------------------------------------
# containment


def _point_on_ring(ring, x: float, y: float) -> bool:
    for i in range(len(ring) - 1):
        (x1, y1), (x2, y2) = ring[i], ring[i + 1]
        if (min(x1, x2) <= x <= max(x1, x2)
                and min(y1, y2) <= y <= max(y1, y2)
                and (x2 - x1) * (y - y1) == (y2 - y1) * (x - x1)):
            return True
    return False


def _crossings(ring, x: float, y: float) -> int:
    count = 0
    for i in range(len(ring) - 1):
        (x1, y1), (x2, y2) = ring[i], ring[i + 1]
        if (y1 > y) != (y2 > y):
            xcross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xcross:
                count += 1
    return count


def contains(parcel: Parcel, p: GeoPoint) -> bool:
    """Even-odd containment in lon/lat space. Points exactly on any ring
    edge count as inside; points inside holes do not."""
    x, y = p.lon, p.lat
    for ring in parcel.rings:
        if _point_on_ring(ring, x, y):
            return True
    crossings = sum(_crossings(ring, x, y) for ring in parcel.rings)
    return crossings % 2 == 1


# ---------------------------------------------------------------------------
# metric distance


def _local_frame(parcel: Parcel):
    xs = [v[0] for ring in parcel.rings for v in ring]
    ys = [v[1] for ring in parcel.rings for v in ring]
    lon0 = (min(xs) + max(xs)) / 2.0
    lat0 = (min(ys) + max(ys)) / 2.0
    return lon0, lat0, math.cos(math.radians(lat0))


def boundary_distance_m(parcel: Parcel, p: GeoPoint) -> float:
    """Minimum distance in meters from a point to the parcel boundary,
    measured in a planar frame centered on the parcel's bounding box."""
    if abs(p.lat) >= 85.0:
        raise ValueError(f"latitude {p.lat} too close to the poles for the planar frame")
    lon0, lat0, coslat = _local_frame(parcel)

    def to_xy(lon, lat):
        return ((lon - lon0) * coslat * METERS_PER_DEGREE,
                (lat - lat0) * METERS_PER_DEGREE)

    px, py = to_xy(p.lon, p.lat)
    best = math.inf
    for ring in parcel.rings:
        for i in range(len(ring) - 1):
            if ring[i] == ring[i + 1]:
                continue  # degenerate edge
            ax, ay = to_xy(*ring[i])
            bx, by = to_xy(*ring[i + 1])
            best = min(best, _point_segment_distance(px, py, ax, ay, bx, by))
    if best is math.inf:
        raise ValueError(f"parcel {parcel.id}: all edges are degenerate")
    return best


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
    t = max(0.0, min(1.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


# ---------------------------------------------------------------------------
# assignment


def assign(records, parcels, dilation_m: float = DEFAULT_DILATION_M) -> list[Assignment]:
    """Assign geotagged records to parcels.

    Containment wins: a point inside one or more parcels is assigned to all
    of them. Only points inside no parcel are matched against the dilated
    boundaries. Records matching nothing are dropped. Output is sorted by
    image id and independent of parcel list order.
    """
    if dilation_m < 0:
        raise ValueError("dilation_m must be >= 0")
    out = []
    for image_id, point in records:
        modes = {pc.id: "inside" for pc in parcels if contains(pc, point)}
        if not modes:
            modes = {pc.id: "dilated" for pc in parcels
                     if boundary_distance_m(pc, point) <= dilation_m}
        if modes:
            out.append(Assignment(image_id=image_id, modes=modes))
    out.sort(key=lambda a: a.image_id)
    return out


def assignments_to_jsonl(assignments) -> str:
    """One JSON object per (image, parcel) pair."""
    lines = []
    for a in assignments:
        for parcel_id, mode in a.pairs():
            lines.append(json.dumps(
                {"image": a.image_id, "parcel": parcel_id, "mode": mode}))
    return "\n".join(lines) + ("\n" if lines else "")


def assignments_from_jsonl(text: str) -> list[Assignment]:
    by_image: dict[str, dict[str, str]] = {}
    order: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "image" not in obj:
            continue  # provenance header line
        if obj["image"] not in by_image:
            by_image[obj["image"]] = {}
            order.append(obj["image"])
        by_image[obj["image"]][obj["parcel"]] = obj["mode"]
    return [Assignment(image_id=i, modes=by_image[i]) for i in order]
