"""Burn polygons into class masks.

A pixel is labeled 1 when its center lies inside any polygon. Inside a single
polygon the even-odd rule applies over the exterior and its holes, so holes
subtract. Edge ties are half-open: centers on a polygon's left or top edge are
inside, on its right or bottom edge outside.

The fill is a scanline pass: for every pixel row the crossing abscissae of all
edges are computed at the row's center line, sorted, and filled pairwise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .raster import GeoTransform

__all__ = ["Polygon", "InvalidPolygon", "rasterize", "load_polygons", "polygons_to_geojson"]


class InvalidPolygon(ValueError):
    pass


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_segment(p1, p2, q1)) or (o2 == 0 and on_segment(p1, p2, q2))
            or (o3 == 0 and on_segment(q1, q2, p1)) or (o4 == 0 and on_segment(q1, q2, p2)))


def _check_ring(ring: np.ndarray, what: str) -> None:
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise InvalidPolygon(f"{what}: expected (x, y) pairs")
    if len(ring) < 4:
        raise InvalidPolygon(f"{what}: a closed ring needs at least 4 vertices")
    if not np.array_equal(ring[0], ring[-1]):
        raise InvalidPolygon(f"{what}: ring is not closed")
    if not np.all(np.isfinite(ring)):
        raise InvalidPolygon(f"{what}: non-finite coordinate")
    pts = ring.tolist()
    n = len(pts) - 1
    for i in range(n):
        for j in range(i + 1, n):
            # neighbouring edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]):
                raise InvalidPolygon(f"{what}: edges {i} and {j} intersect")


@dataclass(frozen=True)
class Polygon:
    exterior: np.ndarray
    holes: tuple = ()

    def __init__(self, exterior, holes: Iterable = (), validate: bool = True):
        ext = np.asarray(exterior, dtype=np.float64)
        hs = tuple(np.asarray(h, dtype=np.float64) for h in holes)
        if validate:
            _check_ring(ext, "exterior")
            for k, h in enumerate(hs):
                _check_ring(h, f"hole {k}")
        object.__setattr__(self, "exterior", ext)
        object.__setattr__(self, "holes", hs)

    @property
    def rings(self) -> tuple:
        return (self.exterior,) + self.holes

    def edges(self) -> np.ndarray:
        """All ring edges as an (E, 4) array of x1, y1, x2, y2."""
        return np.concatenate([np.hstack([r[:-1], r[1:]]) for r in self.rings])

    @classmethod
    def box(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        return cls([(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)])


def _fill_polygon(out: np.ndarray, edges: np.ndarray, centers_x: np.ndarray,
                  centers_y: np.ndarray) -> None:
    x1, y1, x2, y2 = edges.T
    horizontal = y1 == y2
    x1, y1, x2, y2 = x1[~horizontal], y1[~horizontal], x2[~horizontal], y2[~horizontal]
    if x1.size == 0:
        return
    ylo, yhi = np.minimum(y1, y2), np.maximum(y1, y2)
    rows = np.nonzero((centers_y > ylo.min()) & (centers_y <= yhi.max()))[0]
    for r in rows:
        py = centers_y[r]
        hit = (y1 < py) != (y2 < py)
        if not hit.any():
            continue
        xs = np.sort((x2[hit] - x1[hit]) * (py - y1[hit]) / (y2[hit] - y1[hit]) + x1[hit])
        starts = np.searchsorted(centers_x, xs[0::2], side="left")
        stops = np.searchsorted(centers_x, xs[1::2], side="left")
        for a, b in zip(starts, stops):
            if b > a:
                out[r, a:b] = 1


def rasterize(polygons: Sequence[Polygon], geotransform, width: int, height: int) -> np.ndarray:
    """uint8 mask of shape (height, width); 1 where a pixel center is covered."""
    gt = geotransform if isinstance(geotransform, GeoTransform) else GeoTransform(*geotransform)
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    mask = np.zeros((height, width), dtype=np.uint8)
    centers_x = gt.origin_x + (np.arange(width) + 0.5) * gt.pixel_size
    centers_y = gt.origin_y - (np.arange(height) + 0.5) * gt.pixel_size
    for poly in polygons:
        if not isinstance(poly, Polygon):
            raise InvalidPolygon(f"expected Polygon, got {type(poly).__name__}")
        layer = np.zeros_like(mask)
        _fill_polygon(layer, poly.edges(), centers_x, centers_y)
        mask |= layer
    return mask


# -- GeoJSON-shaped input -------------------------------------------------------


def _polygons_from_geometry(geom: dict) -> list[Polygon]:
    kind = geom.get("type")
    if kind == "Polygon":
        rings = geom["coordinates"]
        return [Polygon(rings[0], rings[1:])]
    if kind == "MultiPolygon":
        return [Polygon(rings[0], rings[1:]) for rings in geom["coordinates"]]
    raise InvalidPolygon(f"unsupported geometry type {kind!r}")


def load_polygons(source: str | Path | dict) -> list[Polygon]:
    """Read Polygon/MultiPolygon geometries from a Feature, FeatureCollection or bare geometry."""
    doc = source if isinstance(source, dict) else json.loads(Path(source).read_text(encoding="utf-8"))
    kind = doc.get("type")
    if kind == "FeatureCollection":
        out = []
        for feature in doc.get("features", []):
            out.extend(_polygons_from_geometry(feature["geometry"]))
        return out
    if kind == "Feature":
        return _polygons_from_geometry(doc["geometry"])
    return _polygons_from_geometry(doc)


def polygons_to_geojson(polygons: Sequence[Polygon]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [r.tolist() for r in p.rings],
                },
            }
            for p in polygons
        ],
    }
