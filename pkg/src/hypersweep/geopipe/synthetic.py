"""Seeded synthetic scenes, burn polygons and a cold-archive data source.

Scenes are a smooth vegetation field with multiplicative noise; burn scars
are star-shaped polygons that depress NIR and lift red inside them. The
archive mimics a long-term-archive tier: a scene must be requested, then
becomes fetchable only after a few availability polls.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .raster import GeoTransform, RasterScene
from .rasterize import Polygon, rasterize

__all__ = [
    "synthetic_scene",
    "burn_polygons",
    "SyntheticArchive",
    "ArchiveError",
    "SceneBatch",
    "synthetic_campaign",
]

_BASE_REFLECTANCE = {"blue": 450, "green": 700, "red": 600, "nir": 3200}


class ArchiveError(RuntimeError):
    pass


def _smooth_field(rng: np.random.Generator, height: int, width: int, cells: int = 6) -> np.ndarray:
    """Bilinear upsample of a coarse random grid, values in [0, 1]."""
    coarse = rng.random((cells + 1, cells + 1))
    ys = np.linspace(0, cells, height)
    xs = np.linspace(0, cells, width)
    grid = np.arange(cells + 1)
    rows = np.stack([np.interp(xs, grid, coarse[i]) for i in range(cells + 1)])
    return np.stack([np.interp(ys, grid, rows[:, j]) for j in range(width)], axis=1)


def burn_polygons(rng: np.random.Generator, gt: GeoTransform, size: int, count: int = 3) -> list[Polygon]:
    """Star-shaped (hence simple) polygons placed inside the scene footprint."""
    extent = size * gt.pixel_size
    polys = []
    for _ in range(count):
        r_mean = extent * rng.uniform(0.10, 0.22)
        cx = gt.origin_x + rng.uniform(r_mean, extent - r_mean)
        cy = gt.origin_y - rng.uniform(r_mean, extent - r_mean)
        n = int(rng.integers(8, 16))
        angles = np.sort(rng.uniform(0, 2 * math.pi, n))
        radii = r_mean * rng.uniform(0.6, 1.3, n)
        ring = np.column_stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)])
        ring = np.vstack([ring, ring[:1]])
        try:
            polys.append(Polygon(ring))
        except ValueError:
            # near-duplicate angles can fold the ring; skip that scar
            continue
    return polys


def synthetic_scene(tile_id: str, date, size: int = 1024, seed: int = 0,
                    polygons: list[Polygon] | None = None, n_burns: int = 3,
                    pixel_size: float = 10.0, origin=(500000.0, 4200000.0),
                    cloud_frac: float = 0.05) -> tuple[RasterScene, list[Polygon]]:
    """One 4-band uint16 scene (plus SCL at half resolution) and its burn polygons."""
    date = date if isinstance(date, dt.date) else dt.date.fromisoformat(str(date))
    rng = np.random.default_rng(seed)
    gt = GeoTransform(origin[0], origin[1], pixel_size)
    if polygons is None:
        polygons = burn_polygons(rng, gt, size, n_burns)
    burned = rasterize(polygons, gt, size, size).astype(bool) if polygons else np.zeros((size, size), bool)
    vigor = 0.6 + 0.8 * _smooth_field(rng, size, size)
    bands = {}
    for name, base in _BASE_REFLECTANCE.items():
        plane = base * vigor * rng.normal(1.0, 0.04, (size, size))
        if name == "nir":
            plane[burned] *= 0.35
        elif name == "red":
            plane[burned] *= 1.4
        bands[name] = np.clip(plane, 1, 10000).astype(np.uint16)

    half = size // 2
    scl = np.full((half, half), 4, dtype=np.uint16)  # 4 = vegetation
    if cloud_frac > 0:
        cy, cx = rng.integers(0, half, 2)
        radius = half * math.sqrt(cloud_frac / math.pi)
        yy, xx = np.ogrid[:half, :half]
        scl[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2] = 9
    scene = RasterScene(tile_id, date, bands, gt, aux={"scl": scl})
    return scene, polygons


class SyntheticArchive:
    """Request-then-poll archive. A requested scene comes online after
    ``latency_polls`` availability checks; unrequested scenes never do."""

    def __init__(self, scenes: dict | None = None, latency_polls: int = 2):
        self._scenes = dict(scenes or {})
        self.latency_polls = latency_polls
        self._remaining: dict[str, int] = {}
        self.requests: list[str] = []

    def add(self, scene: RasterScene) -> None:
        self._scenes[scene.id] = scene

    def __contains__(self, scene_id: str) -> bool:
        return scene_id in self._scenes

    def request(self, scene_id: str) -> None:
        if scene_id not in self._scenes:
            raise ArchiveError(f"unknown scene {scene_id!r}")
        self.requests.append(scene_id)
        self._remaining.setdefault(scene_id, self.latency_polls)

    def is_online(self, scene_id: str) -> bool:
        if scene_id not in self._remaining:
            return False
        if self._remaining[scene_id] > 0:
            self._remaining[scene_id] -= 1
        return self._remaining[scene_id] == 0

    def fetch(self, scene_id: str) -> RasterScene:
        if self._remaining.get(scene_id) != 0:
            raise ArchiveError(f"scene {scene_id!r} is not online")
        return self._scenes[scene_id]


@dataclass
class SceneBatch:
    """Scenes covering one ground-truth region, processed together."""

    name: str
    scene_ids: list
    polygons: list = field(default_factory=list)


def synthetic_campaign(n_batches: int = 2, scenes_per_batch: int = 1, size: int = 1024,
                       seed: int = 0, latency_polls: int = 2) -> tuple[SyntheticArchive, list[SceneBatch]]:
    """An archive plus batches; each batch is one tile observed on consecutive dates."""
    archive = SyntheticArchive(latency_polls=latency_polls)
    batches = []
    ss = np.random.SeedSequence(seed)
    for b, child in enumerate(ss.spawn(n_batches)):
        rng = np.random.default_rng(child)
        tile = f"T{b:02d}SYN"
        origin = (500000.0 + b * size * 10.0, 4200000.0)
        gt = GeoTransform(origin[0], origin[1], 10.0)
        polys = burn_polygons(rng, gt, size)
        ids = []
        for k in range(scenes_per_batch):
            date = dt.date(2019, 8, 1) + dt.timedelta(days=5 * k)
            scene, _ = synthetic_scene(tile, date, size, int(rng.integers(2**31)),
                                       polygons=polys, origin=origin)
            archive.add(scene)
            ids.append(scene.id)
        batches.append(SceneBatch(f"b{b:02d}", ids, polys))
    return archive, batches
