"""Scenes, band normalization, band combinations and cloud masking."""
from __future__ import annotations

import datetime as dt
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "RasterScene",
    "GeoTransform",
    "DateRange",
    "MissingBand",
    "DimensionMismatch",
    "InvertedDates",
    "DegenerateBandWarning",
    "REFLECTANCE_SCALE",
    "DEFAULT_CLOUD_CLASSES",
    "EVI_G", "EVI_C1", "EVI_C2", "EVI_L",
    "nearest_rank",
    "percentile_stretch",
    "band_combine",
    "scl_valid_mask",
    "date_range",
    "scene_hash",
    "dedupe",
]

# L2A digital numbers are reflectance x 10000
REFLECTANCE_SCALE = 10000.0

# SCL codes: 3 cloud shadow, 8 cloud medium prob., 9 cloud high prob., 10 thin cirrus
DEFAULT_CLOUD_CLASSES = frozenset({3, 8, 9, 10})

EVI_G, EVI_C1, EVI_C2, EVI_L = 2.5, 6.0, 7.5, 1.0


class MissingBand(KeyError):
    pass


class DimensionMismatch(ValueError):
    pass


class InvertedDates(ValueError):
    pass


class DegenerateBandWarning(UserWarning):
    """The low and high percentiles coincide; the stretched band is all zeros."""


@dataclass(frozen=True)
class GeoTransform:
    """North-up affine: pixel (row, col) has its top-left corner at
    ``(origin_x + col * pixel_size, origin_y - row * pixel_size)``."""

    origin_x: float
    origin_y: float
    pixel_size: float

    def pixel_center(self, row, col):
        return (self.origin_x + (np.asarray(col) + 0.5) * self.pixel_size,
                self.origin_y - (np.asarray(row) + 0.5) * self.pixel_size)

    def as_tuple(self) -> tuple:
        return (self.origin_x, self.origin_y, self.pixel_size)


@dataclass
class RasterScene:
    tile_id: str
    date: dt.date
    bands: dict
    geotransform: GeoTransform
    crs: str = "EPSG:32610"
    # bands stored at a coarser resolution than the 10 m grid (e.g. SCL at 20 m)
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.geotransform, GeoTransform):
            self.geotransform = GeoTransform(*self.geotransform)
        shapes = {np.shape(b) for b in self.bands.values()}
        if len(shapes) > 1:
            raise DimensionMismatch(f"bands differ in shape: {sorted(shapes)}")
        if shapes:
            (shape,) = shapes
            if len(shape) != 2 or shape[0] <= 0 or shape[1] <= 0:
                raise DimensionMismatch(f"bands must be non-empty 2-D planes, got {shape}")

    @property
    def id(self) -> str:
        return f"{self.tile_id}_{self.date.isoformat()}"

    @property
    def height(self) -> int:
        return next(iter(self.bands.values())).shape[0]

    @property
    def width(self) -> int:
        return next(iter(self.bands.values())).shape[1]

    def band(self, name: str) -> np.ndarray:
        try:
            return self.bands[name]
        except KeyError:
            raise MissingBand(name) from None


# -- normalization --------------------------------------------------------------


def nearest_rank(values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: the element at index ceil(pct * n / 100) - 1 of the sorted sample."""
    flat = np.asarray(values).ravel()
    n = flat.size
    if n == 0:
        raise ValueError("percentile of an empty sample")
    rank = math.ceil(Fraction(str(pct)) * n / 100)
    idx = min(max(rank - 1, 0), n - 1)
    return np.partition(flat, idx)[idx].item()


def percentile_stretch(band: np.ndarray, lo_pct: float = 1, hi_pct: float = 99) -> np.ndarray:
    """Clamp to the [lo, hi] nearest-rank percentiles and map linearly onto [0, 1].

    A band whose two percentiles coincide yields zeros and a
    :class:`DegenerateBandWarning`.
    """
    band = np.asarray(band)
    if band.size == 0:
        raise ValueError("cannot stretch an empty band")
    if not lo_pct < hi_pct:
        raise ValueError("lo_pct must be below hi_pct")
    lo = nearest_rank(band, lo_pct)
    hi = nearest_rank(band, hi_pct)
    if lo == hi:
        warnings.warn(f"degenerate band: p{lo_pct} == p{hi_pct} == {lo}", DegenerateBandWarning,
                      stacklevel=2)
        return np.zeros(band.shape, dtype=np.float64)
    out = (np.clip(band.astype(np.float64), lo, hi) - lo) / (hi - lo)
    return out


# -- band combinations ----------------------------------------------------------


def _reflectance(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if np.issubdtype(a.dtype, np.integer):
        return a.astype(np.float64) / REFLECTANCE_SCALE
    return a.astype(np.float64)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(num, den).shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def band_combine(scene: RasterScene | Mapping[str, np.ndarray], mode: str) -> np.ndarray:
    """Derived planes: ``nir_r_g`` (3, H, W) stack, ``ndvi`` or ``evi`` (H, W).

    Integer bands are read as L2A digital numbers and scaled to reflectance.
    Zero denominators give 0.
    """
    bands = scene.bands if isinstance(scene, RasterScene) else scene

    def get(name):
        if name not in bands:
            raise MissingBand(name)
        return bands[name]

    if mode == "nir_r_g":
        return np.stack([np.asarray(get("nir")), np.asarray(get("red")), np.asarray(get("green"))])
    if mode == "ndvi":
        nir, red = _reflectance(get("nir")), _reflectance(get("red"))
        return _safe_ratio(nir - red, nir + red)
    if mode == "evi":
        nir, red, blue = _reflectance(get("nir")), _reflectance(get("red")), _reflectance(get("blue"))
        den = nir + EVI_C1 * red - EVI_C2 * blue + EVI_L
        return np.clip(EVI_G * _safe_ratio(nir - red, den), -1.0, 1.0)
    raise ValueError(f"unknown band combination {mode!r}")


def scl_valid_mask(scl: np.ndarray, cloud_classes: Iterable[int] = DEFAULT_CLOUD_CLASSES,
                   target_shape: Sequence[int] | None = None) -> np.ndarray:
    """Upsample a 20 m scene-classification plane x2 and mark cloud/shadow pixels invalid."""
    scl = np.asarray(scl)
    if scl.ndim != 2:
        raise DimensionMismatch("SCL plane must be 2-D")
    if target_shape is not None and tuple(target_shape) != (2 * scl.shape[0], 2 * scl.shape[1]):
        raise DimensionMismatch(
            f"SCL {scl.shape} is not half of target {tuple(target_shape)}"
        )
    invalid = np.isin(scl, list(cloud_classes))
    return ~np.repeat(np.repeat(invalid, 2, axis=0), 2, axis=1)


# -- dates ----------------------------------------------------------------------


@dataclass(frozen=True)
class DateRange:
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.start > self.end:
            raise InvertedDates(f"{self.start} is after {self.end}")

    def __contains__(self, day: dt.date) -> bool:
        return self.start <= day <= self.end


def _as_date(d) -> dt.date:
    return d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d))


def date_range(d1, d2, pad_days: int = 30) -> DateRange:
    """Acquisition window padded by ``pad_days`` on both sides of [d1, d2]."""
    d1, d2 = _as_date(d1), _as_date(d2)
    if d1 > d2:
        raise InvertedDates(f"{d1} is after {d2}")
    pad = dt.timedelta(days=pad_days)
    return DateRange(d1 - pad, d2 + pad)


# -- deduplication --------------------------------------------------------------


def scene_hash(scene: RasterScene) -> str:
    h = hashlib.sha256()
    for name in sorted(scene.bands):
        a = np.ascontiguousarray(scene.bands[name])
        h.update(name.encode())
        h.update(str(a.dtype).encode())
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def dedupe(scenes: Iterable[RasterScene]) -> list[RasterScene]:
    """Drop scenes repeating an earlier (tile id, date) or an earlier content hash."""
    keys, hashes, out = set(), set(), []
    for s in scenes:
        key = (s.tile_id, s.date)
        digest = scene_hash(s)
        if key in keys or digest in hashes:
            continue
        keys.add(key)
        hashes.add(digest)
        out.append(s)
    return out
