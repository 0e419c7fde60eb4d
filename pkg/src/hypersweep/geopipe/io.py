"""On-disk scene and mask containers.

A container is a directory holding ``header.json`` plus one flat, row-major,
little-endian binary plane per band (``<band>.bin``). Scene bands are uint16;
mask planes are uint8. Example header::

    {"tile_id": "T10SEG", "date": "2019-08-01", "width": 1024, "height": 1024,
     "geotransform": [500000.0, 4200000.0, 10.0], "crs": "EPSG:32610",
     "dtype": "uint16", "bands": ["blue", "green", "red", "nir"],
     "aux": {"scl": [512, 512]}}

``aux`` lists planes stored at their own (coarser) shape.
"""
from __future__ import annotations

import datetime as dt
import json
import os
from pathlib import Path

import numpy as np

from .raster import GeoTransform, RasterScene

__all__ = ["write_scene", "read_scene", "write_mask", "read_mask"]

_DTYPES = {"uint16": np.dtype("<u2"), "uint8": np.dtype("u1")}


def _write_plane(path: Path, plane: np.ndarray, dtype: np.dtype) -> None:
    plane = np.asarray(plane)
    if plane.dtype.kind == "f" or plane.min(initial=0) < 0 or plane.max(initial=0) > np.iinfo(dtype).max:
        raise ValueError(f"{path.name}: values do not fit {dtype}")
    tmp = path.with_name(path.name + ".tmp")
    np.ascontiguousarray(plane, dtype=dtype).tofile(tmp)
    os.replace(tmp, path)


def _write_header(root: Path, header: dict) -> None:
    tmp = root / "header.json.tmp"
    tmp.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, root / "header.json")


def write_scene(scene: RasterScene, root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for name, plane in {**scene.bands, **scene.aux}.items():
        _write_plane(root / f"{name}.bin", plane, _DTYPES["uint16"])
    _write_header(root, {
        "tile_id": scene.tile_id,
        "date": scene.date.isoformat(),
        "width": scene.width,
        "height": scene.height,
        "geotransform": list(scene.geotransform.as_tuple()),
        "crs": scene.crs,
        "dtype": "uint16",
        "bands": list(scene.bands),
        "aux": {k: list(np.shape(v)) for k, v in scene.aux.items()},
    })
    return root


def _read_header(root: Path) -> dict:
    return json.loads((root / "header.json").read_text(encoding="utf-8"))


def _read_plane(root: Path, name: str, dtype: np.dtype, shape) -> np.ndarray:
    data = np.fromfile(root / f"{name}.bin", dtype=dtype)
    if data.size != shape[0] * shape[1]:
        raise ValueError(f"{name}.bin holds {data.size} values, header says {shape}")
    return data.reshape(shape).astype(dtype.newbyteorder("="))


def read_scene(root: str | Path) -> RasterScene:
    root = Path(root)
    h = _read_header(root)
    dtype = _DTYPES[h["dtype"]]
    shape = (h["height"], h["width"])
    return RasterScene(
        tile_id=h["tile_id"],
        date=dt.date.fromisoformat(h["date"]),
        bands={b: _read_plane(root, b, dtype, shape) for b in h["bands"]},
        geotransform=GeoTransform(*h["geotransform"]),
        crs=h["crs"],
        aux={k: _read_plane(root, k, dtype, tuple(s)) for k, s in h.get("aux", {}).items()},
    )


def write_mask(mask: np.ndarray, root: str | Path, *, scene: RasterScene | None = None,
               geotransform=(0.0, 0.0, 1.0), crs: str = "", tile_id: str = "",
               date: dt.date | None = None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if scene is not None:
        geotransform, crs, tile_id, date = scene.geotransform, scene.crs, scene.tile_id, scene.date
    gt = geotransform if isinstance(geotransform, GeoTransform) else GeoTransform(*geotransform)
    _write_plane(root / "mask.bin", mask, _DTYPES["uint8"])
    _write_header(root, {
        "tile_id": tile_id,
        "date": date.isoformat() if date else "",
        "width": int(np.shape(mask)[1]),
        "height": int(np.shape(mask)[0]),
        "geotransform": list(gt.as_tuple()),
        "crs": crs,
        "dtype": "uint8",
        "bands": ["mask"],
    })
    return root


def read_mask(root: str | Path) -> np.ndarray:
    root = Path(root)
    h = _read_header(root)
    if h.get("dtype") != "uint8" or h.get("bands") != ["mask"]:
        raise ValueError(f"{root} is not a mask container")
    return _read_plane(root, "mask", _DTYPES["uint8"], (h["height"], h["width"]))
