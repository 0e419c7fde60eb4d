"""Sliding-window chips, class-balance filters, rotation augmentation and
raster-level train/val/test splits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ChipWindow",
    "ChipRecord",
    "SplitAssignment",
    "NonSquareChip",
    "EmptyDataset",
    "SPLITS",
    "gen_windows",
    "window_stride",
    "filter_binary_chips",
    "filter_change_chips",
    "rotate_augment",
    "split_by_raster",
    "chip_manifest_csv",
    "read_chip_manifest",
    "leakage",
]

SPLITS = ("train", "val", "test")
_FRACTION_SLACK = 1e-9


class NonSquareChip(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ChipWindow:
    row0: int
    col0: int
    size: int

    def slice(self) -> tuple:
        return (slice(self.row0, self.row0 + self.size), slice(self.col0, self.col0 + self.size))


def window_stride(chip_size: int, overlap_frac: float) -> int:
    # round half up; 256 at 25% overlap -> 192
    return max(1, math.floor(chip_size * (1 - overlap_frac) + 0.5))


def gen_windows(width: int, height: int, chip_size: int, overlap_frac: float = 0.25) -> list[ChipWindow]:
    """Whole windows only, row-major. Stride is ``chip_size * (1 - overlap_frac)`` rounded."""
    if chip_size <= 0:
        raise ValueError("chip_size must be positive")
    if not 0 <= overlap_frac < 1:
        raise ValueError("overlap_frac must be in [0, 1)")
    stride = window_stride(chip_size, overlap_frac)

    def offsets(dim):
        if dim < chip_size:
            return range(0)
        return range(0, (dim - chip_size) // stride * stride + 1, stride)

    return [ChipWindow(r, c, chip_size) for r in offsets(height) for c in offsets(width)]


def _class_fractions(windows: Sequence[ChipWindow], mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fractions of class-1 and class-0 pixels per window, via a summed-area table.

    Both come from integer counts so that complementary thresholds are exact.
    """
    mask = np.asarray(mask)
    h, w = mask.shape
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    sat[1:, 1:] = (mask == 1).cumsum(0).cumsum(1)
    ones_fr, zeros_fr = np.empty(len(windows)), np.empty(len(windows))
    for i, win in enumerate(windows):
        r0, c0, s = win.row0, win.col0, win.size
        if r0 < 0 or c0 < 0 or r0 + s > h or c0 + s > w:
            raise ValueError(f"{win} lies outside a {h}x{w} mask")
        ones = sat[r0 + s, c0 + s] - sat[r0, c0 + s] - sat[r0 + s, c0] + sat[r0, c0]
        ones_fr[i] = ones / (s * s)
        zeros_fr[i] = (s * s - ones) / (s * s)
    return ones_fr, zeros_fr


def filter_binary_chips(windows: Sequence[ChipWindow], mask: np.ndarray,
                        min_frac: float = 0.10) -> list[ChipWindow]:
    """Keep windows where both classes each cover at least ``min_frac`` of the pixels."""
    windows = list(windows)
    if not windows:
        return []
    ones, zeros = _class_fractions(windows, mask)
    return [w for w, f1, f0 in zip(windows, ones, zeros) if f1 >= min_frac and f0 >= min_frac]


def filter_change_chips(windows: Sequence[ChipWindow], change_mask: np.ndarray,
                        min_change: float = 0.10) -> list[ChipWindow]:
    """Keep two-class windows whose change-class share is at least ``min_change``."""
    windows = list(windows)
    if not windows:
        return []
    change, _ = _class_fractions(windows, change_mask)
    return [w for w, f in zip(windows, change) if 0 < f < 1 and f >= min_change]


def rotate_augment(chips: Sequence, angles: Iterable[int] = (90, 180)) -> list:
    """Each chip followed by its counter-clockwise rotations by ``angles``.

    A chip is an array whose last two axes are spatial, or a tuple of such
    arrays (image pair plus mask) that are rotated together.
    """
    angles = list(angles)
    for a in angles:
        if a % 90:
            raise ValueError(f"rotation {a} is not a multiple of 90 degrees")
    out = []
    for chip in chips:
        parts = chip if isinstance(chip, tuple) else (chip,)
        for p in parts:
            p = np.asarray(p)
            if p.ndim < 2 or p.shape[-1] != p.shape[-2]:
                raise NonSquareChip(f"chip of shape {p.shape} is not square")
        out.append(chip)
        for a in angles:
            k = (a // 90) % 4
            rotated = tuple(np.rot90(np.asarray(p), k, axes=(-2, -1)) for p in parts)
            out.append(rotated if isinstance(chip, tuple) else rotated[0])
    return out


# -- splits ---------------------------------------------------------------------


@dataclass
class SplitAssignment:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    chips: dict = field(default_factory=dict)  # split -> chip count
    warnings: list = field(default_factory=list)

    def split_of(self, scene: str) -> str:
        for name in SPLITS:
            if scene in getattr(self, name):
                return name
        raise KeyError(scene)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in SPLITS}


def split_by_raster(chip_counts: Mapping[str, int],
                    fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> SplitAssignment:
    """Assign whole scenes to train/val/test by a descending greedy fill.

    Scenes are taken in order of decreasing chip count (ties by scene id).
    Train takes scenes until its cumulative chip share reaches the train
    fraction, val until train+val is reached, and test takes the rest. Small
    scenes therefore land in test.
    """
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1) > _FRACTION_SLACK:
        raise ValueError("fractions must be three positive numbers summing to 1")
    total = sum(chip_counts.values())
    if not chip_counts or total <= 0:
        raise EmptyDataset("no chips to split")
    if any(c < 0 for c in chip_counts.values()):
        raise ValueError("chip counts must be non-negative")

    order = sorted(chip_counts, key=lambda s: (-chip_counts[s], s))
    targets = (fr[0] * total, (fr[0] + fr[1]) * total)
    slack = _FRACTION_SLACK * total
    result = SplitAssignment()
    split, cum = 0, 0
    for scene in order:
        while split < 2 and cum >= targets[split] - slack:
            split += 1
        getattr(result, SPLITS[split]).append(scene)
        cum += chip_counts[scene]
    result.chips = {name: sum(chip_counts[s] for s in getattr(result, name)) for name in SPLITS}
    for name in SPLITS:
        if not getattr(result, name):
            result.warnings.append(f"{name} split is empty")
    return result


# -- chip manifest --------------------------------------------------------------


@dataclass(frozen=True)
class ChipRecord:
    scene_id: str
    row0: int
    col0: int
    size: int
    split: str = ""


_MANIFEST_HEADER = ("scene_id", "row0", "col0", "size", "split")


def chip_manifest_csv(records: Iterable[ChipRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_MANIFEST_HEADER)
    for r in records:
        w.writerow([r.scene_id, r.row0, r.col0, r.size, r.split])
    return buf.getvalue()


def read_chip_manifest(text: str) -> list[ChipRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != _MANIFEST_HEADER:
        raise ValueError(f"chip manifest header must be {','.join(_MANIFEST_HEADER)}")
    return [ChipRecord(s, int(r), int(c), int(z), sp) for s, r, c, z, sp in reader]


def leakage(records: Iterable[ChipRecord]) -> dict:
    """Scenes whose chips appear in more than one split, mapped to those splits."""
    seen: dict = {}
    for r in records:
        seen.setdefault(r.scene_id, set()).add(r.split)
    return {s: sorted(v) for s, v in seen.items() if len(v) > 1}
