"""Independent brute-force references used to check the library.

Nothing here imports the code under test beyond plain data types; each
function restates a rule in the most direct way available.
"""
from __future__ import annotations

import math
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction


def stride_ref(chip: int, overlap: float) -> int:
    exact = Decimal(chip) * (1 - Decimal(str(overlap)))
    return max(1, int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP)))


def windows_ref(width: int, height: int, chip: int, overlap: float) -> list[tuple[int, int]]:
    """Every (row0, col0) on the stride lattice whose window fits entirely."""
    s = stride_ref(chip, overlap)
    out = []
    for r in range(height):
        for c in range(width):
            if r % s == 0 and c % s == 0 and r + chip <= height and c + chip <= width:
                out.append((r, c))
    return out


def pnpoly(px: float, py: float, ring) -> bool:
    """Crossing-number test; the intercept is taken from each edge's start vertex."""
    inside = False
    for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
        if (y1 < py) != (y2 < py) and px < (x2 - x1) * (py - y1) / (y2 - y1) + x1:
            inside = not inside
    return inside


def rasterize_ref(polys, origin_x, origin_y, pixel, width, height):
    """Per-pixel center test; even-odd across a polygon's rings, union across polygons."""
    mask = [[0] * width for _ in range(height)]
    for r in range(height):
        py = origin_y - (r + 0.5) * pixel
        for c in range(width):
            px = origin_x + (c + 0.5) * pixel
            for rings in polys:
                if sum(pnpoly(px, py, ring) for ring in rings) % 2:
                    mask[r][c] = 1
                    break
    return mask


def nearest_rank_ref(values, pct) -> float:
    s = sorted(values)
    k = math.ceil(Fraction(str(pct)) * len(s) / 100) - 1
    return s[min(max(k, 0), len(s) - 1)]


def stretch_ref(values, lo=1, hi=99) -> list[float]:
    a, b = nearest_rank_ref(values, lo), nearest_rank_ref(values, hi)
    if a == b:
        return [0.0] * len(values)
    return [(min(max(v, a), b) - a) / (b - a) for v in values]


def batch_size_ref(vram, overhead, per_sample, min_bs, max_bs):
    fits = [b for b in (2 ** k for k in range(31))
            if min_bs <= b <= max_bs and overhead + b * per_sample <= vram]
    return max(fits) if fits else None


def split_ref(counts: dict, fractions) -> dict:
    """Descending greedy: move to the next split once the running total reaches its target."""
    total = sum(counts.values())
    bounds = [fractions[0] * total, (fractions[0] + fractions[1]) * total]
    out = {"train": [], "val": [], "test": []}
    names = ["train", "val", "test"]
    cur, cum = 0, 0
    for scene, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        while cur < 2 and cum >= bounds[cur] - 1e-9 * total:
            cur += 1
        out[names[cur]].append(scene)
        cum += n
    return out


def confusion_ref(pred, gt):
    tp = fp = fn = tn = 0
    for p, g in zip(pred, gt):
        if p == 1 and g == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif g == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def replay_usage(events, jobs, nodes):
    """Walk a trace in order and yield the per-node usage after each event."""
    held = {n.name: [0, 0, 0.0] for n in nodes}
    owner = {}
    for e in events:
        if e.transition.value == "Running":
            j = jobs[e.job]
            u = held[e.node]
            u[0] += j.gpu_count
            u[1] += j.cpu_cores
            u[2] += j.memory_gb
            owner[e.job] = e.node
        elif e.transition.value in ("Succeeded", "Failed") and e.job in owner:
            j = jobs[e.job]
            u = held[owner.pop(e.job)]
            u[0] -= j.gpu_count
            u[1] -= j.cpu_cores
            u[2] -= j.memory_gb
        yield e, held
