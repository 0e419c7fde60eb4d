"""Batch imagery pipeline: Download -> Norm -> Label -> Chip, one job per stage per batch.

Batches are independent and may run concurrently; inside a batch the stages
run strictly in order and a failed stage skips the rest of that batch. Each
stage is submitted to a backend as a job manifest together with the work it
performs. A batch whose labels contain no positive pixels has nothing to
chip, so no Chip job is submitted for it.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from ..gridlab import ExperimentSpec
from .._fs import atomic_write
from ..jobspec import JobManifest, ResourceRequest, render, serialize
from .chips import ChipRecord, filter_binary_chips, gen_windows, split_by_raster
from .raster import dedupe, percentile_stretch
from .rasterize import rasterize
from .synthetic import ArchiveError, SceneBatch

__all__ = [
    "STAGES",
    "StageStats",
    "StageFailed",
    "JobFailed",
    "PipelineConfig",
    "PipelineReport",
    "Backend",
    "InProcessBackend",
    "LocalDirBackend",
    "pipeline_job_name",
    "run_pipeline",
    "stage_table",
]

log = logging.getLogger(__name__)

STAGES = ("Download", "Norm", "Label", "Chip")

PIPELINE_TEMPLATE = {
    "image": "registry.local/geopipe:latest",
    "command": ["python", "-m", "geopipe", "{{phase}}", "--batch", "{{batch}}"],
    "volume": {"name": "campaign-staging", "mount_path": "/data"},
}
PIPELINE_RESOURCES = ResourceRequest(cpu_cores=4, memory_gb=16)


class JobFailed(RuntimeError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, batch: str, stage: str, job: str, cause: BaseException | str):
        super().__init__(f"batch {batch}: {stage} job {job} failed: {cause}")
        self.batch, self.stage, self.job, self.cause = batch, stage, job, cause


@dataclass
class StageStats:
    stage: str
    jobs: int = 0
    bytes: int = 0


@dataclass
class PipelineConfig:
    chip_size: int = 256
    overlap: float = 0.25
    min_frac: float = 0.10
    lo_pct: float = 1
    hi_pct: float = 99
    rgb: tuple = ("red", "green", "blue")
    fractions: tuple = (0.6, 0.2, 0.2)
    max_polls: int = 100
    poll_interval_s: float = 0.0


class Backend(Protocol):
    def submit(self, manifest: JobManifest, work: Callable[[], int]) -> int:
        """Run one job; returns bytes processed, raises on failure."""


class InProcessBackend:
    """Runs each job's work in the calling thread.

    ``fail_jobs`` names manifests that should fail, for fault drills.
    """

    def __init__(self, fail_jobs: Iterable[str] = ()):
        self.fail_jobs = set(fail_jobs)
        self.submitted: list[str] = []

    def submit(self, manifest: JobManifest, work: Callable[[], int]) -> int:
        self.submitted.append(manifest.name)
        if manifest.name in self.fail_jobs:
            raise JobFailed(f"{manifest.name}: injected failure")
        return work()


class LocalDirBackend(InProcessBackend):
    """Like :class:`InProcessBackend`, but also writes every manifest under ``root/jobs``."""

    def __init__(self, root: str | Path, fail_jobs: Iterable[str] = ()):
        super().__init__(fail_jobs)
        self.root = Path(root)

    def submit(self, manifest: JobManifest, work: Callable[[], int]) -> int:
        jobs = self.root / "jobs"
        jobs.mkdir(parents=True, exist_ok=True)
        atomic_write(jobs / f"{manifest.name}.json", serialize(manifest))
        return super().submit(manifest, work)


def _batch_spec(batch_name: str) -> ExperimentSpec:
    return ExperimentSpec({"batch": batch_name})


def pipeline_job_name(batch_name: str, stage: str) -> str:
    return f"{_batch_spec(batch_name).id}-{stage.lower()}"


@dataclass
class _BatchOutcome:
    jobs: dict = field(default_factory=lambda: dict.fromkeys(STAGES, 0))
    bytes: dict = field(default_factory=lambda: dict.fromkeys(STAGES, 0))
    scenes: list = field(default_factory=list)
    masks: dict = field(default_factory=dict)
    chips: list = field(default_factory=list)
    failure: StageFailed | None = None


@dataclass
class PipelineReport:
    stages: list
    chips: list
    split: object = None
    failures: list = field(default_factory=list)
    masks: dict = field(default_factory=dict)
    duplicates: list = field(default_factory=list)

    @property
    def failed_batches(self) -> list[str]:
        return [f.batch for f in self.failures]

    @property
    def total_jobs(self) -> int:
        return sum(s.jobs for s in self.stages)


def _download(batch: SceneBatch, archive, cfg: PipelineConfig, out: _BatchOutcome) -> int:
    for sid in batch.scene_ids:
        archive.request(sid)
    waiting = list(batch.scene_ids)
    for _ in range(cfg.max_polls):
        waiting = [sid for sid in waiting if not archive.is_online(sid)]
        if not waiting:
            break
        if cfg.poll_interval_s:
            time.sleep(cfg.poll_interval_s)
    else:
        raise ArchiveError(f"scenes still offline after {cfg.max_polls} polls: {waiting}")
    out.scenes = [archive.fetch(sid) for sid in batch.scene_ids]
    return sum(b.nbytes for s in out.scenes for b in s.bands.values())


def _normalize(cfg: PipelineConfig, out: _BatchOutcome, normed: dict) -> int:
    total = 0
    for s in out.scenes:
        stack = np.stack([percentile_stretch(s.band(b), cfg.lo_pct, cfg.hi_pct) for b in cfg.rgb])
        normed[s.id] = stack.astype(np.float32)
        total += normed[s.id].nbytes
    return total


def _label(batch: SceneBatch, out: _BatchOutcome) -> int:
    for s in out.scenes:
        out.masks[s.id] = rasterize(batch.polygons, s.geotransform, s.width, s.height)
    return sum(m.nbytes for m in out.masks.values())


def _chip(cfg: PipelineConfig, out: _BatchOutcome, normed: dict) -> int:
    total = 0
    for s in out.scenes:
        mask = out.masks[s.id]
        windows = gen_windows(s.width, s.height, cfg.chip_size, cfg.overlap)
        kept = filter_binary_chips(windows, mask, cfg.min_frac)
        out.chips.extend(ChipRecord(s.id, w.row0, w.col0, w.size) for w in kept)
        # image chips plus mask chips
        px = len(kept) * cfg.chip_size * cfg.chip_size
        total += px * (normed[s.id].shape[0] * normed[s.id].itemsize + mask.itemsize)
    return total


def _run_batch(batch: SceneBatch, backend: Backend, archive, cfg: PipelineConfig) -> _BatchOutcome:
    out = _BatchOutcome()
    normed: dict = {}
    steps = {
        "Download": lambda: _download(batch, archive, cfg, out),
        "Norm": lambda: _normalize(cfg, out, normed),
        "Label": lambda: _label(batch, out),
        "Chip": lambda: _chip(cfg, out, normed),
    }
    for stage in STAGES:
        if stage == "Chip" and not any(m.any() for m in out.masks.values()):
            log.info("batch %s: no labeled pixels, skipping Chip", batch.name)
            break
        manifest = render(_batch_spec(batch.name), PIPELINE_TEMPLATE, PIPELINE_RESOURCES,
                          phase=stage.lower(), campaign="pipeline")
        out.jobs[stage] += 1
        try:
            out.bytes[stage] += int(backend.submit(manifest, steps[stage]))
        except Exception as exc:  # any job error fails the stage
            out.failure = StageFailed(batch.name, stage, manifest.name, exc)
            log.warning("%s", out.failure)
            break
    return out


def run_pipeline(scene_batches: Sequence[SceneBatch], backend: Backend, archive,
                 config: PipelineConfig | None = None, max_workers: int = 1) -> PipelineReport:
    """Process every batch and assemble stage statistics plus the chip manifest.

    Duplicate scenes, by (tile, date) or content, keep only their first
    occurrence's chips. The surviving scenes are split into train/val/test by
    raster.
    """
    cfg = config or PipelineConfig()
    batches = list(scene_batches)
    if max_workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            outcomes = list(pool.map(lambda b: _run_batch(b, backend, archive, cfg), batches))
    else:
        outcomes = [_run_batch(b, backend, archive, cfg) for b in batches]

    stats = [StageStats(s) for s in STAGES]
    for o in outcomes:
        for st in stats:
            st.jobs += o.jobs[st.stage]
            st.bytes += o.bytes[st.stage]

    all_scenes = [s for o in outcomes for s in o.scenes]
    kept_ids = {s.id for s in dedupe(all_scenes)}
    # a repeated id keeps the first batch's copy; content twins are not in kept_ids
    owner, duplicates, masks, chips = {}, [], {}, []
    for i, o in enumerate(outcomes):
        for s in o.scenes:
            if s.id in kept_ids and owner.setdefault(s.id, i) == i:
                if s.id in o.masks:
                    masks[s.id] = o.masks[s.id]
            else:
                duplicates.append(s.id)
        chips.extend(c for c in o.chips if owner.get(c.scene_id) == i)

    counts: dict = {}
    for c in chips:
        counts[c.scene_id] = counts.get(c.scene_id, 0) + 1
    split = None
    if counts:
        split = split_by_raster(counts, cfg.fractions)
        chips = [ChipRecord(c.scene_id, c.row0, c.col0, c.size, split.split_of(c.scene_id))
                 for c in chips]
    return PipelineReport(
        stages=stats,
        chips=chips,
        split=split,
        failures=[o.failure for o in outcomes if o.failure is not None],
        masks=masks,
        duplicates=duplicates,
    )


def stage_table(stats: Sequence[StageStats]) -> str:
    """Stage statistics laid out like a jobs/data summary table."""
    header = ["Phase"] + [s.stage for s in stats] + ["Total"]
    jobs = ["Jobs"] + [str(s.jobs) for s in stats] + [str(sum(s.jobs for s in stats))]
    data = ["Data (MB)"] + [f"{s.bytes / 1e6:.2f}" for s in stats] + [
        f"{sum(s.bytes for s in stats) / 1e6:.2f}"]
    widths = [max(len(r[i]) for r in (header, jobs, data)) for i in range(len(header))]
    return "\n".join(
        " | ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
        for r in (header, jobs, data)
    ) + "\n"
