"""``hypersweep`` command line.

Exit codes: 0 success, 1 audit found discrepancies, 2 config or parse error,
3 some job was unschedulable, 4 pipeline stage failure.

A campaign config is a JSON object; relative paths resolve against the
config file's directory::

    {
      "campaign": "burned-area",
      "grid": "grid.json",
      "template": "template.json",
      "resources": {"cpu_cores": 4, "memory_gb": 24, "gpu_count": 2},
      "topology": "topology.json",
      "backend": "sim",
      "seed": 0,
      "out": "out",
      "sim": {"failure_rate": 0.0, "retry_limit": 0,
              "work": {"train": {"epochs": 100, "samples_per_epoch": 2000, "per_sample_cost": 0.5}}},
      "pipe": {"batches": 2, "size": 1024, "fail": ["b01:norm"]}
    }
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import cluster, gridlab, jobspec, ledger
from ._fs import atomic_write

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_SCHED, EXIT_PIPE = 0, 1, 2, 3, 4
BACKENDS = ("sim", "local-dir")
BACKEND_ENV = "HYPERSWEEP_BACKEND"

FIXTURES = {
    "table2": ("table2.csv", "table2_totals.json"),
    "table3": ("table3.csv", None),
    "table4": ("table4.csv", "table4_totals.json"),
    "table4-text": ("table4.csv", "table4_text.json"),
}


class ConfigError(Exception):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass
class CampaignConfig:
    campaign: str = "campaign"
    grid: Path | None = None
    template: Path | None = None
    resources: dict = field(default_factory=lambda: jobspec.SWEEP_RESOURCES.to_dict())
    topology: Path | None = None
    backend: str = "sim"
    seed: int = 0
    out: Path = Path("out")
    sim: dict = field(default_factory=dict)
    pipe: dict = field(default_factory=dict)


_CONFIG_KEYS = {f for f in CampaignConfig.__dataclass_fields__}
_PATH_KEYS = ("grid", "template", "topology", "out")
_SIM_KEYS = {"failure_rate", "retry_limit", "work", "batch_policy", "jobs"}
_WORK_KEYS = {"epochs", "samples_per_epoch", "per_sample_cost"}
_PIPE_KEYS = {"batches", "scenes_per_batch", "size", "chip_size", "overlap", "min_frac",
              "fractions", "fail", "workers", "latency_polls"}


def load_config(path: str | Path | None) -> CampaignConfig:
    cfg = CampaignConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist", "--config")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON ({exc})", str(path)) from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", str(path))
    for key, value in doc.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError("unknown config key", key)
        if key in _PATH_KEYS and value is not None:
            value = (path.parent / value) if not Path(value).is_absolute() else Path(value)
        setattr(cfg, key, value)
    for key, allowed in (("sim", _SIM_KEYS), ("pipe", _PIPE_KEYS)):
        block = getattr(cfg, key)
        if not isinstance(block, dict):
            raise ConfigError("must be an object", key)
        for k in block:
            if k not in allowed:
                raise ConfigError("unknown key", f"{key}.{k}")
    if isinstance(cfg.sim.get("jobs"), str) and not Path(cfg.sim["jobs"]).is_absolute():
        cfg.sim["jobs"] = str(path.parent / cfg.sim["jobs"])
    for phase, work in cfg.sim.get("work", {}).items():
        if phase not in jobspec.TRAINING_PHASES:
            raise ConfigError("unknown phase", f"sim.work.{phase}")
        for k in work:
            if k not in _WORK_KEYS:
                raise ConfigError("unknown key", f"sim.work.{phase}.{k}")
    return cfg


def _resolve(args) -> CampaignConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = Path(args.out)
    for name in ("grid", "template", "topology"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, Path(value))
    cfg.backend = os.environ.get(BACKEND_ENV) or cfg.backend
    if cfg.backend not in BACKENDS:
        raise ConfigError(f"unknown backend {cfg.backend!r}; expected one of {BACKENDS}", "backend")
    return cfg


def _require(cfg: CampaignConfig, key: str) -> Path:
    path = getattr(cfg, key)
    if path is None:
        raise ConfigError("required for this command", key)
    if not Path(path).exists():
        raise ConfigError(f"{path} does not exist", key)
    return Path(path)


# -- commands -------------------------------------------------------------------


def cmd_expand(cfg: CampaignConfig, args) -> int:
    grid = _require(cfg, "grid")
    try:
        specs = gridlab.expand(gridlab.load_grid(grid))
    except gridlab.GridFormatError as exc:
        raise ConfigError(str(exc), exc.key or "grid") from exc
    except gridlab.GridError as exc:
        raise ConfigError(str(exc), "axes") from exc
    atomic_write(cfg.out / "specs.json", gridlab.dump_specs(specs))
    print(f"{len(specs)} experiments")
    return EXIT_OK


def _load_specs(cfg: CampaignConfig) -> list:
    path = cfg.out / "specs.json"
    if not path.exists():
        raise ConfigError(f"{path} not found; run 'expand' first", "specs")
    try:
        return gridlab.load_specs(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}", "specs") from exc


def cmd_render(cfg: CampaignConfig, args) -> int:
    specs = _load_specs(cfg)
    template = None
    try:
        if cfg.template is not None:
            template = jobspec.load_template(_require(cfg, "template"))
        resources = jobspec.ResourceRequest.from_dict(cfg.resources)
        manifests = jobspec.render_campaign(specs, template, resources, cfg.campaign)
    except jobspec.UnboundPlaceholder as exc:
        raise ConfigError(str(exc), "template") from exc
    except (jobspec.ManifestError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc), "resources") from exc
    folder = cfg.out / "manifests"
    folder.mkdir(parents=True, exist_ok=True)
    wanted = {f"{m.name}.json" for m in manifests}
    for stale in folder.glob("*.json"):
        if stale.name not in wanted:
            stale.unlink()
    for m in manifests:
        atomic_write(folder / f"{m.name}.json", jobspec.serialize(m))
    print(f"{len(manifests)} manifests written to {folder}")
    return EXIT_OK


def _job_from_dict(entry: dict, policy) -> cluster.JobRequest:
    entry = dict(entry)
    if "hours" in entry:
        hours = entry.pop("hours")
        return cluster.JobRequest.for_hours(entry.pop("name"), hours, batch_policy=policy, **entry)
    entry.setdefault("batch_policy", policy)
    return cluster.JobRequest(**entry)


def _sim_jobs(cfg: CampaignConfig) -> tuple[list, dict]:
    """JobRequests plus per-job metadata (phase, env) used for ledger rows."""
    policy = cfg.sim.get("batch_policy")
    policy = cluster.BatchSizePolicy(**policy) if policy else None
    meta: dict = {}
    jobs = []
    if cfg.sim.get("jobs"):
        try:
            entries = json.loads(Path(cfg.sim["jobs"]).read_text(encoding="utf-8"))
            for e in entries:
                job = _job_from_dict(e, policy)
                jobs.append(job)
                meta[job.name] = {"phase": "train", "env": {}}
        except (OSError, ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"bad jobs file: {exc}", "sim.jobs") from exc
        return jobs, meta
    folder = cfg.out / "manifests"
    work = cfg.sim.get("work", {})
    for path in sorted(folder.glob("*.json")) if folder.exists() else []:
        try:
            m = jobspec.parse(path.read_bytes())
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad manifest {path.name}: {exc}", "manifests") from exc
        w = work.get(m.phase, {"epochs": 1, "samples_per_epoch": 3600, "per_sample_cost": 1.0})
        jobs.append(cluster.JobRequest(
            m.name, gpu_count=max(1, m.resources.gpu_count), cpu_cores=m.resources.cpu_cores,
            memory_gb=m.resources.memory_gb, batch_policy=policy, **w))
        meta[m.name] = {"phase": m.phase, "env": dict(m.env)}
    return jobs, meta


def _ledger_rows(trace: cluster.SimTrace, jobs: list, meta: dict, campaign: str) -> list:
    last_node = {}
    for e in trace.events:
        if e.transition is cluster.JobState.RUNNING:
            last_node[e.job] = e.node
    rows = []
    for job in jobs:
        state = trace.final_states[job.name]
        if state is cluster.JobState.UNSCHEDULABLE:
            continue
        env = meta[job.name]["env"]
        node = trace.nodes[last_node[job.name]]
        gpu_h = trace.job_gpu_hours[job.name]
        rows.append(ledger.LedgerRow(
            application=campaign,
            network=env.get("NETWORK") or job.name,
            dataset=env.get("DATA") or env.get("DATASET"),
            models=1 if meta[job.name]["phase"] == "train" and state is cluster.JobState.SUCCEEDED else 0,
            gpu_hours=round(gpu_h, 6),
            vram_gb=node.vram_per_gpu_gb * job.gpu_count,
            epochs=job.epochs,
            wall_hours=round(gpu_h / job.gpu_count, 6),
        ))
    return rows


def cmd_sim(cfg: CampaignConfig, args) -> int:
    try:
        topology = cluster.load_topology(_require(cfg, "topology"))
    except (cluster.TopologyError, ValueError) as exc:
        raise ConfigError(str(exc), "topology") from exc
    jobs, meta = _sim_jobs(cfg)
    try:
        trace = cluster.simulate(jobs, topology, seed=cfg.seed,
                                 failure_rate=cfg.sim.get("failure_rate", 0.0),
                                 retry_limit=cfg.sim.get("retry_limit", 0))
    except ValueError as exc:
        raise ConfigError(str(exc), "sim") from exc
    atomic_write(cfg.out / "trace.csv", trace.export())
    rows = _ledger_rows(trace, jobs, meta, cfg.campaign)
    atomic_write(cfg.out / "ledger.csv", ledger.rows_to_csv(rows))
    print(f"{len(jobs)} jobs on {len(topology)} nodes")
    print(f"makespan {trace.makespan:.2f} h")
    print(f"gpu-hours {trace.total_gpu_hours:.2f}")
    bad = trace.unschedulable()
    if bad:
        for name in bad:
            print(f"Unschedulable: {name}")
        return EXIT_SCHED
    return EXIT_OK


def _parse_failures(items) -> set:
    from .geopipe import pipeline_job_name
    names = set()
    for item in items or ():
        batch, _, stage = str(item).partition(":")
        if not stage:
            raise ConfigError(f"expected 'batch:stage', got {item!r}", "pipe.fail")
        names.add(pipeline_job_name(batch, stage))
    return names


def cmd_pipe(cfg: CampaignConfig, args) -> int:
    from .geopipe import (InProcessBackend, LocalDirBackend, PipelineConfig, chip_manifest_csv,
                          run_pipeline, stage_table, synthetic_campaign, write_mask)
    p = cfg.pipe
    fail = _parse_failures(p.get("fail"))
    archive, batches = synthetic_campaign(
        n_batches=int(p.get("batches", 2)), scenes_per_batch=int(p.get("scenes_per_batch", 1)),
        size=int(p.get("size", 1024)), seed=cfg.seed, latency_polls=int(p.get("latency_polls", 2)))
    if cfg.backend == "local-dir":
        backend = LocalDirBackend(cfg.out, fail_jobs=fail)
    else:
        backend = InProcessBackend(fail_jobs=fail)
    pcfg = PipelineConfig(
        chip_size=int(p.get("chip_size", 256)), overlap=float(p.get("overlap", 0.25)),
        min_frac=float(p.get("min_frac", 0.10)),
        fractions=tuple(p.get("fractions", (0.6, 0.2, 0.2))))
    report = run_pipeline(batches, backend, archive, pcfg, max_workers=int(p.get("workers", 1)))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "jobs", "bytes"])
    for s in report.stages:
        w.writerow([s.stage, s.jobs, s.bytes])
    atomic_write(cfg.out / "stage_stats.csv", buf.getvalue())
    atomic_write(cfg.out / "chips.csv", chip_manifest_csv(report.chips))
    for scene_id, mask in report.masks.items():
        write_mask(mask, cfg.out / "masks" / scene_id, tile_id=scene_id)
    print(stage_table(report.stages), end="")
    print(f"{len(report.chips)} chips retained")
    if report.split is not None:
        print("split: " + ", ".join(f"{k} {v}" for k, v in report.split.chips.items()))
    if report.failures:
        for f in report.failures:
            print(f"failed batch {f.batch}: {f.stage} ({f.job})")
        return EXIT_PIPE
    return EXIT_OK


def _ledger_and_stated(args) -> tuple[list, dict | None]:
    stated = None
    try:
        if args.fixture:
            if args.fixture not in FIXTURES:
                raise ConfigError(f"unknown fixture; choose from {sorted(FIXTURES)}", "--fixture")
            rows_name, stated_name = FIXTURES[args.fixture]
            rows = ledger.load_fixture(rows_name)
            if stated_name:
                stated = ledger.load_stated(ledger.fixture_path(stated_name))
        else:
            if not args.ledger:
                raise ConfigError("a ledger path or --fixture is required", "ledger")
            rows = ledger.read_csv(args.ledger)
        if getattr(args, "stated", None):
            stated = ledger.load_stated(args.stated)
    except (ledger.LedgerFormatError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc), "ledger") from exc
    return rows, stated


def cmd_report(cfg: CampaignConfig, args) -> int:
    rows, _ = _ledger_and_stated(args)
    text = ledger.report(rows)
    if args.out is not None:
        atomic_write(Path(args.out) / "report.txt", text)
    print(text, end="")
    return EXIT_OK


def cmd_verify(cfg: CampaignConfig, args) -> int:
    rows, stated = _ledger_and_stated(args)
    if stated is None:
        raise ConfigError("stated totals are required", "stated")
    try:
        found = ledger.verify_document(rows, stated, args.tolerance)
    except ledger.LedgerFormatError as exc:
        raise ConfigError(str(exc), "stated") from exc
    flagged = {(d.group, d.column) for d in found}
    group_by = stated.get("group_by")
    computed = (ledger.aggregate(rows, [group_by]) if group_by else None)
    checks = stated["totals"].items() if group_by else [(None, stated["totals"])]
    for group, cols in checks:
        sums = computed[group] if group_by else ledger.aggregate(rows).total
        for col, value in cols.items():
            where = col if group is None else f"{col} [{group}]"
            status = "MISMATCH" if (group, col) in flagged else "ok"
            print(f"{status:8s} {where}: stated {ledger._fmt(value)} computed {ledger._fmt(round(sums[col], 6))}")
    for d in found:
        print(f"discrepancy: {d}")
    print(f"{len(found)} discrepancies")
    return EXIT_AUDIT if found else EXIT_OK


def cmd_metrics(cfg: CampaignConfig, args) -> int:
    from .geopipe import read_mask, seg_metrics
    from .geopipe.raster import DimensionMismatch
    try:
        m = seg_metrics(read_mask(args.pred), read_mask(args.gt))
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, DimensionMismatch):
            raise ConfigError(str(exc), "masks") from exc
        raise ConfigError(f"cannot read mask: {exc}", "masks") from exc
    print(m)
    return EXIT_OK


COMMANDS = {
    "expand": cmd_expand,
    "render": cmd_render,
    "sim": cmd_sim,
    "pipe": cmd_pipe,
    "report": cmd_report,
    "verify": cmd_verify,
    "metrics": cmd_metrics,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="campaign config JSON")
    common.add_argument("--seed", type=int, default=None, help="seed for all randomness")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hypersweep", parents=[common],
                                     description="Campaign grids, manifests, simulation, pipeline and ledgers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", parents=[common], help="expand a grid into experiment specs")
    p.add_argument("--grid")
    p = sub.add_parser("render", parents=[common], help="render train/eval manifests")
    p.add_argument("--template")
    p = sub.add_parser("sim", parents=[common], help="simulate the campaign on a topology")
    p.add_argument("--topology")
    sub.add_parser("pipe", parents=[common], help="run the imagery pipeline on synthetic scenes")
    for name in ("report", "verify"):
        p = sub.add_parser(name, parents=[common], help=f"{name} a compute ledger")
        p.add_argument("ledger", nargs="?")
        if name == "verify":
            p.add_argument("stated", nargs="?")
            p.add_argument("--tolerance", type=float, default=ledger.DEFAULT_TOLERANCE)
        p.add_argument("--fixture", help=f"shipped table: {', '.join(FIXTURES)}")
    p = sub.add_parser("metrics", parents=[common], help="segmentation metrics for two mask containers")
    p.add_argument("pred")
    p.add_argument("gt")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
