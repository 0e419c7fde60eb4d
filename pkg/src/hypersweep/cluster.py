"""Heterogeneous GPU cluster model and deterministic campaign simulator.

Placement is first-fit-decreasing on requested GPUs over nodes in declared
order; every GPU of a job comes from one node. Time only advances at event
boundaries. Failures restart the whole job.
"""
from __future__ import annotations

import enum
import heapq
import io
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "NodeSpec",
    "BatchSizePolicy",
    "JobRequest",
    "JobState",
    "Placement",
    "ScheduleOutcome",
    "SimEvent",
    "SimTrace",
    "NoFit",
    "TopologyError",
    "dynamic_batch_size",
    "schedule",
    "duration",
    "simulate",
    "load_topology",
    "parse_topology",
]


class NoFit(ValueError):
    """Not even the minimum batch size fits in the available VRAM."""


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    name: str
    gpu_model: str
    gpu_count: int
    vram_per_gpu_gb: float
    cpu_cores: float
    memory_gb: float
    throughput_factor: float = 1.0

    def __post_init__(self):
        if self.gpu_count < 0:
            raise TopologyError(f"{self.name}: gpu_count must be >= 0")
        if self.gpu_count > 0 and self.vram_per_gpu_gb <= 0:
            raise TopologyError(f"{self.name}: vram_per_gpu_gb must be > 0")
        if self.throughput_factor <= 0:
            raise TopologyError(f"{self.name}: throughput_factor must be > 0")
        if self.cpu_cores < 0 or self.memory_gb < 0:
            raise TopologyError(f"{self.name}: cpu_cores and memory_gb must be >= 0")


@dataclass(frozen=True)
class BatchSizePolicy:
    overhead_gb: float
    per_sample_gb: float
    min_bs: int = 1
    max_bs: int = 256

    def __post_init__(self):
        if not 0 < self.min_bs <= self.max_bs:
            raise ValueError("need 0 < min_bs <= max_bs")
        if self.per_sample_gb <= 0 or self.overhead_gb < 0:
            raise ValueError("need per_sample_gb > 0 and overhead_gb >= 0")
        if _pow2_ceil(self.min_bs) > self.max_bs:
            raise ValueError("no power of two lies in [min_bs, max_bs]")


def _pow2_ceil(n: int) -> int:
    return 1 << max(0, math.ceil(n) - 1).bit_length()


def dynamic_batch_size(vram_gb: float, policy: BatchSizePolicy) -> int:
    """Largest power-of-two batch that fits ``vram_gb``, kept within the policy bounds.

    Fit means ``overhead_gb + b * per_sample_gb <= vram_gb``.
    """
    if vram_gb <= 0:
        raise ValueError("vram_gb must be positive")
    b = _pow2_ceil(policy.min_bs)
    if policy.overhead_gb + b * policy.per_sample_gb > vram_gb:
        raise NoFit(
            f"batch {b} needs {policy.overhead_gb + b * policy.per_sample_gb:g} GB, "
            f"only {vram_gb:g} GB available"
        )
    while 2 * b <= policy.max_bs and policy.overhead_gb + 2 * b * policy.per_sample_gb <= vram_gb:
        b *= 2
    return b


@dataclass(frozen=True)
class JobRequest:
    name: str
    gpu_count: int = 1
    cpu_cores: float = 1
    memory_gb: float = 1
    epochs: int = 1
    samples_per_epoch: int = 0
    per_sample_cost: float = 0.0  # GPU-seconds per sample at reference throughput
    batch_policy: BatchSizePolicy | None = None

    def __post_init__(self):
        if self.gpu_count < 1:
            raise ValueError(f"{self.name}: gpu_count must be >= 1")
        if self.epochs < 0 or self.samples_per_epoch < 0 or self.per_sample_cost < 0:
            raise ValueError(f"{self.name}: work terms must be >= 0")

    @classmethod
    def for_hours(cls, name: str, hours: float, gpu_count: int = 1, **kw) -> "JobRequest":
        """A job that takes ``hours`` on ``gpu_count`` reference GPUs."""
        return cls(name, gpu_count=gpu_count, epochs=1, samples_per_epoch=3600,
                   per_sample_cost=hours * gpu_count, **kw)


class JobState(str, enum.Enum):
    PENDING = "Pending"
    SCHEDULED = "Scheduled"
    RUNNING = "Running"
    SUCCEEDED = "Succeeded"
    FAILED = "Failed"
    UNSCHEDULABLE = "Unschedulable"

    @property
    def terminal(self) -> bool:
        return self in (JobState.SUCCEEDED, JobState.FAILED, JobState.UNSCHEDULABLE)


@dataclass(frozen=True)
class Placement:
    job: JobRequest
    node: NodeSpec
    batch_size: int | None = None


@dataclass
class ScheduleOutcome:
    placements: list = field(default_factory=list)
    pending: list = field(default_factory=list)
    unschedulable: list = field(default_factory=list)


def _eligible(job: JobRequest, node: NodeSpec) -> bool:
    """Could ``node`` ever host ``job``, given an otherwise idle node?"""
    if (job.gpu_count > node.gpu_count or job.cpu_cores > node.cpu_cores
            or job.memory_gb > node.memory_gb):
        return False
    if job.batch_policy is not None:
        try:
            dynamic_batch_size(node.vram_per_gpu_gb, job.batch_policy)
        except NoFit:
            return False
    return True


def schedule(
    pending: Sequence[JobRequest],
    topology: Sequence[NodeSpec],
    running: Iterable[Placement] = (),
) -> ScheduleOutcome:
    """First-fit-decreasing placement of ``pending`` jobs onto free capacity."""
    free = {n.name: [n.gpu_count, n.cpu_cores, n.memory_gb] for n in topology}
    for p in running:
        f = free[p.node.name]
        f[0] -= p.job.gpu_count
        f[1] -= p.job.cpu_cores
        f[2] -= p.job.memory_gb
    out = ScheduleOutcome()
    # sorted() is stable, so equal requests keep submission order
    for job in sorted(pending, key=lambda j: -j.gpu_count):
        hosts = [n for n in topology if _eligible(job, n)]
        if not hosts:
            out.unschedulable.append(job)
            continue
        for node in hosts:
            f = free[node.name]
            if job.gpu_count <= f[0] and job.cpu_cores <= f[1] and job.memory_gb <= f[2]:
                f[0] -= job.gpu_count
                f[1] -= job.cpu_cores
                f[2] -= job.memory_gb
                bs = (dynamic_batch_size(node.vram_per_gpu_gb, job.batch_policy)
                      if job.batch_policy else None)
                out.placements.append(Placement(job, node, bs))
                break
        else:
            out.pending.append(job)
    return out


def duration(job: JobRequest, node: NodeSpec) -> float:
    """Wall hours for ``job`` on ``node``; work splits evenly over the job's GPUs."""
    if job.epochs == 0:
        return 0.0
    gpu_seconds = job.epochs * job.samples_per_epoch * job.per_sample_cost
    return gpu_seconds / (3600.0 * job.gpu_count * node.throughput_factor)


# -- simulation -----------------------------------------------------------------


@dataclass(frozen=True)
class SimEvent:
    time: float
    job: str
    transition: JobState
    node: str = ""


@dataclass
class SimTrace:
    events: list
    makespan: float
    node_gpu_hours: dict
    job_gpu_hours: dict
    final_states: dict
    retries: dict
    batch_sizes: dict
    nodes: dict = field(default_factory=dict, repr=False)

    @property
    def total_gpu_hours(self) -> float:
        return math.fsum(self.node_gpu_hours.values())

    def unschedulable(self) -> list[str]:
        return [j for j, s in self.final_states.items() if s is JobState.UNSCHEDULABLE]

    def export(self) -> str:
        """Line-delimited trace followed by a summary block; byte-stable."""
        buf = io.StringIO()
        buf.write("time,job,transition,node\n")
        for e in self.events:
            buf.write(f"{e.time:.6f},{e.job},{e.transition.value},{e.node}\n")
        buf.write("\n# summary\n")
        buf.write(f"makespan_h,{self.makespan:.6f}\n")
        buf.write(f"total_gpu_hours,{self.total_gpu_hours:.6f}\n")
        for name in sorted(self.node_gpu_hours):
            buf.write(f"node_gpu_hours,{name},{self.node_gpu_hours[name]:.6f}\n")
        for name in sorted(self.final_states):
            bs = self.batch_sizes.get(name)
            buf.write(
                f"job,{name},{self.final_states[name].value},"
                f"retries={self.retries.get(name, 0)},"
                f"gpu_hours={self.job_gpu_hours.get(name, 0.0):.6f},"
                f"batch_size={'' if bs is None else bs}\n"
            )
        return buf.getvalue()


def simulate(
    jobs: Sequence[JobRequest],
    topology: Sequence[NodeSpec],
    seed: int = 0,
    failure_rate: float = 0.0,
    retry_limit: int = 0,
) -> SimTrace:
    """Discrete-event run of ``jobs`` on ``topology``.

    Every job is submitted at t=0. Each run attempt fails with probability
    ``failure_rate``; a failed attempt holds its GPUs for a uniformly drawn
    fraction of its duration, then re-enters Pending until ``retry_limit``
    restarts are used up.
    """
    if not 0 <= failure_rate < 1:
        raise ValueError("failure_rate must be in [0, 1)")
    names = [j.name for j in jobs]
    if len(set(names)) != len(names):
        raise ValueError("job names must be unique")
    node_names = [n.name for n in topology]
    if len(set(node_names)) != len(node_names):
        raise TopologyError("node names must be unique")

    rng = random.Random(seed)
    events: list[SimEvent] = []
    node_busy = {n.name: 0.0 for n in topology}
    job_busy = {j.name: 0.0 for j in jobs}
    states = {j.name: JobState.PENDING for j in jobs}
    retries = {j.name: 0 for j in jobs}
    batch_sizes: dict = {}
    pending = list(jobs)
    running: dict[str, Placement] = {}
    started: dict[str, float] = {}
    heap: list = []
    seq = 0
    now = 0.0
    makespan = 0.0

    for j in jobs:
        events.append(SimEvent(0.0, j.name, JobState.PENDING))

    while pending or heap:
        outcome = schedule(pending, topology, running.values())
        for job in outcome.unschedulable:
            states[job.name] = JobState.UNSCHEDULABLE
            events.append(SimEvent(now, job.name, JobState.UNSCHEDULABLE))
        for p in outcome.placements:
            name = p.job.name
            running[name] = p
            started[name] = now
            batch_sizes[name] = p.batch_size
            events.append(SimEvent(now, name, JobState.SCHEDULED, p.node.name))
            events.append(SimEvent(now, name, JobState.RUNNING, p.node.name))
            states[name] = JobState.RUNNING
            hours = duration(p.job, p.node)
            fails = failure_rate > 0 and rng.random() < failure_rate
            if fails:
                hours *= rng.random()
            heapq.heappush(heap, (now + hours, seq, name, fails))
            seq += 1
        pending = list(outcome.pending)
        if not heap:
            # nothing running and nothing placeable; anything left can never run
            break

        t, _, name, fails = heapq.heappop(heap)
        batch = [(t, name, fails)]
        while heap and heap[0][0] == t:
            t2, _, n2, f2 = heapq.heappop(heap)
            batch.append((t2, n2, f2))
        now = t
        for _, name, fails in batch:
            p = running.pop(name)
            held = (now - started.pop(name)) * p.job.gpu_count
            node_busy[p.node.name] += held
            job_busy[name] += held
            makespan = max(makespan, now)
            if fails:
                events.append(SimEvent(now, name, JobState.FAILED, p.node.name))
                if retries[name] < retry_limit:
                    retries[name] += 1
                    states[name] = JobState.PENDING
                    events.append(SimEvent(now, name, JobState.PENDING))
                    pending.append(p.job)
                else:
                    states[name] = JobState.FAILED
            else:
                states[name] = JobState.SUCCEEDED
                events.append(SimEvent(now, name, JobState.SUCCEEDED, p.node.name))

    for job in pending:
        if not states[job.name].terminal:
            states[job.name] = JobState.UNSCHEDULABLE
            events.append(SimEvent(now, job.name, JobState.UNSCHEDULABLE))

    return SimTrace(
        events=events,
        makespan=makespan,
        node_gpu_hours=node_busy,
        job_gpu_hours=job_busy,
        final_states=states,
        retries=retries,
        batch_sizes=batch_sizes,
        nodes={n.name: n for n in topology},
    )


# -- topology file --------------------------------------------------------------

_NODE_KEYS = {
    "name", "gpu_model", "gpu_count", "vram_per_gpu_gb", "cpu_cores", "memory_gb",
    "throughput_factor",
}


def parse_topology(doc: Mapping | list) -> list[NodeSpec]:
    """``{"nodes": [NodeSpec fields...]}``; a bare list of nodes is also accepted.

    A node entry may carry ``"replicas": k`` to declare k identical nodes named
    ``<name>-0`` .. ``<name>-(k-1)``.
    """
    if isinstance(doc, Mapping):
        extra = set(doc) - {"nodes"}
        if extra:
            raise TopologyError(f"unknown topology keys: {sorted(extra)}")
        doc = doc.get("nodes", [])
    nodes = []
    for i, entry in enumerate(doc):
        entry = dict(entry)
        replicas = entry.pop("replicas", None)
        unknown = set(entry) - _NODE_KEYS
        if unknown:
            raise TopologyError(f"nodes[{i}]: unknown keys {sorted(unknown)}")
        try:
            if replicas is None:
                nodes.append(NodeSpec(**entry))
            else:
                base = entry.pop("name")
                nodes.extend(NodeSpec(name=f"{base}-{k}", **entry) for k in range(int(replicas)))
        except TypeError as exc:
            raise TopologyError(f"nodes[{i}]: {exc}") from exc
    if len({n.name for n in nodes}) != len(nodes):
        raise TopologyError("node names must be unique")
    return nodes


def load_topology(path: str | Path) -> list[NodeSpec]:
    return parse_topology(json.loads(Path(path).read_text(encoding="utf-8")))
