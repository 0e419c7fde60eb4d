"""Job manifests for experiment specs, and artifact sync to an object store.

Templates use bare ``{{name}}`` substitution with no logic. Names resolve
against the experiment's axis bindings plus the reserved variables ``id``, ``phase``
and ``sink``.

Manifest documents are JSON (and therefore YAML) with top-level keys always
in this order::

    name, phase, image, command, env, resources, volume, artifact_sink

``env`` keys are sorted, so manifests differing only in env insertion order
serialize to the same bytes.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

from ._fs import atomic_write
from .gridlab import ExperimentSpec, format_token

__all__ = [
    "PHASES",
    "TRAINING_PHASES",
    "RESERVED_VARS",
    "DEFAULT_TEMPLATE",
    "ResourceRequest",
    "Volume",
    "JobManifest",
    "SyncReport",
    "ManifestError",
    "UnboundPlaceholder",
    "BadPhase",
    "StoreUnavailable",
    "render",
    "render_pair",
    "render_campaign",
    "serialize",
    "parse",
    "artifact_key",
    "content_hash",
    "sync",
    "sync_to_store",
    "ObjectStore",
    "LocalDirStore",
    "load_template",
]

PHASES = ("train", "eval", "download", "norm", "label", "chip")
TRAINING_PHASES = ("train", "eval")
RESERVED_VARS = ("id", "phase", "sink")
MANIFEST_KEYS = (
    "name", "phase", "image", "command", "env", "resources", "volume", "artifact_sink",
)

_PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_.-]*)\s*\}\}")

DEFAULT_TEMPLATE = {
    "image": "registry.local/segtrain:latest",
    "command": [
        "python", "-m", "segtrain", "--phase", "{{phase}}",
        "--run-id", "{{id}}", "--sink", "{{sink}}",
    ],
    "volume": {"name": "campaign-staging", "mount_path": "/data"},
}


class ManifestError(ValueError):
    pass


class UnboundPlaceholder(ManifestError):
    def __init__(self, name: str):
        super().__init__(f"template references unknown name {{{{{name}}}}}")
        self.name = name


class BadPhase(ManifestError):
    pass


class StoreUnavailable(RuntimeError):
    """Object store failed mid-sync. ``report`` holds the progress made so far."""

    def __init__(self, message: str, report: "SyncReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ResourceRequest:
    cpu_cores: float
    memory_gb: float
    gpu_count: int = 0
    min_gpu_vram_gb: float | None = None

    def __post_init__(self):
        if self.cpu_cores <= 0 or self.memory_gb <= 0:
            raise ManifestError("cpu_cores and memory_gb must be positive")
        if self.gpu_count < 0:
            raise ManifestError("gpu_count must be non-negative")
        if self.min_gpu_vram_gb is not None and self.min_gpu_vram_gb <= 0:
            raise ManifestError("min_gpu_vram_gb must be positive when given")

    def to_dict(self) -> dict:
        out = {"cpu_cores": self.cpu_cores, "memory_gb": self.memory_gb, "gpu_count": self.gpu_count}
        if self.min_gpu_vram_gb is not None:
            out["min_gpu_vram_gb"] = self.min_gpu_vram_gb
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ResourceRequest":
        unknown = set(d) - {"cpu_cores", "memory_gb", "gpu_count", "min_gpu_vram_gb"}
        if unknown:
            raise ManifestError(f"unknown resource keys: {sorted(unknown)}")
        return cls(
            cpu_cores=d["cpu_cores"],
            memory_gb=d["memory_gb"],
            gpu_count=d.get("gpu_count", 0),
            min_gpu_vram_gb=d.get("min_gpu_vram_gb"),
        )


# 24 GB / 4 CPU / 2 GPU per model, as allocated for the burned-area sweep
SWEEP_RESOURCES = ResourceRequest(cpu_cores=4, memory_gb=24, gpu_count=2)


@dataclass(frozen=True)
class Volume:
    name: str
    mount_path: str

    def to_dict(self) -> dict:
        return {"name": self.name, "mount_path": self.mount_path}


@dataclass(frozen=True)
class JobManifest:
    name: str
    phase: str
    image: str
    command: tuple
    env: Mapping[str, str]
    resources: ResourceRequest
    volume: Volume
    artifact_sink: str
    # not serialized; lets downstream tooling recover the source bindings
    bindings: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "phase": self.phase,
            "image": self.image,
            "command": list(self.command),
            "env": {k: self.env[k] for k in sorted(self.env)},
            "resources": self.resources.to_dict(),
            "volume": self.volume.to_dict(),
            "artifact_sink": self.artifact_sink,
        }


@dataclass
class SyncReport:
    uploaded: int = 0
    skipped: int = 0
    bytes_moved: int = 0
    keys: list = field(default_factory=list)


def _env_name(axis: str) -> str:
    return re.sub(r"[^A-Z0-9_]", "_", axis.upper())


def _substitute(value: Any, variables: Mapping[str, str]) -> Any:
    if isinstance(value, str):
        def repl(m: re.Match) -> str:
            name = m.group(1)
            if name not in variables:
                raise UnboundPlaceholder(name)
            return variables[name]
        return _PLACEHOLDER.sub(repl, value)
    if isinstance(value, (list, tuple)):
        return [_substitute(v, variables) for v in value]
    if isinstance(value, dict):
        return {k: _substitute(v, variables) for k, v in value.items()}
    return value


def render(
    spec: ExperimentSpec,
    template: Mapping[str, Any] | None = None,
    resources: ResourceRequest = SWEEP_RESOURCES,
    phase: str = "train",
    campaign: str = "campaign",
) -> JobManifest:
    if phase not in PHASES:
        raise BadPhase(f"unknown phase {phase!r}; expected one of {PHASES}")
    if phase in TRAINING_PHASES and resources.gpu_count < 1:
        raise ManifestError(f"{phase} jobs need at least one GPU")
    template = DEFAULT_TEMPLATE if template is None else template
    sink = f"{campaign}/{spec.id}/{phase}"
    variables = {name: format_token(v) for name, v in spec.bindings.items()}
    variables.update({"id": spec.id, "phase": phase, "sink": sink})
    doc = _substitute(dict(template), variables)
    volume = doc.get("volume") or {"name": "staging", "mount_path": "/data"}
    return JobManifest(
        name=f"{spec.id}-{phase}",
        phase=phase,
        image=doc["image"],
        command=tuple(doc.get("command", ())),
        env={_env_name(k): format_token(v) for k, v in spec.bindings.items()},
        resources=resources,
        volume=Volume(volume["name"], volume["mount_path"]),
        artifact_sink=sink,
        bindings=dict(spec.bindings),
    )


def render_pair(spec: ExperimentSpec, template=None, resources=SWEEP_RESOURCES,
                campaign: str = "campaign") -> list[JobManifest]:
    """Train and eval manifests for one spec."""
    return [render(spec, template, resources, phase, campaign) for phase in TRAINING_PHASES]


def render_campaign(specs: Iterable[ExperimentSpec], template=None, resources=SWEEP_RESOURCES,
                    campaign: str = "campaign") -> list[JobManifest]:
    manifests = []
    seen = set()
    for spec in specs:
        for m in render_pair(spec, template, resources, campaign):
            if m.name in seen:
                raise ManifestError(f"duplicate manifest name {m.name!r}")
            seen.add(m.name)
            manifests.append(m)
    return manifests


def serialize(manifest: JobManifest) -> bytes:
    return (json.dumps(manifest.to_dict(), indent=2, ensure_ascii=True) + "\n").encode("utf-8")


def parse(data: bytes | str) -> JobManifest:
    doc = json.loads(data)
    if list(doc) != list(MANIFEST_KEYS):
        raise ManifestError(f"manifest keys must be {MANIFEST_KEYS}, got {tuple(doc)}")
    if doc["phase"] not in PHASES:
        raise BadPhase(f"unknown phase {doc['phase']!r}")
    return JobManifest(
        name=doc["name"],
        phase=doc["phase"],
        image=doc["image"],
        command=tuple(doc["command"]),
        env=dict(doc["env"]),
        resources=ResourceRequest.from_dict(doc["resources"]),
        volume=Volume(doc["volume"]["name"], doc["volume"]["mount_path"]),
        artifact_sink=doc["artifact_sink"],
    )


def load_template(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(doc) - {"image", "command", "volume"}
    if unknown:
        raise ManifestError(f"unknown template keys: {sorted(unknown)}")
    if "image" not in doc:
        raise ManifestError("template is missing 'image'")
    return doc


# -- artifact sync --------------------------------------------------------------


def artifact_key(campaign: str, spec_id: str, phase: str) -> str:
    return f"{campaign}/{spec_id}/{phase}/model-final"


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ObjectStore(Protocol):
    def list(self, prefix: str = "") -> list[tuple[str, str]]:
        """(key, content hash) pairs under ``prefix``."""

    def put(self, key: str, data: bytes) -> None: ...

    def get(self, key: str) -> bytes: ...


class LocalDirStore:
    """Object store backed by a directory; keys map to relative paths.

    Each object is stored next to a ``.sha256`` sidecar holding its content hash.
    """

    _SIDECAR = ".sha256"

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _path(self, key: str) -> Path:
        parts = key.split("/")
        if not key or any(p in ("", ".", "..") for p in parts):
            raise ValueError(f"bad object key {key!r}")
        return self.root.joinpath(*parts)

    def list(self, prefix: str = "") -> list[tuple[str, str]]:
        if not self.root.exists():
            return []
        out = []
        for path in sorted(self.root.rglob("*")):
            if not path.is_file() or path.name.endswith(self._SIDECAR):
                continue
            key = path.relative_to(self.root).as_posix()
            if not key.startswith(prefix):
                continue
            sidecar = path.with_name(path.name + self._SIDECAR)
            digest = sidecar.read_text().strip() if sidecar.exists() else content_hash(path.read_bytes())
            out.append((key, digest))
        return out

    def put(self, key: str, data: bytes) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(path, data)
        atomic_write(path.with_name(path.name + self._SIDECAR), content_hash(data).encode())

    def get(self, key: str) -> bytes:
        return self._path(key).read_bytes()


def sync(
    staged: Sequence[tuple[str, str, bytes]],
    remote: Sequence[tuple[str, str]],
    store: ObjectStore | None = None,
) -> SyncReport:
    """Upload staged objects that are missing remotely or whose hash differs.

    Without a ``store`` this is a dry run that only computes the report.
    """
    remote_hashes = dict(remote)
    if len(remote_hashes) != len(remote):
        raise ValueError("remote listing has duplicate keys")
    if len({k for k, _, _ in staged}) != len(staged):
        raise ValueError("staged listing has duplicate keys")
    report = SyncReport()
    for key, digest, data in staged:
        if remote_hashes.get(key) == digest:
            report.skipped += 1
            continue
        if store is not None:
            try:
                store.put(key, data)
            except OSError as exc:
                raise StoreUnavailable(f"put {key!r} failed: {exc}", report) from exc
        report.uploaded += 1
        report.bytes_moved += len(data)
        report.keys.append(key)
    return report


def sync_to_store(staged: Sequence[tuple[str, str, bytes]], store: ObjectStore,
                  prefix: str = "") -> SyncReport:
    try:
        remote = store.list(prefix)
    except OSError as exc:
        raise StoreUnavailable(f"listing {prefix!r} failed: {exc}", SyncReport()) from exc
    return sync(staged, remote, store)
