"""Hyperparameter grids: declarative axes expanded into experiment specs.

A grid is an ordered list of axes. Expansion is the full cartesian product,
row-major (the last declared axis varies fastest). Values are opaque tokens;
nothing here parses numbers, so ``"1e-5"`` stays ``"1e-5"``.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

__all__ = [
    "AxisDef",
    "ExperimentSpec",
    "GridError",
    "EmptyAxis",
    "DuplicateAxis",
    "GridFormatError",
    "expand",
    "spec_id",
    "format_token",
    "load_grid",
    "parse_grid",
    "dump_specs",
    "load_specs",
]

_ID_DIGEST_LEN = 8
_SLUG_BAD = re.compile(r"[^a-z0-9_-]+")


class GridError(ValueError):
    """Base class for grid definition problems."""


class EmptyAxis(GridError):
    pass


class DuplicateAxis(GridError):
    pass


class GridFormatError(GridError):
    """The grid document does not match the schema.

    ``key`` names the offending key so callers can report it.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class AxisDef:
    name: str
    values: tuple

    def __init__(self, name: str, values: Iterable):
        object.__setattr__(self, "name", str(name))
        object.__setattr__(self, "values", tuple(values))


def format_token(value: Any) -> str:
    """Render an axis value as the text used in ids and environment variables."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _canonical(bindings: Mapping[str, Any]) -> str:
    pairs = [[name, format_token(bindings[name])] for name in sorted(bindings)]
    return json.dumps(pairs, separators=(",", ":"), ensure_ascii=True)


def _slug(text: str) -> str:
    return _SLUG_BAD.sub("-", text.lower()).strip("-_")


def spec_id(spec: "ExperimentSpec | Mapping[str, Any]") -> str:
    """Deterministic, filesystem- and env-safe identifier for a binding set.

    Readable part: sorted ``name_value`` slugs joined by ``-``. A short sha256
    digest of the canonical form is appended so that sanitization collisions
    (``1.0`` vs ``1-0``) still produce distinct ids.
    """
    bindings = spec.bindings if isinstance(spec, ExperimentSpec) else spec
    canonical = _canonical(bindings)
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:_ID_DIGEST_LEN]
    parts = []
    for name in sorted(bindings):
        piece = _slug(f"{name}_{format_token(bindings[name])}")
        if piece:
            parts.append(piece)
    parts.append(digest)
    return "-".join(parts)


@dataclass(frozen=True)
class ExperimentSpec:
    bindings: Mapping[str, Any]
    id: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "bindings", dict(self.bindings))
        if not self.id:
            object.__setattr__(self, "id", spec_id(self.bindings))

    def __hash__(self):
        return hash(self.id)

    def to_dict(self) -> dict:
        return {"id": self.id, "bindings": dict(self.bindings)}


def _validate(axes: Sequence[AxisDef]) -> None:
    seen = set()
    for axis in axes:
        if axis.name in seen:
            raise DuplicateAxis(f"axis {axis.name!r} declared more than once")
        seen.add(axis.name)
        if len(axis.values) == 0:
            raise EmptyAxis(f"axis {axis.name!r} has no values")


def expand(axes: Sequence[AxisDef]) -> list[ExperimentSpec]:
    """Cartesian product of ``axes`` in row-major order.

    Zero axes expand to a single spec with empty bindings.
    """
    axes = list(axes)
    _validate(axes)
    names = [a.name for a in axes]
    return [
        ExperimentSpec(dict(zip(names, combo)))
        for combo in itertools.product(*(a.values for a in axes))
    ]


# -- grid definition file -------------------------------------------------------
#
# {"axes": [{"name": "lr", "values": ["1e-3", "1e-4"]}, ...]}
#
# Numbers are kept as their literal source text. Any key other than the ones
# shown is rejected.

_GRID_KEYS = {"axes"}
_AXIS_KEYS = {"name", "values"}


def parse_grid(text: str) -> list[AxisDef]:
    try:
        doc = json.loads(text, parse_float=str, parse_int=str)
    except json.JSONDecodeError as exc:
        raise GridFormatError(f"grid is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise GridFormatError("grid document must be an object", key="<root>")
    for key in doc:
        if key not in _GRID_KEYS:
            raise GridFormatError(f"unknown grid key {key!r}", key=key)
    if "axes" not in doc:
        raise GridFormatError("grid document is missing 'axes'", key="axes")
    if not isinstance(doc["axes"], list):
        raise GridFormatError("'axes' must be a list", key="axes")
    axes = []
    for i, entry in enumerate(doc["axes"]):
        where = f"axes[{i}]"
        if not isinstance(entry, dict):
            raise GridFormatError(f"{where} must be an object", key=where)
        for key in entry:
            if key not in _AXIS_KEYS:
                raise GridFormatError(f"unknown key {key!r} in {where}", key=f"{where}.{key}")
        for key in ("name", "values"):
            if key not in entry:
                raise GridFormatError(f"{where} is missing {key!r}", key=f"{where}.{key}")
        if not isinstance(entry["name"], str) or not entry["name"]:
            raise GridFormatError(f"{where}.name must be a non-empty string", key=f"{where}.name")
        values = entry["values"]
        if not isinstance(values, list) or any(isinstance(v, (list, dict)) for v in values):
            raise GridFormatError(
                f"{where}.values must be a list of scalars", key=f"{where}.values"
            )
        axes.append(AxisDef(entry["name"], values))
    _validate(axes)
    return axes


def load_grid(path: str | Path) -> list[AxisDef]:
    return parse_grid(Path(path).read_text(encoding="utf-8"))


def dump_specs(specs: Sequence[ExperimentSpec]) -> str:
    return json.dumps([s.to_dict() for s in specs], indent=2) + "\n"


def load_specs(path: str | Path) -> list[ExperimentSpec]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    specs = []
    for entry in doc:
        spec = ExperimentSpec(entry["bindings"])
        if entry.get("id") and entry["id"] != spec.id:
            raise GridFormatError(f"spec id {entry['id']!r} does not match its bindings", key="id")
        specs.append(spec)
    return specs
