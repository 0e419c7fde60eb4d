"""Compute ledger: per-model accounting rows, aggregation, audits and reports.

Sums use ``math.fsum`` so row and column order cannot move a total.
Missing cells are zeroed inside :func:`aggregate` but always flagged, and
:func:`report` renders them as ``?``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "LedgerRow",
    "Discrepancy",
    "AggregateTable",
    "UnknownGroupKey",
    "LedgerFormatError",
    "FIELDS",
    "TOKEN_FIELDS",
    "NUMERIC_FIELDS",
    "DEFAULT_TOLERANCE",
    "aggregate",
    "verify",
    "report",
    "verify_document",
    "rows_to_csv",
    "read_csv",
    "write_csv",
    "append_csv",
    "load_stated",
    "fixture_path",
    "load_fixture",
]

DEFAULT_TOLERANCE = 0.05

TOKEN_FIELDS = ("application", "network", "dataset")
NUMERIC_FIELDS = (
    "networks", "models", "params_millions", "gpu_hours", "vram_gb", "imagery_gb",
    "epochs", "wall_hours",
)
FIELDS = TOKEN_FIELDS + NUMERIC_FIELDS
_INT_FIELDS = {"networks", "models", "epochs"}


class UnknownGroupKey(KeyError):
    pass


class LedgerFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LedgerRow:
    application: str | None = None
    network: str | None = None
    dataset: str | None = None
    networks: int | None = None
    models: int | None = None
    params_millions: float | None = None
    gpu_hours: float | None = None
    vram_gb: float | None = None
    imagery_gb: float | None = None
    epochs: int | None = None
    wall_hours: float | None = None

    def __post_init__(self):
        for name in NUMERIC_FIELDS:
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")

    def get(self, name: str):
        return getattr(self, name)


@dataclass(frozen=True)
class Discrepancy:
    table: str
    column: str
    stated: float
    computed: float
    delta: float
    group: str | None = None

    def __str__(self):
        where = f"{self.column}" if self.group is None else f"{self.column} [{self.group}]"
        return (f"table {self.table}: {where} stated {_fmt(self.stated)} "
                f"computed {_fmt(self.computed)} delta {_fmt(self.delta)}")


@dataclass
class AggregateTable:
    group_keys: tuple
    groups: dict = field(default_factory=dict)   # group tuple -> {column: sum}
    missing: dict = field(default_factory=dict)  # group tuple -> set of columns with blanks
    total: dict = field(default_factory=dict)
    total_missing: set = field(default_factory=set)

    def __getitem__(self, group):
        if not isinstance(group, tuple):
            group = (group,)
        return self.groups[group]


def _column_sums(rows: Sequence[LedgerRow]) -> tuple[dict, set]:
    sums, missing = {}, set()
    for name in NUMERIC_FIELDS:
        vals = [getattr(r, name) for r in rows]
        if any(v is None for v in vals):
            missing.add(name)
        sums[name] = math.fsum(v for v in vals if v is not None)
    return sums, missing


def aggregate(rows: Iterable[LedgerRow], group_keys: Sequence[str] = ()) -> AggregateTable:
    """Per-group column sums plus grand totals.

    Groups appear in order of first occurrence. Blank cells count as zero and
    the column is listed in ``missing`` for that group (and in
    ``total_missing``).
    """
    rows = list(rows)
    group_keys = tuple(group_keys)
    for key in group_keys:
        if key not in TOKEN_FIELDS:
            raise UnknownGroupKey(key)
    buckets: dict = {}
    for r in rows:
        buckets.setdefault(tuple(getattr(r, k) for k in group_keys), []).append(r)
    table = AggregateTable(group_keys)
    for g, members in buckets.items():
        table.groups[g], table.missing[g] = _column_sums(members)
    table.total, table.total_missing = _column_sums(rows)
    return table


def verify(
    rows: Iterable[LedgerRow],
    stated_totals: Mapping,
    tolerance: float = DEFAULT_TOLERANCE,
    group_by: str | None = None,
    table: str = "",
) -> list[Discrepancy]:
    """Compare recomputed column sums against stated totals.

    ``stated_totals`` is ``{column: value}`` for grand totals, or, with
    ``group_by``, ``{group value: {column: value}}``. An empty result means
    every stated figure is reproduced within ``tolerance``.
    """
    rows = list(rows)
    out = []
    if group_by is None:
        computed, _ = _column_sums(rows)
        checks = [(None, computed, stated_totals)]
    else:
        agg = aggregate(rows, [group_by])
        checks = []
        for group, stated in stated_totals.items():
            key = (group,)
            if key not in agg.groups:
                raise LedgerFormatError(f"stated totals name unknown {group_by} {group!r}")
            checks.append((group, agg.groups[key], stated))
    for group, computed, stated in checks:
        for column, value in stated.items():
            if column not in NUMERIC_FIELDS:
                raise LedgerFormatError(f"unknown column {column!r} in stated totals")
            delta = abs(value - computed[column])
            # one-decimal figures are not exact in binary; don't flag a delta of exactly tolerance
            if delta > tolerance + 1e-9 * max(1.0, abs(value)):
                out.append(Discrepancy(table, column, value, computed[column], delta, group))
    return out


# -- report ---------------------------------------------------------------------

_REPORT_COLUMNS = (
    ("Networks", "networks"),
    ("Models", "models"),
    ("Parameters (M)", "params_millions"),
    ("Imagery (GB)", "imagery_gb"),
    ("Epochs", "epochs"),
    ("Time (h)", "wall_hours"),
)


def _fmt(v) -> str:
    if v is None:
        return "?"
    if float(v).is_integer():
        return str(int(v))
    return f"{v:.1f}"


def _label(r: LedgerRow) -> str:
    parts = [p for p in (r.application, r.network, r.dataset) if p]
    return " / ".join(parts) or "-"


def report(rows: Sequence[LedgerRow], title: str = "Summary of Compute") -> str:
    """Fixed-width table in compute-summary column order with a TOTAL row.

    A column with any blank cell shows ``?`` for that cell; its total covers
    only the filled cells and is marked ``*``.
    """
    rows = list(rows)
    sums, missing = _column_sums(rows)
    header = ["Scientific Application"] + [h for h, _ in _REPORT_COLUMNS]
    body = [[_label(r)] + [_fmt(getattr(r, c)) for _, c in _REPORT_COLUMNS] for r in rows]
    empty = {c for _, c in _REPORT_COLUMNS if all(getattr(r, c) is None for r in rows)}
    total = ["TOTAL"] + [
        "?" if c in empty else _fmt(sums[c]) + ("*" if c in missing else "")
        for _, c in _REPORT_COLUMNS
    ]
    widths = [max(len(line[i]) for line in [header, total] + body) for i in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return " | ".join([first] + rest).rstrip()

    rule = "-+-".join("-" * w for w in widths)
    out = [title, rule, line(header), rule]
    if not rows:
        return "\n".join(out) + "\n"
    out += [line(b) for b in body]
    out += [rule, line(total)]
    if missing:
        flagged = ", ".join(h for h, c in _REPORT_COLUMNS if c in missing)
        if flagged:
            out.append(f"* total excludes blank cells: {flagged}")
    return "\n".join(out) + "\n"


# -- CSV storage ----------------------------------------------------------------


def _parse_cell(name: str, text: str):
    text = text.strip()
    if text == "":
        return None
    if name in TOKEN_FIELDS:
        return text
    try:
        value = float(text)
    except ValueError as exc:
        raise LedgerFormatError(f"column {name!r}: {text!r} is not a number") from exc
    if name in _INT_FIELDS and value.is_integer():
        return int(value)
    return value


def _rows_from_reader(reader) -> list[LedgerRow]:
    try:
        header = next(reader)
    except StopIteration:
        return []
    if tuple(h.strip() for h in header) != FIELDS:
        raise LedgerFormatError(f"ledger header must be {','.join(FIELDS)}")
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(FIELDS):
            raise LedgerFormatError(f"line {lineno}: expected {len(FIELDS)} cells, got {len(cells)}")
        try:
            rows.append(LedgerRow(**{n: _parse_cell(n, c) for n, c in zip(FIELDS, cells)}))
        except ValueError as exc:
            raise LedgerFormatError(f"line {lineno}: {exc}") from exc
    return rows


def read_csv(path: str | Path) -> list[LedgerRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return _rows_from_reader(csv.reader(fh))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Iterable[LedgerRow], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(FIELDS)
    for r in rows:
        w.writerow([_cell(getattr(r, n)) for n in FIELDS])
    return buf.getvalue()


def write_csv(path: str | Path, rows: Iterable[LedgerRow]) -> None:
    Path(path).write_text(rows_to_csv(rows), encoding="utf-8")


def append_csv(path: str | Path, rows: Iterable[LedgerRow]) -> None:
    """Append rows, writing the header first if the file is new or empty."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    if not fresh:
        with open(path, newline="", encoding="utf-8") as fh:
            first = next(csv.reader(fh), None)
        if first is None or tuple(first) != FIELDS:
            raise LedgerFormatError(f"{path} does not carry the ledger header")
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows, header=fresh))


def load_stated(path: str | Path) -> dict:
    """Stated-totals document: ``{"table": id, "group_by": col|null, "totals": {...}}``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(doc) - {"table", "group_by", "totals", "source"}
    if unknown or "totals" not in doc:
        raise LedgerFormatError(f"bad stated-totals document {path}")
    return doc


# -- shipped fixtures -----------------------------------------------------------
#
# table2.csv            transformer compute statistics, one row per (network, dataset)
# table2_totals.json    the TOTAL row, per dataset
# table3.csv            burned-area model timing (average seconds as hours)
# table3_metrics.csv    burned-area precision / recall / F1 / IoU
# table4.csv            compute summary, one row per application
# table4_totals.json    the TOTAL row
# table4_text.json      per-application figures stated outside the summary table


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("hypersweep").joinpath("data", name)))


def load_fixture(name: str) -> list[LedgerRow]:
    return read_csv(fixture_path(name))


def verify_document(rows: Sequence[LedgerRow], doc: Mapping,
                    tolerance: float = DEFAULT_TOLERANCE) -> list[Discrepancy]:
    return verify(rows, doc["totals"], tolerance, group_by=doc.get("group_by"),
                  table=str(doc.get("table", "")))
