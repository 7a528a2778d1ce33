from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .exceptions import ArtifactError, SchemaMismatchError

METADATA_PREFIX = "# "


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    if hasattr(value, "item"):
        return format_cell(value.item())
    return str(value)


def atomic_write_text(path: Path, text: str) -> Path:
    """Write `text` next to `path` and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    return path


def render_table(
    metadata: Mapping[str, Any], header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> str:
    buffer = io.StringIO()
    for key, value in metadata.items():
        buffer.write(f"{METADATA_PREFIX}{key}: {format_cell(value)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buffer.getvalue()


def write_table(
    path: Path,
    metadata: Mapping[str, Any],
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> Path:
    """Write a CSV artifact: `# key: value` metadata lines, a header row, then the rows.

    Floats are written with 17 significant digits, so they read back bit-exact.
    """
    return atomic_write_text(path, render_table(metadata, header, rows))


def write_export(path: Path, exportable: Any) -> Path:
    """Write any object with an `export_table()` method."""
    metadata, header, rows = exportable.export_table()
    return write_table(path, metadata, header, rows)


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class Table:
    metadata: dict[str, str]
    header: list[str]
    rows: list[list[str]]

    def column(self, name: str) -> list[float]:
        index = self.header.index(name)
        return [float(row[index]) for row in self.rows]

    def body(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.rows)
        return buffer.getvalue()


def read_table(path: Path) -> Table:
    """Read a CSV artifact written by `write_table`.

    Raises:
        ArtifactError: if the file has no header row.
    """
    metadata: dict[str, str] = {}
    body: list[str] = []
    with open(path, encoding="utf-8", newline="") as f:
        for line in f:
            if line.startswith(METADATA_PREFIX.rstrip()) and not body:
                key, _, value = line[len(METADATA_PREFIX) :].rstrip("\n").partition(": ")
                metadata[key] = value
            else:
                body.append(line)
    parsed = list(csv.reader(body))
    if not parsed:
        raise ArtifactError(f"{path} has no header row")
    return Table(metadata, parsed[0], parsed[1:])


def body_digest(path: Path) -> str:
    """sha256 of the CSV body (header and rows, metadata excluded)."""
    return hashlib.sha256(read_table(path).body().encode("utf-8")).hexdigest()


def canonical_digest(payload: Any) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Violation:
    row: int
    column: str
    actual: str
    expected: str


@dataclass
class GoldenReport:
    artifact: Path
    golden: Path
    rel_tol: float
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _cells_match(actual: str, expected: str, rel_tol: float, abs_tol: float) -> bool:
    if actual == expected:
        return True
    try:
        a, b = float(actual), float(expected)
    except ValueError:
        return False
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return abs(a - b) <= rel_tol * max(abs(a), abs(b)) + abs_tol


def compare_golden(
    artifact: Path, golden: Path, rel_tol: float = 1e-6, abs_tol: float = 0.0
) -> GoldenReport:
    """Compare two CSV artifacts cell by cell.

    Raises:
        SchemaMismatchError: if the headers or the row counts differ.
    """
    actual, expected = read_table(artifact), read_table(golden)
    if actual.header != expected.header:
        raise SchemaMismatchError(
            f"Columns {actual.header} of {artifact} differ from {expected.header} of {golden}"
        )
    if len(actual.rows) != len(expected.rows):
        raise SchemaMismatchError(
            f"{artifact} has {len(actual.rows)} rows, {golden} has {len(expected.rows)}"
        )
    report = GoldenReport(artifact, golden, rel_tol)
    for index, (row_a, row_e) in enumerate(zip(actual.rows, expected.rows)):
        if len(row_a) != len(row_e):
            raise SchemaMismatchError(f"Row {index} of {artifact} has {len(row_a)} cells")
        for column, a, e in zip(actual.header, row_a, row_e):
            if not _cells_match(a, e, rel_tol, abs_tol):
                report.violations.append(Violation(index, column, a, e))
    return report
