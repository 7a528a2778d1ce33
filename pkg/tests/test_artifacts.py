from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from triplepoint.artifacts import (
    body_digest,
    canonical_digest,
    compare_golden,
    format_cell,
    read_table,
    write_json,
    write_table,
)
from triplepoint.exceptions import ArtifactError, SchemaMismatchError


def test_format_cell() -> None:
    assert format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(3) == "3"
    assert format_cell(0.1 + 0.2) == "0.30000000000000004"
    assert format_cell(np.int64(7)) == "7"
    assert format_cell(np.float64(0.5)) == "0.5"
    assert format_cell("C_R") == "C_R"


def test_tables_read_back_bit_exact(tmp_path: Path) -> None:
    values = [1 / 3, math.pi * 1e-17, -2.5e300]
    path = write_table(
        tmp_path / "nested" / "series.csv",
        {"lambda": 0.1, "note": "unit"},
        ["h", "I"],
        [(v, 2 * v) for v in values],
    )
    assert path.exists()
    assert not path.with_suffix(".csv.tmp").exists()

    table = read_table(path)
    assert table.metadata == {"lambda": "0.10000000000000001", "note": "unit"}
    assert table.header == ["h", "I"]
    assert table.column("h") == values
    assert table.column("I") == [2 * v for v in values]


def test_digest_ignores_metadata(tmp_path: Path) -> None:
    a = write_table(tmp_path / "a.csv", {"run": 1}, ["x"], [(1.0,)])
    b = write_table(tmp_path / "b.csv", {"run": 2}, ["x"], [(1.0,)])
    c = write_table(tmp_path / "c.csv", {"run": 1}, ["x"], [(2.0,)])
    assert body_digest(a) == body_digest(b)
    assert body_digest(a) != body_digest(c)


def test_canonical_digest_ignores_key_order() -> None:
    assert canonical_digest({"a": 1, "b": [1, 2]}) == canonical_digest({"b": [1, 2], "a": 1})
    assert canonical_digest({"a": 1}) != canonical_digest({"a": 2})


def test_write_json(tmp_path: Path) -> None:
    path = write_json(tmp_path / "manifest.json", {"b": 1, "a": {"c": None}})
    assert json.loads(path.read_text()) == {"a": {"c": None}, "b": 1}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')


def test_empty_files_are_not_tables(tmp_path: Path) -> None:
    path = tmp_path / "empty.csv"
    path.write_text("# lambda: 1\n")
    with pytest.raises(ArtifactError):
        read_table(path)


def test_golden_comparison(tmp_path: Path) -> None:
    header = ["h", "I", "flag"]
    golden = write_table(tmp_path / "golden.csv", {}, header, [(0.1, 1.0, "a"), (0.05, 2.0, "b")])
    same = write_table(
        tmp_path / "same.csv", {"extra": 1}, header, [(0.1, 1.0 + 1e-9, "a"), (0.05, 2.0, "b")]
    )
    report = compare_golden(same, golden)
    assert report.ok
    assert report.rel_tol == 1e-6

    drifted = write_table(
        tmp_path / "drifted.csv", {}, header, [(0.1, 1.1, "a"), (0.05, 2.0, "c")]
    )
    report = compare_golden(drifted, golden)
    assert not report.ok
    assert [(v.row, v.column) for v in report.violations] == [(0, "I"), (1, "flag")]
    assert report.violations[0].expected == "1"
    assert compare_golden(drifted, golden, rel_tol=0.2).violations[0].column == "flag"


def test_golden_comparison_of_nan_and_absolute_tolerance(tmp_path: Path) -> None:
    golden = write_table(tmp_path / "golden.csv", {}, ["v"], [(float("nan"),), (0.0,)])
    actual = write_table(tmp_path / "actual.csv", {}, ["v"], [(float("nan"),), (1e-14,)])
    assert not compare_golden(actual, golden).ok
    assert compare_golden(actual, golden, abs_tol=1e-12).ok


def test_golden_schema_mismatch(tmp_path: Path) -> None:
    golden = write_table(tmp_path / "golden.csv", {}, ["h", "I"], [(0.1, 1.0)])
    renamed = write_table(tmp_path / "renamed.csv", {}, ["h", "J"], [(0.1, 1.0)])
    longer = write_table(tmp_path / "longer.csv", {}, ["h", "I"], [(0.1, 1.0), (0.05, 2.0)])
    with pytest.raises(SchemaMismatchError):
        compare_golden(renamed, golden)
    with pytest.raises(SchemaMismatchError):
        compare_golden(longer, golden)
