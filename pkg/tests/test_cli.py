from __future__ import annotations

import json
from pathlib import Path

import pytest

from triplepoint import load_scenario
from triplepoint.artifacts import write_table
from triplepoint.cli import main


def test_scenarios_are_listed(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["scenarios"]) == 0
    assert capsys.readouterr().out.split() == [
        "asymmetric_scenario",
        "golden_scenario",
        "unit_scenario",
    ]


def test_run_a_bundled_scenario(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    code = main(["run", "blowup-check", "unit_scenario", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "manifest.json").exists()
    assert capsys.readouterr().out.startswith("blowup-check: ok")


def test_run_a_scenario_file(tmp_path: Path) -> None:
    path = tmp_path / "tiny.json"
    path.write_text(
        json.dumps(
            {
                "name": "tiny",
                "darboux": {"normal_form": {"eps": 1.0, "eps_plus": 2.0, "eps_minus": 1.0}},
                "study": {"blowup_samples": 10},
            }
        )
    )
    out = tmp_path / "out"
    assert main(["run", "blowup-check", "--config", str(path), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["scenario"] == "tiny"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["run"],
        ["run", "plot", "unit_scenario"],
        ["run", "trace"],
        ["run", "trace", "no_such_scenario"],
        ["run", "trace", "unit_scenario", "--update-golden"],
        ["run", "trace", "unit_scenario", "--threads", "-1"],
        ["--log-level", "LOUD", "scenarios"],
    ],
)
def test_usage_errors(argv: list[str], capsys: pytest.CaptureFixture[str]) -> None:
    assert main(argv) == 64
    assert capsys.readouterr().err


def test_malformed_config(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "bad", "darboux": {}, "grids": {"h_count": 1}}))
    assert main(["run", "trace", "--config", str(path)]) == 65
    err = capsys.readouterr().err
    assert "config: grids.h_count:" in err

    path.write_text("{not json")
    assert main(["run", "trace", "--config", str(path)]) == 65


def test_wrongly_typed_tolerances_are_malformed_config(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    data = load_scenario("unit_scenario").model_dump(mode="json")
    data["tolerances"]["trace"] = {"max_steps": "many"}
    path = tmp_path / "typed.json"
    path.write_text(json.dumps(data))
    assert main(["run", "trace", "--config", str(path)]) == 65
    err = capsys.readouterr().err
    assert "Invalid settings for TraceSettings: max_steps" in err


def test_compare_golden(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    golden = write_table(tmp_path / "golden.csv", {}, ["h", "I"], [(0.1, 1.0)])
    same = write_table(tmp_path / "same.csv", {}, ["h", "I"], [(0.1, 1.0)])
    other = write_table(tmp_path / "other.csv", {}, ["h", "I"], [(0.1, 2.0)])
    assert main(["compare-golden", str(same), str(golden)]) == 0
    assert main(["compare-golden", str(other), str(golden)]) == 2
    assert "row 0 column I: 2 != 1" in capsys.readouterr().out
    assert main(["compare-golden", str(tmp_path / "missing.csv"), str(golden)]) == 2
