from __future__ import annotations

import json
import math
from collections.abc import Iterator
from pathlib import Path

import pytest

from triplepoint import ExitCode, RunConfig, Runner, ScenarioConfig, load_scenario
from triplepoint.artifacts import canonical_digest, read_table, write_table
from triplepoint.asymptotics import fit_log_split_arrays
from triplepoint.exceptions import DomainError, NonClosureError, SeriesPointError
from triplepoint.run import _Pipeline, tail_summary
from triplepoint.tracing import default_timing_processor, set_trace_processors

from .testing_processor import SPAN_PROCESSOR_TESTING, fetch_traces


@pytest.fixture
def timed() -> Iterator[None]:
    set_trace_processors([SPAN_PROCESSOR_TESTING, default_timing_processor()])
    yield
    set_trace_processors([SPAN_PROCESSOR_TESTING])


def test_blowup_check_writes_artifacts_and_manifest(tmp_path: Path, timed: None) -> None:
    config = load_scenario("unit_scenario")
    result = Runner.run("blowup-check", config, RunConfig(output_dir=tmp_path))
    assert result.exit_code == ExitCode.OK
    assert result.error is None
    assert [p.name for p in result.artifacts] == ["blowup.csv"]

    table = read_table(tmp_path / "blowup.csv")
    assert table.header == ["item", "value", "detail"]
    assert table.metadata["discrepancies"] == ""

    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["exit_code"] == 0
    assert manifest["artifacts"] == ["blowup.csv"]
    assert manifest["config_sha256"] == canonical_digest(config.model_dump(mode="json"))
    assert manifest["versions"]["triplepoint"]
    assert manifest["timings"]["blowup-check"]["count"] == 1
    assert manifest["error"] is None

    traces = fetch_traces()
    assert len(traces) == 1
    assert traces[0].name == "blowup-check"


def test_the_run_trace_can_be_disabled(tmp_path: Path) -> None:
    config = load_scenario("unit_scenario")
    run_config = RunConfig(output_dir=tmp_path, tracing_disabled=True)
    assert Runner.run("blowup-check", config, run_config).exit_code == ExitCode.OK
    assert fetch_traces() == []


def test_unknown_subcommand(tmp_path: Path) -> None:
    with pytest.raises(ValueError):
        Runner.run("plot", load_scenario("unit_scenario"), RunConfig(output_dir=tmp_path))


def test_numerical_failures_set_the_exit_code(tmp_path: Path) -> None:
    data = load_scenario("unit_scenario").model_dump(mode="json")
    data["tolerances"]["trace"] = {"max_steps": 1}
    config = ScenarioConfig.model_validate(data)
    result = Runner.run("trace", config, RunConfig(output_dir=tmp_path))
    assert result.exit_code == ExitCode.NUMERICAL
    assert result.error is not None
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "numerical"
    assert manifest["exit_code"] == 3
    assert manifest["error"]["type"] == type(result.error).__name__


def test_pinning_and_comparing_golden_artifacts(tmp_path: Path) -> None:
    config = load_scenario("unit_scenario")
    golden = tmp_path / "golden"
    pin = RunConfig(output_dir=tmp_path / "pin", golden_dir=golden, update_golden=True)
    pinned = Runner.run("blowup-check", config, pin)
    assert pinned.manifest["golden"] == {"blowup.csv": {"pinned": True, "violations": []}}
    assert (golden / "blowup.csv").exists()

    check = RunConfig(output_dir=tmp_path / "check", golden_dir=golden)
    assert Runner.run("blowup-check", config, check).exit_code == ExitCode.OK

    table = read_table(golden / "blowup.csv")
    table.rows[0][1] = "12345"
    write_table(golden / "blowup.csv", table.metadata, table.header, table.rows)
    result = Runner.run("blowup-check", config, check)
    assert result.exit_code == ExitCode.VALIDATION
    violations = result.manifest["golden"]["blowup.csv"]["violations"]
    assert [(v["row"], v["column"], v["expected"]) for v in violations] == [(0, "value", "12345")]


def test_default_output_directory(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setenv("TRIPLEPOINT_OUTPUT_ROOT", str(tmp_path))
    assert RunConfig().resolve_output("unit_scenario", "zeros") == tmp_path / "unit_scenario/zeros"
    monkeypatch.delenv("TRIPLEPOINT_OUTPUT_ROOT")
    assert RunConfig().resolve_output("s", "trace") == Path("runs/s/trace")
    assert RunConfig(output_dir=tmp_path).resolve_output("s", "trace") == tmp_path


def test_tail_summary(tmp_path: Path) -> None:
    result = Runner.run(
        "blowup-check", load_scenario("unit_scenario"), RunConfig(output_dir=tmp_path)
    )
    assert tail_summary(result) == f"blowup-check: ok; 1 artifacts in {tmp_path}"


@pytest.mark.slow
def test_trace_and_integrate_are_thread_independent(tmp_path: Path) -> None:
    config = load_scenario("unit_scenario")
    for subcommand in ("trace", "integrate"):
        sequential = Runner.run(subcommand, config, RunConfig(output_dir=tmp_path / "seq"))
        threaded = Runner.run(
            subcommand, config, RunConfig(output_dir=tmp_path / "par", threads=4)
        )
        assert sequential.exit_code == threaded.exit_code == ExitCode.OK
        for a, b in zip(sequential.artifacts, threaded.artifacts):
            assert a.name == b.name
            assert read_table(a).rows == read_table(b).rows


def test_scenario_errors_inside_a_sweep_are_validation_failures(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    wrapped = SeriesPointError(2, SeriesPointError(0, DomainError("λ is outside (0, 1.5]")))
    assert ExitCode.of(wrapped) == ExitCode.VALIDATION
    assert ExitCode.of(SeriesPointError(2, NonClosureError("no return"))) == ExitCode.NUMERICAL

    def failing_sweep(self: _Pipeline) -> None:
        raise wrapped

    monkeypatch.setattr(_Pipeline, "trace", failing_sweep)
    result = Runner.run("trace", load_scenario("unit_scenario"), RunConfig(output_dir=tmp_path))
    assert result.exit_code == ExitCode.VALIDATION
    assert result.manifest["status"] == "validation"
    assert result.manifest["error"]["type"] == "SeriesPointError"


def test_an_unstable_log_split_fails_the_run(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    lambdas = [2.0**-k for k in range(6, 15)]
    mid = math.log(lambdas[4])
    values = [[100.0 + math.log(lam) + 0.5 * max(mid - math.log(lam), 0.0)] for lam in lambdas]

    def kinked_fit(self: _Pipeline) -> None:
        self.record_split(fit_log_split_arrays(lambdas, [1.0], values))

    monkeypatch.setattr(_Pipeline, "monodromy_fit", kinked_fit)
    config = load_scenario("unit_scenario")
    result = Runner.run("monodromy-fit", config, RunConfig(output_dir=tmp_path))
    assert result.exit_code == ExitCode.VALIDATION
    assert result.error is None
    assert list(result.manifest["flags"]) == ["unstable_log_split"]
    assert read_table(tmp_path / "split.csv").metadata["stable"] == "false"


def test_runs_without_failed_checks_have_no_flags(tmp_path: Path) -> None:
    result = Runner.run(
        "blowup-check", load_scenario("unit_scenario"), RunConfig(output_dir=tmp_path)
    )
    assert result.manifest["flags"] == {}
