from __future__ import annotations

import enum
import os
import platform
import shutil
from collections.abc import Callable
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

from ._parallel import ordered_map
from .artifacts import canonical_digest, compare_golden, write_export, write_json, write_table
from .asymptotics import (
    LogSplit,
    annihilate,
    candidate_exponents,
    fit_log_split,
    fit_psi_expansion,
)
from .blowup import NormalFormExponents, blowup_report
from .config import ScenarioConfig
from .darboux_core import DarbouxSystem, check_genericity
from .exceptions import ArtifactError, ScenarioError, SeriesPointError, TriplePointError
from .integrator import integral_series, pullback_weight, relative_grid
from .logger import logger
from .ode_validator import displacement_sweep, energy_drift, limit_cycle_match
from .oval_tracer import find_center, trace_sweep
from .tracing import attach_error_to_current_span, default_timing_processor, stage_span, trace
from .tracing.spans import SpanError
from .tracing.util import time_iso
from .version import __version__
from .zero_counter import scan_zeros, uniformity_study, zeros_with_bound

OUTPUT_ROOT_ENV = "TRIPLEPOINT_OUTPUT_ROOT"

SUBCOMMANDS = (
    "trace",
    "integrate",
    "zeros",
    "blowup-check",
    "monodromy-fit",
    "validate-ode",
    "uniformity",
)


class ExitCode(enum.IntEnum):
    OK = 0
    VALIDATION = 2
    NUMERICAL = 3
    USAGE = 64
    MALFORMED_CONFIG = 65

    @classmethod
    def of(cls, error: TriplePointError) -> ExitCode:
        """VALIDATION for scenario errors, also when a sweep wrapped one per point."""
        while isinstance(error, SeriesPointError):
            error = error.cause
        return cls.VALIDATION if isinstance(error, ScenarioError) else cls.NUMERICAL


@dataclass
class RunConfig:
    """Run-level settings, shared by every subcommand."""

    threads: int = 0
    """Worker threads for per-level and per-λ work. 0 runs everything in the calling thread; the
    artifacts are identical either way.
    """

    output_dir: Path | None = None
    """Where artifacts go. Defaults to `$TRIPLEPOINT_OUTPUT_ROOT/<scenario>/<subcommand>`, or
    `./runs/...` when the variable is unset.
    """

    golden_dir: Path | None = None
    """If set, every CSV artifact with a counterpart here is compared against it."""

    golden_rel_tol: float = 1e-6
    update_golden: bool = False
    """Copy the fresh CSV artifacts into `golden_dir` instead of comparing."""

    tracing_disabled: bool = False
    workflow_name: str | None = None
    """Name of the run trace. Defaults to the subcommand."""

    trace_metadata: dict[str, Any] | None = None

    def resolve_output(self, scenario: str, subcommand: str) -> Path:
        if self.output_dir is not None:
            return Path(self.output_dir)
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        return root / scenario / subcommand


@dataclass
class RunResult:
    subcommand: str
    exit_code: ExitCode
    output_dir: Path
    artifacts: list[Path] = field(default_factory=list)
    manifest: dict[str, Any] = field(default_factory=dict)
    error: TriplePointError | None = None


def _versions() -> dict[str, str]:
    versions = {"triplepoint": __version__, "python": platform.python_version()}
    for package in ("numpy", "scipy", "pydantic"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


class _Pipeline:
    """The artifacts of one subcommand run, written into `out`."""

    def __init__(self, config: ScenarioConfig, run_config: RunConfig, out: Path):
        self.config = config
        self.run_config = run_config
        self.out = out
        self.settings = config.settings()
        self.artifacts: list[Path] = []
        self.flags: dict[str, str] = {}
        """Checks that failed without raising; any flag makes the run a validation failure."""
        self.threads = run_config.threads

    def export(self, name: str, exportable: Any) -> None:
        self.artifacts.append(write_export(self.out / name, exportable))

    def flag(self, name: str, message: str) -> None:
        self.flags[name] = message

    def table(self, name: str, meta: dict[str, Any], header: list[str], rows: list[Any]) -> None:
        self.artifacts.append(write_table(self.out / name, meta, header, rows))

    @property
    def system(self) -> DarbouxSystem:
        return self.config.build_system()

    def level_grid(self, sys: DarbouxSystem) -> tuple[Any, list[float]]:
        nest = find_center(sys, self.settings["trace"])
        return nest, relative_grid(nest, self.config.grids.fractions())

    def trace(self) -> None:
        sys = self.system
        report = check_genericity(sys)
        nest = find_center(sys, self.settings["trace"])
        grid = relative_grid(nest, self.config.grids.ode_h_fractions)
        ovals = trace_sweep(sys, grid, self.settings["trace"], self.threads, nest)
        self.table(
            "center.csv",
            {"lambda": sys.lam, "a1": report.a1, "a2": report.a2},
            ["x", "y", "h_max", "scale"],
            [(nest.center[0], nest.center[1], nest.h_max, nest.scale)],
        )
        rows = []
        for index, oval in enumerate(ovals):
            self.export(f"oval_{index:03d}.csv", oval)
            rows.append(
                (
                    oval.h,
                    len(oval),
                    oval.length,
                    oval.area,
                    oval.diameter,
                    oval.closure_defect,
                    oval.level_defect,
                )
            )
        self.table(
            "ovals.csv",
            {"lambda": sys.lam},
            ["h", "points", "length", "area", "diameter", "closure_defect", "level_defect"],
            rows,
        )

    def integrate(self) -> None:
        sys = self.system
        nest, grid = self.level_grid(sys)
        series = integral_series(
            sys,
            self.config.build_perturbation(),
            grid,
            self.settings["trace"],
            self.settings["quadrature"],
            self.threads,
            nest,
        )
        self.export("series.csv", series)

    def zeros(self) -> None:
        sys = self.system
        series, report = zeros_with_bound(
            sys,
            self.config.build_perturbation(),
            self.config.grids.fractions(),
            self.settings["trace"],
            self.settings["quadrature"],
            self.settings["zeros"],
            self.settings["fit"],
            self.settings["contour"],
            self.threads,
            with_bound=self.config.study.model_bound,
        )
        self.export("series.csv", series)
        self.export("zeros.csv", report)

    def blowup_check(self) -> None:
        exponents = NormalFormExponents.of(self.system)
        report = blowup_report(exponents, self.config.study.blowup_samples, self.config.study.seed)
        self.table(
            "blowup.csv",
            {
                "eps": exponents.eps,
                "eps_plus": exponents.eps_plus,
                "eps_minus": exponents.eps_minus,
                "discrepancies": " ".join(s.label for s in report.discrepancies),
            },
            ["item", "value", "detail"],
            report.rows(),
        )

    def record_split(self, split: LogSplit) -> None:
        self.export("split.csv", split)
        if not split.stable:
            self.flag(
                "unstable_log_split",
                f"J2 differs by {split.stability_gap:.3e} between the λ half-grids "
                f"(tolerance {split.stability_tolerance:.3e})",
            )

    def monodromy_fit(self) -> None:
        sys = self.system
        eta = self.config.build_perturbation(split=True)
        fit = self.settings["fit"]
        a, q = sys.a, pullback_weight(sys, eta)
        t_values = sorted(self.config.grids.t_values)

        def series_at(lam: float) -> Any:
            at = sys.with_lambda(lam)
            grid = [lam**a / t for t in t_values]
            return integral_series(
                at, eta, grid, self.settings["trace"], self.settings["quadrature"], 0
            )

        lambdas = self.config.grids.split_lambdas()
        with stage_span("log_split_series", {"lambdas": lambdas, "t": t_values}):
            per_lambda = ordered_map(series_at, lambdas, self.threads)
        split = fit_log_split(per_lambda, a, q, fit)
        self.record_split(split)

        nest, grid = self.level_grid(sys)
        series = integral_series(
            sys, eta, grid, self.settings["trace"], self.settings["quadrature"], self.threads, nest
        )
        candidates = candidate_exponents(
            list(sys.exponents), a, fit.combination_depth, fit.exponent_window
        )
        expansion = fit_psi_expansion(series, candidates, a, q, fit)
        remainder, angles = annihilate(expansion)
        self.table(
            "expansion.csv",
            {
                "lambda": sys.lam,
                "residual": expansion.residual,
                "t_range": " ".join(f"{v:.17g}" for v in expansion.t_range or ()),
                "annihilating_angles": " ".join(f"{v:.17g}" for v in angles),
                "annihilated": remainder.is_zero(),
            },
            ["exponent", "log_power", "re", "im"],
            expansion.export_rows(),
        )

    def validate_ode(self) -> None:
        sys = self.system
        eta = self.config.build_perturbation()
        ode = self.settings["ode"]
        nest = find_center(sys, self.settings["trace"])
        grid = relative_grid(nest, self.config.grids.ode_h_fractions)
        series = integral_series(
            sys, eta, grid, self.settings["trace"], self.settings["quadrature"], self.threads, nest
        )
        zeros = scan_zeros(series, settings=self.settings["zeros"])
        profiles = displacement_sweep(
            sys, eta, self.config.perturbation.kappas, grid, ode, self.threads, nest
        )
        rows = [row for profile in profiles for row in profile.export_table()[2]]
        self.table("displacement.csv", {"lambda": sys.lam}, ["h", "D", "kappa"], rows)
        match_rows = []
        for profile in profiles:
            match = limit_cycle_match(profile, zeros)
            match_rows.extend((profile.kappa, *row) for row in match.export_table()[2])
        self.table(
            "match.csv",
            {"zeros": " ".join(f"{z.estimate:.17g}" for z in zeros.zeros)},
            ["kappa", "zero", "change", "distance", "estimate_distance"],
            match_rows,
        )
        drift_levels = [nest.relative(f) for f in (0.9, 0.6, 0.3)]
        drifts = ordered_map(lambda h: energy_drift(sys, h, ode, nest), drift_levels, self.threads)
        drift_rows = list(zip(drift_levels, drifts))
        self.table("drift.csv", {"lambda": sys.lam}, ["h", "relative_drift"], drift_rows)

    def uniformity(self) -> None:
        table = uniformity_study(
            self.system,
            self.config.build_perturbation(),
            self.config.study.uniformity_lambdas,
            self.config.grids.fractions(),
            self.settings["trace"],
            self.settings["quadrature"],
            self.settings["zeros"],
            self.settings["fit"],
            self.settings["contour"],
            self.threads,
            with_bound=self.config.study.model_bound,
        )
        self.export("uniformity.csv", table)
        for row in table.rows:
            if row.report is not None and row.report.zeros:
                self.export(f"zeros_lambda_{row.lam:.3e}.csv", row.report)


class Runner:
    @classmethod
    def run(
        cls,
        subcommand: str,
        config: ScenarioConfig,
        run_config: RunConfig | None = None,
    ) -> RunResult:
        """Run one subcommand on a validated scenario and write its artifacts and manifest.

        Library errors don't escape: they set the exit code and are recorded in the manifest.

        Raises:
            ValueError: if the subcommand is unknown.
        """
        if subcommand not in SUBCOMMANDS:
            raise ValueError(f"Unknown subcommand {subcommand!r}")
        run_config = run_config or RunConfig()
        out = run_config.resolve_output(config.name, subcommand)
        out.mkdir(parents=True, exist_ok=True)
        pipeline = _Pipeline(config, run_config, out)
        step: Callable[[], None] = getattr(pipeline, subcommand.replace("-", "_"))

        config_hash = canonical_digest(config.model_dump(mode="json"))
        metadata = {"scenario": config.name, "config_sha256": config_hash}
        metadata.update(run_config.trace_metadata or {})
        started = time_iso()
        exit_code = ExitCode.OK
        error: TriplePointError | None = None

        with trace(
            run_config.workflow_name or subcommand,
            metadata=metadata,
            disabled=run_config.tracing_disabled,
        ) as run_trace:
            with stage_span(subcommand, {"scenario": config.name}):
                try:
                    step()
                except TriplePointError as e:
                    exit_code, error = ExitCode.of(e), e
                if error is not None:
                    attach_error_to_current_span(
                        SpanError(message=error.message, data={"error_type": type(error).__name__})
                    )
                    logger.error(f"{subcommand} failed: {type(error).__name__}: {error.message}")

        if exit_code == ExitCode.OK and pipeline.flags:
            exit_code = ExitCode.VALIDATION

        golden: dict[str, Any] = {}
        if exit_code == ExitCode.OK and run_config.golden_dir is not None:
            golden = cls._golden(pipeline.artifacts, run_config)
            if any(entry["violations"] for entry in golden.values()):
                exit_code = ExitCode.VALIDATION

        timing_processor = default_timing_processor()
        manifest = {
            "subcommand": subcommand,
            "scenario": config.name,
            "config_sha256": config_hash,
            "config": config.model_dump(mode="json"),
            "versions": _versions(),
            "threads": run_config.threads,
            "started_at": started,
            "ended_at": time_iso(),
            "timings": timing_processor.timings(run_trace.trace_id),
            "status": exit_code.name.lower(),
            "exit_code": int(exit_code),
            "artifacts": [p.name for p in pipeline.artifacts],
            "golden": golden,
            "flags": pipeline.flags,
            "error": None
            if error is None
            else {"type": type(error).__name__, "message": error.message},
        }
        timing_processor.discard(run_trace.trace_id)
        write_json(out / "manifest.json", manifest)
        return RunResult(subcommand, exit_code, out, pipeline.artifacts, manifest, error)

    @staticmethod
    def _golden(artifacts: list[Path], run_config: RunConfig) -> dict[str, Any]:
        assert run_config.golden_dir is not None
        golden_dir = Path(run_config.golden_dir)
        results: dict[str, Any] = {}
        for path in artifacts:
            if path.suffix != ".csv":
                continue
            target = golden_dir / path.name
            if run_config.update_golden:
                golden_dir.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(path, target)
                logger.info(f"Pinned {path.name} into {golden_dir}")
                results[path.name] = {"pinned": True, "violations": []}
            elif target.exists():
                try:
                    report = compare_golden(path, target, run_config.golden_rel_tol)
                except ArtifactError as e:
                    results[path.name] = {"violations": [{"schema": e.message}]}
                    logger.warning(f"{path.name}: {e.message}")
                    continue
                results[path.name] = {
                    "violations": [
                        {
                            "row": v.row,
                            "column": v.column,
                            "actual": v.actual,
                            "expected": v.expected,
                        }
                        for v in report.violations
                    ]
                }
                if report.violations:
                    logger.warning(f"{path.name}: {len(report.violations)} golden violations")
        return results


def tail_summary(result: RunResult) -> str:
    """One-line outcome of a run, for the command line."""
    status = result.exit_code.name.lower()
    detail = f" ({type(result.error).__name__}: {result.error.message})" if result.error else ""
    count = len(result.artifacts)
    return f"{result.subcommand}: {status}{detail}; {count} artifacts in {result.output_dir}"
