import logging
import sys

from .asymptotics import (
    LambdaModel,
    LogSplit,
    PsiExpansion,
    annihilate,
    annihilation_angles,
    candidate_exponents,
    fit_log_split,
    fit_log_split_arrays,
    fit_power_log,
    fit_psi_expansion,
    held_out_error,
    var_lambda,
    var_t,
    var_t_model,
)
from .blowup import (
    BlowupReport,
    ChartPoint,
    NormalFormExponents,
    SaddleData,
    blowup_report,
    chart_inverse,
    chart_map,
    chart_transition,
    exceptional_G,
    psi,
    psi_reduction,
    pullback_H,
    qh_chart_map,
    qh_total_transform,
    rescaled_t,
    saddle_eigen,
)
from .config import ScenarioConfig, bundled_scenarios, load_scenario
from .darboux_core import (
    DarbouxFactor,
    DarbouxSystem,
    GenericityReport,
    Perturbation,
    UnfoldingFactor,
    build_normal_form,
    check_genericity,
    eval_H,
    eval_omega,
    exact_perturbation,
    oriented_system,
)
from .exceptions import (
    ArtifactError,
    ConditioningError,
    DegeneracyError,
    DomainError,
    EscapeError,
    InvalidExponentError,
    InvalidUnitError,
    ModelMismatchError,
    NoCenterError,
    NoisySeriesError,
    NonClosureError,
    NotACenterError,
    NumericalError,
    OnContourZeroError,
    OracleFailureError,
    PrecisionLossError,
    RangeError,
    ScenarioError,
    SchemaMismatchError,
    SeriesPointError,
    TriplePointError,
    UnsupportedContinuationError,
    UntrustedBoundError,
)
from .integrator import (
    IntegralSeries,
    integral_at,
    integral_series,
    pseudo_abelian,
    pullback_weight,
    relative_grid,
    stokes_oracle,
)
from .ode_validator import (
    DisplacementProfile,
    MatchReport,
    SectionPoint,
    displacement,
    displacement_sweep,
    energy_drift,
    limit_cycle_match,
    vector_field,
)
from .oval_tracer import NestRange, Oval, find_center, trace_oval, trace_sweep
from .polynomial import Polynomial2
from .run import ExitCode, RunConfig, Runner, RunResult
from .settings import (
    ContourSettings,
    FitSettings,
    OdeSettings,
    QuadratureSettings,
    TraceSettings,
    ZeroSettings,
)
from .tracing import (
    Span,
    Trace,
    TracingProcessor,
    add_trace_processor,
    set_trace_processors,
    set_tracing_disabled,
    stage_span,
    trace,
)
from .version import __version__
from .zero_counter import (
    ArgumentBound,
    Contour,
    UniformityTable,
    ZeroReport,
    argument_principle_count,
    delta_arg,
    scan_zeros,
    sector_contour_path,
    uniformity_study,
)


def enable_verbose_stdout_logging() -> None:
    """Enables verbose logging to stdout. This is useful for debugging."""
    logger = logging.getLogger("triplepoint")
    logger.setLevel(logging.DEBUG)
    logger.addHandler(logging.StreamHandler(sys.stdout))


__all__ = [
    "__version__",
    "Polynomial2",
    "DarbouxFactor",
    "UnfoldingFactor",
    "DarbouxSystem",
    "Perturbation",
    "GenericityReport",
    "build_normal_form",
    "oriented_system",
    "exact_perturbation",
    "eval_H",
    "eval_omega",
    "check_genericity",
    "NestRange",
    "Oval",
    "find_center",
    "trace_oval",
    "trace_sweep",
    "IntegralSeries",
    "pseudo_abelian",
    "stokes_oracle",
    "integral_at",
    "integral_series",
    "relative_grid",
    "pullback_weight",
    "ChartPoint",
    "NormalFormExponents",
    "SaddleData",
    "BlowupReport",
    "chart_map",
    "chart_inverse",
    "chart_transition",
    "pullback_H",
    "exceptional_G",
    "rescaled_t",
    "saddle_eigen",
    "qh_chart_map",
    "qh_total_transform",
    "psi",
    "psi_reduction",
    "blowup_report",
    "LogSplit",
    "PsiExpansion",
    "LambdaModel",
    "fit_log_split",
    "fit_log_split_arrays",
    "fit_power_log",
    "fit_psi_expansion",
    "held_out_error",
    "candidate_exponents",
    "var_t",
    "var_t_model",
    "var_lambda",
    "annihilate",
    "annihilation_angles",
    "Contour",
    "ZeroReport",
    "ArgumentBound",
    "UniformityTable",
    "scan_zeros",
    "delta_arg",
    "sector_contour_path",
    "argument_principle_count",
    "uniformity_study",
    "SectionPoint",
    "DisplacementProfile",
    "MatchReport",
    "vector_field",
    "displacement",
    "displacement_sweep",
    "energy_drift",
    "limit_cycle_match",
    "TraceSettings",
    "QuadratureSettings",
    "FitSettings",
    "ContourSettings",
    "OdeSettings",
    "ZeroSettings",
    "ScenarioConfig",
    "load_scenario",
    "bundled_scenarios",
    "RunConfig",
    "RunResult",
    "Runner",
    "ExitCode",
    "Trace",
    "Span",
    "TracingProcessor",
    "trace",
    "stage_span",
    "add_trace_processor",
    "set_trace_processors",
    "set_tracing_disabled",
    "TriplePointError",
    "ScenarioError",
    "InvalidExponentError",
    "InvalidUnitError",
    "DomainError",
    "NumericalError",
    "NoCenterError",
    "NotACenterError",
    "RangeError",
    "NonClosureError",
    "PrecisionLossError",
    "OracleFailureError",
    "SeriesPointError",
    "DegeneracyError",
    "ModelMismatchError",
    "ConditioningError",
    "UnsupportedContinuationError",
    "NoisySeriesError",
    "OnContourZeroError",
    "UntrustedBoundError",
    "EscapeError",
    "ArtifactError",
    "SchemaMismatchError",
    "enable_verbose_stdout_logging",
]
