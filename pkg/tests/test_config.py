from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest
from pydantic import ValidationError

from triplepoint import ScenarioConfig, bundled_scenarios, load_scenario
from triplepoint.config import scenario_text
from triplepoint.exceptions import ScenarioError

NORMAL_FORM: dict[str, Any] = {
    "name": "tiny",
    "darboux": {"normal_form": {"eps": 1.0, "eps_plus": 1.0, "eps_minus": 1.0}},
}


def scenario(**changes: Any) -> dict[str, Any]:
    data = json.loads(json.dumps(NORMAL_FORM))
    data.update(changes)
    return data


def test_bundled_scenarios() -> None:
    assert bundled_scenarios() == ["asymmetric_scenario", "golden_scenario", "unit_scenario"]
    for name in bundled_scenarios():
        config = load_scenario(name)
        assert config.name == name
        assert config.build_system().name == name


def test_unit_scenario() -> None:
    config = load_scenario("unit_scenario")
    sys = config.build_system()
    assert sys.lam == 1.0
    assert sys.exponents == (1.0, 1.0, 1.0)
    eta = config.build_perturbation()
    assert eta.n == 1
    assert eta.S.value(2.0, 3.0) == 2.0
    assert eta.R.value(2.0, 3.0) == 0.0
    assert config.perturbation.kappas == [1e-3, 5e-4, 2.5e-4]
    assert config.study.model_bound


def test_level_and_lambda_grids() -> None:
    grids = load_scenario("unit_scenario").grids
    fractions = grids.fractions()
    assert len(fractions) == 200
    assert fractions[0] == pytest.approx(0.95)
    assert fractions[-1] == pytest.approx(1e-3)
    assert all(a > b for a, b in zip(fractions, fractions[1:]))

    lambdas = grids.split_lambdas()
    assert len(lambdas) == 9
    assert lambdas[0] == 2.0**-6
    assert lambdas[-1] == 2.0**-14


def test_explicit_fractions_are_sorted_and_deduplicated() -> None:
    config = ScenarioConfig.model_validate(scenario(grids={"h_fractions": [0.1, 0.5, 0.1, 0.3]}))
    assert config.grids.fractions() == [0.5, 0.3, 0.1]


def test_tolerance_overrides() -> None:
    config = load_scenario("golden_scenario")
    settings = config.settings()
    assert settings["quadrature"].rtol == 1e-10
    assert settings["fit"].exponent_window == (-2.0, 2.0)
    assert settings["trace"].step_fraction == 1e-3
    assert set(settings) == {"trace", "quadrature", "fit", "contour", "ode", "zeros"}


def test_split_perturbation() -> None:
    config = load_scenario("golden_scenario")
    eta = config.build_perturbation()
    assert eta.n == eta.R.actual_degree == eta.S.actual_degree == 2
    assert eta.R.value(1.0, 2.0) == pytest.approx(-1.0 + 0.31 - 0.34 + 0.92)
    assert eta.S.value(1.0, 2.0) == pytest.approx(1.0 + 0.41 + 0.58 - 0.52)
    assert config.build_perturbation(split=True).R.value(1.0, 2.0) == 0.0


def test_general_factor_list() -> None:
    sys = load_scenario("asymmetric_scenario").build_system()
    assert sys.lam == 0.5
    assert sys.exponents == (1.0, 2.0, 1.0)
    assert len(sys.factors) == 3
    other = load_scenario("asymmetric_scenario").build_system(lam=0.25)
    assert other.lam == 0.25


def test_scenario_from_a_path(tmp_path: Path) -> None:
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(scenario(name="from_file")))
    assert load_scenario(path).name == "from_file"
    assert load_scenario(str(path)).name == "from_file"
    assert "unit_scenario" in scenario_text("unit_scenario.json")


def test_missing_scenario() -> None:
    with pytest.raises(FileNotFoundError) as exc_info:
        load_scenario("no_such_scenario")
    assert "unit_scenario" in str(exc_info.value)


@pytest.mark.parametrize(
    "data",
    [
        scenario(name=""),
        scenario(extra_key=1),
        scenario(darboux={"normal_form": {"eps": -1.0, "eps_plus": 1.0, "eps_minus": 1.0}}),
        scenario(darboux={}),
        scenario(
            darboux={
                "normal_form": {"eps": 1.0, "eps_plus": 1.0, "eps_minus": 1.0},
                "unfolding": {"base": [[1, 0, 1.0]], "direction": [[0, 0, 1.0]], "exponent": 1.0},
            }
        ),
        scenario(
            darboux={
                "unfolding": {"base": [[1, 0, 1.0]], "direction": [[0, 0, 1.0]], "exponent": 1.0},
                "factors": [{"polynomial": [[0, 1, 1.0]], "exponent": 1.0}],
                "orientation": [1],
            }
        ),
        scenario(darboux={"normal_form": NORMAL_FORM["darboux"]["normal_form"], "lam": 0.0}),
        scenario(tolerances={"trace": {"no_such_setting": 1.0}}),
        scenario(tolerances={"quadrature": {"rtol": 0.0}}),
        scenario(tolerances={"trace": {"max_steps": "many"}}),
        scenario(tolerances={"quadrature": {"high_order": 2.5}}),
        scenario(tolerances={"ode": {"method": 45}}),
        scenario(tolerances={"fit": {"exponent_window": 5}}),
        scenario(tolerances={"zeros": {"error_band_factor": True}}),
        scenario(grids={"h_first": 0.1, "h_last": 0.5}),
        scenario(grids={"h_fractions": [1.5]}),
        scenario(grids={"split_lambda_count": 4}),
        scenario(degree_bounds={"perturbation": 1}, perturbation={"S": [[2, 0, 1.0]]}),
    ],
)
def test_invalid_scenarios(data: dict[str, Any]) -> None:
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate(data)


def test_validation_errors_name_the_field(tmp_path: Path) -> None:
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(scenario(grids={"h_count": 1})))
    with pytest.raises(ValidationError) as exc_info:
        load_scenario(path)
    assert exc_info.value.errors()[0]["loc"] == ("grids", "h_count")


def test_domain_problems_surface_when_building() -> None:
    normal_form = dict(NORMAL_FORM["darboux"]["normal_form"], unit=[[1, 0, 1.0]])
    config = ScenarioConfig.model_validate(scenario(darboux={"normal_form": normal_form}))
    # Δ = x vanishes at the triple point
    with pytest.raises(ScenarioError):
        config.build_system()


@pytest.mark.parametrize("name", ["asymmetric_scenario", "golden_scenario", "unit_scenario"])
def test_config_round_trip(name: str) -> None:
    config = load_scenario(name)
    assert ScenarioConfig.model_validate_json(config.model_dump_json()) == config
