import math

import numpy as np
import pytest

from crtpredict.tuning import (
    AllTrialsFailedError,
    ChoiceParam,
    FloatParam,
    IntParam,
    bayesian_tune,
    Trial,
)


def test_single_point_space_returns_that_point():
    space = {"x": ChoiceParam((0.7,)), "mode": ChoiceParam(("only",))}
    result = bayesian_tune(lambda p: 1.0, space, budget=3, seed=0)
    assert result.best_params == {"x": 0.7, "mode": "only"}


def test_budget_one_returns_single_evaluated_point():
    space = {"x": FloatParam(0.0, 1.0)}
    seen = []
    result = bayesian_tune(lambda p: -p["x"], space, budget=1, seed=1)
    assert len(result.trials) == 1
    assert result.best_params == result.trials[0].params


def test_quadratic_objective_found_most_seeds():
    # Independent oracle: the dense-grid maximum of f(x) = -(x - 0.3)^2.
    grid = np.linspace(0.0, 1.0, 1001)
    oracle_x = grid[np.argmax(-((grid - 0.3) ** 2))]
    assert abs(oracle_x - 0.3) < 1e-9

    space = {"x": FloatParam(0.0, 1.0)}
    hits = 0
    for seed in range(10):
        result = bayesian_tune(lambda p: -((p["x"] - 0.3) ** 2), space, budget=30, seed=seed)
        hits += abs(result.best_params["x"] - 0.3) <= 0.05
    assert hits >= 9


def test_failed_trials_are_skipped_and_recorded():
    space = {"x": FloatParam(0.0, 1.0)}

    def objective(p):
        if p["x"] < 0.5:
            return float("nan")
        return p["x"]

    result = bayesian_tune(objective, space, budget=20, seed=2)
    assert any(t.failed for t in result.trials)
    assert result.best_params["x"] >= 0.5
    assert math.isfinite(result.best_value)


def test_all_trials_failed_raises():
    with pytest.raises(AllTrialsFailedError):
        bayesian_tune(lambda p: float("inf"), {"x": FloatParam(0, 1)}, budget=4, seed=0)


def test_deterministic_given_seed():
    space = {"x": FloatParam(0.0, 1.0), "n": IntParam(1, 5)}
    f = lambda p: -abs(p["x"] - 0.6) + 0.01 * p["n"]
    r1 = bayesian_tune(f, space, budget=12, seed=9)
    r2 = bayesian_tune(f, space, budget=12, seed=9)
    assert r1.best_params == r2.best_params
    assert [t.params for t in r1.trials] == [t.params for t in r2.trials]


def test_param_decoding_bounds():
    assert FloatParam(1e-3, 1e1, log=True).decode(0.0) == pytest.approx(1e-3)
    assert FloatParam(1e-3, 1e1, log=True).decode(1.0) == pytest.approx(1e1)
    ip = IntParam(2, 5)
    assert {ip.decode(u) for u in np.linspace(0, 0.999, 50)} == {2, 3, 4, 5}
    assert ip.decode(1.0) == 5  # closed at the top
    cp = ChoiceParam((8, 16, 32))
    assert {cp.decode(u) for u in np.linspace(0, 0.999, 30)} == {8, 16, 32}
    assert cp.decode(1.0) == 32


def test_budget_validation():
    with pytest.raises(ValueError):
        bayesian_tune(lambda p: 0.0, {"x": FloatParam(0, 1)}, budget=0, seed=0)
