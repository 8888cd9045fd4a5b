"""Bayesian hyperparameter search: GP surrogate + expected improvement.

Parameters are encoded into the unit hypercube; after a seeded random warm-up
the next trial is the expected-improvement argmax over a random candidate set
under a Gaussian-process surrogate.  Everything is deterministic given the
seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.stats import norm
from sklearn.exceptions import ConvergenceWarning
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern

N_CANDIDATES = 256
EI_XI = 0.01


@dataclass(frozen=True)
class FloatParam:
    lo: float
    hi: float
    log: bool = False

    def decode(self, u: float) -> float:
        if self.hi == self.lo:
            return self.lo
        if self.log:
            return math.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo)))
        return self.lo + u * (self.hi - self.lo)


@dataclass(frozen=True)
class IntParam:
    lo: int
    hi: int  # inclusive

    def decode(self, u: float) -> int:
        span = self.hi - self.lo + 1
        return self.lo + min(int(u * span), span - 1)


@dataclass(frozen=True)
class ChoiceParam:
    choices: tuple

    def decode(self, u: float):
        n = len(self.choices)
        return self.choices[min(int(u * n), n - 1)]


SearchSpace = Mapping[str, FloatParam | IntParam | ChoiceParam]


@dataclass(frozen=True)
class Trial:
    params: dict
    value: float
    failed: bool


@dataclass(frozen=True)
class TuneResult:
    best_params: dict
    best_value: float
    trials: tuple[Trial, ...]


class AllTrialsFailedError(RuntimeError):
    pass


def _decode(space: SearchSpace, u: np.ndarray) -> dict:
    return {name: param.decode(float(v)) for (name, param), v in zip(space.items(), u)}


def _expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    ei = np.zeros_like(mu)
    ok = sigma > 1e-12
    z = (mu[ok] - best - EI_XI) / sigma[ok]
    ei[ok] = (mu[ok] - best - EI_XI) * norm.cdf(z) + sigma[ok] * norm.pdf(z)
    return ei


def bayesian_tune(
    objective: Callable[[dict], float],
    space: SearchSpace,
    budget: int,
    seed: int = 0,
    n_warmup: int | None = None,
) -> TuneResult:
    """Maximize the objective over the search space within a trial budget.

    Non-finite objective values mark a trial as failed; the search continues
    and such trials never win.  Raises AllTrialsFailedError if no trial
    succeeds.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    space = dict(space)
    d = len(space)
    rng = np.random.default_rng(seed)
    if n_warmup is None:
        n_warmup = min(budget, max(3, d + 1))

    encodings: list[np.ndarray] = []
    trials: list[Trial] = []

    def run_trial(u: np.ndarray) -> None:
        params = _decode(space, u)
        try:
            value = float(objective(params))
        except (FloatingPointError, ArithmeticError):
            value = float("nan")
        failed = not math.isfinite(value)
        encodings.append(u)
        trials.append(Trial(params=params, value=value, failed=failed))

    for _ in range(min(n_warmup, budget)):
        run_trial(rng.random(d))

    while len(trials) < budget:
        ok = [(u, t.value) for u, t in zip(encodings, trials) if not t.failed]
        if len(ok) < 2 or d == 0:
            run_trial(rng.random(d))
            continue
        X = np.stack([u for u, _ in ok])
        y = np.array([v for _, v in ok])
        kernel = ConstantKernel(1.0) * Matern(length_scale=0.25 * np.ones(d), nu=2.5)
        gp = GaussianProcessRegressor(
            kernel=kernel, alpha=1e-6, normalize_y=True, n_restarts_optimizer=0
        )
        with warnings.catch_warnings():
            # few observations routinely stall the kernel optimizer; the
            # surrogate only has to rank candidates, so that is harmless
            warnings.simplefilter("ignore", ConvergenceWarning)
            gp.fit(X, y)
        candidates = rng.random((N_CANDIDATES, d))
        mu, sigma = gp.predict(candidates, return_std=True)
        ei = _expected_improvement(mu, sigma, float(y.max()))
        run_trial(candidates[int(np.argmax(ei))])

    successes = [t for t in trials if not t.failed]
    if not successes:
        raise AllTrialsFailedError(f"all {budget} trials returned non-finite objectives")
    best = max(successes, key=lambda t: t.value)
    return TuneResult(best_params=best.params, best_value=best.value, trials=tuple(trials))
