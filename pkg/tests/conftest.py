from __future__ import annotations

import numpy as np
import pytest

from dividend_reinsurance.model import ExponentialClaims, ModelParams, UniformClaims

# baseline economic parameters shared by the closed-form, HJB and simulation checks
BASE = dict(lam=4.0, eta1=0.1, eta2=0.11, q=0.15, k=1.14, a=0.85)


def table_params(claims=None, **changes) -> ModelParams:
    claims = ExponentialClaims(1.0) if claims is None else claims
    return ModelParams(claims=claims, **(BASE | changes))


def random_exp_params(rng: np.random.Generator) -> ModelParams:
    eta1 = rng.uniform(0.02, 0.5)
    return ModelParams(
        lam=rng.uniform(0.5, 10.0),
        claims=ExponentialClaims(rng.uniform(0.2, 5.0)),
        eta1=eta1,
        eta2=eta1 + rng.uniform(0.001, 0.6),
        q=rng.uniform(0.01, 0.5),
        k=rng.uniform(1.0, 3.0),
        a=rng.uniform(0.1, 3.0),
    )


def random_alpha(rng: np.random.Generator, params: ModelParams) -> float:
    lo = params.alpha_low
    return float(lo + (1.0 - lo) * rng.uniform(0.02, 1.0))


@pytest.fixture
def exp_params() -> ModelParams:
    return table_params()


@pytest.fixture
def uniform_params() -> ModelParams:
    return table_params(UniformClaims(0.0, 2.0))


def pytest_configure(config):
    config.criteria_lines = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""
    lines = request.config.criteria_lines

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if config.criteria_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config.criteria_lines):
            terminalreporter.write_line(line)
