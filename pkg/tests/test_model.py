from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from dividend_reinsurance.model import (
    ExponentialClaims,
    ModelError,
    ModelParams,
    UniformClaims,
    claim_cdf,
    claim_mean,
    lowest_retention,
    premium_rate,
    premium_rate_slope,
    retention_bounds,
)

from conftest import table_params


def _bisect_zero_premium(params):
    return optimize.bisect(lambda al: (params.lam * params.claim_mean
                                       * (1 + params.eta1 - (1 - al) * (1 + params.eta2))), 0.0, 1.0, xtol=1e-15)


def test_lowest_retention_equal_loadings_is_zero():
    assert lowest_retention(0.1, 0.1) == 0.0


@pytest.mark.parametrize("eta2, expected", [(0.11, 0.01 / 1.11), (0.2, 0.1 / 1.2)])
def test_lowest_retention_matches_bisection(eta2, expected):
    p = table_params(eta2=eta2)
    assert p.alpha_low == pytest.approx(expected, rel=1e-12)
    assert p.alpha_low == pytest.approx(_bisect_zero_premium(p), abs=1e-13)
    assert retention_bounds(p).alpha_low == p.alpha_low


def test_lowest_retention_rejects_cheaper_reinsurer():
    with pytest.raises(ModelError):
        lowest_retention(0.2, 0.1)


def test_premium_rate_is_exactly_zero_at_floor_and_c_at_one():
    p = table_params()
    assert premium_rate(p, p.alpha_low) == 0.0
    assert premium_rate(p, 1.0) == (1.0 + p.eta1) * p.lam * p.claim_mean == p.c


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_premium_rate_linear_increasing_and_bounded(u, w):
    p = table_params()
    a1, a2 = sorted((p.alpha_low + (1 - p.alpha_low) * u, p.alpha_low + (1 - p.alpha_low) * w))
    c1, c2 = premium_rate(p, a1), premium_rate(p, a2)
    assert -1e-12 <= c1 <= c2 <= p.c + 1e-12
    assert c2 - c1 == pytest.approx(premium_rate_slope(p) * (a2 - a1), abs=1e-12)


def test_claim_mean():
    assert claim_mean(ExponentialClaims(2.0)) == 0.5
    assert claim_mean(UniformClaims(0.0, 2.0)) == 1.0
    assert claim_mean(UniformClaims(1.0, 3.0)) == 2.0


def test_claim_cdf_values_against_density_quadrature():
    assert claim_cdf(ExponentialClaims(1.0), 0.0) == 0.0
    assert claim_cdf(UniformClaims(0.0, 2.0), 1.0) == 0.5
    quad, _ = integrate.quad(lambda y: math.exp(-y), 0.0, math.log(2.0))
    assert claim_cdf(ExponentialClaims(1.0), math.log(2.0)) == pytest.approx(quad, abs=1e-14)
    assert claim_cdf(ExponentialClaims(1.0), -1.0) == 0.0


@pytest.mark.parametrize("law", [ExponentialClaims(1.3), UniformClaims(0.5, 2.5)])
def test_claim_cdf_monotone_right_continuous(law):
    y = np.linspace(-1.0, 6.0, 1000)
    f = law.cdf(y)
    assert np.all(np.diff(f) >= 0.0)
    assert np.allclose(law.cdf(y + 1e-12), f, atol=1e-9)


@pytest.mark.parametrize("law", [ExponentialClaims(0.7), UniformClaims(0.0, 2.0), UniformClaims(1.0, 3.0)])
def test_partial_mean_and_segments_against_quadrature(law):
    lo, hi = law.support()
    pdf = (lambda y: law.mu * math.exp(-law.mu * y)) if law.kind == "exponential" else (lambda y: 1.0 / (hi - lo))
    for y in (0.3, 1.1, 2.7):
        quad, _ = integrate.quad(lambda s: s * pdf(s), lo, max(lo, min(y, hi)))
        assert law.partial_mean(y) == pytest.approx(quad, abs=1e-12)
    for y0, y1 in ((0.0, 0.4), (0.9, 1.7), (2.2, 2.9)):
        lower, upper = max(y0, lo), max(min(y1, hi), max(y0, lo))
        prob, _ = integrate.quad(pdf, lower, upper)
        moment, _ = integrate.quad(lambda s: (s - y0) * pdf(s), lower, upper)
        p, m = law.segment_moments(y0, y1)
        assert p == pytest.approx(prob, abs=1e-12)
        assert m == pytest.approx(moment, abs=1e-12)


@pytest.mark.parametrize("law", [ExponentialClaims(1.0), UniformClaims(0.0, 2.0)])
def test_sampler_mean_within_four_standard_errors(law):
    draws = law.sample(np.random.default_rng(7), size=1_000_000)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - law.mean()) < 4 * se


@pytest.mark.parametrize(
    "changes",
    [dict(lam=0.0), dict(eta1=0.0), dict(eta2=0.1), dict(q=0.0), dict(k=0.99), dict(a=0.0), dict(period=0.0)],
)
def test_params_validated_eagerly(changes):
    with pytest.raises(ModelError):
        table_params(**changes)


def test_claim_laws_reject_bad_arguments():
    with pytest.raises(ModelError):
        ExponentialClaims(0.0)
    with pytest.raises(ModelError):
        UniformClaims(2.0, 1.0)


@settings(max_examples=50)
@given(st.floats(1.0, 5.0), st.floats(0.1, 3.0))
def test_replace_keeps_validation(k, a):
    p = table_params().replace(k=k, a=a)
    assert isinstance(p, ModelParams) and p.k == k and p.a == a
