from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from dividend_reinsurance import closedform as cf
from dividend_reinsurance.model import ModelError, UniformClaims

from conftest import random_alpha, random_exp_params, table_params


def kappa(params, alpha, theta):
    """Laplace exponent written out independently of the library."""
    mu, lam = params.claims.mu, params.lam
    c = lam / mu * (1 + params.eta1 - (1 - alpha) * (1 + params.eta2))
    return c * theta - lam * alpha * theta / (mu + alpha * theta)


@pytest.fixture
def model(exp_params):
    return cf.ExpModel(exp_params, 1.0)


# --- Laplace exponent and roots ---------------------------------------------------------


def test_laplace_exponent_examples(model):
    assert cf.laplace_exponent(model, 0.0) == 0.0
    assert cf.laplace_exponent(model, 1.0) == pytest.approx(4.4 - 4.0 / 2.0, rel=1e-15)
    r = cf.solve_roots(model)
    assert cf.laplace_exponent(model, r.phi_q) == pytest.approx(0.15, abs=1e-10)


def test_laplace_exponent_rejects_pole(model):
    with pytest.raises(ValueError):
        cf.laplace_exponent(model, -model.mu / model.alpha)


def test_roots_match_bisection_on_laplace_exponent(exp_params):
    r = cf.solve_roots(cf.ExpModel(exp_params, 1.0))
    phi = optimize.bisect(lambda t: kappa(exp_params, 1.0, t) - 0.15, 1e-9, 10.0, xtol=1e-15)
    # below zero the exponent has a pole at -mu/alpha; the negative root lies in (-mu/alpha, 0)
    rho = optimize.bisect(lambda t: kappa(exp_params, 1.0, t) - 0.15, -1.0 + 1e-9, -1e-9, xtol=1e-15)
    assert r.phi_q == pytest.approx(phi, rel=1e-12)
    assert r.rho_minus == pytest.approx(rho, rel=1e-12)
    assert r.rho_minus < 0 < r.phi_q


def test_exp_model_rejects_uniform_and_bad_retention(exp_params):
    with pytest.raises(ModelError):
        cf.ExpModel(table_params(UniformClaims(0.0, 2.0)), 1.0)
    with pytest.raises(ModelError):
        cf.ExpModel(exp_params, exp_params.alpha_low)
    with pytest.raises(ModelError):
        cf.ExpModel(exp_params, 1.01)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_root_identities_random_draws(seed):
    rng = np.random.default_rng(seed)
    p = random_exp_params(rng)
    al = random_alpha(rng, p)
    m = cf.ExpModel(p, al)
    r = cf.solve_roots(m)
    mu, c = m.mu, m.c_alpha
    assert r.phi_q + r.rho_minus == pytest.approx(-(c * mu - al * p.lam - al * p.q) / (al * c), rel=1e-9)
    assert r.phi_q * r.rho_minus == pytest.approx(-mu * p.q / (al * c), rel=1e-9)
    for rho in (r.phi_q, r.rho_minus):
        lhs = c * rho * (al * rho + mu)
        rhs = al * (p.lam + p.q) * rho + mu * p.q
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12 * abs(mu * p.q))


# --- scale functions -------------------------------------------------------------------


def test_scale_w_anchor_values(model):
    r = cf.solve_roots(model)
    assert cf.scale_w(model, r, 0.0) == pytest.approx(1.0 / model.c_alpha, rel=1e-14)
    assert cf.scale_w(model, r, -1.0) == 0.0


def test_scale_w_against_talbot_inverse_laplace(exp_params):
    m = cf.ExpModel(exp_params, 1.0)
    mpmath.mp.dps = 30
    transform = lambda s: 1 / (kappa(exp_params, 1.0, s) - exp_params.q)  # noqa: E731
    for x in (0.5, 1.0, 3.0):
        oracle = float(mpmath.invertlaplace(transform, x, method="talbot"))
        assert cf.scale_w(m, None, x) == pytest.approx(oracle, rel=1e-8)


def test_scale_w_frozen_value(model):
    # frozen from the Talbot oracle above
    assert cf.scale_w(model, None, 0.5) == pytest.approx(0.33405458406890126, rel=1e-12)


def test_scale_z_against_trapezoid(model):
    r = cf.solve_roots(model)
    assert cf.scale_z(model, r, 0.0) == 1.0
    assert cf.scale_z(model, r, -0.5) == 1.0
    y = np.linspace(0.0, 1.0, 10_000)
    oracle = 1.0 + model.q * integrate.trapezoid(cf.scale_w(model, r, y), y)
    assert cf.scale_z(model, r, 1.0) == pytest.approx(oracle, rel=1e-8)


def test_c_q_identity_and_sign(model):
    r = cf.solve_roots(model)
    x = np.linspace(0.0, 6.0, 200)
    direct = model.c_alpha * cf.scale_w(model, r, x) - cf.scale_z(model, r, x)
    scale = np.maximum(model.c_alpha * cf.scale_w(model, r, x), 1.0)
    assert np.all(np.abs(cf.c_q(model, r, x) - direct) <= 1e-9 * scale)
    assert cf.c_q(model, r, 0.0) == 0.0
    assert cf.c_q(model, r, 2.0) >= 0.0
    with pytest.raises(ValueError):
        cf.c_q(model, r, -0.1)


def test_scale_functions_nondecreasing(model):
    r = cf.solve_roots(model)
    x = np.linspace(0.0, 8.0, 1000)
    a = 0.85
    ma = cf.truncated_mean(model.mu_r, a)
    s_fn = math.exp(-model.mu_r * a) * cf.c_q(model, r, x) + cf.scale_z(model, r, x)
    for f in (cf.scale_w(model, r, x), cf.scale_z(model, r, x), cf.c_q(model, r, x), ma * cf.c_q(model, r, x), s_fn):
        assert np.all(np.diff(f) >= 0.0)


def test_truncated_mean_examples():
    assert cf.truncated_mean(1.0, 0.0) == 0.0
    assert cf.truncated_mean(2.0, 50 / 2.0) == pytest.approx(0.5, abs=1e-9)
    quad, _ = integrate.quad(lambda y: y * math.exp(-y), 0.0, 1.0)
    assert cf.truncated_mean(1.0, 1.0) == pytest.approx(quad, rel=1e-12)
    assert quad == pytest.approx(1 - 2 * math.exp(-1), rel=1e-12)


def test_gamma_theta_anchor_values(model):
    r = cf.solve_roots(model)
    assert cf.gamma_fn(model, r, 0.0) == pytest.approx(1.0, rel=1e-15)
    assert cf.theta_fn(model, r, 0.0) == 0.0
    assert abs(cf.gamma_fn(model, r, 100.0)) < 1e-6
    # the scaled form stays finite where the raw exponentials overflow
    assert np.isfinite(cf.gamma_fn(model, r, 1e4)) and np.isfinite(cf.theta_fn(model, r, 1e4))


def test_gamma_theta_derivatives_against_central_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = random_exp_params(rng)
        al = min(random_alpha(rng, p), 0.999)
        b = rng.uniform(0.0, 3.0)
        m = cf.ExpModel(p, al)
        d = cf.gamma_theta_derivatives(m, None, b)
        h = 1e-6
        mp, mm = cf.ExpModel(p, al + h), cf.ExpModel(p, al - h)
        checks = {
            "gamma_b": (cf.gamma_fn(m, None, b + h) - cf.gamma_fn(m, None, b - h)) / (2 * h),
            "theta_b": (cf.theta_fn(m, None, b + h) - cf.theta_fn(m, None, b - h)) / (2 * h),
            "gamma_alpha": (cf.gamma_fn(mp, None, b) - cf.gamma_fn(mm, None, b)) / (2 * h),
            "theta_alpha": (cf.theta_fn(mp, None, b) - cf.theta_fn(mm, None, b)) / (2 * h),
        }
        for name, fd in checks.items():
            assert d[name] == pytest.approx(fd, rel=1e-5, abs=1e-8), name


# --- cost function -----------------------------------------------------------------------


def test_cost_zero_forms_agree_on_random_triples():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = random_exp_params(rng)
        m = cf.ExpModel(p, random_alpha(rng, p))
        a, b = rng.uniform(0.05, 4.0), rng.uniform(0.0, 4.0)
        assert cf.cost_zero(m, a, b) == pytest.approx(cf.cost_zero_scale_form(m, a, b), rel=1e-9)


def test_cost_zero_table_value_agrees_with_cost_at(model):
    j = cf.cost_zero(model, 0.85, 1.0)
    assert np.isfinite(j) and j > 0
    assert cf.cost_at(model, 0.85, 1.0, 0.0) == pytest.approx(j, rel=1e-15)
    with pytest.raises(ValueError):
        cf.cost_zero(model, 0.0, 1.0)


def test_cost_at_piecewise_structure(model):
    a, b = 0.85, 1.0
    j0 = cf.cost_zero(model, a, b)
    assert cf.cost_at(model, a, b, -a) == pytest.approx(j0 - model.k * a, rel=1e-12)
    assert cf.cost_at(model, a, b, -a - 1e-3) == 0.0
    for knot in (0.0, -a):
        left, right = cf.cost_at(model, a, b, knot - 1e-12), cf.cost_at(model, a, b, knot + 1e-12)
        if knot == -a:
            left = j0 - model.k * a  # the value just inside the bail-out band
        assert left == pytest.approx(right, abs=1e-9)
    assert cf.cost_at(model, a, b, b / 2) == pytest.approx(cf.cost_at_scale_form(model, a, b, b / 2), rel=1e-9)
    with pytest.raises(ValueError):
        cf.cost_at(model, a, b, b + 0.1)


def test_cost_extended_pays_excess_above_barrier(model):
    a, b = 0.85, 1.0
    assert cf.cost_extended(model, a, b, b + 0.3) == pytest.approx(cf.cost_at(model, a, b, b) + 0.3, rel=1e-14)


def test_d_cost_da_against_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = random_exp_params(rng)
        m = cf.ExpModel(p, random_alpha(rng, p))
        a, b = rng.uniform(0.1, 3.0), rng.uniform(0.0, 3.0)
        h = 1e-6
        fd = (cf.cost_zero(m, a + h, b) - cf.cost_zero(m, a - h, b)) / (2 * h)
        assert cf.d_cost_da(m, a, b) == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_d_cost_da_limits(model):
    b = 0.7
    r = cf.solve_roots(model)
    g, th = cf.gamma_fn(model, r, b), cf.theta_fn(model, r, b)
    lam, mu, al, q = model.lam, model.mu, model.alpha, model.q
    limit = lam * mu * model.c_alpha * g / (al * (q + mu * q / al * th + lam) ** 2)
    assert cf.d_cost_da(model, 1e-10, b) == pytest.approx(limit, rel=1e-7)
    assert limit > 0
    assert cf.d_cost_da(model, 20.0 / model.mu_r, b) < 0


def test_critical_a_certificates():
    rng = np.random.default_rng(17)
    for _ in range(30):
        p = random_exp_params(rng)
        m = cf.ExpModel(p, random_alpha(rng, p))
        b = rng.uniform(0.0, 3.0)
        a = cf.critical_a(m, b)
        assert 0 < a < np.inf
        assert abs(cf.psi(m, a, b)) < 1e-10 * max(1.0, p.k * a * p.q)
        assert cf.cost_zero(m, a, b) == pytest.approx(p.k * a, rel=1e-8)
        assert abs(cf.d_cost_da(m, a, b)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.001, 5.0), st.floats(0.001, 5.0))
def test_psi_strictly_decreasing(seed, a1, a2):
    rng = np.random.default_rng(seed)
    p = random_exp_params(rng)
    m = cf.ExpModel(p, random_alpha(rng, p))
    b = rng.uniform(0.0, 3.0)
    if a1 == a2:
        return
    lo, hi = sorted((a1, a2))
    assert cf.psi(m, lo, b) > cf.psi(m, hi, b)
    assert cf.psi(m, 0.0, b) > 0


# --- optimizer ----------------------------------------------------------------------------


def _independent_value(params, alpha, a, b):
    """Value at zero from the scale-function form, roots from numpy's polynomial solver."""
    mu, lam, q, k = params.claims.mu, params.lam, params.q, params.k
    c = lam / mu * (1 + params.eta1 - (1 - alpha) * (1 + params.eta2))
    rho, phi = sorted(np.roots([alpha * c, c * mu - alpha * lam - alpha * q, -mu * q]).real)
    mr = mu / alpha
    cqp = lam * (phi * math.exp(phi * b) - rho * math.exp(rho * b)) / (c * (phi - rho))
    w = ((alpha * phi + mu) * math.exp(phi * b) - (alpha * rho + mu) * math.exp(rho * b)) / (alpha * c * (phi - rho))
    m_cut = (1 - math.exp(-mr * a) * (mr * a + 1)) / mr
    return (1 - k * m_cut * cqp) / (math.exp(-mr * a) * cqp + q * w)


@pytest.mark.parametrize(
    "k, frozen",
    [
        (1.14, (1.0, 2.1550193694561584, 0.0, 2.4567220811800206)),
        (2.0, (1.0, 0.7394090616922611, 0.1878108004329192, 1.4788181233845221)),
    ],
)
def test_optimize_policy_matches_independent_maximization(k, frozen):
    p = table_params(k=k)
    pol = cf.optimize_policy(p)
    assert (pol.alpha_star, pol.a_star, pol.b_star, pol.j0) == pytest.approx(frozen, rel=1e-9, abs=1e-9)
    lo = p.alpha_low + 1e-6
    res = optimize.minimize(lambda v: -_independent_value(p, *v), x0=[0.9, 1.0, 0.1], method="L-BFGS-B",
                            bounds=[(lo, 1.0), (1e-4, 10.0), (0.0, 5.0)], options={"ftol": 1e-15, "gtol": 1e-10})
    assert -res.fun == pytest.approx(pol.j0, rel=1e-7)
    assert all(v < 1e-6 for v in pol.residuals.values())


def test_optimize_policy_basic_properties(exp_params):
    pol = cf.optimize_policy(exp_params)
    assert 0 < pol.a_star < np.inf and np.isfinite(pol.b_star)
    assert pol.alpha_star > exp_params.alpha_low
    assert pol.boundary_case in {"interior", "b_zero", "alpha_one"}
    assert pol.j0 == pytest.approx(exp_params.k * pol.a_star, rel=1e-8)


def test_optimum_is_local_max_along_free_coordinates():
    p = table_params(k=2.0)
    pol = cf.optimize_policy(p)
    j = cf.cost_function(p, pol.alpha_star, pol.a_star, pol.b_star)
    for da, db in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)):
        assert cf.cost_function(p, pol.alpha_star, pol.a_star + da, pol.b_star + db) < j
    assert cf.cost_function(p, pol.alpha_star - 1e-3, pol.a_star, pol.b_star) < j


def test_expensive_injections_shrink_the_buffer():
    cheap = cf.optimize_policy(table_params(k=1.14))
    dear = cf.optimize_policy(table_params(k=1000.0))
    assert dear.a_star < 0.01 * cheap.a_star


def test_hessian_check_boundary_handling():
    p = table_params(k=2.0)
    pol = cf.optimize_policy(p)
    with pytest.raises(ValueError):
        cf.hessian_check(p, pol)
    rep = cf.hessian_check(p, pol, require_interior=False)
    assert rep.free == (False, True, True)
    assert rep.d2_aa < 0 and abs(rep.cross_ab) < 1e-3 and rep.gradient_norm < 1e-5
    assert rep.leading_eigenvalue < 0 and rep.ok


def test_optimize_policy_rejects_uniform():
    with pytest.raises(ModelError):
        cf.optimize_policy(table_params(UniformClaims(0.0, 2.0)))
