"""Explicit optimal (alpha, a, b) policies for exponentially distributed claims.

Under a constant retention ``alpha`` and exponential claims of rate ``mu`` the
retained surplus is a spectrally negative Levy process whose Laplace exponent is
rational, so the q-scale functions are sums of two exponentials.  Everything
below is written in terms of the two roots ``phi_q > 0 > rho_minus`` of
``kappa(theta) = q``.

All evaluators broadcast over numpy arrays: an :class:`ExpModel` may carry an
array of retentions, which is how the policy search scans a whole grid at once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import ExponentialClaims, ModelError, ModelParams, premium_rate, premium_rate_slope

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An iterative search did not reach its tolerance."""


@dataclass(frozen=True)
class ExpModel:
    params: ModelParams
    alpha: float | np.ndarray
    c_alpha: float | np.ndarray = field(init=False)

    def __post_init__(self):
        if not isinstance(self.params.claims, ExponentialClaims):
            raise ModelError("closed-form formulas need exponential claims")
        alpha = np.asarray(self.alpha, dtype=float)
        if np.any(alpha > 1.0) or np.any(alpha <= 0.0):
            raise ModelError("retention must lie in (0, 1]")
        c_alpha = premium_rate(self.params, alpha)
        if np.any(np.asarray(c_alpha) <= 0.0):
            raise ModelError("premium rate must be positive; retention below the admissible floor")
        object.__setattr__(self, "alpha", alpha if alpha.ndim else float(alpha))
        object.__setattr__(self, "c_alpha", c_alpha)

    @property
    def mu(self) -> float:
        return self.params.claims.mu

    @property
    def lam(self) -> float:
        return self.params.lam

    @property
    def q(self) -> float:
        return self.params.q

    @property
    def k(self) -> float:
        return self.params.k

    @property
    def mu_r(self):
        """Rate of the retained claim ``alpha * U``."""
        return self.mu / self.alpha

    @property
    def dc_dalpha(self) -> float:
        return premium_rate_slope(self.params)


@dataclass(frozen=True)
class LaplaceRoots:
    phi_q: float | np.ndarray
    rho_minus: float | np.ndarray


@dataclass(frozen=True)
class ClosedFormPolicy:
    alpha_star: float
    a_star: float
    b_star: float
    j0: float
    boundary_case: str
    residuals: dict = field(default_factory=dict)
    iterations: int = 0

    def model(self, params: ModelParams) -> ExpModel:
        return ExpModel(params, self.alpha_star)

    def as_dict(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "a_star": self.a_star,
            "b_star": self.b_star,
            "j0": self.j0,
            "boundary_case": self.boundary_case,
            "residuals": dict(self.residuals),
        }


def _out(x):
    x = np.asarray(x)
    return x if x.ndim else float(x)


def _roots_or_solve(m: ExpModel, roots: LaplaceRoots | None) -> LaplaceRoots:
    return solve_roots(m) if roots is None else roots


def laplace_exponent(m: ExpModel, theta):
    theta = np.asarray(theta, dtype=float)
    denom = m.mu + m.alpha * theta
    if np.any(denom == 0.0):
        raise ValueError("laplace exponent evaluated at its pole theta = -mu/alpha")
    return _out(theta * m.c_alpha - m.alpha * m.lam * theta / denom)


def _quadratic(m: ExpModel):
    A = m.alpha * m.c_alpha
    B = m.c_alpha * m.mu - m.alpha * m.lam - m.alpha * m.q
    C = -m.mu * m.q
    return A, B, C


def solve_roots(m: ExpModel) -> LaplaceRoots:
    """Roots of ``alpha c theta^2 + (c mu - alpha lam - alpha q) theta - mu q = 0``."""
    A, B, C = _quadratic(m)
    A, B = np.asarray(A, float), np.asarray(B, float)
    disc = np.sqrt(B * B - 4.0 * A * C)
    # cancellation-free pairing: compute the large-magnitude root first
    big = np.where(B >= 0.0, (-B - disc) / (2.0 * A), (-B + disc) / (2.0 * A))
    small = C / (A * big)
    phi = np.where(B >= 0.0, small, big)
    rho = np.where(B >= 0.0, big, small)
    return LaplaceRoots(_out(phi), _out(rho))


def scale_w(m: ExpModel, roots: LaplaceRoots | None, x):
    r = _roots_or_solve(m, roots)
    x = np.asarray(x, dtype=float)
    phi, rho, al = r.phi_q, r.rho_minus, m.alpha
    xp = np.maximum(x, 0.0)
    val = ((al * phi + m.mu) * np.exp(phi * xp) - (al * rho + m.mu) * np.exp(rho * xp)) / (
        al * m.c_alpha * (phi - rho)
    )
    return _out(np.where(x < 0.0, 0.0, val))


def scale_w_prime(m: ExpModel, roots: LaplaceRoots | None, x):
    """Right derivative of ``W_q`` for ``x >= 0``."""
    r = _roots_or_solve(m, roots)
    x = np.asarray(x, dtype=float)
    phi, rho, al = r.phi_q, r.rho_minus, m.alpha
    val = ((al * phi + m.mu) * phi * np.exp(phi * x) - (al * rho + m.mu) * rho * np.exp(rho * x)) / (
        al * m.c_alpha * (phi - rho)
    )
    return _out(val)


def scale_z(m: ExpModel, roots: LaplaceRoots | None, x):
    r = _roots_or_solve(m, roots)
    x = np.asarray(x, dtype=float)
    phi, rho, al = r.phi_q, r.rho_minus, m.alpha
    xp = np.maximum(x, 0.0)
    integral = ((al * phi + m.mu) * np.expm1(phi * xp) / phi - (al * rho + m.mu) * np.expm1(rho * xp) / rho) / (
        al * m.c_alpha * (phi - rho)
    )
    return _out(np.where(x < 0.0, 1.0, 1.0 + m.q * integral))


def c_q(m: ExpModel, roots: LaplaceRoots | None, x):
    """``c_alpha W_q(x) - Z_q(x)`` through its two-exponential closed form."""
    r = _roots_or_solve(m, roots)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("C_q is defined for x >= 0 only")
    phi, rho = r.phi_q, r.rho_minus
    return _out(m.lam * (np.exp(phi * x) - np.exp(rho * x)) / (m.c_alpha * (phi - rho)))


def c_q_prime(m: ExpModel, roots: LaplaceRoots | None, x):
    r = _roots_or_solve(m, roots)
    x = np.asarray(x, dtype=float)
    phi, rho = r.phi_q, r.rho_minus
    return _out(m.lam * (phi * np.exp(phi * x) - rho * np.exp(rho * x)) / (m.c_alpha * (phi - rho)))


def truncated_mean(mu_r, s):
    """Mean of an exponential(``mu_r``) claim cut at level ``s``: ``E[U; U <= s]``."""
    mu_r = np.asarray(mu_r, dtype=float)
    t = mu_r * np.asarray(s, dtype=float)
    return _out((-np.expm1(-t) - t * np.exp(-t)) / mu_r)


# gamma/theta in a scaled form: divide through by exp(phi x) so large x never overflows.
def _gt_parts(r: LaplaceRoots, x):
    phi, rho = r.phi_q, r.rho_minus
    x = np.asarray(x, dtype=float)
    u = np.exp(-phi * x)
    rr = np.exp((rho - phi) * x)
    den = phi - rho * rr
    return phi, rho, x, u, rr, den


def gamma_fn(m: ExpModel, roots: LaplaceRoots | None, x):
    phi, rho, x, u, rr, den = _gt_parts(_roots_or_solve(m, roots), x)
    return _out((phi - rho) * u / den)


def theta_fn(m: ExpModel, roots: LaplaceRoots | None, x):
    phi, rho, x, u, rr, den = _gt_parts(_roots_or_solve(m, roots), x)
    return _out((1.0 - rr) / den)


def gamma_theta_derivatives(m: ExpModel, roots: LaplaceRoots | None, x) -> dict:
    """Analytic gamma, theta and their partials in ``x`` and ``alpha``.

    The alpha-dependence enters only through the two roots, so the alpha
    partials are chained through ``d phi/d alpha`` and ``d rho/d alpha`` obtained
    by implicit differentiation of the quadratic.
    """
    r = _roots_or_solve(m, roots)
    phi, rho, x, u, rr, den = _gt_parts(r, x)
    den2 = den * den
    gamma = (phi - rho) * u / den
    theta = (1.0 - rr) / den
    gamma_x = (phi - rho) * u * (rho * rho * rr - phi * phi) / den2
    theta_x = (phi - rho) ** 2 * rr / den2

    gamma_phi = u * ((1.0 - (phi - rho) * x) * den - (phi - rho) * (1.0 + rho * x * rr)) / den2
    gamma_rho = u * (-den + (phi - rho) * rr * (1.0 + rho * x)) / den2
    theta_phi = (x * rr * den - (1.0 - rr) * (1.0 + rho * x * rr)) / den2
    theta_rho = (-x * rr * den + (1.0 - rr) * rr * (1.0 + rho * x)) / den2

    A, B, _ = _quadratic(m)
    dA = m.c_alpha + m.alpha * m.dc_dalpha
    dB = m.dc_dalpha * m.mu - m.lam - m.q
    dphi = -(dA * phi * phi + dB * phi) / (2.0 * A * phi + B)
    drho = -(dA * rho * rho + dB * rho) / (2.0 * A * rho + B)
    return {
        "gamma": _out(gamma),
        "theta": _out(theta),
        "gamma_b": _out(gamma_x),
        "theta_b": _out(theta_x),
        "gamma_alpha": _out(gamma_phi * dphi + gamma_rho * drho),
        "theta_alpha": _out(theta_phi * dphi + theta_rho * drho),
    }


def _denominator(m: ExpModel, theta_b, a):
    return m.q + m.mu_r * m.q * theta_b + m.lam * np.exp(-m.mu_r * a)


def cost_zero(m: ExpModel, a, b, roots: LaplaceRoots | None = None):
    """Value at zero surplus of the (alpha, a, b) policy, gamma/theta form."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0.0):
        raise ValueError("ruin buffer a must be positive")
    r = _roots_or_solve(m, roots)
    g = gamma_fn(m, r, b)
    th = theta_fn(m, r, b)
    num = m.c_alpha * g - m.lam * m.k * truncated_mean(m.mu_r, a)
    return _out(num / _denominator(m, th, a))


def cost_zero_scale_form(m: ExpModel, a, b, roots: LaplaceRoots | None = None):
    """Same value written with ``C_q'`` and ``W_q`` (used as a cross-check)."""
    r = _roots_or_solve(m, roots)
    cp = c_q_prime(m, r, b)
    num = 1.0 - m.k * truncated_mean(m.mu_r, a) * cp
    den = np.exp(-m.mu_r * np.asarray(a, float)) * cp + m.q * scale_w(m, r, b)
    return _out(num / den)


def cost_at(m: ExpModel, a: float, b: float, x, roots: LaplaceRoots | None = None, j0: float | None = None):
    """Expected discounted dividends minus injection costs from surplus ``x <= b``."""
    x = np.asarray(x, dtype=float)
    if np.any(x > b + 1e-12 * max(1.0, abs(b))):
        raise ValueError("cost_at is defined for x <= b")
    r = _roots_or_solve(m, roots)
    if j0 is None:
        j0 = cost_zero(m, a, b, r)
    xp = np.maximum(x, 0.0)
    cq = c_q(m, r, xp)
    s_fn = np.exp(-m.mu_r * a) * cq + scale_z(m, r, xp)
    g_fn = truncated_mean(m.mu_r, a) * cq
    upper = m.k * g_fn + j0 * s_fn
    out = np.where(x < -a, 0.0, np.where(x <= 0.0, m.k * x + j0, upper))
    return _out(out)


def cost_extended(m: ExpModel, a: float, b: float, x, roots: LaplaceRoots | None = None):
    """:func:`cost_at` continued above the barrier, where everything beyond ``b`` is paid at once."""
    r = _roots_or_solve(m, roots)
    x = np.asarray(x, dtype=float)
    j0 = cost_zero(m, a, b, r)
    below = cost_at(m, a, b, np.minimum(x, b), r, j0)
    return _out(np.where(x > b, below + (x - b), below))


def cost_at_scale_form(m: ExpModel, a: float, b: float, x, roots: LaplaceRoots | None = None):
    """Two-sided exit representation on ``[0, b]`` through ``W_q`` and ``Z_q``."""
    r = _roots_or_solve(m, roots)
    j0 = cost_zero(m, a, b, r)
    jb = cost_at(m, a, b, b, r, j0)
    z = j0 * (1.0 - np.exp(-m.mu_r * a)) - m.k * truncated_mean(m.mu_r, a)
    wx, wb = scale_w(m, r, x), scale_w(m, r, b)
    return _out(wx / wb * jb + (scale_z(m, r, x) - wx / wb * scale_z(m, r, b)) * z)


def psi(m: ExpModel, a, b, roots: LaplaceRoots | None = None):
    """Numerator of the a-derivative of the cost; decreasing in ``a``."""
    r = _roots_or_solve(m, roots)
    a = np.asarray(a, dtype=float)
    g = gamma_fn(m, r, b)
    th = theta_fn(m, r, b)
    return _out(
        -a * m.k * (m.q + m.q * m.mu_r * th) + m.c_alpha * g + m.lam * m.k * np.expm1(-m.mu_r * a) / m.mu_r
    )


def d_cost_da(m: ExpModel, a, b, roots: LaplaceRoots | None = None):
    r = _roots_or_solve(m, roots)
    a = np.asarray(a, dtype=float)
    th = theta_fn(m, r, b)
    pre = m.lam * m.mu_r * np.exp(-m.mu_r * a)
    return _out(pre * psi(m, a, b, r) / _denominator(m, th, a) ** 2)


def critical_a(m: ExpModel, b, roots: LaplaceRoots | None = None, max_iter: int = 200, strict: bool = True):
    """Unique root of :func:`psi` in ``a > 0`` by bisection.

    psi is convex and decreasing, so its tangent at 0 gives a lower bracket
    and dropping the (nonpositive) exponential term gives an upper one; both
    scale with ``psi(0+)``, which keeps tiny roots resolvable.
    With ``strict=False`` entries where ``psi(0+)`` underflows to zero return 0
    instead of raising; the policy grid scan relies on this for huge barriers.
    """
    r = _roots_or_solve(m, roots)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast(np.asarray(m.alpha), b).shape
    psi0 = np.broadcast_to(m.c_alpha * gamma_fn(m, r, b), shape)
    dead = psi0 <= 0.0
    if strict and np.any(dead):
        raise ValueError("psi(0+) <= 0: retention is not admissible")
    psi0 = np.maximum(psi0, 0.0)
    slope = m.k * (m.q + m.q * m.mu_r * theta_fn(m, r, b))
    lo = np.broadcast_to(psi0 / (slope + m.lam * m.k), shape).copy()
    hi = np.broadcast_to(psi0 / slope, shape).copy()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        pos = np.asarray(psi(m, mid, b, r)) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 4.0 * np.finfo(float).eps * hi):
            break
    return _out(0.5 * (lo + hi))


def _psi_partials(m: ExpModel, a, b, r: LaplaceRoots):
    """Partials of psi in a, b and alpha at fixed ruin buffer ``a``."""
    d = gamma_theta_derivatives(m, r, b)
    s = m.mu_r * a
    e = np.exp(-s)
    psi_a = -m.k * m.q * (1.0 + m.mu_r * d["theta"]) - m.lam * m.k * e
    psi_b = -a * m.k * m.q * m.mu_r * d["theta_b"] + m.c_alpha * d["gamma_b"]
    psi_alpha = (
        -a * m.k * m.q * (-(m.mu / m.alpha**2) * d["theta"] + m.mu_r * d["theta_alpha"])
        + m.dc_dalpha * d["gamma"]
        + m.c_alpha * d["gamma_alpha"]
        + m.lam * m.k * (np.expm1(-s) / m.mu + (a / m.alpha) * e)
    )
    return psi_a, psi_b, psi_alpha, d


def first_order_residuals(params: ModelParams, alpha: float, a: float, b: float) -> dict:
    """Residuals of the optimality conditions at a candidate (alpha, a, b)."""
    m = ExpModel(params, alpha)
    r = solve_roots(m)
    d = gamma_theta_derivatives(m, r, b)
    mean_cut = truncated_mean(m.mu_r, a)
    den = _denominator(m, d["theta"], a)
    out = {"da0": float(psi(m, a, b, r))}
    out["bopt"] = float(
        m.c_alpha * d["gamma_b"] * den - (m.c_alpha * d["gamma"] - m.lam * m.k * mean_cut) * m.mu_r * m.q * d["theta_b"]
    )
    out["df0"] = float(
        alpha * (m.dc_dalpha * d["gamma"] + m.c_alpha * d["gamma_alpha"])
        - m.lam * m.k * mean_cut
        + m.k * a * (m.mu_r * m.q * d["theta"] - m.mu * m.q * d["theta_alpha"])
    )
    if d["theta_b"] > 0 and b > 0:
        a_formula = m.c_alpha * d["gamma_b"] / (m.k * m.q * m.mu_r * d["theta_b"])
        j_formula = m.c_alpha * d["gamma_b"] / (m.q * m.mu_r * d["theta_b"])
        j0 = float(cost_zero(m, a, b, r))
        out["aopt"] = float(abs(a - a_formula) / abs(a))
        out["jaopt"] = float(abs(j0 - j_formula) / abs(j0))
    out["b0opta"] = float(-a * m.k * m.q + m.c_alpha + m.lam * m.k * np.expm1(-m.mu_r * a) / m.mu_r)
    out["b0optph"] = float(alpha * m.dc_dalpha - m.lam * m.k * mean_cut)
    return out


def _b_upper(params: ModelParams, alphas: np.ndarray, gamma_tol: float = 1e-6) -> float:
    m = ExpModel(params, alphas)
    r = solve_roots(m)
    b = np.full(alphas.shape, params.claim_mean)
    for _ in range(200):
        small = np.asarray(gamma_fn(m, r, b)) < gamma_tol
        if small.all():
            return float(b.max())
        b = np.where(small, b, 2.0 * b)
    raise ConvergenceError("gamma does not decay; cannot bound the barrier search")


def _a_partials(params: ModelParams, alpha: float, b: float):
    m = ExpModel(params, alpha)
    r = solve_roots(m)
    a = float(critical_a(m, b, r))
    psi_a, psi_b, psi_alpha, _ = _psi_partials(m, a, b, r)
    return a, float(-psi_alpha / psi_a), float(-psi_b / psi_a)


def _climb(df, x0: float, lo: float, hi: float, step: float) -> float:
    """Follow the sign of ``df`` from ``x0`` to the nearest stationary point.

    Stops on ``lo``/``hi`` when the slope still points outward there, so every
    accepted move increases the objective.
    """
    g0 = df(x0)
    if g0 == 0.0:
        return x0
    direction = 1.0 if g0 > 0 else -1.0
    left = x0
    for _ in range(200):
        right = min(hi, max(lo, left + direction * step))
        if right == left:
            return left
        g = df(right)
        if g * direction <= 0.0:
            a, b = sorted((left, right))
            return brentq(df, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        left = right
        step *= 2.0
    raise ConvergenceError("line search did not find a stationary point")


def optimize_policy(
    params: ModelParams,
    n_alpha: int = 200,
    n_b: int = 200,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> ClosedFormPolicy:
    """Maximise the value at zero over retention, ruin buffer and barrier.

    For fixed (alpha, b) the best buffer is the critical one and there the value
    equals ``k * a``, so the search maximises ``a_crit(alpha, b)``: a coarse grid
    scan (first maximum wins, alpha-major) followed by coordinate ascent in
    which each coordinate step solves its first-order condition.
    """
    if not isinstance(params.claims, ExponentialClaims):
        raise ModelError("closed-form policies need exponential claims")
    alow = params.alpha_low
    alphas = np.linspace(alow, 1.0, n_alpha + 1)[1:]
    b_hi = _b_upper(params, alphas)
    bs = np.linspace(0.0, b_hi, n_b)
    m = ExpModel(params, alphas[:, None])
    A = critical_a(m, bs[None, :], solve_roots(m), strict=False)
    i, j = np.unravel_index(int(np.argmax(A)), A.shape)
    alpha, b = float(alphas[i]), float(bs[j])
    d_alpha, d_b = alphas[1] - alphas[0] if n_alpha > 1 else 1.0 - alow, bs[1] - bs[0]
    alpha_floor = float(alphas[0])

    it = 0
    for it in range(1, max_iter + 1):
        b_new = _climb(lambda bb: _a_partials(params, alpha, bb)[2], b, 0.0, b_hi, d_b)
        alpha_new = _climb(lambda aa: _a_partials(params, aa, b_new)[1], alpha, alpha_floor, 1.0, d_alpha)
        change = max(abs(b_new - b), abs(alpha_new - alpha))
        alpha, b = alpha_new, b_new
        logger.debug("sweep %d alpha=%.12g b=%.12g change=%.3e", it, alpha, b, change)
        d_alpha, d_b = max(4 * change, 1e-10), max(4 * change, 1e-10)
        if change < tol:
            break
    else:
        raise ConvergenceError(f"coordinate ascent did not converge in {max_iter} sweeps")

    a_star = float(critical_a(ExpModel(params, alpha), b))
    j0 = float(cost_zero(ExpModel(params, alpha), a_star, b))
    if alpha >= 1.0:
        case = "alpha_one"
    elif b <= 0.0:
        case = "b_zero"
    else:
        case = "interior"
    res = first_order_residuals(params, alpha, a_star, b)
    residuals = {"da0": abs(res["da0"]), "jofa": abs(j0 - params.k * a_star) / abs(j0)}
    if b > 0.0:
        residuals["bopt"] = abs(res["bopt"])
        residuals["aopt"] = res["aopt"]
        residuals["jaopt"] = res["jaopt"]
    else:
        residuals["b0opta"] = abs(res["b0opta"])
    if case != "alpha_one":
        residuals["df0"] = abs(res["df0"])
        if b <= 0.0:
            residuals["b0optph"] = abs(res["b0optph"])
    for name, value in residuals.items():
        if value > 1e-6:
            logger.warning("optimality residual %s = %.3e exceeds 1e-6", name, value)
    return ClosedFormPolicy(alpha, a_star, b, j0, case, residuals, it)


def cost_function(params: ModelParams, alpha: float, a: float, b: float) -> float:
    """Value at zero as a plain function of the three policy parameters."""
    return float(cost_zero(ExpModel(params, alpha), a, b))


@dataclass
class HessianReport:
    """Finite-difference curvature at a candidate optimum, coordinates ordered (alpha, a, b).

    Coordinates pinned to a bound (``alpha = 1`` or ``b = 0``) are not perturbed;
    their gradient entries and Hessian rows/columns are NaN.
    """

    hessian: np.ndarray
    gradient: np.ndarray
    free: tuple[bool, bool, bool]
    d2_aa: float
    cross_ab: float
    cross_a_alpha: float
    leading_eigenvalue: float
    gradient_norm: float
    ok: bool


def hessian_check(
    params: ModelParams,
    policy: ClosedFormPolicy,
    step: float = 1e-4,
    grad_step: float = 1e-5,
    require_interior: bool = True,
) -> HessianReport:
    """Finite-difference gradient and Hessian of the value at zero in (alpha, a, b).

    Raises ``ValueError`` for boundary optima unless ``require_interior`` is
    False, in which case only the free coordinates are differentiated.
    """
    if require_interior and policy.boundary_case != "interior":
        raise ValueError(f"hessian check needs an interior optimum, got {policy.boundary_case!r}")
    x0 = np.array([policy.alpha_star, policy.a_star, policy.b_star])
    free = (policy.alpha_star < 1.0, True, policy.b_star > 0.0)
    idx = [i for i in range(3) if free[i]]

    def f(v):
        return cost_function(params, *v)

    def unit(i, h):
        e = np.zeros(3)
        e[i] = h
        return e

    grad = np.full(3, np.nan)
    H = np.full((3, 3), np.nan)
    f0 = f(x0)
    for i in idx:
        ei = unit(i, grad_step)
        grad[i] = (f(x0 + ei) - f(x0 - ei)) / (2 * grad_step)
        ei = unit(i, step)
        H[i, i] = (f(x0 + ei) - 2 * f0 + f(x0 - ei)) / step**2
        for j in idx:
            if j <= i:
                continue
            ej = unit(j, step)
            H[i, j] = H[j, i] = (f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)) / (
                4 * step**2
            )
    sub = H[np.ix_(idx, idx)]
    eig = np.linalg.eigvalsh(sub)
    gnorm = float(np.linalg.norm(grad[idx]))
    d2_aa, cross_ab, cross_aal = H[1, 1], H[1, 2], H[1, 0]
    ok = bool(d2_aa < 0 and gnorm < 1e-5)
    for cross in (cross_ab, cross_aal):
        if np.isfinite(cross):
            ok = ok and abs(cross) < 1e-3
    return HessianReport(
        H, grad, free, float(d2_aa), float(cross_ab), float(cross_aal), float(eig[-1]), gnorm, ok
    )
