"""Finite-difference HJB obstacle problem on a uniform grid, solved by Howard policy iteration.

The discrete problem reads ``max{H^alpha v, 1 - (v_j - v_{j-1})/delta} = 0`` node by
node.  ``H^alpha`` is an upwind discretisation of the controlled generator whose
jump integral is integrated exactly against the claim law after linear
interpolation of ``v`` between nodes.  Below zero the value follows the
bail-out profile ``v(x) = v(0) + k x`` on ``(-a, 0)`` and vanishes at or below ``-a``.

Two treatments of ``v(0)`` are offered:

``free`` (default)
    ``v(0)`` is an unknown with its own generator row, so the grid value
    approximates the value function for the given ``a``.
``pinned``
    ``v(0) = k a`` is imposed as a Dirichlet datum, the scheme whose
    constraint vector carries ``rho^1 = 1 + a k / delta``.  It agrees with the
    free treatment exactly when ``a`` is the critical buffer for the policy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.signal import fftconvolve

from .closedform import ConvergenceError
from .model import ModelParams, premium_rate

logger = logging.getLogger(__name__)

CONTINUATION = "continuation"
DIVIDEND = "dividend"
BOUNDARIES = ("free", "pinned")

_DIRECT_CONV_MAX = 1024


@dataclass(frozen=True)
class Grid:
    n: int
    delta: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs at least 2 nodes, got {self.n}")
        if not self.delta > 0:
            raise ValueError(f"grid spacing must be positive, got {self.delta}")

    @property
    def nodes(self) -> np.ndarray:
        """Interior nodes ``x_j = j delta``, ``j = 1..n``."""
        return self.delta * np.arange(1, self.n + 1)

    @property
    def all_nodes(self) -> np.ndarray:
        """Nodes including ``x_0 = 0``."""
        return self.delta * np.arange(self.n + 1)

    @property
    def upper(self) -> float:
        return self.n * self.delta


def boundary_value(params: ModelParams, x, v_zero: float | None = None):
    """Value for ``x <= 0``: ``v(0) + k x`` on ``(-a, 0]`` and 0 at or below ``-a``.

    ``v_zero`` defaults to the pinned datum ``k a``, giving ``k(x + a)``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x > 0.0):
        raise ValueError("boundary_value is defined for x <= 0")
    v0 = params.k * params.a if v_zero is None else v_zero
    out = np.where(x <= -params.a, 0.0, v0 + params.k * x)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class JumpKernel:
    """Jump-integral weights for one retention, rows ``j = 0..n``.

    Row ``j`` of ``E[v(x_j - alpha U)]`` equals
    ``sum_{m<j} conv[m] v_{j-m} + zero_weight[j] * v(0) + const[j]``.
    """

    alpha: float
    conv: np.ndarray
    zero_weight: np.ndarray
    const: np.ndarray

    def mass(self) -> np.ndarray:
        """Claim probability seen by each row, i.e. ``F((x_j + a)/alpha)``."""
        return np.concatenate(([0.0], np.cumsum(self.conv))) + self.zero_weight


def jump_kernel(params: ModelParams, grid: Grid, alpha: float) -> JumpKernel:
    """Weights of ``E[v(x_j - alpha U)]`` for piecewise-linear ``v``.

    Claim space is cut at ``y_m = m delta/alpha`` so each image segment spans
    exactly one grid cell; the linear interpolant is integrated exactly against
    the claim law on each segment, and the bail-out profile below zero is
    integrated in closed form.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"retention must lie in (0, 1], got {alpha}")
    n, law = grid.n, params.claims
    h = grid.delta / alpha
    y = h * np.arange(n + 1)
    p, first = law.segment_moments(y[:-1], y[1:])
    far = first / h  # weight on the lower end of each image cell
    near = p - far
    conv = near.copy()
    conv[1:] += far[:-1]
    below_mass, below_first = law.segment_moments(y, y + params.a / alpha)
    zero_weight = below_mass.copy()
    zero_weight[1:] += far
    const = -params.k * alpha * below_first
    return JumpKernel(float(alpha), conv, zero_weight, const)


@dataclass
class DiscreteOperator:
    """Affine rows ``u -> matrix @ u + offset`` of ``H^alpha`` on nodes ``0..n``."""

    grid: Grid
    alpha_field: np.ndarray
    matrix: np.ndarray
    offset: np.ndarray
    jump_mass: np.ndarray

    def apply(self, v, v_zero: float | None = None) -> np.ndarray:
        """Rows at ``u = (v(0), v_1..v_n)``: pass all ``n + 1`` values, or ``n`` plus ``v_zero``."""
        u = np.asarray(v, dtype=float)
        if u.size == self.grid.n:
            if v_zero is None:
                raise ValueError("need v_zero to complete the node-0 value")
            u = np.concatenate(([v_zero], u))
        return self.matrix @ u + self.offset

    def dominance_margin(self) -> np.ndarray:
        """``|diag| - sum|off-diag|`` per row; nonnegative means dominant."""
        diag = np.abs(np.diag(self.matrix))
        return diag - (np.abs(self.matrix).sum(axis=1) - diag)


def _assemble_rows(params: ModelParams, grid: Grid, kernels: list[JumpKernel], which: np.ndarray):
    """Operator rows for nodes ``0..n``; ``which[j]`` indexes the kernel used at node ``j``."""
    n, d = grid.n, grid.delta
    lam, q = params.lam, params.q
    conv = np.stack([kk.conv for kk in kernels])
    M = np.zeros((n + 1, n + 1))
    rows, cols = np.tril_indices(n)
    M[rows + 1, cols + 1] = lam * conv[which[rows + 1], rows - cols]
    M[:, 0] += lam * np.array([kernels[w].zero_weight[j] for j, w in enumerate(which)])
    alphas = np.array([kernels[w].alpha for w in which])
    c = premium_rate(params, alphas)
    r = np.arange(n + 1)
    M[r, r] -= q + lam
    M[r[:-1], r[:-1]] -= c[:-1] / d
    M[r[:-1], r[1:]] += c[:-1] / d
    offset = lam * np.array([kernels[w].const[j] for j, w in enumerate(which)])
    # top node: ghost value v_{n+1} = v_n + delta, so the drift term is exactly c
    offset[-1] += c[-1]
    mass = np.array([kernels[w].mass()[j] for j, w in enumerate(which)])
    return DiscreteOperator(grid, alphas, M, offset, mass)


def assemble(params: ModelParams, grid: Grid, alpha_field) -> DiscreteOperator:
    """Assemble ``H^alpha`` for a per-node retention field.

    ``alpha_field`` covers nodes ``1..n`` (node 0 then reuses node 1's value)
    or nodes ``0..n``.
    """
    alpha_field = np.asarray(alpha_field, dtype=float)
    if alpha_field.shape == (grid.n,):
        alpha_field = np.concatenate((alpha_field[:1], alpha_field))
    if alpha_field.shape != (grid.n + 1,):
        raise ValueError(f"alpha_field must have length {grid.n} or {grid.n + 1}, got shape {alpha_field.shape}")
    if np.any(alpha_field < params.alpha_low - 1e-12) or np.any(alpha_field > 1.0):
        raise ValueError("retention field leaves [alpha_low, 1]")
    uniq, which = np.unique(alpha_field, return_inverse=True)
    kernels = [jump_kernel(params, grid, float(al)) for al in uniq]
    return _assemble_rows(params, grid, kernels, which.ravel())


def constraint_rows(params: ModelParams, grid: Grid):
    """Backward-difference matrix ``B`` and vector ``rho`` of the pinned scheme.

    Row ``i`` of ``rho*delta - B v`` is ``delta - (v_i - v_{i-1})`` with ``v_0 = k a``
    absorbed into ``rho^1 = 1 + a k / delta``.
    """
    n = grid.n
    B = np.eye(n) - np.eye(n, k=-1)
    rho = np.ones(n)
    rho[0] += params.a * params.k / grid.delta
    return B, rho


def constraint_residual(params: ModelParams, grid: Grid, v, v_zero: float | None = None) -> np.ndarray:
    """``delta - (v_j - v_{j-1})`` for ``j = 1..n``; ``v_zero`` defaults to ``k a``."""
    v = np.asarray(v, dtype=float)
    v0 = params.k * params.a if v_zero is None else v_zero
    prev = np.concatenate(([v0], v[:-1]))
    return grid.delta - (v - prev)


@dataclass
class HjbSolution:
    params: ModelParams
    grid: Grid
    v: np.ndarray
    alpha_field: np.ndarray
    regions: np.ndarray
    b_star: float
    iterations: int
    residual: float
    epsilon: float
    alpha_grid: np.ndarray
    v_zero: float
    alpha_zero: float
    boundary: str = "free"
    trace: list = field(default_factory=list)
    dominance_ok: bool = True

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def x_all(self) -> np.ndarray:
        return self.grid.all_nodes

    @property
    def v_all(self) -> np.ndarray:
        return np.concatenate(([self.v_zero], self.v))

    @property
    def alpha_all(self) -> np.ndarray:
        return np.concatenate(([self.alpha_zero], self.alpha_field))

    @property
    def dividend(self) -> np.ndarray:
        return self.regions == DIVIDEND

    def alpha_at(self, x):
        """Feedback retention read off the grid by linear interpolation (flat outside)."""
        return np.interp(x, self.x_all, self.alpha_all)

    def summary(self) -> dict:
        return {
            "b_star": None if np.isnan(self.b_star) else float(self.b_star),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "v_zero": float(self.v_zero),
            "alpha_at_barrier": float(self.alpha_field[-1]),
            "boundary": self.boundary,
        }


def _tables(params: ModelParams, grid: Grid, alpha_values: np.ndarray):
    kernels = [jump_kernel(params, grid, float(al)) for al in alpha_values]
    tables = {
        "conv": np.stack([kk.conv for kk in kernels]),
        "zero_weight": np.stack([kk.zero_weight for kk in kernels]),
        "const": np.stack([kk.const for kk in kernels]),
        "c": premium_rate(params, alpha_values),
    }
    return kernels, tables


def _jump_integrals(conv: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``sum_m conv[m] v_{j-m}`` for every retention at once."""
    n = v.size
    if n <= _DIRECT_CONV_MAX:
        return np.stack([np.convolve(row, v)[:n] for row in conv])
    return fftconvolve(conv, v[None, :], axes=1)[:, :n]


def _all_rows(params: ModelParams, grid: Grid, tables: dict, u: np.ndarray) -> np.ndarray:
    """``H^alpha u`` for every retention of the grid, shape ``(n_alpha, n + 1)``."""
    d, lam, q = grid.delta, params.lam, params.q
    slope = np.empty_like(u)
    slope[:-1] = (u[1:] - u[:-1]) / d
    slope[-1] = 1.0
    jump = tables["zero_weight"] * u[0] + tables["const"]
    jump[:, 1:] += _jump_integrals(tables["conv"], u[1:])
    return tables["c"][:, None] * slope[None, :] + lam * jump - (q + lam) * u[None, :]


def best_rows(params: ModelParams, grid: Grid, alpha_values, u) -> tuple[np.ndarray, np.ndarray]:
    """Per-node maximum of ``H^alpha u`` over ``alpha_values`` (nodes ``0..n``) and its argmax."""
    _, tables = _tables(params, grid, np.asarray(alpha_values, dtype=float))
    H = _all_rows(params, grid, tables, np.asarray(u, dtype=float))
    which = np.argmax(H, axis=0)
    return H[which, np.arange(grid.n + 1)], which


def _solve_combined(op: DiscreteOperator, params: ModelParams, grid: Grid, dividend: np.ndarray,
                    boundary: str) -> np.ndarray:
    """Operator rows off the dividend set, ``u_j - u_{j-1} = delta`` on it (``j >= 1``)."""
    A = op.matrix.copy()
    rhs = -op.offset.copy()
    idx = np.flatnonzero(dividend) + 1
    A[idx] = 0.0
    A[idx, idx] = 1.0
    A[idx, idx - 1] = -1.0
    rhs[idx] = grid.delta
    if boundary == "pinned":
        A[0] = 0.0
        A[0, 0] = 1.0
        rhs[0] = params.k * params.a
    return scipy.linalg.solve(A, rhs, check_finite=False)


def _check_boundary(boundary: str):
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")


def solve_policy(params: ModelParams, grid: Grid, alpha_field, dividend, boundary: str = "free") -> np.ndarray:
    """Value on nodes ``0..n`` of a frozen (retention field, dividend set) pair: one linear solve.

    ``dividend`` flags nodes ``1..n``.
    """
    _check_boundary(boundary)
    op = assemble(params, grid, alpha_field)
    return _solve_combined(op, params, grid, np.asarray(dividend, dtype=bool), boundary)


def _barrier(dividend: np.ndarray, nodes: np.ndarray) -> float:
    if not dividend[-1]:
        return float("nan")
    cont = np.flatnonzero(~dividend)
    return float(nodes[cont[-1] + 1]) if cont.size else float(nodes[0])


def howard_solve(
    params: ModelParams,
    grid: Grid,
    alpha_grid_size: int = 101,
    epsilon: float | None = None,
    max_iter: int = 200,
    alpha_values=None,
    boundary: str = "free",
) -> HjbSolution:
    """Policy iteration for the discrete obstacle problem.

    Each sweep picks, node by node, the best retention on a uniform grid over
    ``[alpha_low, 1]`` (first maximum wins), marks node ``j >= 1`` as dividend
    when the constraint row ``1 - (v_j - v_{j-1})/delta`` beats the best
    operator row, and solves the resulting linear system.  The starting iterate
    pays out everything above zero with full retention.
    ``alpha_values`` overrides the retention grid (e.g. ``[1.0]`` for no reinsurance).
    """
    _check_boundary(boundary)
    if alpha_values is None:
        if alpha_grid_size < 2:
            raise ValueError("alpha_grid_size must be at least 2")
        alpha_values = np.linspace(params.alpha_low, 1.0, alpha_grid_size)
    alpha_values = np.asarray(alpha_values, dtype=float)
    if epsilon is None:
        epsilon = 1e-9 * params.c / params.q
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    n, d = grid.n, grid.delta
    kernels, tables = _tables(params, grid, alpha_values)
    cols = np.arange(n + 1)
    which = np.full(n + 1, alpha_values.size - 1)
    dividend = np.ones(n, dtype=bool)
    u = _solve_combined(_assemble_rows(params, grid, kernels, which), params, grid, dividend, boundary)
    trace = []
    dominance_ok = True
    for it in range(1, max_iter + 1):
        H = _all_rows(params, grid, tables, u)
        new_which = np.argmax(H, axis=0)
        best = H[new_which, cols]
        new_dividend = best[1:] < constraint_residual(params, grid, u[1:], u[0]) / d
        op = _assemble_rows(params, grid, kernels, new_which)
        margin = op.dominance_margin()
        if margin.min() < -1e-9 * np.abs(np.diag(op.matrix)).max():
            dominance_ok = False
            logger.warning("diagonal dominance lost at iteration %d (margin %.3e)", it, margin.min())
        u_new = _solve_combined(op, params, grid, new_dividend, boundary)
        step = u_new - u
        change = float(np.max(np.abs(step)))
        policy_changed = bool(np.any(new_which != which) or np.any(new_dividend != dividend))
        trace.append({"iteration": it, "change": change, "min_increment": float(step.min()),
                      "policy_changed": policy_changed})
        logger.debug("howard %d change=%.3e dividend nodes=%d", it, change, int(new_dividend.sum()))
        u, which, dividend = u_new, new_which, new_dividend
        if change < epsilon or not policy_changed:
            break
    else:
        err = ConvergenceError(f"Howard iteration did not converge in {max_iter} iterations")
        err.trace = trace
        raise err

    H = _all_rows(params, grid, tables, u)
    best = H[np.argmax(H, axis=0), cols]
    residual = float(np.max(np.abs(np.maximum(best[1:], constraint_residual(params, grid, u[1:], u[0]) / d))))
    if boundary == "free":
        residual = max(residual, abs(float(best[0])))

    alphas = alpha_values[which].copy()
    nodes = grid.nodes
    b_star = _barrier(dividend, nodes)
    if np.isnan(b_star):
        logger.warning("no terminal dividend region on [%g, %g]; enlarge the grid", nodes[0], nodes[-1])
    else:
        # retention does not enter the dividend rows; hold its barrier value above it
        j_b = int(np.searchsorted(nodes, b_star)) + 1
        alphas[j_b:] = alphas[j_b]
    regions = np.where(dividend, DIVIDEND, CONTINUATION)
    return HjbSolution(params, grid, u[1:], alphas[1:], regions, b_star, it, residual, float(epsilon),
                       alpha_values, float(u[0]), float(alphas[0]), boundary, trace, dominance_ok)


@dataclass
class CheckResult:
    name: str
    ok: bool
    worst: float
    node: int | None = None


@dataclass
class ValidationReport:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if c.ok else 'FAIL'} {c.name}: worst={c.worst:.3e}" + ("" if c.node is None else f" at node {c.node}")
            for c in self.checks
        ]


def validate_solution(params: ModelParams, sol: HjbSolution, tol: float | None = None) -> ValidationReport:
    """Certificate checks on a converged solution.

    Node indices in the report count from 0 at ``x = 0``.  Under the pinned
    treatment ``v(0)`` is a datum, so slopes and complementarity start at node 1.
    """
    d = sol.grid.delta
    free = sol.boundary == "free"
    first = 0 if free else 1
    x, u = sol.x_all, sol.v_all
    tol = 10.0 * sol.epsilon if tol is None else tol
    slack = 1e-10 * max(1.0, float(np.abs(u).max()))
    checks = []

    worst = np.minimum(u - x, x + params.c / params.q - u)[first:]
    j = int(np.argmin(worst))
    checks.append(CheckResult("bounds x <= v <= x + c/q", bool(worst[j] >= -slack), float(worst[j]), j + first))

    inc = np.diff(u)[first:]
    worst = np.minimum(inc - d, params.k * d - inc)
    j = int(np.argmin(worst))
    checks.append(CheckResult("forward slope in [delta, k delta]", bool(worst[j] >= -slack), float(worst[j]), j + first))

    div = sol.dividend
    terminal = bool(div[-1]) and bool(np.all(div[np.argmax(div):]))
    checks.append(CheckResult("dividend region is a terminal interval", terminal, float(div.sum())))

    below = x < sol.b_star if not np.isnan(sol.b_star) else np.ones(x.size, dtype=bool)
    steps = np.diff(sol.alpha_all[below][first:])
    worst_step = float(steps.min()) if steps.size else 0.0
    checks.append(CheckResult("alpha nondecreasing below the barrier", worst_step >= 0.0, worst_step,
                              int(np.argmin(steps)) + first if steps.size else None))

    rows, _ = best_rows(params, sol.grid, sol.alpha_grid, u)
    cons = constraint_residual(params, sol.grid, sol.v, sol.v_zero) / d
    comp = np.abs(np.minimum(-rows[1:], -cons))
    if free:
        comp = np.concatenate(([abs(rows[0])], comp))
    j = int(np.argmax(comp))
    checks.append(CheckResult("complementarity", bool(comp[j] <= tol), float(comp[j]), j + first))
    checks.append(CheckResult("diagonal dominance", sol.dominance_ok, 0.0))
    return ValidationReport(checks)
