"""Event-driven Monte Carlo of the controlled surplus under barrier/bail-out/retention policies.

Between events the surplus grows linearly at the net premium rate; once it
reaches the barrier ``b`` the inflow is paid out continuously, so every
discounted dividend stream is integrated in closed form.  Claims below ``-a``
ruin the company, shallower deficits are refilled to exactly zero at cost ``k``
per unit.  Retention is revised at multiples of the period from the surplus
at that instant and held until the next revision.

Claim streams are keyed by ``(seed, path)`` through a counter-based generator
and drawn in fixed-size chunks, so a path's claims do not depend on the
horizon, on the strategy, or on how paths are batched.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelError, ModelParams, premium_rate

CHUNK = 256
THREADS_ENV = "DIVIDEND_REINSURANCE_THREADS"


@dataclass(frozen=True)
class Strategy:
    """Barrier ``b``, bail-out depth ``a`` and a retention rule revised every ``period``.

    The rule is either a constant ``alpha`` or a feedback table ``x -> alpha``
    interpolated linearly (flat beyond the table ends).
    """

    a: float
    b: float
    period: float = 1.0
    alpha: float | None = None
    table_x: tuple = ()
    table_alpha: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or not self.period > 0:
            raise ModelError("strategy needs a >= 0, b >= 0 and a positive period")
        if (self.alpha is None) == (len(self.table_x) == 0):
            raise ModelError("give either a fixed alpha or a feedback table")
        if self.alpha is None and len(self.table_x) != len(self.table_alpha):
            raise ModelError("feedback table columns differ in length")

    @property
    def kind(self) -> str:
        return "fixed" if self.alpha is not None else "feedback"

    @classmethod
    def fixed(cls, alpha: float, a: float, b: float, period: float = 1.0, name: str = "") -> "Strategy":
        return cls(a=a, b=b, period=period, alpha=float(alpha), name=name or f"alpha={alpha:g}")

    @classmethod
    def feedback(cls, xs, alphas, a: float, b: float, period: float = 1.0, name: str = "feedback") -> "Strategy":
        return cls(a=a, b=b, period=period, table_x=tuple(map(float, xs)),
                   table_alpha=tuple(map(float, alphas)), name=name)

    @classmethod
    def from_policy(cls, policy, period: float = 1.0) -> "Strategy":
        """Constant-retention strategy of a closed-form optimum."""
        return cls.fixed(policy.alpha_star, policy.a_star, policy.b_star, period, name="closed-form")

    @classmethod
    def from_solution(cls, sol, period: float | None = None) -> "Strategy":
        """Feedback strategy read off a finite-difference solution."""
        params = sol.params
        b = float(sol.b_star) if not math.isnan(sol.b_star) else float(sol.x[-1])
        return cls.feedback(sol.x_all, sol.alpha_all, params.a, b,
                            params.period if period is None else period, name="hjb-feedback")

    @classmethod
    def pay_out_and_fold(cls, params: ModelParams) -> "Strategy":
        """Pay the whole surplus now, cede all but the zero-premium share and never bail out."""
        return cls.fixed(params.alpha_low, 0.0, 0.0, params.period, name="pay-out-and-fold")

    def retention(self, x):
        if self.alpha is not None:
            out = np.full(np.shape(x), self.alpha)
        else:
            out = np.interp(x, self.table_x, self.table_alpha)
        return out if np.ndim(out) else float(out)

    def check(self, params: ModelParams) -> None:
        values = [self.alpha] if self.alpha is not None else list(self.table_alpha)
        lo = params.alpha_low
        if any(v < lo - 1e-12 or v > 1.0 for v in values):
            raise ModelError(f"retention values must lie in [{lo:g}, 1]")


@dataclass(frozen=True)
class ClaimScenario:
    """Explicit claim arrival times and gross sizes, for scripted paths."""

    times: tuple
    sizes: tuple


@dataclass(frozen=True)
class PathEvent:
    time: float
    kind: str  # claim | dividend | injection | revision | ruin
    amount: float
    surplus_after: float
    alpha: float
    retained: float = 0.0
    duration: float = 0.0  # > 0 for a continuous dividend stream starting at ``time``


@dataclass
class SimOutcome:
    discounted_dividends: float
    discounted_injections_cost: float
    ruin_time: float | None
    horizon: float
    events: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.discounted_dividends - self.discounted_injections_cost

    @property
    def censored(self) -> bool:
        return self.ruin_time is None

    def replay(self, q: float, k: float) -> float:
        """Recompute the objective from the event log alone."""
        div = inj = 0.0
        for e in self.events:
            if e.kind == "dividend":
                if e.duration > 0.0:
                    rate = e.amount / e.duration
                    div += rate / q * (math.exp(-q * e.time) - math.exp(-q * (e.time + e.duration)))
                else:
                    div += e.amount * math.exp(-q * e.time)
            elif e.kind == "injection":
                inj += k * e.amount * math.exp(-q * e.time)
        return div - inj


def _stream(seed: int, path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(path)])))


class _ClaimSource:
    """Lazily extended claim stream of one path; chunked draws keep prefixes stable."""

    def __init__(self, params: ModelParams, seed: int, path: int):
        self.params = params
        self.rng = _stream(seed, path)
        self.times = np.empty(0)
        self.sizes = np.empty(0)

    def extend(self):
        gaps = self.rng.exponential(1.0 / self.params.lam, CHUNK)
        sizes = self.params.claims.sample(self.rng, CHUNK)
        start = self.times[-1] if self.times.size else 0.0
        self.times = np.concatenate((self.times, start + np.cumsum(gaps)))
        self.sizes = np.concatenate((self.sizes, sizes))

    def get(self, i: int):
        while i >= self.times.size:
            self.extend()
        return float(self.times[i]), float(self.sizes[i])


class _ScriptedSource:
    def __init__(self, scenario: ClaimScenario):
        self.times = np.asarray(scenario.times, dtype=float)
        self.sizes = np.asarray(scenario.sizes, dtype=float)

    def get(self, i: int):
        if i >= self.times.size:
            return math.inf, 0.0
        return float(self.times[i]), float(self.sizes[i])


def simulate_path(
    params: ModelParams,
    strategy: Strategy,
    x0: float,
    horizon: float,
    seed: int = 0,
    path: int = 0,
    scenario: ClaimScenario | None = None,
    record: bool = True,
) -> SimOutcome:
    """One exact trajectory up to ruin or ``horizon``; claims come from ``(seed, path)`` or ``scenario``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if x0 < 0:
        raise ValueError("initial surplus must be nonnegative")
    strategy.check(params)
    q, k, a, b = params.q, params.k, strategy.a, strategy.b
    source = _ScriptedSource(scenario) if scenario is not None else _ClaimSource(params, seed, path)
    events = []
    log = events.append if record else (lambda e: None)

    t, x = 0.0, float(x0)
    alpha = float(strategy.retention(x))
    log(PathEvent(0.0, "revision", 0.0, x, alpha))
    div = inj = 0.0
    if x > b:
        div += x - b
        x = b
        log(PathEvent(0.0, "dividend", x0 - b, x, alpha))
    n_claim, n_rev = 0, 1
    tc, size = source.get(0)
    ruin = None
    while True:
        tr = n_rev * strategy.period
        tn = min(tc, tr, horizon)
        c = float(premium_rate(params, alpha))
        if x >= b:
            t_hit = t
        elif c > 0.0:
            t_hit = t + (b - x) / c
        else:
            t_hit = math.inf
        if t_hit < tn:
            x = b
            if c > 0.0:
                div += c / q * (math.exp(-q * t_hit) - math.exp(-q * tn))
                log(PathEvent(t_hit, "dividend", c * (tn - t_hit), x, alpha, duration=tn - t_hit))
        else:
            x = min(x + c * (tn - t), b)
        t = tn
        if tn == horizon:
            break
        if tn == tr:
            alpha = float(strategy.retention(x))
            n_rev += 1
            log(PathEvent(t, "revision", 0.0, x, alpha))
            continue
        retained = alpha * size
        x -= retained
        log(PathEvent(t, "claim", size, x, alpha, retained=retained))
        if x < -a:
            ruin = t
            log(PathEvent(t, "ruin", -x, x, alpha))
            break
        if x < 0.0:
            inj += k * (-x) * math.exp(-q * t)
            log(PathEvent(t, "injection", -x, 0.0, alpha))
            x = 0.0
        n_claim += 1
        tc, size = source.get(n_claim)
    return SimOutcome(div, inj, ruin, horizon, events)


def _batch_claims(params: ModelParams, seed: int, paths: np.ndarray, horizon: float):
    """Claim arrays for a batch, long enough that every path's last arrival passes ``horizon``."""
    gens = [_stream(seed, int(p)) for p in paths]
    times, sizes = [], []
    last = np.zeros(paths.size)
    while True:
        g = np.stack([r.exponential(1.0 / params.lam, CHUNK) for r in gens])
        s = np.stack([params.claims.sample(r, CHUNK) for r in gens])
        t = last[:, None] + np.cumsum(g, axis=1)
        times.append(t)
        sizes.append(s)
        last = t[:, -1]
        if np.all(last > horizon):
            break
    return np.concatenate(times, axis=1), np.concatenate(sizes, axis=1)


def _simulate_batch(params: ModelParams, strategy: Strategy, x0: float, horizon: float,
                    seed: int, paths: np.ndarray) -> np.ndarray:
    """Lockstep vectorised version of :func:`simulate_path`; returns objective samples."""
    q, k, a, b, period = params.q, params.k, strategy.a, strategy.b, strategy.period
    times, sizes = _batch_claims(params, seed, paths, horizon)
    n = paths.size
    x = np.full(n, float(x0))
    div = np.zeros(n)
    inj = np.zeros(n)
    over = x > b
    div[over] += x[over] - b
    x = np.minimum(x, b)
    t = np.zeros(n)
    alpha = np.asarray(strategy.retention(x), dtype=float)
    idx = np.zeros(n, dtype=np.int64)
    n_rev = np.ones(n)
    live = np.arange(n)
    while live.size:
        xl, tl, al = x[live], t[live], alpha[live]
        tc = times[live, idx[live]]
        tr = n_rev[live] * period
        tn = np.minimum(np.minimum(tc, tr), horizon)
        c = premium_rate(params, al)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_hit = np.where(xl >= b, tl, np.where(c > 0.0, tl + (b - xl) / c, np.inf))
        hit = t_hit < tn
        pay = hit & (c > 0.0)
        div[live[pay]] += c[pay] / q * (np.exp(-q * t_hit[pay]) - np.exp(-q * tn[pay]))
        xl = np.where(hit, b, np.minimum(xl + c * (tn - tl), b))
        tl = tn
        done = tn == horizon
        rev = ~done & (tn == tr)
        clm = ~done & ~rev
        if rev.any():
            al = al.copy()
            al[rev] = strategy.retention(xl[rev])
            n_rev[live[rev]] += 1
        ruined = np.zeros(live.size, dtype=bool)
        if clm.any():
            ci = live[clm]
            xc = xl[clm] - al[clm] * sizes[ci, idx[ci]]
            ruin_c = xc < -a
            bail = ~ruin_c & (xc < 0.0)
            inj[ci[bail]] += k * (-xc[bail]) * np.exp(-q * tl[clm][bail])
            xc = np.where(bail, 0.0, xc)
            xl[clm] = xc
            idx[ci] += 1
            ruined[clm] = ruin_c
        x[live], t[live], alpha[live] = xl, tl, al
        live = live[~(done | ruined)]
    return div - inj


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    n_paths: int
    horizon: float
    truncation_bound: float
    extended: bool

    def __iter__(self):
        yield self.mean
        yield self.se

    def as_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "n_paths": self.n_paths, "horizon": self.horizon,
                "truncation_bound": self.truncation_bound, "extended": self.extended}


def truncation_bound(params: ModelParams, strategy: Strategy, x0: float, horizon: float) -> float:
    """Bound on the discounted value left after ``horizon``.

    Future dividends are at most ``max(x0, b) + c/q`` and future injection costs
    at most ``k a lam / q``; the neglected term is their difference.
    """
    tail = max(max(x0, strategy.b) + params.c / params.q, params.k * strategy.a * params.lam / params.q)
    return math.exp(-params.q * horizon) * tail


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _samples(params, strategy, x0, horizon, seed, n_paths, batch, workers):
    starts = range(0, n_paths, batch)
    jobs = [np.arange(s, min(s + batch, n_paths)) for s in starts]
    run = lambda p: _simulate_batch(params, strategy, x0, horizon, seed, p)
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(p) for p in jobs]
    return np.concatenate(parts)


def estimate_value(
    params: ModelParams,
    strategy: Strategy,
    x0: float,
    horizon: float | None = None,
    n_paths: int = 10_000,
    seed: int = 0,
    batch: int = 5_000,
    workers: int | None = None,
    bias_ratio: float = 0.1,
) -> Estimate:
    """Monte Carlo mean and standard error of the discounted objective from ``x0``.

    The horizon is extended until the truncation bound falls below
    ``bias_ratio`` standard errors; path ``i`` always uses stream ``(seed, i)``.
    """
    if n_paths < 2:
        raise ValueError("need at least two paths")
    if x0 < 0:
        raise ValueError("initial surplus must be nonnegative")
    strategy.check(params)
    workers = _thread_count() if workers is None else workers
    if horizon is None:
        horizon = 20.0 / params.q
    extended = False
    for _ in range(20):
        y = _samples(params, strategy, x0, horizon, seed, n_paths, batch, workers)
        mean = float(np.mean(y))
        se = float(np.std(y, ddof=1) / math.sqrt(n_paths))
        bound = truncation_bound(params, strategy, x0, horizon)
        target = bias_ratio * se
        if bound < target or (se == 0.0 and bound < 1e-12):
            return Estimate(mean, se, n_paths, horizon, bound, extended)
        tail = bound * math.exp(params.q * horizon)
        need = math.log(tail / max(target, 1e-12)) / params.q
        horizon = max(need * 1.05, horizon * 1.25)
        extended = True
    raise RuntimeError("could not certify the truncation bias")


def compare_paths(
    params: ModelParams,
    x0: float,
    seed: int,
    horizon: float,
    strategies: list[Strategy],
    path: int = 0,
) -> dict:
    """Run several strategies on one common claim scenario.

    Returns per-strategy surplus series (with both pre- and post-jump values at
    claim times) and the piecewise-constant retention trace.
    """
    if len(strategies) < 2:
        raise ValueError("compare_paths needs at least two strategies")
    out = {}
    for i, s in enumerate(strategies):
        res = simulate_path(params, s, x0, horizon, seed=seed, path=path)
        ts, xs = [0.0], [min(float(x0), s.b)]
        rev_t, rev_a = [], []
        for e in res.events:
            if e.kind == "claim":
                pre = e.surplus_after + e.retained
                ts += [e.time, e.time]
                xs += [pre, e.surplus_after]
            elif e.kind in ("injection", "ruin"):
                ts.append(e.time)
                xs.append(e.surplus_after)
            elif e.kind == "revision":
                rev_t.append(e.time)
                rev_a.append(e.alpha)
                ts.append(e.time)
                xs.append(e.surplus_after)
            elif e.kind == "dividend" and e.duration > 0:
                ts += [e.time, e.time + e.duration]
                xs += [e.surplus_after, e.surplus_after]
        end = res.ruin_time if res.ruin_time is not None else horizon
        if ts[-1] < end:
            ts.append(end)
            xs.append(xs[-1])
        key = s.name or f"strategy{i}"
        out[key] = {"t": np.array(ts), "x": np.array(xs), "revision_t": np.array(rev_t),
                    "alpha": np.array(rev_a), "outcome": res}
    return out
