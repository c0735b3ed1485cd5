"""Command-line entry point: closed-form policies, HJB solves, simulation and sweeps."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import closedform as cf
from .config import ConfigError, RunConfig, load
from .hjbsolver import Grid, howard_solve, validate_solution
from .model import ExponentialClaims, ModelError, ModelParams
from .simulate import Strategy, compare_paths, estimate_value, simulate_path

logger = logging.getLogger("dividend_reinsurance")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INVALID = 0, 2, 3, 4

DEFAULTS = {"n": 300, "delta": 0.009, "alpha_grid": 101, "paths": 10_000, "seed": 0, "x0": 0.0}
SWEEP_PARAMS = ("k", "a", "q", "eta2", "period")


def write_atomic(path: str | Path, text: str) -> Path:
    """Write through a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _setting(args, cfg: RunConfig, name: str):
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    return cfg.get(name, DEFAULTS.get(name))


def _params(args, cfg: RunConfig) -> ModelParams:
    params = cfg.params
    if getattr(args, "period", None) is not None:
        params = params.replace(period=args.period)
    return params


def _grid(args, cfg: RunConfig) -> Grid:
    return Grid(int(_setting(args, cfg, "n")), float(_setting(args, cfg, "delta")))


def _solve(args, cfg: RunConfig, params: ModelParams):
    return howard_solve(
        params,
        _grid(args, cfg),
        alpha_grid_size=int(_setting(args, cfg, "alpha_grid")),
        epsilon=_setting(args, cfg, "epsilon"),
        boundary=args.boundary,
    )


def _prefix(args, default: str) -> str:
    return args.out if args.out else default


def _need_exponential(params: ModelParams):
    if not isinstance(params.claims, ExponentialClaims):
        raise ConfigError(
            "closed-form policies need exponential claims; set 'claim = exponential mu=...' "
            "or use the 'solve' command for other claim laws"
        )


def run_closed_form(args, cfg: RunConfig) -> int:
    params = _params(args, cfg)
    _need_exponential(params)
    policy = cf.optimize_policy(params)
    m = cf.ExpModel(params, policy.alpha_star)
    xs = np.linspace(-policy.a_star, policy.b_star, 1000)
    vals = cf.cost_at(m, policy.a_star, policy.b_star, xs)
    prefix = _prefix(args, "closed_form")
    write_atomic(f"{prefix}.json", json_text(policy.as_dict()))
    write_atomic(f"{prefix}_cost.csv", csv_text(["x", "cost"], zip(xs, vals)))
    print(json_text(policy.as_dict()), end="")
    return EXIT_OK


def _solution_rows(sol):
    regions = np.concatenate((["boundary"], sol.regions))
    return zip(sol.x_all, sol.v_all, sol.alpha_all, regions)


def run_solve(args, cfg: RunConfig) -> int:
    params = _params(args, cfg)
    sol = _solve(args, cfg, params)
    prefix = _prefix(args, "solve")
    summary = sol.summary()
    summary["valid"] = validate_solution(params, sol).ok
    write_atomic(f"{prefix}.csv", csv_text(["x", "v", "alpha", "region"], _solution_rows(sol)))
    write_atomic(f"{prefix}_summary.json", json_text(summary))
    print(json_text(summary), end="")
    return EXIT_OK


def _strategy(args, cfg: RunConfig, params: ModelParams) -> Strategy:
    kind = args.strategy
    if kind == "closed-form":
        _need_exponential(params)
        return Strategy.from_policy(cf.optimize_policy(params), params.period)
    if kind == "hjb":
        return Strategy.from_solution(_solve(args, cfg, params))
    if kind == "fold":
        return Strategy.pay_out_and_fold(params)
    if args.alpha is None or args.barrier is None:
        raise ConfigError("--strategy fixed needs --alpha and --barrier")
    return Strategy.fixed(args.alpha, params.a, args.barrier, params.period)


def run_simulate(args, cfg: RunConfig) -> int:
    params = _params(args, cfg)
    strategy = _strategy(args, cfg, params)
    x0 = float(_setting(args, cfg, "x0"))
    seed = int(_setting(args, cfg, "seed"))
    est = estimate_value(params, strategy, x0, horizon=_setting(args, cfg, "horizon"),
                         n_paths=int(_setting(args, cfg, "paths")), seed=seed)
    path = simulate_path(params, strategy, x0, est.horizon, seed=seed, path=0)
    prefix = _prefix(args, "simulate")
    summary = est.as_dict() | {"strategy": strategy.name, "x0": x0, "seed": seed}
    rows = [(e.time, e.kind, e.amount, e.surplus_after, e.alpha) for e in path.events]
    write_atomic(f"{prefix}_events.csv", csv_text(["t", "kind", "amount", "surplus_after", "alpha"], rows))
    write_atomic(f"{prefix}.json", json_text(summary))
    print(json_text(summary), end="")
    return EXIT_OK


def run_compare(args, cfg: RunConfig) -> int:
    params = _params(args, cfg)
    sol = _solve(args, cfg, params)
    strategies = [Strategy.fixed(1.0, params.a, Strategy.from_solution(sol).b, params.period, name="alpha=1")]
    periods = [float(p) for p in args.periods.split(",")] if args.periods else [params.period]
    for p in periods:
        base = Strategy.from_solution(sol, period=p)
        strategies.append(Strategy.feedback(base.table_x, base.table_alpha, base.a, base.b, p,
                                            name=f"feedback-period={p:g}"))
    x0 = float(_setting(args, cfg, "x0"))
    horizon = float(_setting(args, cfg, "horizon") or 20.0)
    table = compare_paths(params, x0, int(_setting(args, cfg, "seed")), horizon, strategies)
    surplus, alphas, summary = [], [], {}
    for name, tr in table.items():
        surplus += [(name, t, x) for t, x in zip(tr["t"], tr["x"])]
        alphas += [(name, t, a) for t, a in zip(tr["revision_t"], tr["alpha"])]
        res = tr["outcome"]
        summary[name] = {"objective": res.objective, "ruin_time": res.ruin_time}
    prefix = _prefix(args, "compare")
    write_atomic(f"{prefix}_surplus.csv", csv_text(["strategy", "t", "surplus"], surplus))
    write_atomic(f"{prefix}_alpha.csv", csv_text(["strategy", "t", "alpha"], alphas))
    write_atomic(f"{prefix}.json", json_text(summary))
    print(json_text(summary), end="")
    return EXIT_OK


def run_sweep(args, cfg: RunConfig) -> int:
    name = args.param
    values = [float(v) for v in args.values.split(",")]
    if len(values) < 2:
        raise ConfigError("sweep needs at least two values")
    base = _params(args, cfg)
    rows, summary, failed = [], {}, 0
    for value in values:
        key = repr(value)
        try:
            params = base.replace(**{name: value})
            sol = _solve(args, cfg, params)
        except (ModelError, cf.ConvergenceError, ValueError) as exc:
            failed += 1
            summary[key] = {"error": str(exc)}
            logger.error("sweep %s=%s failed: %s", name, key, exc)
            continue
        rows += [(value, x, v, a) for x, v, a in zip(sol.x_all, sol.v_all, sol.alpha_all)]
        summ = sol.summary()
        entry = {"b_star": summ["b_star"], "v_zero": summ["v_zero"], "iterations": sol.iterations}
        if name == "period":
            # the stationary solve ignores the revision period; its effect shows up on paths only
            est = estimate_value(params, Strategy.from_solution(sol), float(_setting(args, cfg, "x0")),
                                 n_paths=int(_setting(args, cfg, "paths")), seed=int(_setting(args, cfg, "seed")))
            entry["mc_value"], entry["mc_se"] = est.mean, est.se
        summary[key] = entry
    prefix = _prefix(args, "sweep")
    write_atomic(f"{prefix}.csv", csv_text(["param_value", "x", "v", "alpha"], rows))
    write_atomic(f"{prefix}.json", json_text({"parameter": name, "runs": summary}))
    print(json_text({"parameter": name, "runs": summary}), end="")
    return EXIT_NONCONVERGED if failed else EXIT_OK


def _identity_checks(params: ModelParams, draws: int, seed: int) -> dict:
    """Root identities and scale-function anchors on random retentions and rates."""
    rng = np.random.default_rng(seed)
    mu = 1.0 / params.claim_mean
    worst = 0.0
    for _ in range(draws):
        p = params.replace(claims=ExponentialClaims(mu * rng.uniform(0.5, 2.0)), q=params.q * rng.uniform(0.2, 5.0))
        alpha = rng.uniform(p.alpha_low, 1.0)
        if alpha <= p.alpha_low:
            continue
        m = cf.ExpModel(p, alpha)
        r = cf.solve_roots(m)
        A, B, C = m.alpha * m.c_alpha, m.c_alpha * m.mu - m.alpha * m.lam - m.alpha * m.q, -m.mu * m.q
        errs = [
            abs((r.phi_q + r.rho_minus) - (-B / A)) / abs(B / A),
            abs(r.phi_q * r.rho_minus - C / A) / abs(C / A),
            abs(cf.laplace_exponent(m, r.phi_q) - p.q) / p.q,
            abs(cf.laplace_exponent(m, r.rho_minus) - p.q) / p.q,
            abs(cf.scale_w(m, r, 0.0) * m.c_alpha - 1.0),
        ]
        worst = max(worst, *errs)
    return {"ok": worst < 1e-9, "worst": worst, "draws": draws}


def run_validate(args, cfg: RunConfig) -> int:
    params = _params(args, cfg)
    report = {"identities": _identity_checks(params, 100, int(_setting(args, cfg, "seed")))}
    sol = _solve(args, cfg, params)
    val = validate_solution(params, sol)
    report["hjb"] = {"ok": val.ok, "checks": val.lines(), "iterations": sol.iterations}
    if isinstance(params.claims, ExponentialClaims):
        policy = cf.optimize_policy(params)
        worst = max(policy.residuals.values())
        report["closed_form"] = {"ok": worst < 1e-6, "worst_residual": worst, "policy": policy.as_dict()}
    ok = all(section["ok"] for section in report.values())
    report["ok"] = ok
    write_atomic(f"{_prefix(args, 'validate')}.json", json_text(report))
    for line in val.lines():
        print(line)
    print("PASS identities" if report["identities"]["ok"] else "FAIL identities")
    if "closed_form" in report:
        print(("PASS" if report["closed_form"]["ok"] else "FAIL") + " closed-form optimality residuals")
    return EXIT_OK if ok else EXIT_INVALID


COMMANDS = {
    "closed-form": run_closed_form,
    "solve": run_solve,
    "simulate": run_simulate,
    "compare": run_compare,
    "sweep": run_sweep,
    "validate": run_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="model config file (default: bundled baseline)")
    common.add_argument("--out", help="output path prefix")
    common.add_argument("--seed", type=int)
    common.add_argument("--n", type=int, help="grid node count")
    common.add_argument("--delta", type=float, help="grid spacing")
    common.add_argument("--alpha-grid", dest="alpha_grid", type=int, help="retention grid size")
    common.add_argument("--epsilon", type=float, help="Howard stopping tolerance")
    common.add_argument("--paths", type=int, help="Monte Carlo path count")
    common.add_argument("--horizon", type=float, help="simulation horizon")
    common.add_argument("--period", type=float, help="retention revision period")
    common.add_argument("--x0", type=float, help="initial surplus")
    common.add_argument("--boundary", choices=["free", "pinned"], default="free",
                        help="value at zero surplus: solved from its own generator row, or pinned to k*a")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dividend-reinsurance", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("closed-form", aliases=["closedform"], parents=[common],
                   help="optimal constant-retention policy for exponential claims")
    sub.add_parser("solve", parents=[common], help="finite-difference HJB solve")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo value of a strategy")
    p.add_argument("--strategy", choices=["closed-form", "hjb", "fixed", "fold"], default="hjb")
    p.add_argument("--alpha", type=float, help="retention for --strategy fixed")
    p.add_argument("--barrier", type=float, help="dividend barrier for --strategy fixed")
    p = sub.add_parser("compare", parents=[common], help="strategies on a common claim path")
    p.add_argument("--periods", help="comma-separated revision periods for the feedback strategy")
    p = sub.add_parser("sweep", parents=[common], help="re-solve over a parameter range")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    sub.add_parser("validate", parents=[common], help="run the certificate suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = "closed-form" if args.command == "closedform" else args.command
    try:
        cfg = load(args.config)
        return COMMANDS[command](args, cfg)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except cf.ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        for step in getattr(exc, "trace", []):
            print(json.dumps(step), file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
