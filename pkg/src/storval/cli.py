"""Command-line front end.

Every subcommand reads one JSON config (``--config``), prints a JSON
result on stdout and optionally writes a plot-ready CSV (``--csv``).
Exit codes: 0 success, 2 bad config or violated market assumption, 3 a
validation check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .crossings import (
    estimate_marginal_value_from_data,
    finite_difference_marginal_value,
    marginal_value,
    marginal_value_iid_closed_form,
)
from .market import AssumptionViolation, estimate, path_profit, path_profits, stage_cost
from .optimize import (
    optimal_contract_no_storage,
    optimize_contract,
    optimize_storage_size,
    saa_objective,
    supply_function,
)
from .storage import StorageType, simulate_policy
from .validation import check_concavity, check_lemma2, check_marginal_value_vs_fd, check_threshold_vs_dp
from .wind_process import sample_paths

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    s = "%.17g" % (v + 0.0)  # + 0.0 turns -0.0 into 0.0
    # keep floats recognizable as floats without changing their value
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits.

    Key order is preserved, so equal inputs give byte-identical output.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt_float(float(v)) for v in row])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _option_number(cfg: RunConfig, name: str, default: float, lo: float | None = None) -> float:
    v = cfg.option(name, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"options.{name}: expected a finite number, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"options.{name}: must be >= {lo}, got {v}")
    return float(v)


def _option_count(cfg: RunConfig, name: str, default: int, lo: int = 1) -> int:
    v = cfg.option(name, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"options.{name}: expected an integer >= {lo}, got {v!r}")
    return v


def _solve(cfg: RunConfig):
    if cfg.storage.b == 0 or cfg.storage.r == 0:
        return optimal_contract_no_storage(cfg.process, cfg.prices, cfg.mc.paths, cfg.mc.seed)
    return optimize_contract(cfg.storage, cfg.process, cfg.prices, cfg.mc.paths, cfg.mc.seed, cfg.mc.tol)


def cmd_contract(cfg: RunConfig, args) -> tuple[dict, int]:
    sol = _solve(cfg)
    out = {"command": "contract", **sol.to_dict()}
    if args.csv:
        points = _option_count(cfg, "curve_points", 101, lo=2)
        obj = saa_objective(cfg.storage, cfg.process, cfg.prices, cfg.mc.paths, cfg.mc.seed)
        xs = np.linspace(0.0, 1.0, points)
        rows = []
        for x in xs:
            est = obj(float(x))
            rows.append((x, est.mean, est.std_error))
        _write_csv(args.csv, ["x", "value", "value_se"], rows)
        out["curve_csv"] = args.csv
    return out, EXIT_OK


def cmd_marginal_value(cfg: RunConfig, args) -> tuple[dict, int]:
    spec, prices = cfg.process, cfg.prices
    storage = None if cfg.storage.ideal else cfg.storage
    if spec.kind == "empirical":
        n_boot = _option_count(cfg, "bootstrap", 1000, lo=0)
        rep = estimate_marginal_value_from_data(spec.traces, prices, n_boot=n_boot, seed=cfg.mc.seed, storage=storage)
    else:
        rep = marginal_value(spec, prices, cfg.mc.paths, cfg.mc.seed, storage=storage, method=args.method)
    out: dict = {"command": "marginal-value", "gamma": prices.gamma, "seed": cfg.mc.seed, **rep.to_dict()}
    if args.closed_form:
        if spec.kind != "iid":
            raise ConfigError("process.kind: the distribution-free closed form needs an iid process")
        if storage is not None:
            raise ConfigError("storage: the distribution-free closed form assumes lossless storage")
        out["closed_form"] = marginal_value_iid_closed_form(prices, spec.horizon)
    if args.validate_fd is not None:
        if spec.kind == "empirical":
            raise ConfigError("process.kind: finite-difference validation needs a generative process")
        r = _option_number(cfg, "fd_rate", 1.0, lo=0.0)
        fd = finite_difference_marginal_value(
            spec, prices, epsilon=args.validate_fd, paths=cfg.mc.paths, seed=cfg.mc.seed, r=r, storage=storage
        )
        out["finite_difference"] = fd.to_dict()
        out["agreement_ratio"] = fd.value / rep.formula_value if rep.formula_value != 0 else None
    return out, EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> tuple[dict, int]:
    theta, spec, prices = cfg.storage, cfg.process, cfg.prices
    if args.x is not None:
        if not 0.0 <= args.x <= 1.0:
            raise ConfigError(f"--x: contract must lie in [0, 1], got {args.x}")
        x = float(args.x)
    else:
        x = _solve(cfg).x_star
    xi = sample_paths(spec, cfg.mc.seed, cfg.mc.paths)
    profits = path_profits(x, theta, xi, prices)
    shown = []
    for i in range(min(args.show, cfg.mc.paths)):
        traj = simulate_policy(x, theta, xi[i])
        g = [stage_cost(x, float(u), float(s), prices) for u, s in zip(traj.inputs, xi[i])]
        shown.append(
            {
                "index": i,
                "xi": xi[i].tolist(),
                "z": traj.states.tolist(),
                "u": traj.inputs.tolist(),
                "g": g,
                "profit": path_profit(x, theta, xi[i], prices),
            }
        )
    return {
        "command": "simulate",
        "x": x,
        "storage": theta.to_dict(),
        "estimate": estimate(profits, cfg.mc.seed).to_dict(),
        "paths": shown,
    }, EXIT_OK


def _price_grid(cfg: RunConfig, args) -> list[float]:
    if args.grid:
        try:
            return [float(v) for v in args.grid.split(",")]
        except ValueError:
            raise ConfigError(f"--grid: expected comma-separated prices, got {args.grid!r}") from None
    grid = cfg.option("price_grid")
    if grid is None:
        return np.linspace(0.0, cfg.prices.m_alpha, 11).tolist()
    if not isinstance(grid, list) or not grid:
        raise ConfigError("options.price_grid: expected a nonempty list of prices")
    for i, v in enumerate(grid):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"options.price_grid[{i}]: expected a finite number, got {v!r}")
    return [float(v) for v in grid]


def cmd_supply_function(cfg: RunConfig, args) -> tuple[dict, int]:
    grid = _price_grid(cfg, args)
    p = cfg.prices
    for v in grid:
        if not 0.0 <= v <= p.m_alpha:
            raise ConfigError(
                f"price grid: p={v} outside [0, m_alpha={p.m_alpha}] (Assumption 1 requires p <= m_alpha)"
            )
    try:
        ps, xs = supply_function(cfg.process, p.m_alpha, p.m_beta, grid)
    except AssumptionViolation as exc:
        raise ConfigError(f"price grid: {exc}") from None
    if np.any(np.diff(xs) < 0):  # pragma: no cover - quantiles of a nondecreasing ratio
        return {"command": "supply-function", "error": "supply curve not monotone"}, EXIT_VALIDATION
    out = {"command": "supply-function", "m_alpha": p.m_alpha, "m_beta": p.m_beta, "p": ps, "x_star": xs}
    if args.csv:
        _write_csv(args.csv, ["p", "x_star"], zip(ps, xs))
        out["curve_csv"] = args.csv
    return out, EXIT_OK


def cmd_size_storage(cfg: RunConfig, args) -> tuple[dict, int]:
    c_b = _option_number(cfg, "c_b", 0.0, lo=0.0)
    c_r = _option_number(cfg, "c_r", 0.0, lo=0.0)
    b_max = _option_number(cfg, "b_max", 1.0)
    r_max = _option_number(cfg, "r_max", 1.0)
    if b_max <= 0 or r_max <= 0:
        raise ConfigError("options.b_max/r_max: box bounds must be positive")
    losses = None if cfg.storage.ideal else cfg.storage
    res = optimize_storage_size(
        cfg.process, cfg.prices, c_b, c_r, b_max, r_max, losses=losses, paths=cfg.mc.paths, seed=cfg.mc.seed
    )
    out = {"command": "size-storage", "c_b": c_b, "c_r": c_r, "b_max": b_max, "r_max": r_max, **res.to_dict()}
    if args.csv:
        points = _option_count(cfg, "curve_points", 11, lo=2)
        base = losses or StorageType()
        rows = []
        for b in np.linspace(0.0, b_max, points):
            b = float(b)
            sol = optimize_contract(base.with_capacity(b, r_max), cfg.process, cfg.prices, cfg.mc.paths, cfg.mc.seed, 1e-6)
            rows.append((b, r_max, sol.x_star, sol.value, sol.value - c_b * b - c_r * r_max))
        _write_csv(args.csv, ["b", "r", "x_star", "value", "net_value"], rows)
        out["curve_csv"] = args.csv
    return out, EXIT_OK


def cmd_validate(cfg: RunConfig, args) -> tuple[dict, int]:
    spec, prices, mc = cfg.process, cfg.prices, cfg.mc
    checks = []
    skipped = {}
    if spec.is_continuous:
        checks.append(check_lemma2(spec, prices, mc.paths, mc.seed))
    else:
        skipped["lemma2"] = "empirical traces can tie the contract level"
    checks.append(check_threshold_vs_dp(_option_count(cfg, "dp_instances", 20), mc.seed))
    theta = cfg.storage if cfg.storage.b > 0 and cfg.storage.r > 0 else StorageType(0.2, 1.0)
    checks.append(check_concavity(theta, spec, prices, mc.paths, mc.seed))
    if spec.is_continuous:
        eps = _option_number(cfg, "fd_epsilon", 1e-3)
        checks.append(check_marginal_value_vs_fd(spec, prices, mc.paths, mc.seed, epsilon=eps))
    else:
        skipped["marginal_value_vs_fd"] = "finite differences need a generative process"
    passed = all(c.passed for c in checks)
    out = {
        "command": "validate",
        "passed": passed,
        "checks": [c.to_dict() for c in checks],
        "skipped": skipped,
        "paths": mc.paths,
        "seed": mc.seed,
    }
    return out, EXIT_OK if passed else EXIT_VALIDATION


COMMANDS: dict[str, Callable] = {
    "contract": cmd_contract,
    "marginal-value": cmd_marginal_value,
    "simulate": cmd_simulate,
    "supply-function": cmd_supply_function,
    "size-storage": cmd_size_storage,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--paths", type=int, help="override mc.paths")
    common.add_argument("--output", help="write the JSON result here instead of stdout")

    parser = argparse.ArgumentParser(
        prog="storval", description="Forward contracts and the value of storage for a variable supplier"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("contract", parents=[common], help="optimal forward contract")
    p.add_argument("--csv", help="write the sampled objective over an x-grid")

    p = sub.add_parser("marginal-value", parents=[common], help="marginal value of capacity at b = 0")
    p.add_argument("--closed-form", action="store_true", help="add the iid closed form")
    p.add_argument("--validate-fd", type=float, metavar="EPS", help="also run a finite difference with b = EPS")
    p.add_argument("--method", choices=("auto", "exact", "mc"), default="auto")

    p = sub.add_parser("simulate", parents=[common], help="roll out the threshold policy")
    p.add_argument("--x", type=float, help="contract level (default: optimal contract)")
    p.add_argument("--show", type=int, default=10, help="number of paths to emit in full")

    p = sub.add_parser("supply-function", parents=[common], help="optimal contract versus day-ahead price")
    p.add_argument("--grid", help="comma-separated price grid (default: options.price_grid)")
    p.add_argument("--csv", help="write the curve as CSV")

    p = sub.add_parser("size-storage", parents=[common], help="capacity and rate against linear capital cost")
    p.add_argument("--csv", help="write the optimal value over a b-grid")

    sub.add_parser("validate", parents=[common], help="run the property checks")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "show", 0) < 0:
            raise ConfigError("--show: must be >= 0")
        cfg = load_config(args.config).with_mc(paths=args.paths, seed=args.seed)
        out, code = COMMANDS[args.command](cfg, args)
    except ValueError as exc:
        # ConfigError, AssumptionViolation and the library's own argument
        # checks (e.g. a finite-difference step above the rate limit)
        print(f"storval: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = dumps(out) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
