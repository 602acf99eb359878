"""Command-line front end.

    entryexit solve    --config params.json
    entryexit table    --config params.json --pmin 0.5 --pmax 20 --steps 100
    entryexit simulate --config params.json --paths 100000 --seed 7
    entryexit verify   --config params.json

The config is a flat JSON object whose keys are the model fields
(``r, mu, sigma, delta, C, K_I, K_O, p0``) plus optional run settings
(``seed, n_paths, dt, t_max, antithetic, n_nodes, p_min, p_max, n_steps,
p0s``). Command-line flags override the file. Data goes to stdout (or
``--out``), diagnostics to stderr.

Exit codes: 0 ok, 2 invalid input, 3 a solver did not converge,
4 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from .errors import ConfigError, ConvergenceError, DomainError, EntryExitError, PreconditionError
from .model import ProjectParams
from .policy import Solution, describe, report_to_json, solve
from .rules import EntryRule

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3
EXIT_VERIFY = 4

PARAM_KEYS = ("r", "mu", "sigma", "delta", "C", "K_I", "K_O", "p0")
RUN_KEYS = ("seed", "n_paths", "dt", "t_max", "antithetic", "n_nodes", "p_min", "p_max", "n_steps", "p0s")
DEFAULT_DIGITS = 9
TABLE_DIGITS = 17  # enough for an exact round trip of a double


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="entryexit", description="Optimal entry/exit triggers with implementation delay.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat JSON object with model fields and run settings")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--out", metavar="PATH", help="write data here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--digits", type=int, default=None, help="significant digits of printed numbers")

    mc = _Parser(add_help=False)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--paths", type=int, dest="n_paths")
    mc.add_argument("--dt", type=float)
    mc.add_argument("--tmax", type=float, dest="t_max")
    mc.add_argument("--antithetic", action=argparse.BooleanOptionalAction, default=None)
    mc.add_argument("--override-pI2", type=float, dest="override_pI2", metavar="PRICE",
                    help="replace the upper entry trigger of the simulated rule (to test the checks)")

    grid = _Parser(add_help=False)
    grid.add_argument("--grid", type=int, dest="n_nodes")
    grid.add_argument("--pmin", type=float, dest="p_min")
    grid.add_argument("--pmax", type=float, dest="p_max")

    sub.add_parser("solve", parents=[common], help="closed-form triggers and coefficients")
    t = sub.add_parser("table", parents=[common], help="G, H and obstacles on a price grid")
    t.add_argument("--pmin", type=float, dest="p_min")
    t.add_argument("--pmax", type=float, dest="p_max")
    t.add_argument("--steps", type=int, dest="n_steps")
    sub.add_parser("simulate", parents=[common, mc], help="Monte Carlo value of the optimal rules")
    v = sub.add_parser("verify", parents=[common, mc, grid], help="run every cross-check")
    v.add_argument("--p0s", type=str, help="comma-separated initial prices for the value check")
    return parser


def load_config(args) -> dict:
    """Merge config file, ``--set`` overrides and flags; unknown keys are errors."""
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            cfg[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(f"--set {key}: value {value!r} is not a JSON literal") from None
    unknown = sorted(set(cfg) - set(PARAM_KEYS) - set(RUN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def params_from_config(cfg: dict) -> ProjectParams:
    missing = [k for k in PARAM_KEYS if k != "p0" and k not in cfg]
    if missing:
        raise DomainError(missing[0], "missing from config")
    return ProjectParams(**{k: cfg[k] for k in PARAM_KEYS if k in cfg})


def _fmt(x, digits):
    if isinstance(x, float):
        if not math.isfinite(x):
            return repr(x)
        return f"{x:.{digits}g}"
    return "" if x is None else str(x)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list) and all(not isinstance(x, (dict, list)) for x in v):
            for i, x in enumerate(v):
                out[f"{key}.{i}"] = x
        else:
            out[key] = v
    return out


def _dump(payload: dict, fmt: str, digits: int) -> str:
    if fmt == "json":
        return report_to_json(payload, digits=digits) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in _flatten(payload).items():
        w.writerow([k, _fmt(v, digits) if not isinstance(v, list) else json.dumps(v)])
    return buf.getvalue()


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _finite(sol):
    if not isinstance(sol, Solution):
        raise PreconditionError(f"regime {sol.regime.value}: the value is infinite, nothing to evaluate")
    return sol


def _candidate(sol: Solution, override_pI2):
    if override_pI2 is None:
        return None
    rule = sol.entry_rule
    if rule.kind == "HitOutsideBand":
        return EntryRule.outside_band(rule.lower, override_pI2)
    if rule.kind == "HitAbove":
        return EntryRule.hit_above(override_pI2)
    raise ConfigError(f"--override-pI2 needs a trigger entry rule, optimal rule is {rule.kind}")


def cmd_solve(args, cfg) -> int:
    sol = solve(params_from_config(cfg))
    _emit(_dump(describe(sol), args.format or "json", args.digits or DEFAULT_DIGITS), args.out)
    return EXIT_OK


def table_rows(sol: Solution, p_min: float, p_max: float, n_steps: int) -> list[dict]:
    if not (p_min > 0 and p_max >= p_min):
        raise ConfigError(f"need 0 < pmin <= pmax, got pmin={p_min}, pmax={p_max}")
    if n_steps < 1 and p_max > p_min:
        raise ConfigError(f"steps must be >= 1, got {n_steps}")
    if p_max == p_min:
        prices = [float(p_min)]
    else:
        prices = [p_min + (p_max - p_min) * i / n_steps for i in range(n_steps)] + [float(p_max)]
    rows = []
    for p in prices:
        rows.append(
            {
                "p": p,
                "G": float(sol.G(p)),
                "H": float(sol.H(p)),
                "exit_obstacle": float(-sol.coeffs.exit_cost(p)),
                "entry_obstacle": float(sol.entry.obstacle(p)),
            }
        )
    return rows


def cmd_table(args, cfg) -> int:
    sol = _finite(solve(params_from_config(cfg)))
    trig = list(sol.triggers) or [sol.params.p0]
    p_min = cfg.get("p_min", 0.5 * min(trig))
    p_max = cfg.get("p_max", 2.0 * max(trig))
    rows = table_rows(sol, float(p_min), float(p_max), int(cfg.get("n_steps", 100)))
    digits = args.digits or TABLE_DIGITS
    if (args.format or "csv") == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v, digits) for v in row.values()])
        text = buf.getvalue()
    else:
        text = report_to_json({"regime": sol.regime.value, "rows": rows}, digits=digits) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _mc_config(cfg: dict, default_paths: int):
    from .verify.mc import McConfig

    n = int(cfg.get("n_paths", default_paths))
    anti = cfg.get("antithetic", n % 2 == 0)
    return McConfig(n_paths=n, dt=float(cfg.get("dt", 1e-3)), t_max=cfg.get("t_max"),
                    seed=int(cfg.get("seed", 20240601)), antithetic=bool(anti))


def cmd_simulate(args, cfg) -> int:
    from .verify.mc import simulate_policy

    sol = _finite(solve(params_from_config(cfg)))
    mc = _mc_config(cfg, 10_000)
    entry = _candidate(sol, args.override_pI2) or sol.entry_rule
    out = simulate_policy(sol.params, entry, sol.exit_rule, mc)
    h = float(sol.J(sol.params.p0))
    payload = {
        "p0": sol.params.p0,
        "entry_rule": entry.to_dict(),
        "exit_rule": sol.exit_rule.to_dict(),
        "mean": out.mean,
        "std_error": out.std_error,
        "n_effective": out.n_effective,
        "n_overflow": out.n_overflow,
        "t_max": out.t_max,
        "truncation_bound": out.truncation_bound,
        "H_at_p0": h,
        "z_score": (out.mean - h) / out.std_error if out.std_error > 0 else None,
    }
    _emit(_dump(payload, args.format or "json", args.digits or DEFAULT_DIGITS), args.out)
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    from .verify.fd import FdConfig
    from .verify.suite import run_verification

    params = params_from_config(cfg)
    sol = _finite(solve(params))
    mc = _mc_config(cfg, 20_000)
    fd = FdConfig(n_nodes=int(cfg.get("n_nodes", 4000)), p_min=cfg.get("p_min"), p_max=cfg.get("p_max"))
    p0s = cfg.get("p0s")
    if isinstance(p0s, str):
        p0s = [float(x) for x in p0s.split(",") if x.strip()]
    report = run_verification(params, mc, fd, p0s=p0s, entry_rule=_candidate(sol, args.override_pI2))
    _emit(_dump(report, args.format or "json", args.digits or DEFAULT_DIGITS), args.out)
    for check in report["checks"]:
        print(f"{'PASS' if check['passed'] else 'FAIL'} {check['name']}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


COMMANDS = {"solve": cmd_solve, "table": cmd_table, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](args, cfg)
    except DomainError as exc:
        print(f"error: invalid parameter {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, PreconditionError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except EntryExitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
