"""Command-line surface: solve, sweep, optimize, simulate, compare.

Values resolve as built-in defaults, overridden by a JSON config file,
overridden by flags. Output is JSON by default or CSV with --format csv;
--output writes to a file instead of standard output. Exit codes: 0 on
success, 2 on validation problems, 3 when --strict comparison coverage
fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional

from .model import SystemParams, ValidationError
from .optimizer import CostSpec, KScan
from .simulator import DistributionSpec, SimConfig, compare, simulate
from .solver import solve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STRICT = 3

BUILTIN_DEFAULTS = {"mu": 1.0, "alpha": 0.005, "n0": 110, "K": 250}

SWEEPABLE = ("lambda", "k", "K", "n0", "alpha", "mu")
INTEGER_PARAMS = ("n0", "k", "K")

SWEEP_HEADER = "series,param,value,L,W,Wq,Pb,S"


def _fmt(x) -> str:
    """Twelve significant digits, stable across runs."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return f"{x:.12g}"


def _emit(text: str, output: Optional[str]):
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    unknown = set(data) - {"params", "sim", "cost"}
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    return data


def _build_params(args, config: dict, *, filled_later: tuple = ()) -> SystemParams:
    """Merge defaults, config file, then flags; ``filled_later`` names
    parameters another source (a sweep grid, the optimizer) will supply."""
    merged = dict(BUILTIN_DEFAULTS)
    file_params = config.get("params", {})
    if not isinstance(file_params, dict):
        raise ValidationError("config section 'params' must be an object")
    unknown = set(file_params) - set(SWEEPABLE)
    if unknown:
        raise ValidationError(f"unknown parameter fields in config: {sorted(unknown)}")
    merged.update(file_params)
    for flag, key in (
        ("lam", "lambda"),
        ("mu", "mu"),
        ("alpha", "alpha"),
        ("n0", "n0"),
        ("k", "k"),
        ("K", "K"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = value
    if "lambda" not in merged:
        if "lambda" not in filled_later:
            raise ValidationError("arrival rate required: pass --lambda or set params.lambda")
        merged["lambda"] = 1.0
    if "k" not in merged:
        if "k" not in filled_later:
            raise ValidationError("instance count required: pass --k or set params.k")
        merged["k"] = 0
    return SystemParams.from_dict(merged)


def _build_sim_config(args, config: dict, params: SystemParams) -> SimConfig:
    section = dict(config.get("sim", {}))
    if not isinstance(section, dict):
        raise ValidationError("config section 'sim' must be an object")
    unknown = set(section) - {
        "horizon",
        "warmup",
        "replications",
        "seed",
        "interarrival",
        "service",
        "setup",
    }
    if unknown:
        raise ValidationError(f"unknown sim fields in config: {sorted(unknown)}")
    for flag, key in (
        ("horizon", "horizon"),
        ("warmup", "warmup"),
        ("replications", "replications"),
        ("seed", "seed"),
        ("arrival_dist", "interarrival"),
        ("service_dist", "service"),
        ("setup_dist", "setup"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            section[key] = value
    dists = {}
    for key, rate in (("interarrival", params.lam), ("service", params.mu), ("setup", params.alpha)):
        raw = section.pop(key, None)
        if raw is not None:
            dists[key] = DistributionSpec.parse(raw, 1.0 / rate)
    return SimConfig(**section, **dists)


def _build_cost_spec(args, config: dict) -> CostSpec:
    section = dict(config.get("cost", {}))
    if not isinstance(section, dict):
        raise ValidationError("config section 'cost' must be an object")
    unknown = set(section) - {"w1", "w2", "delta", "s_bar", "wq_bar", "wq_limit"}
    if unknown:
        raise ValidationError(f"unknown cost fields in config: {sorted(unknown)}")
    for key in ("w1", "w2", "delta", "s_bar", "wq_bar", "wq_limit"):
        value = getattr(args, key, None)
        if value is not None:
            section[key] = value
    return CostSpec(**section)


def _record_json(report) -> str:
    return json.dumps(
        {
            "params": report.params.to_dict(),
            "metrics": report.metrics.to_dict(),
            "rescale_events": report.rescale_events,
            "max_balance_residual": report.max_balance_residual,
        },
        indent=2,
    )


def _record_csv(report) -> str:
    p = report.params.to_dict()
    m = report.metrics.to_dict()
    header = "lambda,mu,alpha,n0,k,K,L,W,Wq,Pb,S"
    row = ",".join(_fmt(p[c]) for c in ("lambda", "mu", "alpha", "n0", "k", "K"))
    row += "," + ",".join(_fmt(m[c]) for c in ("L", "W", "Wq", "Pb", "S"))
    return header + "\n" + row


def _cmd_solve(args) -> int:
    config = _load_config(args.config)
    params = _build_params(args, config)
    report = solve(params)
    text = _record_csv(report) if args.format == "csv" else _record_json(report)
    _emit(text, args.output)
    return EXIT_OK


def _grid(args):
    start, stop, step = args.start, args.stop, args.step
    if step is None or not step > 0:
        raise ValidationError("sweep step must be > 0")
    if start is None or stop is None or start > stop:
        raise ValidationError("sweep range must satisfy from <= to")
    if args.param in INTEGER_PARAMS:
        for name, v in (("from", start), ("to", stop), ("step", step)):
            if v != int(v):
                raise ValidationError(f"sweep {name} for {args.param} must be an integer, got {v}")
        return [int(start) + int(step) * t for t in range(int((stop - start) // step) + 1)]
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + step * t for t in range(count)]


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    filled = (args.param,) + ((args.series_param,) if args.series_param else ())
    base = _build_params(args, config, filled_later=filled)
    if args.param not in SWEEPABLE:
        raise ValidationError(f"cannot sweep {args.param!r}, expected one of {SWEEPABLE}")
    values = _grid(args)
    if args.series_param is not None:
        if args.series_param not in SWEEPABLE:
            raise ValidationError(f"cannot use series parameter {args.series_param!r}")
        if args.series_param == args.param:
            raise ValidationError("series parameter must differ from the swept parameter")
        raw = [v for v in (args.series_values or "").split(",") if v]
        if not raw:
            raise ValidationError("series values required with --series-param")
        series = [
            (f"{args.series_param}={_fmt(_parse_param(args.series_param, v))}",
             {args.series_param: _parse_param(args.series_param, v)})
            for v in raw
        ]
    else:
        series = [("base", {})]

    rows = []
    for series_id, overrides in series:
        for value in values:
            fields = base.to_dict()
            fields.update(overrides)
            fields[args.param] = value
            try:
                point = SystemParams.from_dict(fields)
            except ValidationError as exc:
                raise ValidationError(
                    f"sweep point {args.param}={value} series {series_id!r} invalid: {exc}"
                ) from exc
            m = solve(point).metrics
            rows.append((series_id, args.param, value, m))

    if args.format == "csv":
        lines = [SWEEP_HEADER]
        for series_id, param, value, m in rows:
            lines.append(
                ",".join(
                    [series_id, param, _fmt(value)]
                    + [_fmt(m.value(c)) for c in ("L", "W", "Wq", "Pb", "S")]
                )
            )
        text = "\n".join(lines)
    else:
        text = json.dumps(
            [
                {
                    "series": series_id,
                    "param": param,
                    "value": value,
                    **m.to_dict(),
                }
                for series_id, param, value, m in rows
            ],
            indent=2,
        )
    _emit(text, args.output)
    return EXIT_OK


def _parse_param(name: str, text: str):
    value = float(text)
    if name in INTEGER_PARAMS or name == "k":
        if value != int(value):
            raise ValidationError(f"{name} must be an integer, got {text}")
        return int(value)
    return value


def _cmd_optimize(args) -> int:
    config = _load_config(args.config)
    spec = _build_cost_spec(args, config)
    threshold_mode = spec.delta is not None or spec.s_bar is not None or spec.wq_bar is not None
    argmin_mode = spec.w1 is not None or spec.w2 is not None or spec.wq_limit is not None
    if threshold_mode and argmin_mode:
        raise ValidationError(
            "choose one mode: --delta/--s-bar/--wq-bar or --w1/--w2/--wq-limit, not both"
        )
    if threshold_mode:
        if spec.delta is None or spec.s_bar is None or spec.wq_bar is None:
            raise ValidationError("threshold mode needs all of --delta, --s-bar, --wq-bar")
    elif argmin_mode:
        if spec.w1 is None or spec.w2 is None or spec.wq_limit is None:
            raise ValidationError("exhaustive mode needs all of --w1, --w2, --wq-limit")
    else:
        raise ValidationError(
            "choose one mode: --delta/--s-bar/--wq-bar or --w1/--w2/--wq-limit"
        )
    base = _build_params(args, config, filled_later=("k",))
    scan = KScan(base, k_max=args.k_max)
    if threshold_mode:
        result = scan.threshold_result(spec)
        mode = "threshold"
    else:
        result = scan.argmin_k(spec)
        mode = "argmin"

    if args.format == "csv":
        lines = ["k,Wq,S,C,selected"]
        for row in result.scan:
            lines.append(
                ",".join(
                    [
                        _fmt(row.k),
                        _fmt(row.Wq),
                        _fmt(row.S),
                        _fmt(row.cost) if row.cost is not None else "",
                        "1" if row.k == result.k_op else "0",
                    ]
                )
            )
        text = "\n".join(lines)
    else:
        text = json.dumps(
            {
                "mode": mode,
                "k_op": result.k_op,
                "feasible": result.feasible,
                "cost": result.cost,
                "metrics": result.metrics_at_k.to_dict(),
                "scan": [
                    {"k": row.k, "Wq": row.Wq, "S": row.S, "C": row.cost}
                    for row in result.scan
                ],
            },
            indent=2,
        )
    _emit(text, args.output)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    params = _build_params(args, config)
    sim_config = _build_sim_config(args, config, params)
    result = simulate(params, sim_config, workers=args.workers)
    if args.format == "csv":
        lines = ["metric,mean,half_width"]
        for name in result.METRIC_NAMES:
            est = result.estimate(name)
            lines.append(f"{name},{_fmt(est.mean)},{_fmt(est.half_width)}")
        text = "\n".join(lines)
    else:
        text = json.dumps(result.to_dict(), indent=2)
    _emit(text, args.output)
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = _load_config(args.config)
    params = _build_params(args, config)
    sim_config = _build_sim_config(args, config, params)
    report = solve(params)
    sim_result = simulate(params, sim_config, workers=args.workers)
    comparison = compare(report, sim_result)
    if args.format == "csv":
        lines = ["metric,analytical,simulated,half_width,covered,rel_gap"]
        for row in comparison.rows:
            lines.append(
                ",".join(
                    [
                        row.metric,
                        _fmt(row.analytical),
                        _fmt(row.simulated),
                        _fmt(row.half_width),
                        "1" if row.covered else "0",
                        _fmt(row.rel_gap),
                    ]
                )
            )
        text = "\n".join(lines)
    else:
        text = json.dumps(comparison.to_dict(), indent=2)
    _emit(text, args.output)
    if args.strict and not comparison.all_covered:
        return EXIT_STRICT
    return EXIT_OK


def _add_param_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--lambda", dest="lam", type=float, help="arrival rate, jobs/s")
    parser.add_argument("--mu", type=float, help="per-server service rate, jobs/s")
    parser.add_argument("--alpha", type=float, help="instance setup completion rate, 1/s")
    parser.add_argument("--n0", type=int, help="always-on server count")
    parser.add_argument("--k", type=int, help="dynamic instance count")
    parser.add_argument("--K", type=int, help="system capacity, max jobs")
    parser.add_argument("--config", help="JSON config file with params/sim/cost sections")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--output", help="write to this file instead of stdout")


def _add_sim_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--horizon", type=float, help="simulated seconds per replication")
    parser.add_argument("--warmup", type=float, help="discarded seconds, default 10%% of horizon")
    parser.add_argument("--replications", type=int, help="replication count, default 10")
    parser.add_argument("--seed", type=int, help="base RNG seed, default 0")
    parser.add_argument("--arrival-dist", help="interarrival family[:shape], default exponential")
    parser.add_argument("--service-dist", help="service family[:shape], default exponential")
    parser.add_argument("--setup-dist", help="setup family[:shape], default exponential")
    parser.add_argument("--workers", type=int, default=1, help="parallel replication workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elasticq",
        description="Capacity planning for a fixed server block plus auto-scaled instances",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="exact metrics for one configuration")
    _add_param_flags(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="metrics along a parameter grid")
    _add_param_flags(p_sweep)
    p_sweep.add_argument("--param", required=True, help=f"swept parameter, one of {SWEEPABLE}")
    p_sweep.add_argument("--from", dest="start", type=float, required=True)
    p_sweep.add_argument("--to", dest="stop", type=float, required=True)
    p_sweep.add_argument("--step", type=float, required=True)
    p_sweep.add_argument("--series-param", help="secondary parameter varied across series")
    p_sweep.add_argument("--series-values", help="comma-separated series values")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_opt = sub.add_parser("optimize", help="choose the dynamic instance count")
    _add_param_flags(p_opt)
    p_opt.add_argument("--delta", type=float, help="weight ratio w2/w1 (threshold mode)")
    p_opt.add_argument("--s-bar", dest="s_bar", type=float, help="instance-cost normalizer")
    p_opt.add_argument("--wq-bar", dest="wq_bar", type=float, help="delay normalizer")
    p_opt.add_argument("--w1", type=float, help="delay weight (exhaustive mode)")
    p_opt.add_argument("--w2", type=float, help="instance-cost weight (exhaustive mode)")
    p_opt.add_argument("--wq-limit", dest="wq_limit", type=float, help="delay upper bound, s")
    p_opt.add_argument("--k-max", dest="k_max", type=int, help="cap the scanned k range")
    p_opt.set_defaults(func=_cmd_optimize)

    p_sim = sub.add_parser("simulate", help="discrete-event estimates with CIs")
    _add_param_flags(p_sim)
    _add_sim_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_cmp = sub.add_parser("compare", help="analytical vs simulated, with coverage flags")
    _add_param_flags(p_cmp)
    _add_sim_flags(p_cmp)
    p_cmp.add_argument("--strict", action="store_true", help="exit 3 if any metric uncovered")
    p_cmp.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
