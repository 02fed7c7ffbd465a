"""Command-line surface.

Exit codes: 0 success, 1 verification failure, 2 parse error, 3 type/class
error, 4 I/O or schema error, 5 resource cap exceeded.
"""

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from . import __version__, dsl, gd, optimizer
from .io import RunConfig, ScheduleFileError, load_schedule, save_schedule, dumps_schedule
from .optimizer import P_EXPONENT
from .schedule import (
    ClassMismatchError,
    CompClass,
    IdentityError,
    ResourceCapError,
    ScheduleError,
    UncertifiedScheduleError,
)
from .verify import defining_slack, verify_schedule

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_PARSE = 2
EXIT_TYPE = 3
EXIT_IO = 4
EXIT_CAP = 5


def _class_arg(value: str) -> CompClass:
    try:
        return CompClass(value.lower())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected f, g, or s, got {value!r}") from None


def _tables_for(n_rows: int, args) -> optimizer.RateTables:
    cache = getattr(args, "cache", None)
    return optimizer.load_or_build(n_rows, cache)


def cmd_compose(args) -> int:
    schedule, ast = dsl.compile_expression(args.expr, args.comp_class)
    text = dumps_schedule(
        schedule,
        construction=dsl.format_expr(ast),
        provenance=f"stepweaver {__version__} compose",
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}: {schedule.describe()}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _rate_table_csv(tables: optimizer.RateTables, comp_class: CompClass, n_rows: int, fh) -> None:
    w = csv.writer(fh)
    w.writerow(["n", "length", "rate", "normalized"])
    tab = tables.s_rate if comp_class is CompClass.S else tables.f_rate
    for n in range(1, n_rows + 1):
        rate = float(tab[n])
        w.writerow([n, n - 1, format(rate, ".17g"), format(rate * n**P_EXPONENT, ".17g")])


def cmd_optimize(args) -> int:
    tables = _tables_for(args.n + 1, args)
    if args.comp_class is CompClass.S:
        schedule = optimizer.obs_s(args.n, tables)
        macro = "obss"
    elif args.comp_class is CompClass.F:
        schedule = optimizer.obs_f(args.n, tables)
        macro = "obsf"
    else:
        schedule = optimizer.obs_g(args.n, tables)
        macro = "obsg"
    if args.table:
        with open(args.table, "w", newline="", encoding="utf-8") as fh:
            _rate_table_csv(tables, args.comp_class, args.n + 1, fh)
        print(f"wrote rate table {args.table}")
    if args.out:
        save_schedule(
            args.out,
            schedule,
            construction=f"{macro}({args.n})",
            provenance=f"stepweaver {__version__} optimize",
        )
        print(f"wrote {args.out}: {schedule.describe()}")
    else:
        print(schedule.describe())
        print("steps:", " ".join(format(s, ".17g") for s in schedule.steps))
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = RunConfig.from_json(fh.read())
    else:
        config = RunConfig()
    overrides = {}
    if args.battery is not None:
        overrides["battery"] = args.battery
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = dataclasses.replace(config, **overrides)  # re-runs validation
    schedule = load_schedule(args.file, config.identity_tol)
    report = verify_schedule(schedule, config)
    if args.json or config.output_format == "json":
        print(report.to_json())
    else:
        print(report.summary())
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def _parse_function(spec: str):
    kind, _, body = spec.partition(":")
    params = {}
    if body:
        for item in body.split(","):
            key, sep, value = item.partition("=")
            if not sep or not key:
                raise ScheduleError(f"bad function parameter {item!r} in {spec!r}")
            params[key.strip()] = value.strip()
    if kind == "quad":
        return gd.quad_instance(float(params.get("a", 1.0)))
    if kind == "huber":
        if "delta" not in params:
            raise ScheduleError("huber function needs delta=<value>")
        return gd.huber_instance(float(params["delta"]))
    if kind == "random":
        d = int(params.get("d", 8))
        seed = int(params.get("seed", 0))
        return gd.random_instance(np.random.default_rng(seed), d)
    raise ScheduleError(f"unknown function {kind!r}: expected quad, huber, or random")


def cmd_run(args) -> int:
    schedule = load_schedule(args.file)
    instance = _parse_function(args.function)
    if args.x0 is None:
        x0 = np.ones(instance.dim)
    else:
        vals = [float(v) for v in args.x0.split(",")]
        x0 = np.full(instance.dim, vals[0]) if len(vals) == 1 else np.array(vals)
    trace = gd.run(schedule, instance, x0)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            trace.to_csv(fh)
        print(f"wrote trace {args.out}")
    else:
        sys.stdout.write(trace.to_csv())
    summary = {
        "instance": instance.describe(),
        "class": schedule.comp_class.value,
        "rate": schedule.rate,
        "objective_gap": trace.objective_gap(),
        "half_grad_sq": trace.half_grad_sq(),
        "half_dist_sq": trace.half_dist_sq(),
        "defining_slack": defining_slack(schedule, trace),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_bounds(args) -> int:
    n_rows = 2 ** (args.k + 1) - 1
    if args.k > 12 and not args.force:
        raise ResourceCapError(
            f"--k {args.k} needs an O(4^k) table fill (N={n_rows}); rerun with --force "
            "to enter the long-running mode"
        )
    tables = _tables_for(n_rows, args)
    consts = optimizer.asymptotic_constants(args.k, tables)
    print(f"p,{format(consts.p, '.17g')}")
    print(f"c_low,{format(consts.c_low, '.17g')}")
    print("k,r_obs_s,r_obs_f")
    for k in range(args.k + 1):
        print(f"{k},{format(consts.r_obs_s[k], '.17g')},{format(consts.r_obs_f[k], '.17g')}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "length", "s_rate", "s_normalized", "f_rate", "f_normalized"])
            for n in range(1, n_rows + 1):
                sr, fr = float(tables.s_rate[n]), float(tables.f_rate[n])
                np_pow = n**P_EXPONENT
                w.writerow(
                    [
                        n,
                        n - 1,
                        format(sr, ".17g"),
                        format(sr * np_pow, ".17g"),
                        format(fr, ".17g"),
                        format(fr * np_pow, ".17g"),
                    ]
                )
        print(f"wrote normalized rates {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stepweaver",
        description="Construct, optimize, and verify stepsize schedules for gradient descent.",
    )
    p.add_argument("--version", action="version", version=f"stepweaver {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compose", help="evaluate a composition expression")
    c.add_argument("expr", help='e.g. "((e >< e) |> (e |> e))" or "silver(3)"')
    c.add_argument("--class", dest="comp_class", type=_class_arg, default=None)
    c.add_argument("--out", help="write a schedule file instead of stdout")
    c.set_defaults(func=cmd_compose)

    o = sub.add_parser("optimize", help="rate-optimal schedule of a given length")
    o.add_argument("--class", dest="comp_class", type=_class_arg, required=True)
    o.add_argument("--n", type=int, required=True, help="schedule length")
    o.add_argument("--out", help="write the schedule file here")
    o.add_argument("--table", help="write the rate table CSV here")
    o.add_argument("--cache", help="table cache directory (default: $STEPWEAVER_CACHE)")
    o.set_defaults(func=cmd_optimize)

    v = sub.add_parser("verify", help="run the verification checks on a schedule file")
    v.add_argument("file")
    v.add_argument("--config", help="RunConfig JSON file")
    v.add_argument("--battery", type=int, default=None)
    v.add_argument("--seed", type=lambda s: int(s, 0), default=None)
    v.add_argument("--json", action="store_true", help="print the JSON report")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("run", help="run gradient descent and emit the trace CSV")
    r.add_argument("file")
    r.add_argument(
        "--function",
        default="quad:a=1",
        help="quad:a=A | huber:delta=D | random:d=D,seed=S",
    )
    r.add_argument("--x0", default=None, help="comma-separated start point (scalar broadcasts)")
    r.add_argument("--out", help="write the trace CSV here")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="normalized-rate constants and envelope data")
    b.add_argument("--k", type=int, required=True, help="largest dyadic level")
    b.add_argument("--out", help="write per-n normalized rates CSV here")
    b.add_argument("--force", action="store_true", help="allow k > 12 (long-running)")
    b.add_argument("--cache", help="table cache directory (default: $STEPWEAVER_CACHE)")
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except dsl.DslSyntaxError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except (dsl.DslTypeError, ClassMismatchError, UncertifiedScheduleError, IdentityError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_TYPE
    except (ScheduleFileError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except ResourceCapError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CAP
    except ScheduleError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
