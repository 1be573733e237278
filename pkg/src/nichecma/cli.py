"""Command-line interface: single runs, the full suite, problem dumps, and
report aggregation."""

from __future__ import annotations

import argparse
import os
import sys

from .benchmarks import ProblemSpec, dump_problem, instantiate_problem, reference_table
from .harness import (
    RunConfig,
    aggregate_records,
    emit_csv,
    read_csv,
    run_single,
    run_suite,
    suite_plan,
)

SEED_ENV_VAR = "NICHECMA_SEED"


def _int_list(text: str) -> tuple[int, ...]:
    """Parse '1,3,5' or '1-16' or a mix of both."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, _, hi = part.partition("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list: {text!r}")
    return tuple(out)


def _effective_seed(args) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return args.seed


def _build_config(args, dims=None, instances=None, problems=None) -> RunConfig:
    defaults = RunConfig()
    return RunConfig(
        budget_multiplier=args.budget_multiplier,
        dims=dims if dims is not None else defaults.dims,
        instances=instances if instances is not None else defaults.instances,
        problems=problems if problems is not None else defaults.problems,
        master_seed=_effective_seed(args),
        sigma0=args.sigma0,
        lambda_override=getattr(args, "lambda_override", None),
        trace_every=getattr(args, "trace_every", 1),
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    parser.add_argument("--seed", type=int, default=defaults.master_seed,
                        help=f"master seed (env {SEED_ENV_VAR} overrides)")
    parser.add_argument("--budget-multiplier", type=int,
                        default=defaults.budget_multiplier,
                        help="evaluations per problem dimension")
    parser.add_argument("--sigma0", type=float, default=defaults.sigma0,
                        help="initial step size per restart")


def _cmd_run(args) -> int:
    spec = ProblemSpec.from_id(args.problem, args.dim, args.instance)
    config = _build_config(args, dims=(args.dim,), instances=args.instance,
                           problems=(args.problem,))
    record = run_single(spec, config, trace_path=args.trace)
    text = emit_csv([record], path=args.out)
    if args.out is None:
        sys.stdout.write(text)
    print(
        f"problem {spec.problem_id} dim {spec.dim} instance {spec.instance}: "
        f"f_best={record.f_best:.6g} epsilon_f={record.metrics.epsilon_f:.6g} "
        f"recall={record.metrics.recall:.3f} f1={record.metrics.f1:.3f} "
        f"evals={record.metrics.evals_used}",
        file=sys.stderr,
    )
    return 0


def _cmd_suite(args) -> int:
    config = _build_config(args, dims=args.dims, instances=args.instances,
                           problems=args.problems)
    records = run_suite(config, jobs=args.jobs)
    out_path = None
    if args.out_dir is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        out_path = os.path.join(args.out_dir, "suite.csv")
    text = emit_csv(records, path=out_path)
    if out_path is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {len(records)} records to {out_path}", file=sys.stderr)
    failures = [r for r in records if r.error]
    for r in failures:
        print(
            f"run failed: problem {r.problem_id} dim {r.dim} instance "
            f"{r.instance}: {r.error}",
            file=sys.stderr,
        )
    return 0


def _cmd_gen(args) -> int:
    spec = ProblemSpec.from_id(args.problem, args.dim, args.instance)
    problem = instantiate_problem(spec, _effective_seed(args))
    text = dump_problem(problem, path=args.out)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def _cmd_report(args) -> int:
    records = read_csv(args.csv)
    if not records:
        print("no records in CSV", file=sys.stderr)
        return 1
    summary = aggregate_records(records)
    dims = sorted({dim for (_, dim) in summary["cells"]})
    lines = []
    header = "problem" + "".join(f"  eps_f(d={d})    f1(d={d})" for d in dims)
    lines.append(header)
    pids = sorted({pid for (pid, _) in summary["cells"]})
    for pid in pids:
        cells = []
        for d in dims:
            cell = summary["cells"].get((pid, d))
            if cell is None:
                cells.append("      --          --")
            else:
                cells.append(f"  {cell['mean_epsilon_f']:>10.4g}  {cell['mean_f1']:>10.4f}")
        lines.append(f"{pid:>7}" + "".join(cells))
    lines.append(f"overall_score {summary['overall_score']:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_table(args) -> int:
    for pid, name, group, n_minima, f_star in reference_table():
        print(f"{pid:>2}  {group}  {n_minima:>2}  {f_star:>8.4g}  {name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nichecma",
        description="Niche-weighted evolution strategy benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = RunConfig()

    p_run = sub.add_parser("run", help="run one problem instance")
    p_run.add_argument("--problem", type=int, required=True)
    p_run.add_argument("--dim", type=int, required=True)
    p_run.add_argument("--instance", type=int, default=1)
    p_run.add_argument("--lambda", dest="lambda_override", type=int, default=None,
                       help="population size override (default 10 * dim)")
    p_run.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p_run.add_argument("--trace", default=None, help="trace TSV output path")
    p_run.add_argument("--trace-every", dest="trace_every", type=int, default=1)
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="run the problem/dimension/instance matrix")
    p_suite.add_argument("--dims", type=_int_list, default=defaults.dims)
    p_suite.add_argument("--instances", type=int, default=defaults.instances)
    p_suite.add_argument("--problems", type=_int_list, default=defaults.problems)
    p_suite.add_argument("--out-dir", default=None,
                         help="directory for suite.csv (default: CSV to stdout)")
    p_suite.add_argument("--jobs", type=int, default=1)
    _add_common(p_suite)
    p_suite.set_defaults(func=_cmd_suite)

    p_gen = sub.add_parser("gen", help="dump a generated problem to text")
    p_gen.add_argument("--problem", type=int, required=True)
    p_gen.add_argument("--dim", type=int, required=True)
    p_gen.add_argument("--instance", type=int, default=1)
    p_gen.add_argument("--out", default=None)
    _add_common(p_gen)
    p_gen.set_defaults(func=_cmd_gen)

    p_report = sub.add_parser("report", help="aggregate a suite CSV")
    p_report.add_argument("--csv", required=True)
    p_report.add_argument("--out", default=None)
    p_report.set_defaults(func=_cmd_report)

    p_table = sub.add_parser("table", help="print the problem catalogue")
    p_table.set_defaults(func=_cmd_table)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
