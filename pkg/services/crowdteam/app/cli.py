"""crowdteam command line: gen, solve, bench, sweep, ranks, plot.

Exit codes: 0 success, 1 runtime/IO failure, 2 validation failure.
Option precedence: flags > config file > built-in defaults. Seeds not given
on the command line fall back to CROWDTEAM_SEED (default 0).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Callable

import pandas as pd
from pydantic import ValidationError
import yaml

from .bench import ExperimentParams, RANKS_COLUMNS, k_sweep, monte_carlo, rank_statistics
from .charts import render_chart
from .efficiency import PerceptionModel, ProjectSpec, TeamScorer, load_project
from .model import GenParams, generate_instance, load_instance, save_instance, validate_instance
from .run_log import RunContext
from .settings import Settings, get_settings
from .solvers import ConfigurationSpace, SolverReport, config_rank, exhaustive_solver, secretary_solver

logger = logging.getLogger(__name__)


def _int_list(s: str) -> list[int]:
    try:
        return [int(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def load_config(path: str) -> dict[str, Any]:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config_not_found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    payload = yaml.safe_load(text) if path.endswith((".yaml", ".yml")) else json.loads(text or "{}")
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise ValueError(f"invalid_config: {path} is not a mapping")
    return payload


def _put(cfg: dict[str, Any], section: str | None, key: str, value: Any) -> None:
    if value is None:
        return
    if section is None:
        cfg[key] = value
        return
    sub = cfg.get(section)
    cfg[section] = {**(sub if isinstance(sub, dict) else {}), key: value}


def experiment_params(args: argparse.Namespace, settings: Settings) -> ExperimentParams:
    cfg = load_config(args.config) if args.config else {}
    _put(cfg, "gen", "n_workers", args.workers)
    _put(cfg, "gen", "n_skills", args.skills)
    _put(cfg, "gen", "edge_probability", args.p)
    _put(cfg, "project", "n_required", args.required)
    _put(cfg, "project", "gamma", args.gamma)
    _put(cfg, "perception", "sigma0", args.sigma0)
    _put(cfg, "perception", "u_max", args.u_max)
    _put(cfg, None, "n_trials", args.trials)
    _put(cfg, None, "base_seed", args.base_seed)
    _put(cfg, None, "k", args.k)
    _put(cfg, None, "fallback", args.fallback)
    _put(cfg, None, "space", args.space)
    _put(cfg, None, "k_values", getattr(args, "k_values", None))
    cfg.setdefault("base_seed", settings.default_seed)
    return ExperimentParams.model_validate(cfg)


def _write_csv(df: pd.DataFrame, path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


def cmd_gen(args: argparse.Namespace, settings: Settings, ctx: RunContext) -> int:
    raw: dict[str, Any] = {"seed": settings.default_seed if args.seed is None else args.seed}
    _put(raw, None, "n_workers", args.workers)
    _put(raw, None, "n_skills", args.skills)
    _put(raw, None, "edge_probability", args.p)
    params = GenParams.model_validate(raw)
    inst = generate_instance(params)
    errors = validate_instance(inst)
    if errors:
        raise RuntimeError("generated instance failed validation: " + "; ".join(errors))
    save_instance(inst, args.output)
    ctx.log("info", "gen:done", path=args.output, n_workers=params.n_workers, n_skills=params.n_skills, seed=params.seed)
    print(args.output)
    return 0


def _project_from_args(args: argparse.Namespace) -> ProjectSpec:
    if args.project:
        project = load_project(args.project)
        if args.gamma is not None:
            project = ProjectSpec.model_validate({**project.model_dump(), "gamma": args.gamma})
        return project
    if not args.required_skills:
        raise ValueError("project_required: pass --project or --required-skills")
    raw: dict[str, Any] = {"required_skills": args.required_skills}
    _put(raw, None, "gamma", args.gamma)
    return ProjectSpec.model_validate(raw)


def _format_report(report: SolverReport) -> str:
    b = report.breakdown
    head = f"solver: {report.solver} (space={report.space}"
    if report.solver == "secretary":
        head += f", k={report.k}, fallback={report.fallback}"
    lines = [
        head + ")",
        f"leader: {report.chosen.leader}",
        "assignment: " + ", ".join(f"skill {j} -> worker {w}" for j, w in sorted(report.chosen.assignment)),
        f"TE: {b.total:.6f} (skill={b.skill_term:.6f}, uncertainty={b.uncertainty_term:.6f}, "
        f"cost={b.cost_term:.6f}, social={b.social_term:.6f})",
        f"evaluations: {report.evaluations} / {report.total}",
        f"rank: {report.rank}",
        f"time: {report.wall_time_us:.1f} us",
    ]
    return "\n".join(lines)


def cmd_solve(args: argparse.Namespace, settings: Settings, ctx: RunContext) -> int:
    instance = load_instance(args.instance)
    project = _project_from_args(args)
    project.check_against(instance)
    raw: dict[str, Any] = {}
    _put(raw, None, "sigma0", args.sigma0)
    _put(raw, None, "u_max", args.u_max)
    noise_seed = settings.default_seed if args.noise_seed is None else args.noise_seed
    stream_seed = settings.default_seed if args.stream_seed is None else args.stream_seed
    model = PerceptionModel.model_validate({**raw, "seed": noise_seed})

    scorer = TeamScorer(instance, project, model)
    distinct = ConfigurationSpace.for_project(instance, project, "distinct")
    if args.solver == "exhaustive":
        jobs = args.jobs or settings.jobs
        report = exhaustive_solver(instance, project, model, noise_seed, scorer=scorer, space=distinct, jobs=jobs)
    else:
        stream = distinct if args.space == "distinct" else ConfigurationSpace.for_project(instance, project, args.space)
        report = secretary_solver(
            instance,
            project,
            model,
            noise_seed,
            stream_seed,
            k=args.k,
            fallback=args.fallback,
            scorer=scorer,
            config_space=stream,
        )
        totals = scorer.score_space(distinct).total
        report = report.with_rank(config_rank(totals, int(stream.distinct_index[report.index])))
    ctx.log("info", "solve:done", solver=report.solver, total_te=report.total_te, evaluations=report.evaluations, rank=report.rank)

    if args.json == "-":
        print(json.dumps(report.to_dict(), indent=2))
        return 0
    print(_format_report(report))
    if args.json:
        parent = os.path.dirname(os.path.abspath(args.json))
        os.makedirs(parent, exist_ok=True)
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2)
            f.write("\n")
    return 0


def cmd_bench(args: argparse.Namespace, settings: Settings, ctx: RunContext) -> int:
    params = experiment_params(args, settings)
    result = monte_carlo(params, jobs=args.jobs or settings.jobs, context=ctx, progress=settings.progress)
    _write_csv(result.frame(), args.output)
    if args.summary:
        _write_csv(result.summary.table, args.summary)
    print(args.output)
    return 0


def cmd_sweep(args: argparse.Namespace, settings: Settings, ctx: RunContext) -> int:
    params = experiment_params(args, settings)
    if not params.k_values:
        raise ValueError("k_values_required: pass --k-values or set k_values in the config")
    result = k_sweep(params, params.k_values, jobs=args.jobs or settings.jobs, context=ctx, progress=settings.progress)
    _write_csv(result.table, args.output)
    print(args.output)
    return 0


def cmd_ranks(args: argparse.Namespace, settings: Settings, ctx: RunContext) -> int:
    seed = settings.default_seed if args.seed is None else args.seed
    ns = args.n or [360]
    if any(n < 1 for n in ns):
        raise ValueError(f"n_out_of_range: {ns}")
    if args.shuffles < 1:
        raise ValueError(f"shuffles must be >= 1 (got {args.shuffles})")
    pairs: list[tuple[int, int | None]] = [(n, k) for n in ns for k in (args.k or [None])]
    bad = [(n, k) for n, k in pairs if k is not None and not (0 <= k <= n)]
    if bad:
        raise ValueError(f"k_out_of_range: {bad}")
    rows = []
    for n, k in pairs:
        stats = rank_statistics(n, k, args.shuffles, seed)
        ctx.log("info", "ranks:row", **stats.to_row())
        rows.append(stats.to_row())
    _write_csv(pd.DataFrame(rows, columns=RANKS_COLUMNS), args.output)
    print(args.output)
    return 0


def cmd_plot(args: argparse.Namespace, settings: Settings, ctx: RunContext) -> int:
    kind = render_chart(args.csv, args.output, args.metric)
    ctx.log("info", "plot:done", kind=kind, path=args.output)
    print(args.output)
    return 0


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="", help="experiment config (JSON or YAML)")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--skills", type=int, default=None)
    p.add_argument("--required", type=int, default=None, help="|S_p| per trial")
    p.add_argument("--p", type=float, default=None, help="edge probability")
    p.add_argument("--sigma0", type=float, default=None)
    p.add_argument("--u-max", dest="u_max", type=float, default=None)
    p.add_argument("--gamma", type=_float_list, default=None, help="g1,g2,g3,g4")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--fallback", choices=["last", "best_seen"], default=None)
    p.add_argument("--space", choices=["distinct", "ordered", "paper"], default=None)
    p.add_argument("--base-seed", dest="base_seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("-o", "--output", required=True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crowdteam", add_help=True)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--workers", type=int, default=None)
    g.add_argument("--skills", type=int, default=None)
    g.add_argument("--p", type=float, default=None, help="edge probability")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--project", default="")
    s.add_argument("--required-skills", dest="required_skills", type=_int_list, default=None)
    s.add_argument("--gamma", type=_float_list, default=None, help="g1,g2,g3,g4")
    s.add_argument("--solver", choices=["exhaustive", "secretary"], default="exhaustive")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--fallback", choices=["last", "best_seen"], default="last")
    s.add_argument("--space", choices=["distinct", "ordered", "paper"], default="distinct")
    s.add_argument("--sigma0", type=float, default=None)
    s.add_argument("--u-max", dest="u_max", type=float, default=None)
    s.add_argument("--noise-seed", dest="noise_seed", type=int, default=None)
    s.add_argument("--stream-seed", dest="stream_seed", type=int, default=None)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--json", default="", help="write the report as JSON ('-' for stdout)")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="Monte Carlo solver comparison")
    _experiment_flags(b)
    b.add_argument("--summary", default="", help="also write the aggregate table")
    b.set_defaults(func=cmd_bench)

    w = sub.add_parser("sweep", help="secretary threshold sweep")
    _experiment_flags(w)
    w.add_argument("--k-values", dest="k_values", type=_int_list, default=None)
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("ranks", help="abstract secretary rank statistics")
    r.add_argument("--n", type=_int_list, default=None)
    r.add_argument("--k", type=_int_list, default=None)
    r.add_argument("--shuffles", type=int, default=100_000)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_ranks)

    c = sub.add_parser("plot", help="render a CSV as SVG")
    c.add_argument("--csv", required=True)
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--metric", default=None)
    c.set_defaults(func=cmd_plot)
    return p


def _configure_logging(verbose: int) -> None:
    level = logging.DEBUG if verbose >= 2 else logging.INFO if verbose == 1 else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def _validation_lines(e: ValidationError) -> list[str]:
    out = []
    for err in e.errors():
        loc = ".".join(str(x) for x in err.get("loc") or ()) or "config"
        out.append(f"{loc}: {err.get('msg')}")
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv if argv is not None else sys.argv[1:])
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.verbose)
    settings = get_settings()
    ctx = RunContext.from_settings(settings)
    ctx.keep_in_memory = False
    handler: Callable[[argparse.Namespace, Settings, RunContext], int] = args.func
    logger.debug("command=%s jobs=%d seed=%s", args.command, settings.jobs, settings.default_seed)
    try:
        return handler(args, settings, ctx)
    except ValidationError as e:
        for line in _validation_lines(e):
            sys.stderr.write(f"error: {line}\n")
        return 2
    except (FileNotFoundError, RuntimeError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        ctx.log("error", f"{args.command}:failed", error=f"{type(e).__name__}: {e}")
        return 1
    except (ValueError, IndexError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
