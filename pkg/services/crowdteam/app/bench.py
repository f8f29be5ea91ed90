"""Monte Carlo harness: solver comparison, k-sweeps and abstract rank statistics.

Trial seeds: SeedSequence([base_seed, trial_index]).spawn(4) gives, in order,
the instance seed, the project-sampling seed, the perception-noise seed and
the stream-shuffle seed (one 64-bit value each). A trial therefore depends
only on (params, trial_index), never on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Any, Callable, Sequence

from joblib import Parallel, delayed
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from scipy.stats import norm
from tqdm import tqdm

from .efficiency import NonNegFloat, PerceptionModel, ProjectSpec, TeamScorer, true_skill_term
from .model import GenParams, Instance, generate_instance, seed_from
from .run_log import RunContext
from .solvers import (
    MAX_CONFIGURATIONS,
    ConfigurationSpace,
    Fallback,
    SolverReport,
    SpaceMode,
    config_rank,
    configuration_count,
    exhaustive_solver,
    exploration_threshold,
    secretary_solver,
    secretary_stop_batch,
)

logger = logging.getLogger(__name__)

SOLVERS = ("exhaustive", "secretary")

BENCH_COLUMNS = [
    "trial",
    "solver",
    "te_total",
    "skill_perceived",
    "skill_true",
    "uncertainty",
    "cost",
    "social",
    "evaluations",
    "wall_time_us",
    "rank",
]
SWEEP_COLUMNS = ["k", "solver", "metric", "mean", "std", "ci95", "n"]
RANKS_COLUMNS = ["n", "k", "p_rank1", "p_rank2_or_better", "p_full_scan", "mean_evaluations", "n_shuffles"]

SUMMARY_METRICS = (
    "te_total",
    "skill_perceived",
    "skill_true",
    "uncertainty",
    "cost",
    "social",
    "evaluations",
    "wall_time_us",
    "rank",
    "p_best",
    "p_top2",
)

Z95 = float(norm.ppf(0.975))


class ProjectTemplate(BaseModel):
    n_required: int = Field(default=3, ge=1)
    gamma: tuple[NonNegFloat, NonNegFloat, NonNegFloat, NonNegFloat] = (0.25, 0.25, 0.25, 0.25)


class ExperimentParams(BaseModel):
    gen: GenParams = Field(default_factory=GenParams)
    project: ProjectTemplate = Field(default_factory=ProjectTemplate)
    perception: PerceptionModel = Field(default_factory=PerceptionModel)
    n_trials: int = Field(default=1000, ge=1)
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    k: int | None = Field(default=None, ge=0)
    k_values: list[int] | None = None
    fallback: Fallback = "last"
    space: SpaceMode = "distinct"

    @model_validator(mode="after")
    def _feasible(self) -> ExperimentParams:
        errors: list[str] = []
        n, m, r = self.gen.n_workers, self.gen.n_skills, self.project.n_required
        if r > n:
            errors.append(f"infeasible_project: |S_p|={r} exceeds N={n}")
        if r > m:
            errors.append(f"infeasible_project: |S_p|={r} exceeds M={m}")
        if not errors:
            total = configuration_count(n, r, self.space)
            if configuration_count(n, r, "distinct") > MAX_CONFIGURATIONS or total > MAX_CONFIGURATIONS:
                errors.append(f"configuration_space_too_large: {total} candidates (limit {MAX_CONFIGURATIONS})")
            ks = ([self.k] if self.k is not None else []) + list(self.k_values or [])
            bad = sorted({k for k in ks if not (0 <= k <= total)})
            if bad:
                errors.append(f"k_out_of_range: {bad} not in [0, {total}]")
        if errors:
            raise ValueError("; ".join(errors))
        return self

    @property
    def stream_total(self) -> int:
        return configuration_count(self.gen.n_workers, self.project.n_required, self.space)


@dataclass(frozen=True)
class TrialSeeds:
    instance: int
    project: int
    noise: int
    stream: int


def trial_seeds(base_seed: int, trial_index: int) -> TrialSeeds:
    children = np.random.SeedSequence([int(base_seed), int(trial_index)]).spawn(4)
    s_inst, s_proj, s_noise, s_stream = (seed_from(c) for c in children)
    return TrialSeeds(instance=s_inst, project=s_proj, noise=s_noise, stream=s_stream)


def sample_project(template: ProjectTemplate, n_skills: int, seed: int) -> ProjectSpec:
    rng = np.random.default_rng(int(seed))
    skills = rng.choice(int(n_skills), size=template.n_required, replace=False)
    return ProjectSpec(required_skills=sorted(int(j) for j in skills), gamma=template.gamma)


@dataclass(frozen=True)
class SolverMetrics:
    te_total: float
    skill_perceived: float
    skill_true: float
    uncertainty: float
    cost: float
    social: float
    evaluations: int
    wall_time_us: float
    rank: int

    @property
    def optimal(self) -> bool:
        return self.rank == 1

    @property
    def top2(self) -> bool:
        return self.rank <= 2

    @classmethod
    def from_report(cls, report: SolverReport, instance: Instance, project: ProjectSpec, rank: int) -> SolverMetrics:
        b = report.breakdown
        return cls(
            te_total=b.total,
            skill_perceived=b.skill_term,
            skill_true=true_skill_term(instance, project, report.chosen),
            uncertainty=b.uncertainty_term,
            cost=b.cost_term,
            social=b.social_term,
            evaluations=int(report.evaluations),
            wall_time_us=float(report.wall_time_us),
            rank=int(rank),
        )


@dataclass(frozen=True)
class TrialMetrics:
    trial: int
    total_distinct: int
    exhaustive: SolverMetrics
    secretary: SolverMetrics

    def rows(self) -> list[dict[str, Any]]:
        out: list[dict[str, Any]] = []
        for name in SOLVERS:
            m: SolverMetrics = getattr(self, name)
            out.append(
                {
                    "trial": self.trial,
                    "solver": name,
                    "te_total": m.te_total,
                    "skill_perceived": m.skill_perceived,
                    "skill_true": m.skill_true,
                    "uncertainty": m.uncertainty,
                    "cost": m.cost,
                    "social": m.social,
                    "evaluations": m.evaluations,
                    "wall_time_us": m.wall_time_us,
                    "rank": m.rank,
                }
            )
        return out


@dataclass
class _TrialSetup:
    seeds: TrialSeeds
    instance: Instance
    project: ProjectSpec
    model: PerceptionModel
    scorer: TeamScorer
    distinct: ConfigurationSpace
    stream: ConfigurationSpace
    totals: np.ndarray


def _setup_trial(params: ExperimentParams, trial_index: int) -> _TrialSetup:
    seeds = trial_seeds(params.base_seed, trial_index)
    instance = generate_instance(params.gen.model_copy(update={"seed": seeds.instance}))
    project = sample_project(params.project, params.gen.n_skills, seeds.project)
    model = params.perception.with_seed(seeds.noise)
    scorer = TeamScorer(instance, project, model)
    distinct = ConfigurationSpace.build(instance.n_workers, project.required_skills, "distinct")
    stream = distinct if params.space == "distinct" else ConfigurationSpace.build(
        instance.n_workers, project.required_skills, params.space
    )
    totals = scorer.score_space(distinct).total
    return _TrialSetup(seeds, instance, project, model, scorer, distinct, stream, totals)


def _rank_of(setup: _TrialSetup, report: SolverReport) -> int:
    space = setup.distinct if report.solver == "exhaustive" else setup.stream
    return config_rank(setup.totals, int(space.distinct_index[report.index]))


def _solve_exhaustive(setup: _TrialSetup) -> SolverMetrics:
    report = exhaustive_solver(
        setup.instance, setup.project, setup.model, setup.seeds.noise, scorer=setup.scorer, space=setup.distinct
    )
    return SolverMetrics.from_report(report, setup.instance, setup.project, _rank_of(setup, report))


def _solve_secretary(setup: _TrialSetup, k: int | None, fallback: Fallback) -> SolverMetrics:
    report = secretary_solver(
        setup.instance,
        setup.project,
        setup.model,
        setup.seeds.noise,
        setup.seeds.stream,
        k=k,
        fallback=fallback,
        scorer=setup.scorer,
        config_space=setup.stream,
    )
    return SolverMetrics.from_report(report, setup.instance, setup.project, _rank_of(setup, report))


def _pair(trial_index: int, setup: _TrialSetup, ex: SolverMetrics, sec: SolverMetrics) -> TrialMetrics:
    if ex.te_total < sec.te_total:
        raise RuntimeError(
            f"solver_invariant_violated: trial {trial_index} exhaustive TE {ex.te_total!r} < secretary TE {sec.te_total!r}"
        )
    return TrialMetrics(trial=trial_index, total_distinct=len(setup.distinct), exhaustive=ex, secretary=sec)


def run_trial(params: ExperimentParams, trial_index: int, k: int | None = None) -> TrialMetrics:
    """One realisation: fresh instance and project, both solvers on the same noise."""
    setup = _setup_trial(params, trial_index)
    ex = _solve_exhaustive(setup)
    sec = _solve_secretary(setup, params.k if k is None else k, params.fallback)
    return _pair(trial_index, setup, ex, sec)


def _sweep_trial(params: ExperimentParams, trial_index: int, k_values: Sequence[int]) -> list[TrialMetrics]:
    setup = _setup_trial(params, trial_index)
    ex = _solve_exhaustive(setup)
    return [_pair(trial_index, setup, ex, _solve_secretary(setup, k, params.fallback)) for k in k_values]


def _map_trials(fn: Callable[..., Any], args: Sequence[tuple[Any, ...]], jobs: int, progress: bool, desc: str) -> list[Any]:
    logger.debug("%s: %d tasks on %d jobs", desc, len(args), jobs)
    items = tqdm(args, desc=desc, disable=not progress, leave=False)
    if jobs <= 1:
        return [fn(*a) for a in items]
    return list(Parallel(n_jobs=jobs)(delayed(fn)(*a) for a in items))


def trials_frame(trials: Sequence[TrialMetrics]) -> pd.DataFrame:
    rows = [row for t in sorted(trials, key=lambda t: t.trial) for row in t.rows()]
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


@dataclass(frozen=True)
class AggregateSummary:
    table: pd.DataFrame

    def value(self, solver: str, metric: str, column: str = "mean") -> float:
        t = self.table
        hit = t[(t["solver"] == solver) & (t["metric"] == metric)]
        if hit.empty:
            raise KeyError(f"{solver}/{metric}")
        return float(hit.iloc[0][column])


def aggregate(trials: Sequence[TrialMetrics]) -> AggregateSummary:
    """Per (solver, metric): mean, sample std (0 for one trial), normal 95% half-width, count."""
    frame = trials_frame(trials)
    frame["p_best"] = (frame["rank"] == 1).astype(np.float64)
    frame["p_top2"] = (frame["rank"] <= 2).astype(np.float64)
    long = frame.melt(
        id_vars=["trial", "solver"], value_vars=list(SUMMARY_METRICS), var_name="metric", value_name="value"
    )
    long["value"] = long["value"].astype(np.float64)
    g = long.groupby(["solver", "metric"])["value"]
    table = pd.DataFrame({"mean": g.mean(), "std": g.std(ddof=1).fillna(0.0), "n": g.count()})
    index = pd.MultiIndex.from_product([list(SOLVERS), list(SUMMARY_METRICS)], names=["solver", "metric"])
    table = table.reindex(index).reset_index()
    table["n"] = table["n"].astype(np.int64)
    table["ci95"] = Z95 * table["std"] / np.sqrt(table["n"])
    return AggregateSummary(table=table[["solver", "metric", "mean", "std", "ci95", "n"]])


@dataclass
class MonteCarloResult:
    trials: list[TrialMetrics]
    summary: AggregateSummary

    def frame(self) -> pd.DataFrame:
        return trials_frame(self.trials)


def monte_carlo(
    params: ExperimentParams,
    *,
    jobs: int = 1,
    context: RunContext | None = None,
    progress: bool = False,
) -> MonteCarloResult:
    ctx = context or RunContext(keep_in_memory=False)
    ctx.log("info", "bench:start", n_trials=params.n_trials, jobs=jobs, space=params.space, k=params.k)
    trials = _map_trials(run_trial, [(params, i) for i in range(params.n_trials)], jobs, progress, "trials")
    trials.sort(key=lambda t: t.trial)
    summary = aggregate(trials)
    ctx.log(
        "info",
        "bench:done",
        n_trials=len(trials),
        exhaustive_te=summary.value("exhaustive", "te_total"),
        secretary_te=summary.value("secretary", "te_total"),
        secretary_evaluations=summary.value("secretary", "evaluations"),
    )
    return MonteCarloResult(trials=trials, summary=summary)


@dataclass
class SweepResult:
    k_values: list[int]
    by_k: dict[int, AggregateSummary] = field(default_factory=dict)

    @property
    def table(self) -> pd.DataFrame:
        parts = []
        for k in self.k_values:
            t = self.by_k[k].table.copy()
            t.insert(0, "k", k)
            parts.append(t)
        return pd.concat(parts, ignore_index=True)[SWEEP_COLUMNS]


def k_sweep(
    params: ExperimentParams,
    k_values: Sequence[int] | None = None,
    *,
    jobs: int = 1,
    context: RunContext | None = None,
    progress: bool = False,
) -> SweepResult:
    """Secretary thresholds over shared trials; only k changes between curves."""
    ks = [int(k) for k in (k_values if k_values is not None else params.k_values or [])]
    if not ks:
        raise ValueError("k_values_required")
    total = params.stream_total
    bad = [k for k in ks if not (0 <= k <= total)]
    if bad:
        raise ValueError(f"k_out_of_range: {bad} not in [0, {total}]")
    ctx = context or RunContext(keep_in_memory=False)
    ctx.log("info", "sweep:start", n_trials=params.n_trials, k_values=ks, space=params.space, total=total)
    per_trial = _map_trials(_sweep_trial, [(params, i, ks) for i in range(params.n_trials)], jobs, progress, "sweep")
    result = SweepResult(k_values=ks)
    for pos, k in enumerate(ks):
        result.by_k[k] = aggregate([row[pos] for row in per_trial])
    best_k = max(ks, key=lambda k: result.by_k[k].value("secretary", "p_best"))
    ctx.log("info", "sweep:done", n_trials=params.n_trials, best_k=best_k)
    return result


@dataclass(frozen=True)
class RankStats:
    n: int
    k: int
    p_rank1: float
    p_rank2_or_better: float
    p_full_scan: float
    mean_evaluations: float
    n_shuffles: int

    def to_row(self) -> dict[str, Any]:
        return {c: getattr(self, c) for c in RANKS_COLUMNS}


def rank_statistics(n_candidates: int, k: int | None = None, n_shuffles: int = 100_000, seed: int = 0) -> RankStats:
    """Secretary rule (fallback "last") over uniform shuffles of the scores 1..n."""
    n = int(n_candidates)
    if n < 1:
        raise ValueError(f"n_candidates must be >= 1 (got {n})")
    if n_shuffles < 1:
        raise ValueError(f"n_shuffles must be >= 1 (got {n_shuffles})")
    k_eff = exploration_threshold(n, k)
    rng = np.random.default_rng(int(seed))
    base = np.arange(1, n + 1, dtype=np.int64)
    rows_per_chunk = max(1, 2_000_000 // n)
    rank1 = rank2 = full = 0
    evaluations = 0
    done = 0
    while done < n_shuffles:
        b = min(rows_per_chunk, n_shuffles - done)
        scores = rng.permuted(np.tile(base, (b, 1)), axis=1)
        stop = secretary_stop_batch(scores, k_eff)
        rank = n + 1 - scores[np.arange(b), stop.positions]
        rank1 += int(np.count_nonzero(rank == 1))
        rank2 += int(np.count_nonzero(rank <= 2))
        full += int(np.count_nonzero(stop.full_scan))
        evaluations += int(stop.evaluations.sum())
        done += b
    return RankStats(
        n=n,
        k=k_eff,
        p_rank1=rank1 / n_shuffles,
        p_rank2_or_better=rank2 / n_shuffles,
        p_full_scan=full / n_shuffles,
        mean_evaluations=evaluations / n_shuffles,
        n_shuffles=int(n_shuffles),
    )
