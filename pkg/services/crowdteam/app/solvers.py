"""Configuration space enumeration and the two team-formation solvers.

Enumeration order (distinct space): leader ascending, then the team as a
combination of the other workers ascending, then the skill permutation
ascending (permutations of the sorted team, in lexicographic order; the i-th
required skill goes to the i-th worker of the permutation).

The ordered-teammate space lists leader ascending, ordered teammate tuple
ascending, skill permutation ascending. Each distinct configuration shows up
(|S_p| - 1)! times there.

The exhaustive argmax and rank order candidates by the key (TE, earlier index
first), so equal TE values resolve to the candidate that comes first in
enumeration order. The secretary exploitation test compares TE alone: a
candidate that only ties the exploration maximum does not qualify.
"""

from __future__ import annotations

from dataclasses import dataclass
import itertools
import logging
import math
import time
from typing import Any, Iterable, Iterator, Literal, Sequence

from joblib import Parallel, delayed
import numpy as np

from .efficiency import EfficiencyBreakdown, PerceptionModel, ProjectSpec, TeamConfig, TeamScorer
from .model import Instance

logger = logging.getLogger(__name__)

SpaceMode = Literal["distinct", "ordered", "paper"]
Fallback = Literal["last", "best_seen"]

MAX_CONFIGURATIONS = 10_000_000


def canonical_mode(mode: str) -> str:
    # "paper" names the same multiset count as "ordered".
    if mode == "paper":
        return "ordered"
    if mode not in ("distinct", "ordered"):
        raise ValueError(f"unknown_space_mode: {mode}")
    return mode


def configuration_count(n_workers: int, n_required_skills: int, mode: SpaceMode = "distinct") -> int:
    n, k = int(n_workers), int(n_required_skills)
    if k < 1:
        raise ValueError(f"infeasible_project: |S_p|={k} must be >= 1")
    if k > n:
        raise ValueError(f"infeasible_project: |S_p|={k} exceeds N={n}")
    if canonical_mode(mode) == "distinct":
        return n * math.comb(n - 1, k - 1) * math.factorial(k)
    return math.factorial(n) * math.factorial(k) // math.factorial(n - k)


def _distinct_arrays(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
    leaders: list[np.ndarray] = []
    workers: list[np.ndarray] = []
    for leader in range(n):
        others = [w for w in range(n) if w != leader]
        combos = list(itertools.combinations(others, k - 1))
        mates = np.array(combos, dtype=np.int64).reshape(len(combos), k - 1)
        teams = np.sort(np.concatenate([np.full((mates.shape[0], 1), leader), mates], axis=1), axis=1)
        rows = teams[:, perms].reshape(-1, k)
        workers.append(rows)
        leaders.append(np.full(rows.shape[0], leader, dtype=np.int64))
    return np.concatenate(leaders), np.concatenate(workers)


def _ordered_arrays(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
    leaders: list[np.ndarray] = []
    workers: list[np.ndarray] = []
    for leader in range(n):
        others = [w for w in range(n) if w != leader]
        tuples = list(itertools.permutations(others, k - 1))
        mates = np.array(tuples, dtype=np.int64).reshape(len(tuples), k - 1)
        ordered = np.concatenate([np.full((mates.shape[0], 1), leader), mates], axis=1)
        rows = ordered[:, perms].reshape(-1, k)
        workers.append(rows)
        leaders.append(np.full(rows.shape[0], leader, dtype=np.int64))
    return np.concatenate(leaders), np.concatenate(workers)


def _row_keys(n: int, leaders: np.ndarray, workers: np.ndarray) -> np.ndarray:
    cols = (leaders,) + tuple(workers[:, i] for i in range(workers.shape[1]))
    return np.ravel_multi_index(cols, (n,) * len(cols))


@dataclass(frozen=True, eq=False)
class ConfigurationSpace:
    """Every candidate as arrays: workers[r, i] covers required_skills[i] in row r."""

    n_workers: int
    required_skills: tuple[int, ...]
    mode: SpaceMode
    leaders: np.ndarray
    workers: np.ndarray
    # Row index of the same configuration in the distinct enumeration.
    distinct_index: np.ndarray

    @classmethod
    def build(cls, n_workers: int, required_skills: Sequence[int], mode: SpaceMode = "distinct") -> ConfigurationSpace:
        mode = canonical_mode(mode)  # type: ignore[assignment]
        req = tuple(int(j) for j in required_skills)
        n, k = int(n_workers), len(req)
        size = configuration_count(n, k, mode)
        if size > MAX_CONFIGURATIONS:
            raise RuntimeError(
                f"configuration_space_too_large: {size} candidates for N={n}, |S_p|={k} "
                f"(mode={mode}, limit {MAX_CONFIGURATIONS})"
            )
        d_leaders, d_workers = _distinct_arrays(n, k)
        if mode == "distinct":
            leaders, workers = d_leaders, d_workers
            index = np.arange(leaders.shape[0], dtype=np.int64)
        else:
            leaders, workers = _ordered_arrays(n, k)
            d_keys = _row_keys(n, d_leaders, d_workers)
            order = np.argsort(d_keys, kind="stable")
            pos = np.searchsorted(d_keys[order], _row_keys(n, leaders, workers))
            index = order[pos]
        for a in (leaders, workers, index):
            a.setflags(write=False)
        logger.debug("configuration space mode=%s N=%d |S_p|=%d size=%d", mode, n, k, leaders.shape[0])
        return cls(
            n_workers=n,
            required_skills=req,
            mode=mode,
            leaders=leaders,
            workers=workers,
            distinct_index=index,
        )

    @classmethod
    def for_project(cls, instance: Instance, project: ProjectSpec, mode: SpaceMode = "distinct") -> ConfigurationSpace:
        project.check_against(instance)
        return cls.build(instance.n_workers, project.required_skills, mode)

    def __len__(self) -> int:
        return int(self.leaders.shape[0])

    @property
    def total_distinct(self) -> int:
        return configuration_count(self.n_workers, len(self.required_skills), "distinct")

    @property
    def total_ordered(self) -> int:
        return configuration_count(self.n_workers, len(self.required_skills), "ordered")

    def config_at(self, index: int) -> TeamConfig:
        return TeamConfig.from_workers(
            int(self.leaders[index]),
            self.required_skills,
            self.workers[index].tolist(),
        )

    def __iter__(self) -> Iterator[TeamConfig]:
        for i in range(len(self)):
            yield self.config_at(i)


def enumerate_configurations(instance: Instance, project: ProjectSpec) -> Iterator[TeamConfig]:
    return iter(ConfigurationSpace.for_project(instance, project, "distinct"))


def shuffled_order(size: int, seed: int) -> np.ndarray:
    # numpy's permutation is a Fisher-Yates shuffle over the index range.
    return np.random.default_rng(int(seed)).permutation(int(size))


def shuffled_configuration_stream(
    instance: Instance,
    project: ProjectSpec,
    seed: int,
    space: SpaceMode = "distinct",
) -> Iterator[TeamConfig]:
    cs = ConfigurationSpace.for_project(instance, project, space)
    for i in shuffled_order(len(cs), seed):
        yield cs.config_at(int(i))


@dataclass(frozen=True)
class SolverReport:
    solver: str
    chosen: TeamConfig
    breakdown: EfficiencyBreakdown
    evaluations: int
    total: int
    wall_time_us: float
    rank: int | None = None
    k: int | None = None
    fallback: str | None = None
    space: str = "distinct"
    index: int = 0

    @property
    def total_te(self) -> float:
        return self.breakdown.total

    def with_rank(self, rank: int) -> SolverReport:
        return SolverReport(**{**self.__dict__, "rank": int(rank)})

    def to_dict(self) -> dict[str, Any]:
        return {
            "solver": self.solver,
            **self.chosen.to_dict(),
            "total_te": self.total_te,
            "breakdown": self.breakdown.to_dict(),
            "evaluations": self.evaluations,
            "total": self.total,
            "wall_time_us": self.wall_time_us,
            "rank": self.rank,
            "k": self.k,
            "fallback": self.fallback,
            "space": self.space,
        }


def _elapsed_us(t0: int) -> float:
    return (time.perf_counter_ns() - t0) / 1000.0


def _best_in_range(scorer: TeamScorer, leaders: list[int], workers: list[list[int]], start: int) -> tuple[float, int]:
    best_te = -math.inf
    best_i = -1
    for offset, (leader, ws) in enumerate(zip(leaders, workers)):
        te = scorer.score(leader, ws)
        # strict ">" keeps the earliest index on ties
        if te > best_te:
            best_te, best_i = te, start + offset
    return best_te, best_i


def exhaustive_solver(
    instance: Instance,
    project: ProjectSpec,
    model: PerceptionModel,
    noise_seed: int,
    *,
    scorer: TeamScorer | None = None,
    space: ConfigurationSpace | None = None,
    jobs: int = 1,
) -> SolverReport:
    """Evaluate every distinct configuration and return the TE maximiser."""
    t0 = time.perf_counter_ns()
    if scorer is None:
        scorer = TeamScorer(instance, project, model.with_seed(noise_seed))
    cs = space if space is not None else ConfigurationSpace.for_project(instance, project, "distinct")
    if cs.mode != "distinct":
        raise ValueError("exhaustive_solver_needs_distinct_space")
    leaders = cs.leaders.tolist()
    workers = cs.workers.tolist()
    n = len(leaders)
    if jobs <= 1 or n < 2:
        best_te, best_i = _best_in_range(scorer, leaders, workers, 0)
    else:
        # Partition the range; reduce by (TE, earliest index) to match the sequential order.
        bounds = np.linspace(0, n, num=min(jobs, n) + 1, dtype=np.int64)
        parts = Parallel(n_jobs=jobs)(
            delayed(_best_in_range)(scorer, leaders[a:b], workers[a:b], int(a))
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        )
        best_te, best_i = max(parts, key=lambda p: (p[0], -p[1]))
    chosen = cs.config_at(best_i)
    breakdown = scorer.breakdown(chosen)
    return SolverReport(
        solver="exhaustive",
        chosen=chosen,
        breakdown=breakdown,
        evaluations=n,
        total=n,
        wall_time_us=_elapsed_us(t0),
        rank=1,
        space="distinct",
        index=best_i,
    )


def exploration_threshold(total: int, k: int | None = None) -> int:
    """Length of the exploration phase: ceil(total / e) unless k is given."""
    total = int(total)
    if total < 1:
        raise ValueError(f"empty_space: total={total}")
    if k is not None:
        if not (0 <= int(k) <= total):
            raise ValueError(f"k_out_of_range: k={k} not in [0, {total}]")
        return int(k)
    return max(1, min(total, math.ceil(total / math.e)))


@dataclass(frozen=True)
class StopResult:
    position: int
    evaluations: int
    exceeded: bool


def secretary_stop(keys: Iterable[Any], k: int, fallback: Fallback = "last") -> StopResult:
    """Classical exploration/exploitation stopping over a stream of comparable keys.

    The first k keys are observed only. Afterwards the first key strictly
    greater than the exploration maximum is selected. If none qualifies the
    fallback applies: the final key ("last") or the best key seen ("best_seen").
    """
    if k < 0:
        raise ValueError(f"k_out_of_range: k={k} < 0")
    explore_best: Any = None
    overall_best: Any = None
    overall_pos = -1
    pos = -1
    for pos, key in enumerate(keys):
        if overall_best is None or key > overall_best:
            overall_best, overall_pos = key, pos
        if pos < k:
            if explore_best is None or key > explore_best:
                explore_best = key
            continue
        if explore_best is None or key > explore_best:
            return StopResult(position=pos, evaluations=pos + 1, exceeded=True)
    n = pos + 1
    if n == 0:
        raise ValueError("empty_stream")
    if k > n:
        raise ValueError(f"k_out_of_range: k={k} not in [0, {n}]")
    chosen = n - 1 if fallback == "last" else overall_pos
    return StopResult(position=chosen, evaluations=n, exceeded=False)


@dataclass(frozen=True)
class BatchStop:
    positions: np.ndarray
    evaluations: np.ndarray
    full_scan: np.ndarray


def secretary_stop_batch(scores: np.ndarray, k: int) -> BatchStop:
    """Vectorised secretary rule (fallback "last") over rows of distinct scores."""
    s = np.asarray(scores)
    b, n = s.shape
    if not (0 <= k <= n):
        raise ValueError(f"k_out_of_range: k={k} not in [0, {n}]")
    if k == n:
        exceeded = np.zeros(b, dtype=bool)
        first = np.zeros(b, dtype=np.int64)
    else:
        if k == 0:
            tail = np.ones((b, n), dtype=bool)
        else:
            threshold = s[:, :k].max(axis=1)
            tail = s[:, k:] > threshold[:, None]
        exceeded = tail.any(axis=1)
        first = tail.argmax(axis=1)
    positions = np.where(exceeded, k + first, n - 1)
    return BatchStop(positions=positions, evaluations=positions + 1, full_scan=~exceeded)


def secretary_solver(
    instance: Instance,
    project: ProjectSpec,
    model: PerceptionModel,
    noise_seed: int,
    stream_seed: int,
    k: int | None = None,
    fallback: Fallback = "last",
    *,
    space: SpaceMode = "distinct",
    scorer: TeamScorer | None = None,
    config_space: ConfigurationSpace | None = None,
) -> SolverReport:
    """Stop on the first shuffled candidate that beats the whole exploration phase."""
    if fallback not in ("last", "best_seen"):
        raise ValueError(f"unknown_fallback: {fallback}")
    t0 = time.perf_counter_ns()
    if scorer is None:
        scorer = TeamScorer(instance, project, model.with_seed(noise_seed))
    cs = config_space if config_space is not None else ConfigurationSpace.for_project(instance, project, space)
    total = len(cs)
    k_eff = exploration_threshold(total, k)
    order = shuffled_order(total, stream_seed)
    leaders = cs.leaders.tolist()
    workers = cs.workers.tolist()

    def keys() -> Iterator[float]:
        for i in order.tolist():
            yield scorer.score(leaders[i], workers[i])

    stop = secretary_stop(keys(), k_eff, fallback)
    chosen_index = int(order[stop.position])
    chosen = cs.config_at(chosen_index)
    breakdown = scorer.breakdown(chosen)
    return SolverReport(
        solver="secretary",
        chosen=chosen,
        breakdown=breakdown,
        evaluations=stop.evaluations,
        total=total,
        wall_time_us=_elapsed_us(t0),
        k=k_eff,
        fallback=fallback,
        space=cs.mode,
        index=chosen_index,
    )


def config_rank(totals: np.ndarray, index: int) -> int:
    """1-based rank of row `index` by (TE descending, index ascending)."""
    t = np.asarray(totals)
    te = t[index]
    better = int(np.count_nonzero(t > te))
    earlier_ties = int(np.count_nonzero(t[:index] == te))
    return 1 + better + earlier_ties


@dataclass(frozen=True)
class OddsResult:
    stop_index: int
    win_probability: float


def odds_stopping_index(success_probabilities: Sequence[float]) -> OddsResult:
    """Sum the odds r_j = p_j / (1 - p_j) from the back; stop once the sum reaches 1.

    Indices are 1-based. A certain event (p_j = 1) has infinite odds, so the
    stopping index is never earlier than the last such event; the win
    probability then reduces to the chance of no later success.
    """
    p = [float(x) for x in success_probabilities]
    if not p:
        raise ValueError("empty_probabilities")
    bad = [x for x in p if not (0.0 <= x <= 1.0)]
    if bad:
        raise ValueError(f"probability_out_of_range: {bad}")
    n = len(p)
    s = 1
    tail = 0.0
    for j in range(n, 0, -1):
        pj = p[j - 1]
        tail = math.inf if pj == 1.0 else tail + pj / (1.0 - pj)
        if tail >= 1.0:
            s = j
            break
    if p[s - 1] == 1.0:
        win = 1.0
        for pj in p[s:]:
            win *= 1.0 - pj
        return OddsResult(stop_index=s, win_probability=win)
    q = 1.0
    r = 0.0
    for pj in p[s - 1 :]:
        q *= 1.0 - pj
        r += pj / (1.0 - pj)
    return OddsResult(stop_index=s, win_probability=q * r)
