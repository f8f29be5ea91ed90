"""Leader perception model and the team efficiency objective TE.

TE(L, T, s) = g1 * skill - g2 * uncertainty - g3 * cost + g4 * social

with every term normalised to [0, 1]:
  skill        mean perceived skill of the assigned (worker, skill) pairs
  uncertainty  mean leader uncertainty U^L_w over team members
  cost         mean cost of the assigned (worker, skill) pairs
  social       mean relationship weight over ordered pairs of distinct members
               (0 for single-member teams)

Three evaluators exist: team_efficiency (validated, one config),
TeamScorer.score (unvalidated fast path) and TeamScorer.score_arrays
(vectorised over many configs). They accumulate in the same order and agree
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import logging
import os
from typing import Annotated, Any, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator
import yaml

from .model import UNREACHABLE, Instance

logger = logging.getLogger(__name__)

NonNegFloat = Annotated[float, Field(ge=0.0)]


class ProjectSpec(BaseModel):
    required_skills: list[int] = Field(min_length=1)
    gamma: tuple[NonNegFloat, NonNegFloat, NonNegFloat, NonNegFloat] = (0.25, 0.25, 0.25, 0.25)

    @field_validator("required_skills")
    @classmethod
    def _distinct_non_negative(cls, v: list[int]) -> list[int]:
        if any(j < 0 for j in v):
            raise ValueError(f"skill indices must be >= 0 (got {v})")
        if len(set(v)) != len(v):
            raise ValueError(f"skill indices must be distinct (got {v})")
        return v

    @property
    def size(self) -> int:
        return len(self.required_skills)

    def check_against(self, instance: Instance) -> None:
        bad = [j for j in self.required_skills if j >= instance.n_skills]
        if bad:
            raise ValueError(f"skill_index_out_of_range: {bad} with M={instance.n_skills}")
        if self.size > instance.n_workers:
            raise ValueError(f"infeasible_project: |S_p|={self.size} exceeds N={instance.n_workers}")


class PerceptionModel(BaseModel):
    sigma0: float = Field(default=0.2, ge=0.0)
    u_max: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    def with_seed(self, seed: int) -> PerceptionModel:
        return self.model_copy(update={"seed": int(seed)})


@dataclass(frozen=True, eq=False)
class TeamConfig:
    """One candidate: a leader plus a bijection required skill -> worker.

    The assignment is a set of (skill, worker) pairs; storage order carries no
    meaning and equality/hash use the canonical sorted form.
    """

    leader: int
    assignment: tuple[tuple[int, int], ...]

    @classmethod
    def from_mapping(cls, leader: int, mapping: Mapping[int, int]) -> TeamConfig:
        return cls(leader=int(leader), assignment=tuple((int(j), int(w)) for j, w in mapping.items()))

    @classmethod
    def from_workers(cls, leader: int, required_skills: Sequence[int], workers: Sequence[int]) -> TeamConfig:
        return cls(leader=int(leader), assignment=tuple((int(j), int(w)) for j, w in zip(required_skills, workers)))

    def as_dict(self) -> dict[int, int]:
        return dict(self.assignment)

    def workers_in(self, required_skills: Sequence[int]) -> list[int]:
        m = self.as_dict()
        return [m[j] for j in required_skills]

    @property
    def team(self) -> frozenset[int]:
        return frozenset(w for _, w in self.assignment)

    def key(self) -> tuple[int, tuple[tuple[int, int], ...]]:
        return (self.leader, tuple(sorted(self.assignment)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TeamConfig):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def to_dict(self) -> dict[str, Any]:
        return {
            "leader": self.leader,
            "assignment": {str(j): w for j, w in sorted(self.assignment)},
            "team": sorted(self.team),
        }


@dataclass(frozen=True)
class EfficiencyBreakdown:
    skill_term: float
    uncertainty_term: float
    cost_term: float
    social_term: float
    total: float

    @classmethod
    def combine(
        cls,
        gamma: Sequence[float],
        skill: float,
        uncertainty: float,
        cost: float,
        social: float,
    ) -> EfficiencyBreakdown:
        g1, g2, g3, g4 = (float(g) for g in gamma)
        total = g1 * skill - g2 * uncertainty - g3 * cost + g4 * social
        return cls(
            skill_term=float(skill),
            uncertainty_term=float(uncertainty),
            cost_term=float(cost),
            social_term=float(social),
            total=float(total),
        )

    def to_dict(self) -> dict[str, float]:
        return {
            "skill_term": self.skill_term,
            "uncertainty_term": self.uncertainty_term,
            "cost_term": self.cost_term,
            "social_term": self.social_term,
            "total": self.total,
        }


def _check_worker(instance: Instance, w: int) -> None:
    if not (0 <= int(w) < instance.n_workers):
        raise IndexError(f"worker_index_out_of_range: {w} (N={instance.n_workers})")


def uncertainty_row(instance: Instance, leader: int, model: PerceptionModel) -> np.ndarray:
    """U^L_w for every worker w: min(u_max, sigma0^2 * d(L, w)).

    Unreachable workers take the d -> infinity limit: u_max when sigma0 > 0.
    With sigma0 = 0 the noiseless rule takes precedence over the u_max rule for
    unreachable workers, so U is 0 everywhere and every leader sees S exactly.
    """
    _check_worker(instance, leader)
    d = np.asarray(instance.hops[leader], dtype=np.int64)
    var = model.sigma0 * model.sigma0
    u = np.minimum(model.u_max, var * np.where(d == UNREACHABLE, 0, d).astype(np.float64))
    if var > 0.0:
        u[d == UNREACHABLE] = model.u_max
    u[leader] = 0.0
    return u


def uncertainty(instance: Instance, leader: int, worker: int, model: PerceptionModel) -> float:
    _check_worker(instance, worker)
    return float(uncertainty_row(instance, leader, model)[worker])


def _noise_generator(seed: int, leader: int) -> np.random.Generator:
    # Counter-based: the leader selects a disjoint block of the Philox counter space.
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(leader), 0]))


def perceived_skills(
    instance: Instance,
    leader: int,
    project: ProjectSpec,
    model: PerceptionModel,
) -> np.ndarray:
    """Leader L's view of every worker's required skills, shape (N, |S_p|).

    Column i holds skill project.required_skills[i]. One standard normal is
    drawn per (worker, skill) over the full skill set, so an entry depends only
    on (seed, leader, worker, skill) and not on which other skills are required.
    """
    _check_worker(instance, leader)
    req = list(project.required_skills)
    u = uncertainty_row(instance, leader, model)
    z = _noise_generator(model.seed, leader).standard_normal((instance.n_workers, instance.n_skills))
    noise = z[:, req] * np.sqrt(u)[:, None]
    return np.clip(np.asarray(instance.skills)[:, req] + noise, 0.0, 1.0)


def check_team_config(project: ProjectSpec, config: TeamConfig, n_workers: int) -> list[str]:
    errors: list[str] = []
    skills = [j for j, _ in config.assignment]
    workers = [w for _, w in config.assignment]
    if len(set(skills)) != len(skills):
        errors.append("each skill must be covered by exactly one worker (duplicate skill in assignment)")
    if set(skills) != set(project.required_skills):
        errors.append(
            f"assignment skills {sorted(set(skills))} must equal required skills {sorted(project.required_skills)}"
        )
    if len(set(workers)) != len(workers):
        errors.append("each worker can provide only one skill (duplicate worker in assignment)")
    out_of_range = sorted({w for w in workers + [config.leader] if not (0 <= w < n_workers)})
    if out_of_range:
        errors.append(f"worker indices out of range: {out_of_range}")
    if config.leader not in set(workers):
        errors.append(f"leader {config.leader} must be a team member")
    return errors


def _terms(
    req: Sequence[int],
    workers: Sequence[int],
    p_rows: Any,
    u_row: Any,
    costs: Any,
    rel: Any,
) -> tuple[float, float, float, float]:
    k = len(req)
    s_sum = 0.0
    c_sum = 0.0
    for i, j in enumerate(req):
        w = workers[i]
        s_sum += p_rows[w][i]
        c_sum += costs[w][j]
    members = sorted(workers)
    u_sum = 0.0
    for w in members:
        u_sum += u_row[w]
    soc = 0.0
    for a in members:
        for b in members:
            if a != b:
                soc += rel[a][b]
    social = soc / (k * (k - 1)) if k > 1 else 0.0
    return s_sum / k, u_sum / k, c_sum / k, social


def team_efficiency(
    instance: Instance,
    project: ProjectSpec,
    config: TeamConfig,
    perceived: np.ndarray,
    model: PerceptionModel,
) -> EfficiencyBreakdown:
    errors = check_team_config(project, config, instance.n_workers)
    if errors:
        raise ValueError("invalid_team_config: " + "; ".join(errors))
    p = np.asarray(perceived, dtype=np.float64)
    if p.shape != (instance.n_workers, project.size):
        raise ValueError(f"invalid_perceived_shape: {p.shape} != {(instance.n_workers, project.size)}")
    req = list(project.required_skills)
    workers = config.workers_in(req)
    u = uncertainty_row(instance, config.leader, model)
    s, un, c, soc = _terms(
        req,
        workers,
        p.tolist(),
        u.tolist(),
        np.asarray(instance.costs).tolist(),
        np.asarray(instance.relationship).tolist(),
    )
    return EfficiencyBreakdown.combine(project.gamma, s, un, c, soc)


def true_skill_term(instance: Instance, project: ProjectSpec, config: TeamConfig) -> float:
    """Skill term recomputed with the true matrix S instead of the leader's view."""
    req = list(project.required_skills)
    workers = config.workers_in(req)
    s_sum = 0.0
    for i, j in enumerate(req):
        s_sum += float(instance.skills[workers[i], j])
    return s_sum / len(req)


@dataclass(frozen=True)
class TermArrays:
    skill: np.ndarray
    uncertainty: np.ndarray
    cost: np.ndarray
    social: np.ndarray
    total: np.ndarray


class TeamScorer:
    """Scores configurations for one (instance, project, noise seed).

    Holds one perceived-skill matrix per candidate leader; every solver run on
    the same scorer sees identical noise.
    """

    def __init__(self, instance: Instance, project: ProjectSpec, model: PerceptionModel) -> None:
        project.check_against(instance)
        self.instance = instance
        self.project = project
        self.model = model
        self.required = list(project.required_skills)
        n = instance.n_workers
        self.perceived = np.stack([perceived_skills(instance, L, project, model) for L in range(n)])
        self.uncertainty = np.stack([uncertainty_row(instance, L, model) for L in range(n)])
        self._p = self.perceived.tolist()
        self._u = self.uncertainty.tolist()
        self._c = np.asarray(instance.costs).tolist()
        self._r = np.asarray(instance.relationship).tolist()
        g1, g2, g3, g4 = (float(g) for g in project.gamma)
        self._gamma = (g1, g2, g3, g4)
        logger.debug("scorer ready N=%d |S_p|=%d seed=%d", n, len(self.required), model.seed)

    def score(self, leader: int, workers: Sequence[int]) -> float:
        s, u, c, soc = _terms(self.required, workers, self._p[leader], self._u[leader], self._c, self._r)
        g1, g2, g3, g4 = self._gamma
        return g1 * s - g2 * u - g3 * c + g4 * soc

    def breakdown(self, config: TeamConfig) -> EfficiencyBreakdown:
        return team_efficiency(self.instance, self.project, config, self.perceived[config.leader], self.model)

    def score_arrays(self, leaders: np.ndarray, workers: np.ndarray) -> TermArrays:
        """Vectorised TE terms for rows (leaders[r], workers[r, :])."""
        leaders = np.asarray(leaders, dtype=np.int64)
        workers = np.asarray(workers, dtype=np.int64)
        k = len(self.required)
        n_rows = leaders.shape[0]
        costs = np.asarray(self.instance.costs)
        rel = np.asarray(self.instance.relationship)

        s_sum = np.zeros(n_rows)
        c_sum = np.zeros(n_rows)
        for i, j in enumerate(self.required):
            w = workers[:, i]
            s_sum += self.perceived[leaders, w, i]
            c_sum += costs[w, j]
        members = np.sort(workers, axis=1)
        u_sum = np.zeros(n_rows)
        for a in range(k):
            u_sum += self.uncertainty[leaders, members[:, a]]
        soc = np.zeros(n_rows)
        for a in range(k):
            for b in range(k):
                if a != b:
                    soc += rel[members[:, a], members[:, b]]
        skill = s_sum / k
        unc = u_sum / k
        cost = c_sum / k
        social = soc / (k * (k - 1)) if k > 1 else np.zeros(n_rows)
        g1, g2, g3, g4 = self._gamma
        total = g1 * skill - g2 * unc - g3 * cost + g4 * social
        return TermArrays(skill=skill, uncertainty=unc, cost=cost, social=social, total=total)


    def score_space(self, space: Any) -> TermArrays:
        return self.score_arrays(space.leaders, space.workers)


def load_project(path: str) -> ProjectSpec:
    """Read a ProjectSpec from a JSON or YAML document."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"project_not_found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    payload = yaml.safe_load(text) if path.endswith((".yaml", ".yml")) else json.loads(text)
    if not isinstance(payload, dict):
        raise ValueError(f"invalid_project: {path} is not a mapping")
    return ProjectSpec.model_validate(payload)
