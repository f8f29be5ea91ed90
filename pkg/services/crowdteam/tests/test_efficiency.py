from __future__ import annotations

import itertools
import json

import numpy as np
import pytest

from services.crowdteam.app.efficiency import (
    PerceptionModel,
    ProjectSpec,
    TeamConfig,
    TeamScorer,
    check_team_config,
    load_project,
    perceived_skills,
    team_efficiency,
    true_skill_term,
    uncertainty,
    uncertainty_row,
)
from services.crowdteam.app.model import GenParams, adjacency_from_edges, build_instance, generate_instance
from services.crowdteam.app.solvers import ConfigurationSpace

SKILLS = [[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [0.3, 0.3]]
COSTS = [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8]]


def _chain():
    # 0 - 1 - 2, worker 3 alone
    return build_instance(SKILLS, COSTS, adjacency_from_edges(4, [(0, 1), (1, 2)]))


def test_project_spec_validation() -> None:
    with pytest.raises(ValueError):
        ProjectSpec(required_skills=[])
    with pytest.raises(ValueError, match="distinct"):
        ProjectSpec(required_skills=[1, 1])
    with pytest.raises(ValueError):
        ProjectSpec(required_skills=[-1])
    with pytest.raises(ValueError):
        ProjectSpec(required_skills=[0], gamma=(0.5, -0.1, 0.2, 0.2))
    inst = _chain()
    with pytest.raises(ValueError, match="skill_index_out_of_range"):
        ProjectSpec(required_skills=[2]).check_against(inst)
    small = build_instance([[0.5, 0.5]], [[0.1, 0.1]], [[False]])
    with pytest.raises(ValueError, match=r"infeasible_project: \|S_p\|=2 exceeds N=1"):
        ProjectSpec(required_skills=[0, 1]).check_against(small)


def test_uncertainty_grows_with_distance_and_caps() -> None:
    inst = _chain()
    u = uncertainty_row(inst, 0, PerceptionModel(sigma0=0.2))
    assert u[0] == 0.0
    assert u[1] == pytest.approx(0.04)
    assert u[2] == pytest.approx(0.08)
    assert u[3] == 1.0
    capped = uncertainty_row(inst, 0, PerceptionModel(sigma0=1.0, u_max=0.5))
    assert capped.tolist() == [0.0, 0.5, 0.5, 0.5]
    assert uncertainty_row(inst, 0, PerceptionModel(sigma0=0.0)).tolist() == [0.0] * 4
    assert uncertainty(inst, 2, 0, PerceptionModel(sigma0=0.2)) == pytest.approx(0.08)
    with pytest.raises(IndexError, match="worker_index_out_of_range"):
        uncertainty(inst, 0, 9, PerceptionModel())


def test_perceived_skills_noise_model() -> None:
    inst = generate_instance(GenParams(n_workers=10, n_skills=5, seed=2))
    project = ProjectSpec(required_skills=[1, 3])
    exact = perceived_skills(inst, 4, project, PerceptionModel(sigma0=0.0, seed=9))
    assert np.array_equal(exact, inst.skills[:, [1, 3]])

    noisy = perceived_skills(inst, 4, project, PerceptionModel(sigma0=0.5, seed=9))
    assert ((noisy >= 0.0) & (noisy <= 1.0)).all()
    assert np.array_equal(noisy[4], inst.skills[4, [1, 3]])
    assert np.array_equal(noisy, perceived_skills(inst, 4, project, PerceptionModel(sigma0=0.5, seed=9)))
    assert not np.array_equal(noisy, perceived_skills(inst, 4, project, PerceptionModel(sigma0=0.5, seed=10)))

    # A skill's noise does not depend on which other skills are required.
    single = perceived_skills(inst, 4, ProjectSpec(required_skills=[3]), PerceptionModel(sigma0=0.5, seed=9))
    assert np.array_equal(single[:, 0], noisy[:, 1])


def test_team_efficiency_by_hand() -> None:
    inst = _chain()
    project = ProjectSpec(required_skills=[0, 1])
    model = PerceptionModel(sigma0=0.0)
    config = TeamConfig.from_mapping(0, {0: 0, 1: 1})
    b = team_efficiency(inst, project, config, perceived_skills(inst, 0, project, model), model)
    assert b.skill_term == pytest.approx(0.85)
    assert b.uncertainty_term == 0.0
    assert b.cost_term == pytest.approx(0.25)
    assert b.social_term == 1.0
    assert b.total == pytest.approx(0.25 * (0.85 - 0.25 + 1.0))

    noisy_model = PerceptionModel(sigma0=0.2)
    far = TeamConfig.from_mapping(0, {0: 0, 1: 2})
    b2 = team_efficiency(inst, project, far, perceived_skills(inst, 0, project, noisy_model), noisy_model)
    assert b2.uncertainty_term == pytest.approx(0.04)
    assert b2.social_term == pytest.approx(0.5)


def test_noise_is_zero_mean_with_hop_scaled_variance() -> None:
    inst = _chain()
    project = ProjectSpec(required_skills=[0])
    base = PerceptionModel(sigma0=0.2)
    # worker 2 has S = 0.5 and sits one hop from leader 1
    draws = np.array([perceived_skills(inst, 1, project, base.with_seed(s))[2, 0] for s in range(100_000)]) - 0.5
    assert abs(draws.mean()) < 0.005
    # clipping at [0, 1] trims the tails slightly below 0.04
    assert abs(draws.var() - 0.04) < 0.002


def test_total_is_linear_in_each_weight() -> None:
    inst = generate_instance(GenParams(n_workers=7, n_skills=4, seed=4))
    rng = np.random.default_rng(6)
    model = PerceptionModel(sigma0=0.3, seed=21)
    basis = np.eye(4)
    for _ in range(30):
        leader, a, b = (int(w) for w in rng.choice(7, size=3, replace=False))
        config = TeamConfig.from_mapping(leader, {0: leader, 2: a, 3: b})
        gamma = rng.random(4) * 2
        project = ProjectSpec(required_skills=[0, 2, 3], gamma=tuple(gamma))
        perceived = perceived_skills(inst, leader, project, model)
        total = team_efficiency(inst, project, config, perceived, model).total
        parts = [
            team_efficiency(inst, ProjectSpec(required_skills=[0, 2, 3], gamma=tuple(e)), config, perceived, model).total
            for e in basis
        ]
        assert total == pytest.approx(float(np.dot(gamma, parts)), abs=1e-12)
        doubled = ProjectSpec(required_skills=[0, 2, 3], gamma=tuple(2 * gamma))
        assert team_efficiency(inst, doubled, config, perceived, model).total == pytest.approx(2 * total, abs=1e-12)


def test_social_term_ignores_who_holds_which_skill() -> None:
    inst = generate_instance(GenParams(n_workers=8, n_skills=3, edge_probability=0.4, seed=3))
    project = ProjectSpec(required_skills=[0, 1, 2])
    model = PerceptionModel(seed=5)
    team = [2, 5, 7]
    perceived = perceived_skills(inst, 5, project, model)
    seen = set()
    for workers in itertools.permutations(team):
        config = TeamConfig.from_workers(5, [0, 1, 2], workers)
        b = team_efficiency(inst, project, config, perceived, model)
        seen.add((b.social_term, b.uncertainty_term))
    assert len(seen) == 1


def test_single_member_team_has_zero_social_term() -> None:
    inst = _chain()
    project = ProjectSpec(required_skills=[1], gamma=(0.0, 0.0, 0.0, 1.0))
    model = PerceptionModel()
    b = team_efficiency(inst, project, TeamConfig.from_mapping(1, {1: 1}), perceived_skills(inst, 1, project, model), model)
    assert b.social_term == 0.0
    assert b.total == 0.0


def test_invalid_configs_are_rejected() -> None:
    inst = _chain()
    project = ProjectSpec(required_skills=[0, 1])
    model = PerceptionModel()
    p = perceived_skills(inst, 0, project, model)
    cases = {
        "leader": TeamConfig.from_mapping(3, {0: 0, 1: 1}),
        "duplicate worker": TeamConfig(leader=0, assignment=((0, 0), (1, 0))),
        "required skills": TeamConfig.from_mapping(0, {0: 0}),
        "out of range": TeamConfig.from_mapping(0, {0: 0, 1: 7}),
    }
    for needle, config in cases.items():
        errors = check_team_config(project, config, inst.n_workers)
        assert any(needle in e for e in errors), (needle, errors)
        with pytest.raises(ValueError, match="invalid_team_config"):
            team_efficiency(inst, project, config, p, model)
    with pytest.raises(ValueError, match="invalid_perceived_shape"):
        team_efficiency(inst, project, TeamConfig.from_mapping(0, {0: 0, 1: 1}), p[:, :1], model)


def test_team_config_identity_ignores_storage_order() -> None:
    a = TeamConfig(leader=1, assignment=((0, 1), (2, 3)))
    b = TeamConfig(leader=1, assignment=((2, 3), (0, 1)))
    assert a == b
    assert len({a, b}) == 1
    assert a.team == frozenset({1, 3})
    assert a.to_dict() == {"leader": 1, "assignment": {"0": 1, "2": 3}, "team": [1, 3]}
    assert a != TeamConfig(leader=3, assignment=((0, 1), (2, 3)))


def test_three_evaluators_agree_bit_for_bit() -> None:
    for seed in range(5):
        inst = generate_instance(GenParams(n_workers=6, n_skills=4, seed=seed))
        project = ProjectSpec(required_skills=[3, 0, 2], gamma=(0.4, 0.1, 0.3, 0.2))
        model = PerceptionModel(sigma0=0.3, seed=seed + 100)
        scorer = TeamScorer(inst, project, model)
        space = ConfigurationSpace.build(inst.n_workers, project.required_skills)
        arrays = scorer.score_space(space)
        for i in range(0, len(space), 7):
            config = space.config_at(i)
            workers = config.workers_in(project.required_skills)
            fast = scorer.score(config.leader, workers)
            full = team_efficiency(inst, project, config, scorer.perceived[config.leader], model)
            assert fast == full.total == arrays.total[i]
            b = full
            assert b.total == 0.4 * b.skill_term - 0.1 * b.uncertainty_term - 0.3 * b.cost_term + 0.2 * b.social_term


def test_terms_stay_in_unit_interval_under_fuzzing() -> None:
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 2000:
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 5))
        k = int(rng.integers(1, min(n, m) + 1))
        inst = generate_instance(GenParams(n_workers=n, n_skills=m, edge_probability=float(rng.random()), seed=int(rng.integers(2**32))))
        req = rng.choice(m, size=k, replace=False).tolist()
        project = ProjectSpec(required_skills=req, gamma=tuple(rng.random(4).tolist()))
        model = PerceptionModel(sigma0=float(rng.random()), u_max=float(rng.uniform(0.05, 1.0)), seed=int(rng.integers(2**32)))
        terms = TeamScorer(inst, project, model).score_space(ConfigurationSpace.build(n, req))
        for arr in (terms.skill, terms.uncertainty, terms.cost, terms.social):
            assert ((arr >= 0.0) & (arr <= 1.0)).all()
        checked += terms.total.shape[0]


def test_true_skill_term_uses_true_matrix() -> None:
    inst = _chain()
    project = ProjectSpec(required_skills=[1, 0])
    config = TeamConfig.from_mapping(2, {1: 1, 0: 2})
    assert true_skill_term(inst, project, config) == pytest.approx((0.8 + 0.5) / 2)


def test_load_project_json_and_yaml(tmp_path) -> None:
    j = tmp_path / "p.json"
    j.write_text(json.dumps({"required_skills": [0, 2], "gamma": [0.5, 0.1, 0.2, 0.2]}), encoding="utf-8")
    assert load_project(str(j)).required_skills == [0, 2]
    y = tmp_path / "p.yaml"
    y.write_text("required_skills: [4]\n", encoding="utf-8")
    assert load_project(str(y)).gamma == (0.25, 0.25, 0.25, 0.25)
    with pytest.raises(FileNotFoundError, match="project_not_found"):
        load_project(str(tmp_path / "nope.json"))
