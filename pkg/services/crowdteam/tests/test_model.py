from __future__ import annotations

import dataclasses

import networkx as nx
import numpy as np
import pytest

from services.crowdteam.app.model import (
    UNREACHABLE,
    GenParams,
    adjacency_from_edges,
    build_instance,
    generate_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    relationship_matrix,
    save_instance,
    shortest_hop_matrix,
    validate_instance,
)


def _path_plus_isolated():
    # 0 - 1 - 2, worker 3 alone
    adj = adjacency_from_edges(4, [(0, 1), (1, 2)])
    skills = np.full((4, 2), 0.5)
    costs = np.full((4, 2), 0.1)
    return build_instance(skills, costs, adj)


def test_hops_and_relationship_on_small_graph() -> None:
    inst = _path_plus_isolated()
    assert inst.hops[0].tolist() == [0, 1, 2, UNREACHABLE]
    assert inst.relationship[0, 1] == 1.0
    assert inst.relationship[0, 2] == 0.5
    assert inst.relationship[0, 3] == 0.0
    assert np.all(inst.relationship.diagonal() == 1.0)
    assert validate_instance(inst) == []


def test_generated_instances_are_valid_for_all_densities() -> None:
    for p in (0.0, 0.1, 0.3, 0.7, 1.0):
        for seed in range(20):
            inst = generate_instance(GenParams(n_workers=9, n_skills=4, edge_probability=p, seed=seed))
            assert validate_instance(inst) == [], (p, seed)
    full = generate_instance(GenParams(n_workers=6, edge_probability=1.0, seed=3))
    assert np.all(full.relationship == 1.0)
    empty = generate_instance(GenParams(n_workers=6, edge_probability=0.0, seed=3))
    assert np.array_equal(empty.relationship, np.eye(6))


def test_generation_is_deterministic_per_seed() -> None:
    a = generate_instance(GenParams(seed=7))
    b = generate_instance(GenParams(seed=7))
    c = generate_instance(GenParams(seed=8))
    assert np.array_equal(a.skills, b.skills)
    assert np.array_equal(a.costs, b.costs)
    assert a.edges == b.edges
    assert not np.array_equal(a.skills, c.skills)
    assert a.skills.shape == (14, 5)
    assert ((a.skills >= 0) & (a.skills <= 1)).all()


def test_bfs_hops_match_floyd_warshall() -> None:
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        g = nx.gnp_random_graph(n, float(rng.random()), seed=int(rng.integers(2**31)))
        adj = nx.to_numpy_array(g, nodelist=list(range(n)), dtype=bool)
        fw = nx.floyd_warshall_numpy(g, nodelist=list(range(n)))
        expected = np.where(np.isinf(fw), UNREACHABLE, fw).astype(np.int64)
        assert np.array_equal(shortest_hop_matrix(adj), expected)


def test_relationship_laws() -> None:
    hops = np.array([[0, 1, 3], [1, 0, UNREACHABLE], [3, UNREACHABLE, 0]])
    r = relationship_matrix(hops)
    assert r.tolist() == [[1.0, 1.0, 1.0 / 3.0], [1.0, 1.0, 0.0], [1.0 / 3.0, 0.0, 1.0]]
    with pytest.raises(ValueError, match="hops_negative"):
        relationship_matrix(np.array([[0, -2], [-2, 0]]))


def test_adding_an_edge_never_weakens_relationships() -> None:
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(2, 10))
        g = nx.gnp_random_graph(n, float(rng.random()) * 0.5, seed=int(rng.integers(2**31)))
        missing = list(nx.non_edges(g))
        if not missing:
            continue
        adj = nx.to_numpy_array(g, nodelist=list(range(n)), dtype=bool)
        before = relationship_matrix(shortest_hop_matrix(adj))
        i, j = missing[int(rng.integers(len(missing)))]
        adj[i, j] = adj[j, i] = True
        after = relationship_matrix(shortest_hop_matrix(adj))
        assert (after >= before).all()
        assert after[i, j] == 1.0


def test_adjacency_checks() -> None:
    with pytest.raises(ValueError, match="adjacency_not_symmetric"):
        shortest_hop_matrix(np.array([[0, 1], [0, 0]], dtype=bool))
    with pytest.raises(ValueError, match="adjacency_diagonal_set"):
        shortest_hop_matrix(np.array([[1, 0], [0, 0]], dtype=bool))
    with pytest.raises(ValueError, match="adjacency_not_square"):
        shortest_hop_matrix(np.zeros((2, 3), dtype=bool))
    with pytest.raises(ValueError, match="edge_self_loop"):
        adjacency_from_edges(3, [(1, 1)])


def test_gen_params_ranges() -> None:
    with pytest.raises(ValueError):
        GenParams(edge_probability=1.5)
    with pytest.raises(ValueError):
        GenParams(n_workers=0)


def test_validate_reports_every_violation() -> None:
    inst = _path_plus_isolated()
    hops = inst.hops.copy()
    hops[0, 2] = hops[2, 0] = 5
    skills = inst.skills.copy()
    skills[1, 1] = 1.5
    broken = dataclasses.replace(inst, hops=hops, skills=skills)
    errors = validate_instance(broken)
    assert any("skills[1][1]" in e for e in errors)
    assert any("triangle" in e for e in errors)
    assert any("BFS" in e for e in errors)
    assert any("relationship inconsistent" in e for e in errors)


def test_save_and_load(tmp_path) -> None:
    inst = generate_instance(GenParams(n_workers=8, n_skills=3, seed=11))
    path = tmp_path / "out" / "inst.json"
    save_instance(inst, str(path))
    back = load_instance(str(path))
    assert np.array_equal(back.skills, inst.skills)
    assert np.array_equal(back.costs, inst.costs)
    assert np.array_equal(back.adjacency, inst.adjacency)
    assert np.array_equal(back.hops, inst.hops)


def test_load_errors(tmp_path) -> None:
    with pytest.raises(FileNotFoundError, match="instance_not_found"):
        load_instance(str(tmp_path / "missing.json"))
    payload = instance_to_dict(_path_plus_isolated())
    payload["skills"][0][0] = 1.5
    with pytest.raises(ValueError, match="invalid_instance"):
        instance_from_dict(payload)
    del payload["edges"]
    with pytest.raises(ValueError, match="missing keys"):
        instance_from_dict(payload)


def test_matrices_are_read_only() -> None:
    inst = _path_plus_isolated()
    with pytest.raises(ValueError):
        inst.skills[0, 0] = 0.0
