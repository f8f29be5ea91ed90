"""Worker pool, social graph and the static matrices derived from it.

An Instance carries the true skill matrix S (N x M), the cost matrix C (N x M),
the undirected adjacency of the social graph, the shortest hop counts between
every pair of workers and the relationship weights R derived from them.

Hop semantics: a direct edge is one hop (d = 1). The relationship weight is
R = 1 / (1 + n_intermediate) with n_intermediate = d - 1, i.e. R = 1 / d, so
directly connected workers get exactly 1 and disconnected ones exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import logging
import os
from typing import Any

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

# Distinguished hop value for pairs in different components. Never a finite distance.
UNREACHABLE = -1


class GenParams(BaseModel):
    n_workers: int = Field(default=14, ge=1)
    n_skills: int = Field(default=5, ge=1)
    edge_probability: float = Field(default=0.3, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)


@dataclass(frozen=True, eq=False)
class Instance:
    n_workers: int
    n_skills: int
    skills: np.ndarray
    costs: np.ndarray
    adjacency: np.ndarray
    hops: np.ndarray
    relationship: np.ndarray

    @property
    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(i), int(j)) for i, j in zip(ii, jj)]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_adjacency(adjacency: np.ndarray) -> np.ndarray:
    adj = np.asarray(adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency_not_square: shape={adj.shape}")
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency_not_symmetric")
    if adj.diagonal().any():
        raise ValueError("adjacency_diagonal_set")
    return adj


def shortest_hop_matrix(adjacency: np.ndarray) -> np.ndarray:
    """All-pairs edge counts by breadth-first search from every worker."""
    adj = _check_adjacency(adjacency)
    n = adj.shape[0]
    g = nx.Graph()
    g.add_nodes_from(range(n))
    ii, jj = np.nonzero(np.triu(adj, k=1))
    g.add_edges_from(zip(ii.tolist(), jj.tolist()))

    hops = np.full((n, n), UNREACHABLE, dtype=np.int64)
    for src, lengths in nx.all_pairs_shortest_path_length(g):
        for dst, d in lengths.items():
            hops[src, dst] = d
    return hops


def relationship_matrix(hops: np.ndarray) -> np.ndarray:
    h = np.asarray(hops, dtype=np.int64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"hops_not_square: shape={h.shape}")
    if ((h < 0) & (h != UNREACHABLE)).any():
        raise ValueError("hops_negative")
    r = np.zeros(h.shape, dtype=np.float64)
    reachable = h > 0
    r[reachable] = 1.0 / h[reachable]
    np.fill_diagonal(r, 1.0)
    return r


def build_instance(skills: Any, costs: Any, adjacency: Any) -> Instance:
    s = np.array(skills, dtype=np.float64)
    c = np.array(costs, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"skills_not_matrix: shape={s.shape}")
    adj = _check_adjacency(np.array(adjacency, dtype=bool))
    hops = shortest_hop_matrix(adj)
    rel = relationship_matrix(hops)
    return Instance(
        n_workers=int(s.shape[0]),
        n_skills=int(s.shape[1]),
        skills=_readonly(s),
        costs=_readonly(c),
        adjacency=_readonly(adj.copy()),
        hops=_readonly(hops),
        relationship=_readonly(rel),
    )


def adjacency_from_edges(n_workers: int, edges: list[list[int]] | list[tuple[int, int]]) -> np.ndarray:
    adj = np.zeros((n_workers, n_workers), dtype=bool)
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n_workers and 0 <= j < n_workers):
            raise ValueError(f"edge_index_out_of_range: {[i, j]}")
        if i == j:
            raise ValueError(f"edge_self_loop: {[i, j]}")
        adj[i, j] = True
        adj[j, i] = True
    return adj


def seed_from(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_instance(params: GenParams) -> Instance:
    # Independent child streams so each matrix is reproducible on its own.
    ss_skills, ss_costs, ss_graph = np.random.SeedSequence(params.seed).spawn(3)
    n, m = params.n_workers, params.n_skills
    skills = np.random.default_rng(ss_skills).random((n, m))
    costs = np.random.default_rng(ss_costs).random((n, m))
    g = nx.gnp_random_graph(n, params.edge_probability, seed=seed_from(ss_graph))
    adj = nx.to_numpy_array(g, nodelist=list(range(n)), dtype=bool)
    inst = build_instance(skills, costs, adj)
    logger.debug("generated instance n=%d m=%d edges=%d seed=%d", n, m, len(inst.edges), params.seed)
    return inst


def validate_instance(instance: Instance) -> list[str]:
    """Check every Instance invariant. Returns all violations (empty list means valid)."""
    errors: list[str] = []
    n, m = int(instance.n_workers), int(instance.n_skills)
    if n < 1:
        errors.append(f"n_workers must be >= 1 (got {n})")
    if m < 1:
        errors.append(f"n_skills must be >= 1 (got {m})")

    expected = {
        "skills": (n, m),
        "costs": (n, m),
        "adjacency": (n, n),
        "hops": (n, n),
        "relationship": (n, n),
    }
    shapes_ok = True
    for name, shape in expected.items():
        got = np.shape(getattr(instance, name))
        if got != shape:
            errors.append(f"{name} shape {got} != expected {shape}")
            shapes_ok = False
    if not shapes_ok:
        return errors

    for name in ("skills", "costs"):
        a = np.asarray(getattr(instance, name), dtype=np.float64)
        bad = np.argwhere(~((a >= 0.0) & (a <= 1.0)))
        for i, j in bad[:20]:
            errors.append(f"{name}[{i}][{j}] = {a[i, j]!r} outside [0, 1]")
        if len(bad) > 20:
            errors.append(f"{name}: {len(bad) - 20} more entries outside [0, 1]")

    adj = np.asarray(instance.adjacency, dtype=bool)
    if not np.array_equal(adj, adj.T):
        for i, j in np.argwhere(adj != adj.T):
            if i < j:
                errors.append(f"adjacency asymmetric at ({i}, {j})")
    if adj.diagonal().any():
        errors.append(f"adjacency diagonal set for workers {np.flatnonzero(adj.diagonal()).tolist()}")

    hops = np.asarray(instance.hops, dtype=np.int64)
    if not np.array_equal(hops, hops.T):
        errors.append("hops matrix is not symmetric")
    if (hops.diagonal() != 0).any():
        errors.append("hops diagonal must be 0")
    if ((hops < 0) & (hops != UNREACHABLE)).any():
        errors.append("hops contains negative values other than UNREACHABLE")
    off = ~np.eye(n, dtype=bool)
    if not np.array_equal((hops == 1) & off, adj & off):
        errors.append("hops == 1 does not match adjacency")
    reach = hops >= 0
    # d(i,k) <= d(i,j) + d(j,k) for all reachable triples
    tri_ok = True
    for j in range(n):
        mask = reach[:, j][:, None] & reach[j, :][None, :] & reach
        via = hops[:, j][:, None] + hops[j, :][None, :]
        if (mask & (hops > via)).any():
            tri_ok = False
            break
    if not tri_ok:
        errors.append("hops violates the triangle inequality")
    if np.array_equal(adj, adj.T) and not adj.diagonal().any():
        if not np.array_equal(hops, shortest_hop_matrix(adj)):
            errors.append("hops inconsistent with BFS distances of adjacency")

    rel = np.asarray(instance.relationship, dtype=np.float64)
    if not np.array_equal(rel, rel.T):
        for i, j in np.argwhere(rel != rel.T):
            if i < j:
                errors.append(f"relationship asymmetric at ({i}, {j})")
    r_off = rel[off]
    h_off = hops[off]
    if not np.array_equal(r_off == 1.0, h_off == 1):
        errors.append("relationship == 1 must hold exactly for hop distance 1")
    if not np.array_equal(r_off == 0.0, h_off == UNREACHABLE):
        errors.append("relationship == 0 must hold exactly for unreachable pairs")
    mid = (h_off > 1)
    if mid.any() and not ((r_off[mid] > 0.0) & (r_off[mid] < 1.0)).all():
        errors.append("relationship must lie strictly between 0 and 1 for distances > 1")
    if ((hops >= 0) | (hops == UNREACHABLE)).all() and not np.array_equal(rel, relationship_matrix(hops)):
        errors.append("relationship inconsistent with hops (expected R = 1/d)")
    return errors


def instance_to_dict(instance: Instance) -> dict[str, Any]:
    return {
        "n_workers": int(instance.n_workers),
        "n_skills": int(instance.n_skills),
        "skills": np.asarray(instance.skills, dtype=np.float64).tolist(),
        "costs": np.asarray(instance.costs, dtype=np.float64).tolist(),
        "edges": [[i, j] for i, j in instance.edges],
    }


def instance_from_dict(payload: dict[str, Any]) -> Instance:
    missing = [k for k in ("n_workers", "n_skills", "skills", "costs", "edges") if k not in (payload or {})]
    if missing:
        raise ValueError(f"invalid_instance: missing keys {missing}")
    n = int(payload["n_workers"])
    m = int(payload["n_skills"])
    skills = np.array(payload["skills"], dtype=np.float64)
    costs = np.array(payload["costs"], dtype=np.float64)
    if skills.shape != (n, m) or costs.shape != (n, m):
        raise ValueError(f"invalid_instance: skills {skills.shape} / costs {costs.shape} != ({n}, {m})")
    inst = build_instance(skills, costs, adjacency_from_edges(n, payload["edges"]))
    errors = validate_instance(inst)
    if errors:
        raise ValueError("invalid_instance: " + "; ".join(errors))
    return inst


def save_instance(instance: Instance, path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance_to_dict(instance), f, indent=2)
        f.write("\n")


def load_instance(path: str) -> Instance:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"instance_not_found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if not isinstance(payload, dict):
        raise ValueError(f"invalid_instance: {path} is not a JSON object")
    return instance_from_dict(payload)
