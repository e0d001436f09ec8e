"""Circuit-to-graph encoding for the surrogate, plus flat features for the MLP baseline.

Nodes are gates in program order. Node features are
``[one-hot kind (8) | position i/(n-1) | qubit incidence (Q) | two-qubit flag]``.
Edges point from earlier to later gates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .circuit import GATE_KINDS, CircuitBlueprint, complexity_summary

EDGE_MODES = ("transitive", "consecutive")


def feature_width(num_qubits: int) -> int:
    return len(GATE_KINDS) + 1 + num_qubits + 1


@dataclass
class CircuitGraph:
    node_features: np.ndarray  # (n, Q + 10)
    edges: np.ndarray  # (E, 2) int, rows (src, dst)

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def to_dict(self) -> dict:
        return {"nodes": self.node_features.tolist(), "edges": self.edges.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitGraph":
        nodes = np.asarray(d["nodes"], dtype=float)
        edges = np.asarray(d["edges"], dtype=int).reshape(-1, 2)
        return cls(nodes, edges)


_KIND_INDEX = {k: i for i, k in enumerate(GATE_KINDS)}


def encode(blueprint: CircuitBlueprint, edge_mode: str = "transitive") -> CircuitGraph:
    """Encode a circuit as a directed gate graph.

    Edges are the temporal chain ``i -> i+1`` together with shared-qubit
    links. In ``transitive`` mode every later gate touching a common qubit is
    linked; ``consecutive`` keeps only the next gate on each qubit.
    """
    if edge_mode not in EDGE_MODES:
        raise ValueError(f"unknown edge mode {edge_mode!r}")
    n = len(blueprint.gates)
    if n == 0:
        raise ValueError("cannot encode an empty circuit")
    Q = blueprint.num_qubits
    K = len(GATE_KINDS)
    x = np.zeros((n, feature_width(Q)))
    for i, g in enumerate(blueprint.gates):
        x[i, _KIND_INDEX[g.kind]] = 1.0
        x[i, K] = i / (n - 1) if n > 1 else 0.0
        for q in g.qubits:
            x[i, K + 1 + q] = 1.0
        x[i, K + 1 + Q] = 1.0 if g.kind.arity == 2 else 0.0

    edges = set((i, i + 1) for i in range(n - 1))
    if edge_mode == "transitive":
        seen: list[list[int]] = [[] for _ in range(Q)]
        for j, g in enumerate(blueprint.gates):
            for q in g.qubits:
                edges.update((i, j) for i in seen[q])
                seen[q].append(j)
    else:
        last = [-1] * Q
        for j, g in enumerate(blueprint.gates):
            for q in g.qubits:
                if last[q] >= 0:
                    edges.add((last[q], j))
                last[q] = j
    arr = np.array(sorted(edges), dtype=int).reshape(-1, 2)
    return CircuitGraph(x, arr)


def flat_features(blueprint: CircuitBlueprint) -> np.ndarray:
    """Raw counts: per-kind (8), total, two-qubit, CZ, depth, Q."""
    counts = np.zeros(len(GATE_KINDS))
    for g in blueprint.gates:
        counts[_KIND_INDEX[g.kind]] += 1
    s = complexity_summary(blueprint)
    tail = [s.total_gates, s.two_qubit_gates, s.cz_count, s.depth, blueprint.num_qubits]
    return np.concatenate([counts, np.asarray(tail, dtype=float)])


FLAT_WIDTH = len(GATE_KINDS) + 5
