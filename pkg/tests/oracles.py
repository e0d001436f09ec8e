"""Independent brute-force references used by the unit and acceptance tests.

Everything here is built from dense Kronecker products, scipy.linalg.expm and
explicit O(n^2) loops so it shares no code path with the package.
"""
import math
from functools import reduce
from itertools import combinations

import numpy as np
from scipy.linalg import expm

from qcbo.circuit import GATE_KINDS, CircuitBlueprint, GateInstance, GateKind

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


def kron_all(ops):
    return reduce(np.kron, ops)


def on(op, q, Q):
    """Single-qubit ``op`` on qubit ``q`` (qubit 0 most significant)."""
    return kron_all([op if i == q else I2 for i in range(Q)])


def dense_gate(g: GateInstance, Q: int) -> np.ndarray:
    k = g.kind
    if k is GateKind.RX:
        return expm(-0.5j * g.theta * on(X, g.qubits[0], Q))
    if k is GateKind.RY:
        return expm(-0.5j * g.theta * on(Y, g.qubits[0], Q))
    if k is GateKind.RZ:
        return expm(-0.5j * g.theta * on(Z, g.qubits[0], Q))
    if k is GateKind.H:
        return on(np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2), g.qubits[0], Q)
    a, b = g.qubits
    if k is GateKind.RZZ:
        return expm(-0.5j * g.theta * on(Z, a, Q) @ on(Z, b, Q))
    if k is GateKind.CZ:
        return on(P0, a, Q) + on(P1, a, Q) @ on(Z, b, Q)
    if k is GateKind.CX:
        return on(P0, a, Q) + on(P1, a, Q) @ on(X, b, Q)
    if k is GateKind.SWAP:
        return 0.5 * (np.eye(2 ** Q) + on(X, a, Q) @ on(X, b, Q) + on(Y, a, Q) @ on(Y, b, Q) + on(Z, a, Q) @ on(Z, b, Q))
    raise ValueError(k)


def dense_unitary(bp: CircuitBlueprint) -> np.ndarray:
    Q = bp.num_qubits
    U = np.eye(2 ** Q, dtype=complex)
    for g in bp.gates:
        U = dense_gate(g, Q) @ U
    return U


def embedded_state(angles) -> np.ndarray:
    Q = len(angles)
    ry = [expm(-0.5j * a * Y) for a in angles]
    psi0 = np.zeros(2 ** Q, dtype=complex)
    psi0[0] = 1
    return kron_all(ry) @ psi0


def z_expectations_rho(rho: np.ndarray, Q: int) -> np.ndarray:
    return np.array([np.real(np.trace(rho @ on(Z, q, Q))) for q in range(Q)])


def dense_channel(rho: np.ndarray, kraus, q: int, Q: int) -> np.ndarray:
    out = np.zeros_like(rho)
    for E in kraus:
        F = on(E, q, Q)
        out += F @ rho @ F.conj().T
    return out


def noisy_reference(bp: CircuitBlueprint, angles, gate_kraus) -> np.ndarray:
    """<Z_i> with ``gate_kraus(arity)`` -> list of Kraus-operator lists applied to every touched qubit."""
    Q = bp.num_qubits
    psi = embedded_state(angles)
    rho = np.outer(psi, psi.conj())
    for g in bp.gates:
        U = dense_gate(g, Q)
        rho = U @ rho @ U.conj().T
        for ops in gate_kraus(g.kind.arity):
            for q in g.qubits:
                rho = dense_channel(rho, ops, q, Q)
    return z_expectations_rho(rho, Q)


def random_blueprint(rng: np.random.Generator, Q: int, n: int, kinds=GATE_KINDS) -> CircuitBlueprint:
    kinds = [k for k in kinds if k.arity <= Q]
    gates = []
    for _ in range(n):
        k = kinds[rng.integers(len(kinds))]
        qs = tuple(int(q) for q in rng.permutation(Q)[:k.arity])
        gates.append(GateInstance(k, qs, float(rng.uniform(0, 2 * math.pi)) if k.parameterized else None))
    return CircuitBlueprint(Q, tuple(gates))


def kendall_tau_bruteforce(x, y) -> float:
    n = len(x)
    s = 0
    for i, j in combinations(range(n), 2):
        s += np.sign(x[i] - x[j]) * np.sign(y[i] - y[j])
    return s / (n * (n - 1) / 2)


def ranks_bruteforce(v):
    """Average ranks (1-based) by counting."""
    v = list(v)
    return [sum(1 for u in v if u < a) + (sum(1 for u in v if u == a) + 1) / 2 for a in v]


def spearman_bruteforce(x, y) -> float:
    n = len(x)
    d2 = sum((a - b) ** 2 for a, b in zip(ranks_bruteforce(x), ranks_bruteforce(y)))
    return 1 - 6 * d2 / (n * (n * n - 1))


def pareto_bruteforce(points):
    """Indices of points not dominated by any other (lower cost, higher perf)."""
    out = []
    for i, (c, p) in enumerate(points):
        dominated = any(c2 <= c and p2 >= p and (c2 < c or p2 > p) for c2, p2 in points)
        if not dominated:
            out.append(i)
    return out
