"""Circuit intermediate representation.

A circuit is an ordered tuple of :class:`GateInstance` over ``num_qubits``
wires. Everything here is pure; blueprints are immutable and hashable.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

TWO_PI = 2.0 * math.pi


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    RZZ = "RZZ"
    CZ = "CZ"
    CX = "CX"
    SWAP = "SWAP"
    H = "H"

    @property
    def parameterized(self) -> bool:
        return self in _PARAMETERIZED

    @property
    def arity(self) -> int:
        return 2 if self in _TWO_QUBIT else 1

    @property
    def symmetric(self) -> bool:
        return self in _SYMMETRIC


# Fixed order; also the one-hot order used by the graph encoder.
GATE_KINDS: tuple[GateKind, ...] = tuple(GateKind)
_PARAMETERIZED = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.RZZ})
_TWO_QUBIT = frozenset({GateKind.RZZ, GateKind.CZ, GateKind.CX, GateKind.SWAP})
_SYMMETRIC = frozenset({GateKind.RZZ, GateKind.CZ, GateKind.SWAP})


@dataclass(frozen=True)
class GateInstance:
    kind: GateKind
    qubits: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.theta is not None:
            object.__setattr__(self, "theta", float(self.theta))

    def with_theta(self, theta: float) -> "GateInstance":
        return GateInstance(self.kind, self.qubits, theta)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "qubits": list(self.qubits)}
        if self.theta is not None:
            d["theta"] = self.theta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GateInstance":
        return cls(GateKind(d["kind"].upper()), tuple(d["qubits"]), d.get("theta"))


@dataclass(frozen=True)
class CircuitBlueprint:
    num_qubits: int
    gates: tuple[GateInstance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def thetas(self) -> list[float]:
        """Angles of the parameterized gates, in gate order."""
        return [g.theta for g in self.gates if g.kind.parameterized]

    @property
    def num_parameters(self) -> int:
        return sum(1 for g in self.gates if g.kind.parameterized)

    def with_thetas(self, thetas: Sequence[float]) -> "CircuitBlueprint":
        it = iter(thetas)
        gates = [g.with_theta(float(next(it)) % TWO_PI) if g.kind.parameterized else g for g in self.gates]
        return CircuitBlueprint(self.num_qubits, tuple(gates))

    def to_dict(self) -> dict:
        return {"num_qubits": self.num_qubits, "gates": [g.to_dict() for g in self.gates]}

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitBlueprint":
        return cls(int(d["num_qubits"]), tuple(GateInstance.from_dict(g) for g in d["gates"]))


@dataclass(frozen=True)
class ComplexitySummary:
    total_gates: int
    two_qubit_gates: int
    cz_count: int
    depth: int
    n_1q: int
    n_2q: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def gate(kind: str | GateKind, *qubits: int, theta: float | None = None) -> GateInstance:
    """Shorthand constructor: ``gate("CX", 0, 1)``, ``gate("RX", 2, theta=0.3)``."""
    return GateInstance(GateKind(kind), tuple(qubits), theta)


def validate(blueprint: CircuitBlueprint) -> list[str]:
    """Return every invariant violation; an empty list means the blueprint is valid."""
    problems = []
    Q = blueprint.num_qubits
    if Q < 1:
        problems.append(f"num_qubits must be positive, got {Q}")
    if not blueprint.gates:
        problems.append("empty circuit")
    for i, g in enumerate(blueprint.gates):
        if len(g.qubits) != g.kind.arity:
            problems.append(f"gate {i} ({g.kind.value}): expected {g.kind.arity} qubits, got {len(g.qubits)}")
        for q in g.qubits:
            if not 0 <= q < Q:
                problems.append(f"gate {i} ({g.kind.value}): bad index {q} for {Q} qubits")
        if len(set(g.qubits)) != len(g.qubits):
            problems.append(f"gate {i} ({g.kind.value}): duplicate qubits {g.qubits}")
        if g.kind.parameterized:
            if g.theta is None:
                problems.append(f"gate {i} ({g.kind.value}): missing parameter")
            elif not (0.0 <= g.theta < TWO_PI) or math.isnan(g.theta):
                problems.append(f"gate {i} ({g.kind.value}): theta {g.theta} outside [0, 2pi)")
        elif g.theta is not None:
            problems.append(f"gate {i} ({g.kind.value}): extra parameter")
    return problems


def is_valid(blueprint: CircuitBlueprint) -> bool:
    return not validate(blueprint)


def asap_layers(blueprint: CircuitBlueprint) -> list[int]:
    """ASAP layer (1-based) of every gate."""
    last = [0] * blueprint.num_qubits
    layers = []
    for g in blueprint.gates:
        layer = 1 + max(last[q] for q in g.qubits)
        for q in g.qubits:
            last[q] = layer
        layers.append(layer)
    return layers


def depth(blueprint: CircuitBlueprint) -> int:
    return max(asap_layers(blueprint), default=0)


def complexity_summary(blueprint: CircuitBlueprint) -> ComplexitySummary:
    n_2q = sum(1 for g in blueprint.gates if g.kind.arity == 2)
    cz = sum(1 for g in blueprint.gates if g.kind is GateKind.CZ)
    total = len(blueprint.gates)
    return ComplexitySummary(
        total_gates=total,
        two_qubit_gates=n_2q,
        cz_count=cz,
        depth=depth(blueprint),
        n_1q=total - n_2q,
        n_2q=n_2q,
    )


def qaoa_template(
    num_qubits: int,
    p: int,
    gammas: Sequence[float],
    betas: Sequence[float],
    couplings: Iterable[tuple[int, int]],
) -> CircuitBlueprint:
    """Alternating cost/mixer blocks: RZZ(gamma_l) per coupling, then RX(beta_l) per qubit.

    Angles are wrapped into [0, 2pi). ``p == 0`` yields an empty (invalid) blueprint.
    """
    if len(gammas) != p or len(betas) != p:
        raise ValueError(f"expected {p} gammas and betas, got {len(gammas)} and {len(betas)}")
    couplings = [tuple(c) for c in couplings]
    for a, b in couplings:
        if a == b or not (0 <= a < num_qubits and 0 <= b < num_qubits):
            raise ValueError(f"invalid coupling {(a, b)} for {num_qubits} qubits")
    gates = []
    for gamma, beta in zip(gammas, betas):
        gates += [GateInstance(GateKind.RZZ, c, float(gamma) % TWO_PI) for c in couplings]
        gates += [GateInstance(GateKind.RX, (q,), float(beta) % TWO_PI) for q in range(num_qubits)]
    return CircuitBlueprint(num_qubits, tuple(gates))


def _canonical_token(g: GateInstance) -> str:
    qubits = tuple(sorted(g.qubits)) if g.kind.symmetric else g.qubits
    tok = g.kind.value + ":" + ",".join(map(str, qubits))
    if g.theta is not None:
        # +0.0 folds a rounded -0.0 onto 0.0
        tok += f":{round(g.theta, 9) + 0.0:.9f}"
    return tok


def canonical_hash(blueprint: CircuitBlueprint) -> str:
    body = f"Q={blueprint.num_qubits};" + ";".join(_canonical_token(g) for g in blueprint.gates)
    return hashlib.sha256(body.encode()).hexdigest()


# ---------------------------------------------------------------------------
# OpenQASM 2.0

_QASM_NAMES = {
    GateKind.H: "h",
    GateKind.RX: "rx",
    GateKind.RY: "ry",
    GateKind.RZ: "rz",
    GateKind.CX: "cx",
    GateKind.CZ: "cz",
    GateKind.SWAP: "swap",
}


def export_qasm(blueprint: CircuitBlueprint) -> str:
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{blueprint.num_qubits}];"]
    for g in blueprint.gates:
        args = ",".join(f"q[{q}]" for q in g.qubits)
        if g.kind is GateKind.RZZ:
            a, b = g.qubits
            lines += [f"cx q[{a}],q[{b}];", f"rz({g.theta!r}) q[{b}];", f"cx q[{a}],q[{b}];"]
        elif g.theta is not None:
            lines.append(f"{_QASM_NAMES[g.kind]}({g.theta!r}) {args};")
        else:
            lines.append(f"{_QASM_NAMES[g.kind]} {args};")
    return "\n".join(lines) + "\n"


_STMT = re.compile(r"^([a-z]+)(?:\(([^)]*)\))?\s+(.+)$")
_QARG = re.compile(r"^\s*\w+\[(\d+)\]\s*$")
_FROM_QASM = {v: k for k, v in _QASM_NAMES.items()}


def _parse_angle(text: str) -> float:
    expr = text.strip().replace("pi", repr(math.pi))
    if not re.fullmatch(r"[0-9eE.+\-*/() ]+", expr):
        raise ValueError(f"unsupported angle expression {text!r}")
    return float(eval(expr, {"__builtins__": {}}, {}))  # arithmetic only, checked above


def parse_qasm(text: str, fuse_rzz: bool = True) -> CircuitBlueprint:
    """Parse the OpenQASM 2.0 subset produced by :func:`export_qasm`.

    With ``fuse_rzz`` the ``cx a,b; rz(t) b; cx a,b`` lowering is folded back into RZZ.
    """
    num_qubits = None
    gates: list[GateInstance] = []
    for raw in text.replace("\n", " ").split(";"):
        stmt = raw.strip()
        if not stmt or stmt.startswith("//") or stmt.startswith("OPENQASM") or stmt.startswith("include"):
            continue
        if stmt.startswith("qreg"):
            num_qubits = int(re.search(r"\[(\d+)\]", stmt).group(1))
            continue
        if stmt.startswith(("creg", "barrier", "measure")):
            continue
        m = _STMT.match(stmt)
        if m is None or m.group(1) not in _FROM_QASM:
            raise ValueError(f"unsupported QASM statement: {stmt!r}")
        kind = _FROM_QASM[m.group(1)]
        qubits = tuple(int(_QARG.match(a).group(1)) for a in m.group(3).split(","))
        theta = _parse_angle(m.group(2)) % TWO_PI if m.group(2) is not None else None
        gates.append(GateInstance(kind, qubits, theta))
    if num_qubits is None:
        raise ValueError("missing qreg declaration")
    if fuse_rzz:
        gates = _fuse_rzz(gates)
    return CircuitBlueprint(num_qubits, tuple(gates))


def _fuse_rzz(gates: list[GateInstance]) -> list[GateInstance]:
    out = []
    i = 0
    while i < len(gates):
        g = gates[i]
        if (
            i + 2 < len(gates)
            and g.kind is GateKind.CX
            and gates[i + 1].kind is GateKind.RZ
            and gates[i + 1].qubits == (g.qubits[1],)
            and gates[i + 2] == g
        ):
            out.append(GateInstance(GateKind.RZZ, g.qubits, gates[i + 1].theta))
            i += 3
        else:
            out.append(g)
            i += 1
    return out
