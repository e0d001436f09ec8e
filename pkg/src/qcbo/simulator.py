"""Statevector and density-matrix simulation with Kraus noise channels.

States are stored as tensors with one axis of length 2 per qubit (qubit 0 is
the most significant bit) behind optional leading batch axes. A density
matrix on Q qubits is treated as a 2Q-wire tensor: wires ``0..Q-1`` index
rows and ``Q..2Q-1`` index columns, so a unitary U acts as U on row wires
and conj(U) on column wires, and a Kraus channel acts as the 4x4
superoperator ``sum_k E_k (x) conj(E_k)`` on the wire pair ``(q, Q+q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Iterator, Sequence

import numpy as np

from .circuit import CircuitBlueprint, GateInstance, GateKind, asap_layers

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

_FIXED = {
    GateKind.H: H,
    GateKind.CZ: np.diag([1, 1, 1, -1]).astype(complex),
    GateKind.CX: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    GateKind.SWAP: np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}

NOISE_MODES = ("none", "amplitude_damping", "phase_damping", "thermal", "depolarizing")


class InvalidPhysicsError(ValueError):
    """Raised for relaxation times that admit no valid pure-dephasing time."""


# ---------------------------------------------------------------------------
# gate matrices


def rotation_matrices(kind: GateKind, thetas) -> np.ndarray:
    """Matrices of ``exp(-i theta P / 2)`` for an array of angles; shape ``(*thetas.shape, d, d)``."""
    t = np.asarray(thetas, dtype=float)
    c = np.cos(t / 2)
    s = np.sin(t / 2)
    out_shape = t.shape
    if kind is GateKind.RX:
        m = np.empty(out_shape + (2, 2), dtype=complex)
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
    elif kind is GateKind.RY:
        m = np.empty(out_shape + (2, 2), dtype=complex)
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
    elif kind is GateKind.RZ:
        m = np.zeros(out_shape + (2, 2), dtype=complex)
        m[..., 0, 0] = np.exp(-0.5j * t)
        m[..., 1, 1] = np.exp(0.5j * t)
    elif kind is GateKind.RZZ:
        m = np.zeros(out_shape + (4, 4), dtype=complex)
        lo, hi = np.exp(-0.5j * t), np.exp(0.5j * t)
        m[..., 0, 0] = lo
        m[..., 1, 1] = hi
        m[..., 2, 2] = hi
        m[..., 3, 3] = lo
    else:
        raise ValueError(f"{kind} is not a rotation gate")
    return m


def gate_matrix(g: GateInstance) -> np.ndarray:
    """Dense matrix of one gate on its own qubits (first listed qubit most significant)."""
    if g.kind.parameterized:
        return rotation_matrices(g.kind, g.theta)
    return _FIXED[g.kind]


# ---------------------------------------------------------------------------
# tensor kernels


def _apply(tensor: np.ndarray, mat: np.ndarray, wires: Sequence[int], n_wires: int, per_variant: bool) -> np.ndarray:
    """Apply a 1- or 2-wire operator to the last ``n_wires`` axes of ``tensor``.

    ``mat`` is ``(d, d)``, or ``(V, d, d)`` with ``per_variant`` set, in which
    case the first axis of ``tensor`` has length V (or 1, and is broadcast).
    Works block-wise on reshaped views; zero matrix entries are skipped.
    """
    if len(wires) == 1:
        return _apply_1q(tensor, mat, wires[0], n_wires, per_variant)
    a, b = wires
    if a > b:
        mat = mat.reshape(mat.shape[:-2] + (2, 2, 2, 2)).swapaxes(-4, -3).swapaxes(-2, -1)
        mat = mat.reshape(mat.shape[:-4] + (4, 4))
        a, b = b, a
    return _apply_2q(tensor, mat, a, b, n_wires, per_variant)


def _prep(tensor, mat, per_variant):
    if per_variant and tensor.shape[0] != mat.shape[0]:
        tensor = np.broadcast_to(tensor, (mat.shape[0],) + tensor.shape[1:])
    return tensor


def _coeffs(mat, per_variant, extra_dims):
    d = mat.shape[-1]
    if per_variant:
        shape = (mat.shape[0],) + (1,) * extra_dims
        coeff = [[mat[:, i, j].reshape(shape) for j in range(d)] for i in range(d)]
        nz = np.any(mat != 0, axis=0)
    else:
        coeff = mat
        nz = mat != 0
    return coeff, nz


def _apply_1q(tensor, mat, w, n_wires, per_variant):
    tensor = _prep(tensor, mat, per_variant)
    shape = tensor.shape
    lead = tensor.ndim - n_wires
    pre = math.prod(shape[:lead + w])
    post = math.prod(shape[lead + w + 1:])
    if per_variant:
        t = tensor.reshape(shape[0], pre // shape[0], 2, post)
        coeff, nz = _coeffs(mat, True, 2)
    else:
        t = tensor.reshape(pre, 2, post)
        coeff, nz = _coeffs(mat, False, 0)
    src = (t[..., 0, :], t[..., 1, :])
    out = np.empty(t.shape, dtype=np.result_type(t, mat))
    for i in range(2):
        acc = None
        for j in range(2):
            if nz[i, j]:
                term = coeff[i][j] * src[j]
                acc = term if acc is None else acc + term
        out[..., i, :] = 0 if acc is None else acc
    return out.reshape(shape)


def _apply_2q(tensor, mat, a, b, n_wires, per_variant):
    tensor = _prep(tensor, mat, per_variant)
    shape = tensor.shape
    lead = tensor.ndim - n_wires
    pre = math.prod(shape[:lead + a])
    mid = math.prod(shape[lead + a + 1:lead + b])
    post = math.prod(shape[lead + b + 1:])
    if per_variant:
        t = tensor.reshape(shape[0], pre // shape[0], 2, mid, 2, post)
        coeff, nz = _coeffs(mat, True, 3)
    else:
        t = tensor.reshape(pre, 2, mid, 2, post)
        coeff, nz = _coeffs(mat, False, 0)
    src = [t[..., i, :, j, :] for i in range(2) for j in range(2)]
    out = np.empty(t.shape, dtype=np.result_type(t, mat))
    for r in range(4):
        acc = None
        for c in range(4):
            if nz[r, c]:
                term = coeff[r][c] * src[c]
                acc = term if acc is None else acc + term
        out[..., r // 2, :, r % 2, :] = 0 if acc is None else acc
    return out.reshape(shape)


def _superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(E, E.conj()) for E in kraus)


# ---------------------------------------------------------------------------
# noise channels


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple[np.ndarray, ...]
    label: str

    def completeness_error(self) -> float:
        acc = sum(E.conj().T @ E for E in self.operators)
        return float(np.max(np.abs(acc - I2)))

    @property
    def superoperator(self) -> np.ndarray:
        return _superop(self.operators)

    def apply_matrix(self, rho: np.ndarray) -> np.ndarray:
        """Act on a single-qubit 2x2 density matrix."""
        return sum(E @ rho @ E.conj().T for E in self.operators)


def _check_prob(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def kraus_amplitude_damping(gamma: float) -> KrausChannel:
    g = _check_prob("gamma", gamma)
    E0 = np.array([[1, 0], [0, math.sqrt(1 - g)]], dtype=complex)
    E1 = np.array([[0, math.sqrt(g)], [0, 0]], dtype=complex)
    return KrausChannel((E0, E1), "amplitude_damping")


def kraus_phase_damping(lam: float) -> KrausChannel:
    lam = _check_prob("lambda", lam)
    F0 = math.sqrt(1 - lam) * I2
    F1 = math.sqrt(lam) * np.array([[1, 0], [0, 0]], dtype=complex)
    F2 = math.sqrt(lam) * np.array([[0, 0], [0, 1]], dtype=complex)
    return KrausChannel((F0, F1, F2), "phase_damping")


def kraus_gad(gamma: float, p_e: float) -> KrausChannel:
    """Generalized amplitude damping toward a thermal state with excited population ``p_e``."""
    g = _check_prob("gamma", gamma)
    pe = _check_prob("p_e", p_e)
    a, b = math.sqrt(pe), math.sqrt(1 - pe)
    r, s = math.sqrt(1 - g), math.sqrt(g)
    G0 = a * np.array([[r, 0], [0, 1]], dtype=complex)
    G1 = a * np.array([[0, 0], [s, 0]], dtype=complex)
    G2 = b * np.array([[1, 0], [0, r]], dtype=complex)
    G3 = b * np.array([[0, s], [0, 0]], dtype=complex)
    return KrausChannel((G0, G1, G2, G3), "generalized_amplitude_damping")


def kraus_depolarizing(p: float) -> KrausChannel:
    p = _check_prob("p", p)
    w = math.sqrt(p / 3)
    return KrausChannel((math.sqrt(1 - p) * I2, w * X, w * Y, w * Z), "depolarizing")


def kraus_bitflip(p: float) -> KrausChannel:
    p = _check_prob("p_ro", p)
    return KrausChannel((math.sqrt(1 - p) * I2, math.sqrt(p) * X), "bitflip")


def noise_probs(t: float, T1: float, T2: float) -> tuple[float, float]:
    """Per-gate damping and dephasing probabilities for duration ``t``.

    All three arguments must share one time unit. ``T2 == 2*T1`` gives an
    infinite pure-dephasing time and ``p_PD = 0``.
    """
    if T1 <= 0 or T2 <= 0:
        raise InvalidPhysicsError(f"T1 and T2 must be positive, got T1={T1}, T2={T2}")
    if T2 > 2 * T1:
        raise InvalidPhysicsError(f"T2={T2} exceeds 2*T1={2 * T1}")
    if t < 0:
        raise ValueError(f"duration must be non-negative, got {t}")
    inv_tphi = 1.0 / T2 - 1.0 / (2.0 * T1)
    p_ad = -math.expm1(-t / T1)
    p_pd = -math.expm1(-t * inv_tphi) if inv_tphi > 0 else 0.0
    return p_ad, p_pd


@dataclass
class NoiseConfig:
    """Noise settings. T1/T2 in microseconds, gate times and idle gap in nanoseconds."""

    mode: str = "none"
    T1: float = 100.0
    T2: float = 120.0
    t_1q: float = 300.0
    t_2q: float = 300.0
    t_meas: float = 500.0
    p_e: float = 0.0
    p_1q: float = 0.001
    p_2q: float = 0.01
    p_ro: float = 0.0
    idle_gap: float | None = None

    def validate(self) -> None:
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}; expected one of {NOISE_MODES}")
        for name in ("p_e", "p_1q", "p_2q", "p_ro"):
            _check_prob(name, getattr(self, name))
        for name in ("t_1q", "t_2q", "t_meas"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.idle_gap is not None and self.idle_gap <= 0:
            raise ValueError("idle_gap must be positive when set")
        if self.mode in ("amplitude_damping", "phase_damping", "thermal") or self.idle_gap:
            noise_probs(0.0, self.T1, self.T2)

    @property
    def needs_density(self) -> bool:
        return self.mode != "none" or bool(self.idle_gap)

    def probs(self, t_ns: float) -> tuple[float, float]:
        return noise_probs(t_ns * 1e-3, self.T1, self.T2)

    def gate_channels(self, arity: int) -> list[KrausChannel]:
        """Channels applied to each touched qubit after a gate of the given arity."""
        if self.mode == "none":
            return []
        if self.mode == "depolarizing":
            return [kraus_depolarizing(self.p_1q if arity == 1 else self.p_2q)]
        p_ad, p_pd = self.probs(self.t_1q if arity == 1 else self.t_2q)
        if self.mode == "amplitude_damping":
            return [kraus_amplitude_damping(p_ad)]
        if self.mode == "phase_damping":
            return [kraus_phase_damping(p_pd)]
        return [kraus_gad(p_ad, self.p_e), kraus_phase_damping(p_pd)]

    def idle_channels(self) -> list[KrausChannel]:
        if not self.idle_gap:
            return []
        p_ad, p_pd = self.probs(self.idle_gap)
        return [kraus_gad(p_ad, self.p_e), kraus_phase_damping(p_pd)]

    def to_dict(self) -> dict:
        return asdict(self)


NOISELESS = NoiseConfig()


# ---------------------------------------------------------------------------
# density matrices


@dataclass
class DensityMatrix:
    num_qubits: int
    rho: np.ndarray  # (2**Q, 2**Q)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def expectations_z(self) -> np.ndarray:
        return _z_from_probs(np.real(np.diagonal(self.rho)), self.num_qubits)


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def expectations_z(self) -> np.ndarray:
        return _z_from_probs(np.abs(self.amplitudes) ** 2, self.num_qubits)


def _z_from_probs(probs: np.ndarray, Q: int) -> np.ndarray:
    """``probs``: (..., 2**Q) -> (..., Q) of <Z_i>."""
    p = probs.reshape(probs.shape[:-1] + (2,) * Q)
    out = np.empty(probs.shape[:-1] + (Q,))
    lead = probs.ndim - 1
    for i in range(Q):
        axes = tuple(lead + j for j in range(Q) if j != i)
        m = p.sum(axis=axes) if axes else p
        out[..., i] = m[..., 0] - m[..., 1]
    return out


def apply_channel(state: DensityMatrix, channel: KrausChannel, target: int) -> DensityMatrix:
    Q = state.num_qubits
    if not 0 <= target < Q:
        raise IndexError(f"target {target} out of range for {Q} qubits")
    t = state.rho.reshape((2,) * (2 * Q))
    t = _apply(t, channel.superoperator, (target, Q + target), 2 * Q, False)
    return DensityMatrix(Q, t.reshape(2 ** Q, 2 ** Q))


def apply_readout_bitflip(state: DensityMatrix, p_ro: float) -> DensityMatrix:
    ch = kraus_bitflip(p_ro)
    for q in range(state.num_qubits):
        state = apply_channel(state, ch, q)
    return state


def embed_operator(mat: np.ndarray, wires: Sequence[int], Q: int) -> np.ndarray:
    """Full 2**Q x 2**Q matrix of an operator acting on ``wires``."""
    eye = np.eye(2 ** Q, dtype=complex).reshape((2,) * Q + (2 ** Q,))
    out = _apply(np.moveaxis(eye, -1, 0), mat, wires, Q, False)
    return np.moveaxis(out.reshape(2 ** Q, 2 ** Q), 0, -1)


def circuit_unitary(blueprint: CircuitBlueprint) -> np.ndarray:
    """Dense unitary of the blueprint (no embedding layer)."""
    Q = blueprint.num_qubits
    U = np.eye(2 ** Q, dtype=complex)
    for g in blueprint.gates:
        U = embed_operator(gate_matrix(g), g.qubits, Q) @ U
    return U


# ---------------------------------------------------------------------------
# circuit execution


def embedding_states(angles: np.ndarray) -> np.ndarray:
    """Product states ``prod_i RY(x_i)|0>`` for a batch of angle vectors; (B, Q) -> (B, 2, ..., 2)."""
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    B, Q = angles.shape
    amps = np.stack([np.cos(angles / 2), np.sin(angles / 2)], axis=-1)  # (B, Q, 2)
    psi = amps[:, 0, :]
    for i in range(1, Q):
        psi = (psi[..., None] * amps[:, i, :].reshape((B,) + (1,) * i + (2,)))
    return psi.astype(complex).reshape((B,) + (2,) * Q)


def _schedule(blueprint: CircuitBlueprint, noise: NoiseConfig):
    """Gates in execution order with idle markers between ASAP layers when idle damping is on."""
    if not noise.idle_gap:
        return [(i, g) for i, g in enumerate(blueprint.gates)]
    layers = asap_layers(blueprint)
    order = sorted(range(len(blueprint.gates)), key=lambda i: (layers[i], i))
    out = []
    for n, i in enumerate(order):
        if n and layers[i] != layers[order[n - 1]]:
            out.append((None, None))
        out.append((i, blueprint.gates[i]))
    return out


class _Engine:
    """One batched evolution: statevector (``offset is None``) or density matrix."""

    def __init__(self, blueprint: CircuitBlueprint, angles: np.ndarray, noise: NoiseConfig, backend: str | None):
        Q = blueprint.num_qubits
        angles = np.atleast_2d(np.asarray(angles, dtype=float))
        if angles.shape[1] != Q:
            raise ValueError(f"expected {Q} embedding angles per sample, got {angles.shape[1]}")
        backend = backend or ("density" if noise.needs_density else "statevector")
        if backend not in ("statevector", "density"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "statevector" and noise.needs_density:
            raise ValueError("noisy simulation requires the density-matrix backend")
        noise.validate()
        self.Q, self.noise = Q, noise
        psi = embedding_states(angles)
        self.B = psi.shape[0]
        # leading variant axis; stays length 1 until some gate differs across variants
        if backend == "statevector":
            self.state = psi[None]
            self.n_wires, self.offset = Q, None
        else:
            flat = psi.reshape(self.B, -1)
            rho = np.einsum("bi,bj->bij", flat, flat.conj())
            self.state = rho.reshape((1, self.B) + (2,) * (2 * Q))
            self.n_wires, self.offset = 2 * Q, Q
        self._channels = {}

    def _channel_superop(self, arity: int):
        if arity not in self._channels:
            chans = self.noise.gate_channels(arity) if arity else self.noise.idle_channels()
            self._channels[arity] = _compose_superops(chans)
        return self._channels[arity]

    def gate(self, mat: np.ndarray, wires: tuple[int, ...], per_variant: bool) -> None:
        n, off = self.n_wires, self.offset
        if off is None:
            self.state = _apply(self.state, mat, wires, n, per_variant)
            return
        S = self._channel_superop(len(wires))
        if len(wires) == 1:
            # unitary and trailing channel fused into one superoperator on (row, col)
            U = _unitary_superop(mat, per_variant)
            if S is not None:
                U = S @ U
            self.state = _apply(self.state, U, (wires[0], wires[0] + off), n, per_variant)
            return
        st = _apply(self.state, mat, wires, n, per_variant)
        st = _apply(st, mat.conj(), tuple(w + off for w in wires), n, per_variant)
        if S is not None:
            for q in wires:
                st = _apply(st, S, (q, q + off), n, False)
        self.state = st

    def idle(self) -> None:
        S = self._channel_superop(0)
        for q in range(self.Q):
            self.state = _apply(self.state, S, (q, q + self.offset), self.n_wires, False)

    def readout(self) -> np.ndarray:
        """(V, B, Q) expectations, with the readout bit-flip applied."""
        Q, B, p_ro = self.Q, self.B, self.noise.p_ro
        state = self.state
        V = state.shape[0]
        if self.offset is None:
            z = _z_from_probs(np.abs(state.reshape(V, B, -1)) ** 2, Q)
            return z * (1.0 - 2.0 * p_ro) if p_ro > 0 else z
        if p_ro > 0:
            S = kraus_bitflip(p_ro).superoperator
            for q in range(Q):
                state = _apply(state, S, (q, q + self.offset), self.n_wires, False)
        D = 2 ** Q
        return _z_from_probs(np.real(np.diagonal(state.reshape(V, B, D, D), axis1=-2, axis2=-1)), Q)


def simulate_expectations(
    blueprint: CircuitBlueprint,
    angles: np.ndarray,
    noise: NoiseConfig = NOISELESS,
    theta_variants: np.ndarray | None = None,
    backend: str | None = None,
) -> np.ndarray:
    """Batched <Z_i> readout.

    ``angles`` is (B, Q). ``theta_variants`` is an optional (V, P) matrix of
    replacement angles for the P parameterized gates; without it the
    blueprint's own angles are used and V = 1. Returns (V, B, Q).
    Any noise mode (or idle damping) selects the density-matrix backend.
    """
    if theta_variants is None:
        theta_variants = np.asarray(blueprint.thetas, dtype=float)[None, :]
    theta_variants = np.asarray(theta_variants, dtype=float)
    V, P = theta_variants.shape
    if P != blueprint.num_parameters:
        raise ValueError(f"expected {blueprint.num_parameters} parameters per variant, got {P}")
    eng = _Engine(blueprint, angles, noise, backend)
    pnum = _param_numbers(blueprint)
    for i, g in _schedule(blueprint, noise):
        if g is None:
            eng.idle()
        elif g.kind.parameterized:
            col = theta_variants[:, pnum[i]]
            if V > 1 and not np.all(col == col[0]):
                eng.gate(rotation_matrices(g.kind, col), g.qubits, True)
            else:
                eng.gate(rotation_matrices(g.kind, col[0]), g.qubits, False)
        else:
            eng.gate(_FIXED[g.kind], g.qubits, False)
    z = eng.readout()
    if z.shape[0] != V:
        z = np.broadcast_to(z, (V,) + z.shape[1:]).copy()
    return z


def _param_numbers(blueprint: CircuitBlueprint) -> dict[int, int]:
    """Gate index -> parameter number, in gate order."""
    out = {}
    for i, g in enumerate(blueprint.gates):
        if g.kind.parameterized:
            out[i] = len(out)
    return out


SHIFT = math.pi / 2


def parameter_shift_jacobian(
    blueprint: CircuitBlueprint,
    angles: np.ndarray,
    noise: NoiseConfig = NOISELESS,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Expectations and their parameter-shift derivatives.

    Returns ``z`` of shape (B, Q) and ``dz`` of shape (P, B, Q) with
    ``dz[l] = (z(theta_l + pi/2) - z(theta_l - pi/2)) / 2``, exact for gates of
    the form ``exp(-i theta P / 2)`` with P a Pauli string. The shifted pair
    for gate l branches off the unshifted evolution right at gate l.
    """
    eng = _Engine(blueprint, angles, noise, backend)
    thetas = blueprint.thetas
    P = len(thetas)
    pnum = _param_numbers(blueprint)
    ranks = [0] * P  # execution rank of each parameter; differs from gate order under idle layering
    for i, g in _schedule(blueprint, noise):
        if g is None:
            eng.idle()
            continue
        if not g.kind.parameterized:
            eng.gate(_FIXED[g.kind], g.qubits, False)
            continue
        theta = g.theta
        cur = eng.state.shape[0]
        ranks[pnum[i]] = (cur - 1) // 2
        eng.state = np.concatenate([eng.state, eng.state[:1], eng.state[:1]], axis=0)
        col = np.full(cur + 2, theta)
        col[-2] += SHIFT
        col[-1] -= SHIFT
        eng.gate(rotation_matrices(g.kind, col), g.qubits, True)
    z = eng.readout()
    if P == 0:
        return z[0], np.zeros((0,) + z.shape[1:])
    plus = z[1::2][ranks]
    minus = z[2::2][ranks]
    return z[0], 0.5 * (plus - minus)


def _compose_superops(channels: Sequence[KrausChannel]) -> np.ndarray | None:
    S = None
    for ch in channels:
        S = ch.superoperator if S is None else ch.superoperator @ S
    return S


def _unitary_superop(mat: np.ndarray, per_variant: bool) -> np.ndarray:
    """``U (x) conj(U)`` for a 2x2 unitary (or a stack of them)."""
    if per_variant:
        return np.einsum("vij,vkl->vikjl", mat, mat.conj()).reshape(mat.shape[0], 4, 4)
    return np.kron(mat, mat.conj())


def run_circuit(blueprint: CircuitBlueprint, angles: Sequence[float], noise: NoiseConfig = NOISELESS,
                backend: str | None = None) -> np.ndarray:
    """<Z_i> for a single embedding-angle vector of length Q."""
    angles = np.asarray(angles, dtype=float)
    if angles.ndim != 1 or angles.shape[0] != blueprint.num_qubits:
        raise ValueError(f"expected {blueprint.num_qubits} angles, got shape {angles.shape}")
    return simulate_expectations(blueprint, angles[None, :], noise, backend=backend)[0, 0]


def density_trajectory(blueprint: CircuitBlueprint, angles: Sequence[float],
                       noise: NoiseConfig = NOISELESS) -> Iterator[DensityMatrix]:
    """Yield the density matrix after the embedding and after every gate+channel step."""
    Q = blueprint.num_qubits
    noise.validate()
    psi = embedding_states(np.asarray(angles, dtype=float)[None, :]).reshape(-1)
    state = DensityMatrix(Q, np.outer(psi, psi.conj()))
    yield state
    idle = noise.idle_channels()
    for _, g in _schedule(blueprint, noise):
        if g is None:
            for ch in idle:
                for q in range(Q):
                    state = apply_channel(state, ch, q)
            yield state
            continue
        U = embed_operator(gate_matrix(g), g.qubits, Q)
        state = DensityMatrix(Q, U @ state.rho @ U.conj().T)
        for ch in noise.gate_channels(g.kind.arity):
            for q in g.qubits:
                state = apply_channel(state, ch, q)
        yield state
    if noise.p_ro > 0:
        yield apply_readout_bitflip(state, noise.p_ro)


def statevector(blueprint: CircuitBlueprint, angles: Sequence[float]) -> StateVector:
    Q = blueprint.num_qubits
    psi = embedding_states(np.asarray(angles, dtype=float)[None, :]).reshape(-1)
    return StateVector(Q, circuit_unitary(blueprint) @ psi)
