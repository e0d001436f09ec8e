"""Hybrid quantum-classical classifier and the black-box search objective.

The quantum part maps angle-embedded inputs to Pauli-Z expectations; a small
MLP head ``Q -> 64 -> 64 -> 2`` turns them into class probabilities. Circuit
angles get parameter-shift gradients, the head plain backpropagation, and the
two are joined through dL/dz.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitBlueprint, ComplexitySummary, canonical_hash, complexity_summary
from .data import Dataset, SearchData, stratified_subset
from .simulator import NOISELESS, NoiseConfig, parameter_shift_jacobian, simulate_expectations

HIDDEN = 64
PROB_FLOOR = 1e-12
_HEAD_KEYS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    subset_size: int = 3000
    learning_rate: float = 0.05
    optimizer: str = "sgd"
    seed: int = 0

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "subset_size"):
            if getattr(self, name) < 0 or (name != "epochs" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class HybridModel:
    blueprint: CircuitBlueprint
    theta: np.ndarray
    head: dict[str, np.ndarray]

    @classmethod
    def init(cls, blueprint: CircuitBlueprint, rng: np.random.Generator, hidden: int = HIDDEN) -> "HybridModel":
        """Circuit angles from the blueprint; head weights and biases ~ U(-0.1, 0.1)."""
        Q = blueprint.num_qubits
        shapes = {"W1": (Q, hidden), "b1": (hidden,), "W2": (hidden, hidden), "b2": (hidden,),
                  "W3": (hidden, 2), "b3": (2,)}
        head = {k: rng.uniform(-0.1, 0.1, size=shapes[k]) for k in _HEAD_KEYS}
        return cls(blueprint, np.asarray(blueprint.thetas, dtype=float), head)

    @property
    def circuit(self) -> CircuitBlueprint:
        return self.blueprint.with_thetas(self.theta)

    def copy(self) -> "HybridModel":
        return HybridModel(self.blueprint, self.theta.copy(), {k: v.copy() for k, v in self.head.items()})

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "head": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.head.items()},
        }

    @classmethod
    def from_dict(cls, blueprint: CircuitBlueprint, d: dict) -> "HybridModel":
        head = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["head"].items()}
        return cls(blueprint, np.asarray(d["theta"], dtype=float), head)


@dataclass
class EvalRecord:
    circuit_hash: str
    val_accuracy: float
    perf: float
    complexity: ComplexitySummary
    wall_times: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    penalty: float = 0.0

    def to_dict(self) -> dict:
        return {
            "circuit_hash": self.circuit_hash,
            "val_accuracy": self.val_accuracy,
            "perf": self.perf,
            "penalty": self.penalty,
            "complexity": self.complexity.to_dict(),
            "wall_times": self.wall_times,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        return cls(d["circuit_hash"], d["val_accuracy"], d["perf"], ComplexitySummary(**d["complexity"]),
                   d.get("wall_times", {}), d.get("seed", 0), d.get("penalty", 0.0))


# ---------------------------------------------------------------------------
# head


def _softmax(logits: np.ndarray) -> np.ndarray:
    s = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def head_forward(head: dict[str, np.ndarray], z: np.ndarray):
    a1 = z @ head["W1"] + head["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ head["W2"] + head["b2"]
    h2 = np.maximum(a2, 0.0)
    logits = h2 @ head["W3"] + head["b3"]
    return _softmax(logits), (z, a1, h1, a2, h2)


def head_backward(head, cache, dlogits):
    """Gradients of the head parameters and of the input z, given dL/dlogits."""
    z, a1, h1, a2, h2 = cache
    g = {"W3": h2.T @ dlogits, "b3": dlogits.sum(axis=0)}
    d2 = (dlogits @ head["W3"].T) * (a2 > 0)
    g["W2"] = h1.T @ d2
    g["b2"] = d2.sum(axis=0)
    d1 = (d2 @ head["W2"].T) * (a1 > 0)
    g["W1"] = z.T @ d1
    g["b1"] = d1.sum(axis=0)
    dz = d1 @ head["W1"].T
    return g, dz


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean of -log p(true class); probabilities are floored at 1e-12."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    p_true = probs[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(p_true, PROB_FLOOR))))


# ---------------------------------------------------------------------------
# model evaluation


def expectations(model: HybridModel, x: np.ndarray, noise: NoiseConfig = NOISELESS,
                 chunk: int = 1024) -> np.ndarray:
    circ = model.circuit
    x = np.atleast_2d(x)
    return np.concatenate([simulate_expectations(circ, x[i:i + chunk], noise)[0]
                           for i in range(0, x.shape[0], chunk)], axis=0)


def forward(model: HybridModel, x_scaled: np.ndarray, noise: NoiseConfig = NOISELESS) -> np.ndarray:
    """Class probabilities, (2,) for one sample or (B, 2) for a batch."""
    x = np.asarray(x_scaled, dtype=float)
    single = x.ndim == 1
    if x.shape[-1] != model.blueprint.num_qubits:
        raise ValueError(f"expected {model.blueprint.num_qubits} features, got {x.shape[-1]}")
    probs, _ = head_forward(model.head, expectations(model, x, noise))
    return probs[0] if single else probs


def predict(model: HybridModel, x: np.ndarray, noise: NoiseConfig = NOISELESS) -> np.ndarray:
    return np.argmax(forward(model, np.atleast_2d(x), noise), axis=1)


def accuracy(model: HybridModel, data: Dataset, noise: NoiseConfig = NOISELESS) -> float:
    return float(np.mean(predict(model, data.features, noise) == data.labels))


def quantum_gradients(model: HybridModel, x_scaled: np.ndarray, noise: NoiseConfig = NOISELESS) -> np.ndarray:
    """dz/dtheta by the parameter-shift rule; shape (P, Q) for one sample, (P, B, Q) for a batch."""
    x = np.asarray(x_scaled, dtype=float)
    _, dz = parameter_shift_jacobian(model.circuit, np.atleast_2d(x), noise)
    return dz[:, 0, :] if x.ndim == 1 else dz


def loss_and_grads(model: HybridModel, x: np.ndarray, y: np.ndarray, noise: NoiseConfig = NOISELESS):
    """Cross-entropy on a minibatch with gradients for (theta, head)."""
    z, dzdt = parameter_shift_jacobian(model.circuit, x, noise)
    probs, cache = head_forward(model.head, z)
    loss = cross_entropy(probs, y)
    onehot = np.zeros_like(probs)
    onehot[np.arange(y.shape[0]), y] = 1.0
    dlogits = (probs - onehot) / y.shape[0]
    g_head, dLdz = head_backward(model.head, cache, dlogits)
    g_theta = np.einsum("bq,pbq->p", dLdz, dzdt) if dzdt.shape[0] else np.zeros(0)
    return loss, g_theta, g_head


class _Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * self.b1 + (1 - self.b1) * g
            v = self.v.get(k, 0.0) * self.b2 + (1 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            mh = m / (1 - self.b1 ** self.t)
            vh = v / (1 - self.b2 ** self.t)
            params[k] = params[k] - self.lr * mh / (np.sqrt(vh) + self.eps)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            params[k] = params[k] - self.lr * g


def train(model: HybridModel, data: Dataset, config: TrainConfig,
          noise: NoiseConfig = NOISELESS) -> tuple[HybridModel, list[float]]:
    """Minibatch training of (theta, head) on cross-entropy; returns a new model and per-epoch mean loss."""
    config.validate()
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    opt = _Adam(config.learning_rate) if config.optimizer == "adam" else _SGD(config.learning_rate)
    params = dict(model.head)
    params["theta"] = model.theta
    n = len(data)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses, weights = [], []
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            model.head = {k: params[k] for k in _HEAD_KEYS}
            model.theta = params["theta"]
            loss, g_theta, g_head = loss_and_grads(model, data.features[idx], data.labels[idx], noise)
            grads = dict(g_head)
            grads["theta"] = g_theta
            opt.step(params, grads)
            losses.append(loss)
            weights.append(len(idx))
        trace.append(float(np.average(losses, weights=weights)))
    model.head = {k: params[k] for k in _HEAD_KEYS}
    model.theta = params["theta"]
    return model, trace


# ---------------------------------------------------------------------------
# objective


@dataclass
class PenaltyCaps:
    depth_cap: float = 100.0
    total_cap: float = 100.0


def structural_penalty(summary: ComplexitySummary, caps: PenaltyCaps = PenaltyCaps()) -> float:
    """Mean of capped depth, capped gate count and two-qubit fraction, each in [0, 1]."""
    terms = (
        min(summary.depth / caps.depth_cap, 1.0),
        min(summary.total_gates / caps.total_cap, 1.0),
        summary.two_qubit_gates / summary.total_gates if summary.total_gates else 0.0,
    )
    return float(np.mean(terms))


def evaluate_objective(
    blueprint: CircuitBlueprint,
    data: SearchData,
    config: TrainConfig,
    lam: float = 0.0,
    caps: PenaltyCaps = PenaltyCaps(),
    noise: NoiseConfig = NOISELESS,
    seed: int | None = None,
) -> EvalRecord:
    """Train a fresh model on a candidate subset and score it on the validation split.

    ``perf = acc_val - lam * penalty``. ``seed`` fixes the subset, head
    initialisation and minibatch order, so re-evaluation is exact.
    """
    seed = config.seed if seed is None else seed
    t0 = time.perf_counter()
    model, _ = fit_and_score(blueprint, data.train, None, config, noise, seed)
    t1 = time.perf_counter()
    acc = accuracy(model, data.val, noise)
    t2 = time.perf_counter()
    summary = complexity_summary(blueprint)
    pen = structural_penalty(summary, caps)
    return EvalRecord(
        circuit_hash=canonical_hash(blueprint),
        val_accuracy=acc,
        perf=acc - lam * pen if lam else acc,
        complexity=summary,
        wall_times={"train": t1 - t0, "validate": t2 - t1},
        seed=int(seed),
        penalty=pen,
    )


def fit_and_score(blueprint: CircuitBlueprint, train_data: Dataset, score_data: Dataset | None,
                  config: TrainConfig, noise: NoiseConfig = NOISELESS, seed: int = 0) -> tuple[HybridModel, float | None]:
    """Train on a seeded subset of ``train_data`` and return the model and its accuracy on ``score_data``."""
    rng = np.random.default_rng(seed)
    subset = stratified_subset(train_data, config.subset_size, rng)
    model = HybridModel.init(blueprint, rng)
    cfg = TrainConfig(config.epochs, config.batch_size, config.subset_size, config.learning_rate,
                      config.optimizer, int(rng.integers(2 ** 31)))
    model, _ = train(model, subset, cfg, noise)
    return model, (accuracy(model, score_data, noise) if score_data is not None else None)
