"""GIN regression surrogate with MC-dropout uncertainty, and its diagnostics.

Both networks (the graph model and the flat MLP baseline) are plain numpy
with hand-written backprop and an Adam optimiser whose state travels with
the model, so a checkpointed surrogate resumes bit-for-bit.

GIN layer: ``h <- relu(MLP((1 + eps) h + sum_{u->v} h_u))`` with
``MLP = Linear -> ReLU -> Linear``; dropout after each block, global mean
pooling, linear head.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import FLAT_WIDTH, CircuitGraph, feature_width

MODES = ("train", "mc", "deterministic")
SIGMA_FLOOR = 1e-6
NOMINAL_1SIGMA = 0.6827


def gin_param_count(d_in: int, hidden: int = 128) -> int:
    """Closed form: two GIN blocks (two linear maps each) plus a scalar head."""
    return (d_in * hidden + hidden + hidden * hidden + hidden) + 2 * (hidden * hidden + hidden) + hidden + 1


def _uniform_linear(rng, fan_in, fan_out):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)), rng.uniform(-bound, bound, size=fan_out)


class _AdamState:
    def __init__(self, b1=0.9, b2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = b1, b2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k, np.zeros_like(g)) * self.b1 + (1 - self.b1) * g
            v = self.v.get(k, np.zeros_like(g)) * self.b2 + (1 - self.b2) * g * g
            self.m[k], self.v[k] = m, v
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def to_dict(self):
        return {"t": self.t, "m": {k: v.tolist() for k, v in self.m.items()},
                "v": {k: v.tolist() for k, v in self.v.items()}}

    @classmethod
    def from_dict(cls, d):
        s = cls()
        s.t = int(d["t"])
        s.m = {k: np.asarray(v, dtype=float) for k, v in d["m"].items()}
        s.v = {k: np.asarray(v, dtype=float) for k, v in d["v"].items()}
        return s


def _spmm(S, h):
    """Sparse (R, N) times dense (N, H) or (T, N, H)."""
    if h.ndim == 2:
        return S @ h
    T, N, H = h.shape
    out = S @ h.transpose(1, 0, 2).reshape(N, T * H)
    return np.asarray(out).reshape(S.shape[0], T, H).transpose(1, 0, 2)


@dataclass
class _Batch:
    x: np.ndarray  # (N, d) node or row features
    A: sp.csr_matrix | None  # (N, N), A[v, u] = 1 for edge u -> v
    P: sp.csr_matrix | None  # (G, N) mean pooling
    sizes: list[int]  # rows per item (nodes per graph, 1 for flat)


class _Net:
    """Shared parameter handling, training and MC sampling."""

    kind = ""
    params: dict[str, np.ndarray]
    hidden: int
    dropout: float

    def __init__(self):
        self.optim = _AdamState()

    # subclass hooks -------------------------------------------------------
    def batch(self, items) -> _Batch:
        raise NotImplementedError

    def _forward(self, b: _Batch, masks):
        raise NotImplementedError

    def _backward(self, b: _Batch, cache, dy):
        raise NotImplementedError

    # ---------------------------------------------------------------------
    def param_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def _draw_masks(self, b: _Batch, rngs, T=None):
        """Two inverted-dropout masks; one rng per item keeps items independent of batch layout."""
        if self.dropout <= 0:
            return None
        keep = 1.0 - self.dropout
        lead = () if T is None else (T,)
        masks = []
        for _ in range(2):
            parts = [(r.random(lead + (n, self.hidden)) < keep) / keep for r, n in zip(rngs, b.sizes)]
            masks.append(np.concatenate(parts, axis=-2))
        return masks

    def predict(self, items, mode: str = "deterministic", rng=None) -> np.ndarray:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        b = self.batch(items)
        masks = None
        if mode != "deterministic":
            rng = np.random.default_rng() if rng is None else rng
            masks = self._draw_masks(b, [rng] * len(b.sizes))
        y, _ = self._forward(b, masks)
        return y

    def mc_samples(self, items, T: int, rngs) -> np.ndarray:
        """(T, G) stochastic predictions; item g draws its masks from ``rngs[g]``."""
        if T < 2:
            raise ValueError("MC dropout needs T >= 2 samples")
        b = self.batch(items)
        masks = self._draw_masks(b, rngs, T)
        if masks is None:
            y, _ = self._forward(b, None)
            return np.repeat(y[None, :], T, axis=0)
        y, _ = self._forward(b, masks)
        return y

    def train_mse(self, items, targets, epochs: int, lr: float, rng: np.random.Generator,
                  batch_size: int = 32) -> list[float]:
        """Minibatch Adam on the mean squared error with dropout active; returns per-epoch loss."""
        items = list(items)
        y = np.asarray(targets, dtype=float)
        if len(items) == 0 or len(items) != y.shape[0]:
            raise ValueError("need at least one (item, target) pair with matching lengths")
        trace = []
        n = len(items)
        self._prepare(items)
        for _ in range(epochs):
            order = rng.permutation(n)
            tot = 0.0
            for s in range(0, n, batch_size):
                idx = order[s:s + batch_size]
                b = self.batch([items[i] for i in idx])
                masks = self._draw_masks(b, [rng] * len(idx))
                pred, cache = self._forward(b, masks)
                err = pred - y[idx]
                tot += float(np.sum(err ** 2))
                grads = self._backward(b, cache, (2.0 / len(idx)) * err)
                if lr:
                    self.optim.step(self.params, grads, lr)
            trace.append(tot / n)
        return trace

    def _prepare(self, items):
        pass

    def loss_grads(self, items, targets, masks=None):
        """MSE and its gradients at fixed dropout masks (for gradient checking)."""
        b = self.batch(items)
        pred, cache = self._forward(b, masks)
        err = pred - np.asarray(targets, dtype=float)
        return float(np.mean(err ** 2)), self._backward(b, cache, (2.0 / err.shape[0]) * err)

    def state_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hidden": self.hidden,
            "dropout": self.dropout,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
            "optim": self.optim.to_dict(),
        }

    def _load_common(self, d):
        self.params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
        self.optim = _AdamState.from_dict(d["optim"])


class GinModel(_Net):
    kind = "gin"

    def __init__(self, d_in: int, hidden: int = 128, dropout: float = 0.3, eps: float = 0.0,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.d_in, self.hidden, self.dropout, self.eps = d_in, hidden, dropout, eps
        p = {}
        p["W1a"], p["b1a"] = _uniform_linear(rng, d_in, hidden)
        p["W1b"], p["b1b"] = _uniform_linear(rng, hidden, hidden)
        p["W2a"], p["b2a"] = _uniform_linear(rng, hidden, hidden)
        p["W2b"], p["b2b"] = _uniform_linear(rng, hidden, hidden)
        p["Wo"], p["bo"] = _uniform_linear(rng, hidden, 1)
        self.params = p

    @classmethod
    def for_qubits(cls, num_qubits: int, hidden: int = 128, dropout: float = 0.3, rng=None) -> "GinModel":
        return cls(feature_width(num_qubits), hidden, dropout, rng=rng)

    def batch(self, graphs: Sequence[CircuitGraph]) -> _Batch:
        xs, rows, cols, prow, pcol, pval, sizes = [], [], [], [], [], [], []
        off = 0
        for g, graph in enumerate(graphs):
            if graph.node_features.shape[1] != self.d_in:
                raise ValueError(f"graph feature width {graph.node_features.shape[1]} != model width {self.d_in}")
            n = graph.num_nodes
            xs.append(graph.node_features)
            if graph.num_edges:
                rows.append(graph.edges[:, 1] + off)
                cols.append(graph.edges[:, 0] + off)
            prow += [g] * n
            pcol += range(off, off + n)
            pval += [1.0 / n] * n
            sizes.append(n)
            off += n
        r = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
        c = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        A = sp.csr_matrix((np.ones(r.shape[0]), (r, c)), shape=(off, off))
        P = sp.csr_matrix((pval, (prow, pcol)), shape=(len(graphs), off))
        return _Batch(np.concatenate(xs, axis=0), A, P, sizes)

    def _block(self, h, A, Wa, ba, Wb, bb):
        z = (1.0 + self.eps) * h + _spmm(A, h)
        a = z @ Wa + ba
        r = np.maximum(a, 0.0)
        c = r @ Wb + bb
        return np.maximum(c, 0.0), (z, a, r, c)

    def _forward(self, b, masks):
        p = self.params
        h1, c1 = self._block(b.x, b.A, p["W1a"], p["b1a"], p["W1b"], p["b1b"])
        d1 = h1 if masks is None else h1 * masks[0]
        h2, c2 = self._block(d1, b.A, p["W2a"], p["b2a"], p["W2b"], p["b2b"])
        d2 = h2 if masks is None else h2 * masks[1]
        g = _spmm(b.P, d2)
        y = (g @ p["Wo"])[..., 0] + p["bo"][0]
        return y, (c1, d1, c2, g, masks)

    def _block_back(self, cache, dh, A, Wa, Wb, need_input):
        z, a, r, c = cache
        dc = dh * (c > 0)
        gWb, gbb = r.T @ dc, dc.sum(axis=0)
        da = (dc @ Wb.T) * (a > 0)
        gWa, gba = z.T @ da, da.sum(axis=0)
        dh_in = None
        if need_input:
            dz = da @ Wa.T
            dh_in = (1.0 + self.eps) * dz + A.T @ dz
        return gWa, gba, gWb, gbb, dh_in

    def _backward(self, b, cache, dy):
        p = self.params
        c1, d1, c2, g, masks = cache
        dy = dy[:, None]
        grads = {"Wo": g.T @ dy, "bo": dy.sum(axis=0)}
        dd2 = b.P.T @ (dy @ p["Wo"].T)
        dh2 = dd2 if masks is None else dd2 * masks[1]
        grads["W2a"], grads["b2a"], grads["W2b"], grads["b2b"], dd1 = self._block_back(
            c2, dh2, b.A, p["W2a"], p["W2b"], True)
        dh1 = dd1 if masks is None else dd1 * masks[0]
        grads["W1a"], grads["b1a"], grads["W1b"], grads["b1b"], _ = self._block_back(
            c1, dh1, b.A, p["W1a"], p["W1b"], False)
        return grads

    def state_dict(self) -> dict:
        d = super().state_dict()
        d.update(d_in=self.d_in, eps=self.eps)
        return d

    @classmethod
    def from_state(cls, d: dict) -> "GinModel":
        m = cls(d["d_in"], d["hidden"], d["dropout"], d.get("eps", 0.0))
        m._load_common(d)
        return m


class MlpModel(_Net):
    """Flat-feature baseline ``13 -> H -> H -> 1``; inputs standardized with train-set statistics."""

    kind = "mlp"

    def __init__(self, d_in: int = FLAT_WIDTH, hidden: int = 128, dropout: float = 0.3,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        self.d_in, self.hidden, self.dropout = d_in, hidden, dropout
        p = {}
        p["W1"], p["b1"] = _uniform_linear(rng, d_in, hidden)
        p["W2"], p["b2"] = _uniform_linear(rng, hidden, hidden)
        p["Wo"], p["bo"] = _uniform_linear(rng, hidden, 1)
        self.params = p
        self.mean = np.zeros(d_in)
        self.scale = np.ones(d_in)

    def _prepare(self, items):
        x = np.asarray(items, dtype=float)
        self.mean = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)

    def batch(self, items) -> _Batch:
        x = np.atleast_2d(np.asarray(items, dtype=float))
        if x.shape[1] != self.d_in:
            raise ValueError(f"feature width {x.shape[1]} != model width {self.d_in}")
        return _Batch((x - self.mean) / self.scale, None, None, [1] * x.shape[0])

    def _forward(self, b, masks):
        p = self.params
        a1 = b.x @ p["W1"] + p["b1"]
        h1 = np.maximum(a1, 0.0)
        d1 = h1 if masks is None else h1 * masks[0]
        a2 = d1 @ p["W2"] + p["b2"]
        h2 = np.maximum(a2, 0.0)
        d2 = h2 if masks is None else h2 * masks[1]
        y = (d2 @ p["Wo"])[..., 0] + p["bo"][0]
        return y, (a1, d1, a2, d2, masks)

    def _backward(self, b, cache, dy):
        p = self.params
        a1, d1, a2, d2, masks = cache
        dy = dy[:, None]
        g = {"Wo": d2.T @ dy, "bo": dy.sum(axis=0)}
        dh2 = dy @ p["Wo"].T
        dh2 = dh2 if masks is None else dh2 * masks[1]
        da2 = dh2 * (a2 > 0)
        g["W2"], g["b2"] = d1.T @ da2, da2.sum(axis=0)
        dh1 = da2 @ p["W2"].T
        dh1 = dh1 if masks is None else dh1 * masks[0]
        da1 = dh1 * (a1 > 0)
        g["W1"], g["b1"] = b.x.T @ da1, da1.sum(axis=0)
        return g

    def state_dict(self) -> dict:
        d = super().state_dict()
        d.update(d_in=self.d_in, mean=self.mean.tolist(), scale=self.scale.tolist())
        return d

    @classmethod
    def from_state(cls, d: dict) -> "MlpModel":
        m = cls(d["d_in"], d["hidden"], d["dropout"])
        m._load_common(d)
        m.mean = np.asarray(d["mean"], dtype=float)
        m.scale = np.asarray(d["scale"], dtype=float)
        return m


def model_from_state(d: dict) -> _Net:
    return {"gin": GinModel, "mlp": MlpModel}[d["kind"]].from_state(d)


def param_count(model: _Net) -> int:
    return model.param_count()


def gin_forward(model: GinModel, graph: CircuitGraph, mode: str = "deterministic",
                rng: np.random.Generator | None = None) -> float:
    return float(model.predict([graph], mode, rng)[0])


def train_mse(model: _Net, items, targets, epochs: int, lr: float, rng: np.random.Generator,
              batch_size: int = 32) -> tuple[_Net, list[float]]:
    trace = model.train_mse(items, targets, epochs, lr, rng, batch_size)
    return model, trace


# ---------------------------------------------------------------------------
# uncertainty


@dataclass
class PredictionStats:
    mu: float
    sigma: float
    samples: np.ndarray = field(repr=False)


def _stats(samples: np.ndarray) -> PredictionStats:
    return PredictionStats(float(samples.mean()), float(samples.std(ddof=1)), samples)


def mc_predict(model: _Net, item, T: int = 30, rng: np.random.Generator | None = None) -> PredictionStats:
    rng = np.random.default_rng() if rng is None else rng
    return _stats(model.mc_samples([item], T, [rng])[:, 0])


def mc_predict_batch(model: _Net, items, T: int, rngs) -> list[PredictionStats]:
    """MC dropout over many items in one pass; ``rngs[i]`` owns item i's masks."""
    if len(items) == 0:
        return []
    s = model.mc_samples(list(items), T, list(rngs))
    return [_stats(s[:, i]) for i in range(s.shape[1])]


@dataclass
class UncertaintyCalibration:
    a: float = 1.0
    b: float = 0.0

    def apply(self, sigma):
        return np.maximum(self.a * np.asarray(sigma, dtype=float) + self.b, SIGMA_FLOOR)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b}


def calibrate(sigmas, residuals, min_a: float = 1e-3) -> UncertaintyCalibration:
    """Least-squares fit of ``|residual| ~ a * sigma + b``."""
    s = np.asarray(sigmas, dtype=float)
    r = np.abs(np.asarray(residuals, dtype=float))
    if s.shape[0] < 3 or s.shape != r.shape:
        raise ValueError("calibration needs at least 3 matched points")
    if np.ptp(s) == 0:
        return UncertaintyCalibration(1.0, float(r.mean() - s.mean()))
    sc = s - s.mean()
    a = float(np.dot(sc, r - r.mean()) / np.dot(sc, sc))
    a = max(a, min_a)
    return UncertaintyCalibration(a, float(r.mean() - a * s.mean()))


# ---------------------------------------------------------------------------
# diagnostics


def diagnostics(mu, sigma, y, bins: int = 10) -> dict:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 2 or mu.shape != y.shape or sigma.shape != y.shape:
        raise ValueError("need at least two matched (mu, sigma, y) triples")
    if np.any(sigma <= 0):
        raise ValueError("sigmas must be positive")
    err = mu - y
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    absz = np.abs(err) / sigma
    return {
        "mse": float(np.mean(err ** 2)),
        "mae": float(np.mean(np.abs(err))),
        "r2": 1.0 - float(np.sum(err ** 2)) / ss_tot if ss_tot > 0 else None,
        "nll": float(np.mean(0.5 * np.log(2 * np.pi * sigma ** 2) + err ** 2 / (2 * sigma ** 2))),
        "cov1": float(np.mean(absz <= 1.0)),
        "cov2": float(np.mean(absz <= 2.0)),
        "uce": uce(absz, sigma, bins),
    }


def uce(absz, sigma, bins: int = 10) -> float:
    """Coverage gap at 1 sigma, averaged over equal-count bins ordered by predicted sigma."""
    order = np.argsort(sigma, kind="stable")
    n = order.shape[0]
    total = 0.0
    for part in np.array_split(order, min(bins, n)):
        if part.size:
            total += part.size / n * abs(float(np.mean(absz[part] <= 1.0)) - NOMINAL_1SIGMA)
    return total


def kendall_tau(pred, y) -> float:
    """Tau-a: (concordant - discordant) / C(n, 2); tied pairs count zero."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(y, dtype=float)
    n = p.shape[0]
    if n < 2 or t.shape[0] != n:
        raise ValueError("need two equal-length lists with n >= 2")
    i, j = np.triu_indices(n, 1)
    s = np.sign(p[i] - p[j]) * np.sign(t[i] - t[j])
    return float(s.sum()) / (n * (n - 1) / 2)


def _avg_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0])
    sv = v[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(pred, y) -> float:
    """``1 - 6 sum d^2 / (n (n^2 - 1))`` on average ranks."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(y, dtype=float)
    n = p.shape[0]
    if n < 2 or t.shape[0] != n:
        raise ValueError("need two equal-length lists with n >= 2")
    d = _avg_ranks(p) - _avg_ranks(t)
    return 1.0 - 6.0 * float(np.sum(d * d)) / (n * (n * n - 1))
