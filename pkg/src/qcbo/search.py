"""Mutation kernel, cost model, acquisition and the surrogate-guided search loop.

Every random draw in the loop comes from a generator keyed on
``(seed, stage, iteration, index)``, so a run is a pure function of its
config and a checkpoint only has to carry data, never RNG state.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .circuit import (GATE_KINDS, CircuitBlueprint, ComplexitySummary, GateInstance, GateKind,
                      canonical_hash, complexity_summary, export_qasm)
from .data import Dataset, PreparedData, SearchData
from .graph import encode, flat_features
from .simulator import NoiseConfig
from .surrogate import (GinModel, MlpModel, UncertaintyCalibration, calibrate, diagnostics,
                        kendall_tau, mc_predict_batch, model_from_state)
from .vqc import EvalRecord, PenaltyCaps, TrainConfig, evaluate_objective, fit_and_score

log = logging.getLogger(__name__)

EDIT_TYPES = ("delete", "replace", "insert")
STRATEGIES = ("gnn", "mlp", "greedy", "random")
TWO_PI = 2.0 * math.pi

# stage keys for derived generators
_S_INIT, _S_CHILD, _S_MC, _S_EVAL, _S_TRAIN, _S_MODEL = range(6)


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# mutation


@dataclass
class MutationConfig:
    rho: float = 0.1
    eta: float = 0.1
    m_max: int = 10

    def validate(self) -> None:
        if self.rho < 0 or self.eta < 0 or self.rho + self.eta > 1:
            raise ValueError(f"need rho, eta >= 0 and rho + eta <= 1, got {self.rho}, {self.eta}")
        if self.m_max < 1:
            raise ValueError("m_max must be at least 1")


def _fresh_gate(Q: int, u: np.ndarray) -> GateInstance:
    """A uniform gate from four uniforms: kind, target, orientation, angle."""
    kinds = GATE_KINDS if Q >= 2 else tuple(k for k in GATE_KINDS if k.arity == 1)
    kind = kinds[min(int(u[0] * len(kinds)), len(kinds) - 1)]
    if kind.arity == 1:
        qubits = (min(int(u[1] * Q), Q - 1),)
    else:
        n_pairs = Q * (Q - 1) // 2
        k = min(int(u[1] * n_pairs), n_pairs - 1)
        # unrank k into the pair (a, b), a < b
        a = 0
        while k >= Q - 1 - a:
            k -= Q - 1 - a
            a += 1
        qubits = (a, a + 1 + k)
        if not kind.symmetric and u[2] < 0.5:
            qubits = qubits[::-1]
    theta = float(u[3] * TWO_PI) if kind.parameterized else None
    return GateInstance(kind, qubits, theta)


def random_gate(Q: int, rng: np.random.Generator) -> GateInstance:
    return _fresh_gate(Q, rng.random(4))


def random_circuit(Q: int, rng: np.random.Generator, min_gates: int | None = None,
                   max_gates: int | None = None) -> CircuitBlueprint:
    """Gate count ~ Unif{min_gates..max_gates} (default Q..4Q), gates from the mutation proposal."""
    lo = Q if min_gates is None else min_gates
    hi = 4 * Q if max_gates is None else max_gates
    n = int(rng.integers(lo, hi + 1))
    u = rng.random((n, 4))
    return CircuitBlueprint(Q, tuple(_fresh_gate(Q, row) for row in u))


def mutate(parent: CircuitBlueprint, config: MutationConfig, rng: np.random.Generator,
           trace: list | None = None) -> CircuitBlueprint:
    """Apply Unif{1..m_max} delete/replace/insert edits; an emptied circuit gets one H."""
    Q = parent.num_qubits
    n_edits = int(rng.integers(1, config.m_max + 1))
    u = rng.random((n_edits, 6))
    gates = list(parent.gates)
    for row in u:
        if row[0] < config.rho:
            kind = "delete"
            if gates:
                del gates[min(int(row[1] * len(gates)), len(gates) - 1)]
        elif row[0] < config.rho + config.eta:
            kind = "replace"
            if gates:
                gates[min(int(row[1] * len(gates)), len(gates) - 1)] = _fresh_gate(Q, row[2:])
        else:
            kind = "insert"
            gates.insert(min(int(row[1] * (len(gates) + 1)), len(gates)), _fresh_gate(Q, row[2:]))
        if trace is not None:
            trace.append(kind)
    if not gates:
        gates = [GateInstance(GateKind.H, (int(rng.integers(Q)),))]
        if trace is not None:
            trace.append("repair")
    return CircuitBlueprint(Q, tuple(gates))


# ---------------------------------------------------------------------------
# cost and acquisition


@dataclass
class CostWeights:
    w_total: float = 0.15
    w_2q: float = 0.35
    w_cz: float = 0.15
    w_depth: float = 0.35
    w_decoh: float = 0.0
    alpha: float = 0.5

    def validate(self) -> None:
        ws = (self.w_total, self.w_2q, self.w_cz, self.w_depth, self.w_decoh)
        if not all(math.isfinite(w) and w >= 0 for w in ws):
            raise ValueError("cost weights must be finite and non-negative")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError("alpha must be finite and non-negative")


def decoherence_proxy(summary: ComplexitySummary, t_1q: float, t_2q: float, T2: float) -> float:
    """``1 - exp(-T_total / T2)``; gate times in ns, T2 in us."""
    t_total_us = (summary.n_1q * t_1q + summary.n_2q * t_2q) * 1e-3
    return float(-math.expm1(-t_total_us / T2))


def minmax(values, eps: float = 1e-8) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return (v - v.min()) / (v.max() - v.min() + eps)


def base_cost(summaries: list[ComplexitySummary], decoh, weights: CostWeights, eps: float = 1e-8) -> np.ndarray:
    """Weighted sum of batch-wise min-max normalised structural terms."""
    if not summaries:
        raise ValueError("empty candidate batch")
    terms = {
        "w_total": [s.total_gates for s in summaries],
        "w_2q": [s.two_qubit_gates for s in summaries],
        "w_cz": [s.cz_count for s in summaries],
        "w_depth": [s.depth for s in summaries],
        "w_decoh": list(decoh) if decoh is not None else [0.0] * len(summaries),
    }
    return sum(getattr(weights, k) * minmax(v, eps) for k, v in terms.items())


def expected_improvement(mu, sigma, f_star: float, eps: float = 1e-9):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    z = (mu - f_star) / (sigma + eps)
    ei = (mu - f_star) * ndtr(z) + sigma * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def acquisition(ei, c_total, alpha: float, c_base=None) -> tuple[np.ndarray, np.ndarray]:
    """``ACQ = EI * exp(-alpha C)``; returns (acq, ranking) with ties broken by lower cost, then index."""
    ei = np.asarray(ei, dtype=float)
    c_total = np.asarray(c_total, dtype=float)
    c_base = c_total if c_base is None else np.asarray(c_base, dtype=float)
    acq = ei * np.exp(-alpha * c_total)
    order = np.lexsort((np.arange(acq.shape[0]), c_base, -acq))
    return acq, order


# ---------------------------------------------------------------------------
# loop state


@dataclass
class SearchConfig:
    strategy: str = "gnn"
    seed: int = 0
    initial: int = 50
    iters: int = 100
    topk: int | None = None  # default: number of qubits
    n_cands: int = 5
    m_eval: int = 2
    mc_samples: int = 30
    mutation: MutationConfig = field(default_factory=MutationConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    final_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20, batch_size=256,
                                                                         subset_size=10 ** 9))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    lam: float = 0.0
    caps: PenaltyCaps = field(default_factory=PenaltyCaps)
    hidden: int = 128
    dropout: float = 0.3
    sur_lr: float = 1e-3
    sur_batch: int = 32
    init_epochs: int = 50
    retrain_epochs: int = 5
    calib_frac: float = 0.2
    tau_window: int = 20
    dedup_cap: int = 20
    checkpoint_every: int = 10
    edge_mode: str = "transitive"
    init_min_gates: int | None = None
    init_max_gates: int | None = None
    workers: int = 1

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.initial < 1:
            raise ValueError("initial archive must hold at least one circuit")
        if self.iters < 0:
            raise ValueError("iters must be non-negative")
        if self.m_eval < 1 or self.n_cands < self.m_eval:
            raise ValueError(f"need 1 <= m_eval <= n_cands, got m_eval={self.m_eval}, n_cands={self.n_cands}")
        if self.topk is not None and self.topk < 1:
            raise ValueError("topk must be positive")
        if self.mc_samples < 2:
            raise ValueError("mc_samples must be at least 2")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0 < self.calib_frac <= 1:
            raise ValueError("calib_frac must lie in (0, 1]")
        if self.checkpoint_every < 1 or self.dedup_cap < 0 or self.workers < 1:
            raise ValueError("checkpoint_every and workers must be positive, dedup_cap non-negative")
        self.mutation.validate()
        self.weights.validate()
        self.train.validate()
        self.final_train.validate()
        self.noise.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = self.noise.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        d = dict(d)
        nested = {"mutation": MutationConfig, "weights": CostWeights, "train": TrainConfig,
                  "final_train": TrainConfig, "noise": NoiseConfig, "caps": PenaltyCaps}
        for k, typ in nested.items():
            if k in d and isinstance(d[k], dict):
                d[k] = typ(**d[k])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown search config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class ArchiveEntry:
    blueprint: CircuitBlueprint
    record: EvalRecord
    iteration: int
    mu: float | None = None
    sigma: float | None = None

    @property
    def perf(self) -> float:
        return self.record.perf

    def to_dict(self) -> dict:
        return {"blueprint": self.blueprint.to_dict(), "record": self.record.to_dict(),
                "iteration": self.iteration, "mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchiveEntry":
        return cls(CircuitBlueprint.from_dict(d["blueprint"]), EvalRecord.from_dict(d["record"]),
                   d["iteration"], d.get("mu"), d.get("sigma"))


@dataclass
class SearchState:
    archive: list[ArchiveEntry] = field(default_factory=list)
    iteration: int = 0
    trace: list[float] = field(default_factory=list)  # f_0 (initial archive), f_1, ..., f_t
    hits: list[bool] = field(default_factory=list)
    log_rows: list[dict] = field(default_factory=list)
    calibration: UncertaintyCalibration = field(default_factory=UncertaintyCalibration)
    dedup_overflows: int = 0
    surrogate: object = None

    @property
    def f_star(self) -> float:
        return max(e.perf for e in self.archive)

    @property
    def best_index(self) -> int:
        perfs = [e.perf for e in self.archive]
        return int(np.argmax(perfs))

    @property
    def best(self) -> ArchiveEntry:
        return self.archive[self.best_index]

    @property
    def perfs(self) -> list[float]:
        return [e.perf for e in self.archive]

    def pairs(self) -> list[tuple[float, float, float]]:
        """Out-of-sample (mu, sigma, y) recorded when each acquired candidate was scored."""
        return [(e.mu, e.sigma, e.perf) for e in self.archive if e.mu is not None]

    def to_dict(self) -> dict:
        return {
            "archive": [e.to_dict() for e in self.archive],
            "iteration": self.iteration,
            "trace": self.trace,
            "hits": self.hits,
            "log_rows": self.log_rows,
            "calibration": self.calibration.to_dict(),
            "dedup_overflows": self.dedup_overflows,
            "surrogate": self.surrogate.state_dict() if self.surrogate is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchState":
        return cls(
            archive=[ArchiveEntry.from_dict(e) for e in d["archive"]],
            iteration=d["iteration"],
            trace=list(d["trace"]),
            hits=list(d["hits"]),
            log_rows=list(d["log_rows"]),
            calibration=UncertaintyCalibration(**d["calibration"]),
            dedup_overflows=d.get("dedup_overflows", 0),
            surrogate=model_from_state(d["surrogate"]) if d.get("surrogate") else None,
        )


def hit_rate(state: SearchState) -> float | None:
    """Share of acquisitions with ``F(c) >= f_{t-1}``; None before any iteration."""
    return float(np.mean(state.hits)) if state.hits else None


# ---------------------------------------------------------------------------
# the loop


def _evaluate_many(jobs, data, config: SearchConfig) -> list[EvalRecord]:
    args = [(bp, data, config.train, config.lam, config.caps, config.noise, s) for bp, s in jobs]
    if config.workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(args))) as ex:
            return list(ex.map(_eval_job, args))
    return [_eval_job(a) for a in args]


def _eval_job(a) -> EvalRecord:
    bp, data, train, lam, caps, noise, seed = a
    return evaluate_objective(bp, data, train, lam, caps, noise, seed)


def _featurize(config: SearchConfig, blueprints):
    if config.strategy == "mlp":
        return [flat_features(b) for b in blueprints]
    return [encode(b, config.edge_mode) for b in blueprints]


def _new_surrogate(config: SearchConfig, num_qubits: int):
    rng = derived_rng(config.seed, _S_MODEL)
    if config.strategy == "mlp":
        return MlpModel(hidden=config.hidden, dropout=config.dropout, rng=rng)
    return GinModel.for_qubits(num_qubits, config.hidden, config.dropout, rng)


def _fit_surrogate(state: SearchState, config: SearchConfig, epochs: int, t: int) -> None:
    items = _featurize(config, [e.blueprint for e in state.archive])
    state.surrogate.train_mse(items, state.perfs, epochs, config.sur_lr, derived_rng(config.seed, _S_TRAIN, t),
                              config.sur_batch)


def _recalibrate(state: SearchState, config: SearchConfig) -> None:
    pairs = state.pairs()
    n = max(3, math.ceil(config.calib_frac * len(state.archive)))
    if len(pairs) >= 3:
        mu, sig, y = map(np.asarray, zip(*pairs[-n:]))
        state.calibration = calibrate(sig, y - mu)


def _propose(state: SearchState, config: SearchConfig, t: int, count: int, seen: set[str]):
    Q = state.archive[0].blueprint.num_qubits
    if config.strategy == "random":
        pool = list(range(len(state.archive)))
    else:
        k = config.topk or Q
        pool = sorted(range(len(state.archive)), key=lambda i: (-state.archive[i].perf, i))[:k]
    children = []
    batch: set[str] = set()
    for i in range(count):
        rng = derived_rng(config.seed, _S_CHILD, t, i)
        for _ in range(config.dedup_cap + 1):
            parent = state.archive[pool[int(rng.integers(len(pool)))]].blueprint
            child = mutate(parent, config.mutation, rng)
            h = canonical_hash(child)
            if h not in seen and h not in batch:
                break
        else:
            state.dedup_overflows += 1
            log.warning("dedup cap hit at iteration %d, child %d; accepting a duplicate", t, i)
        batch.add(h)
        children.append(child)
    return children


def initial_archive(data: SearchData, config: SearchConfig, num_qubits: int) -> list[ArchiveEntry]:
    rng = derived_rng(config.seed, _S_INIT)
    seen: set[str] = set()
    blueprints = []
    while len(blueprints) < config.initial:
        for _ in range(config.dedup_cap + 1):
            bp = random_circuit(num_qubits, rng, config.init_min_gates, config.init_max_gates)
            if canonical_hash(bp) not in seen:
                break
        seen.add(canonical_hash(bp))
        blueprints.append(bp)
    jobs = [(bp, derived_seed(config.seed, _S_EVAL, 0, i)) for i, bp in enumerate(blueprints)]
    records = _evaluate_many(jobs, data, config)
    return [ArchiveEntry(bp, rec, 0) for bp, rec in zip(blueprints, records)]


def _write_checkpoint(run_dir: Path, state: SearchState, config: SearchConfig) -> None:
    ck = run_dir / "checkpoints"
    ck.mkdir(parents=True, exist_ok=True)
    payload = {"config": config.to_dict(), "state": state.to_dict()}
    tmp = ck / f"ckpt_{state.iteration:04d}.json.tmp"
    tmp.write_text(json.dumps(payload))
    tmp.replace(ck / f"ckpt_{state.iteration:04d}.json")


def latest_checkpoint(run_dir: Path) -> Path | None:
    files = sorted((Path(run_dir) / "checkpoints").glob("ckpt_*.json"))
    return files[-1] if files else None


def load_checkpoint(path: Path, config: SearchConfig | None = None) -> tuple[SearchState, SearchConfig]:
    payload = json.loads(Path(path).read_text())
    saved = SearchConfig.from_dict(payload["config"])
    if config is not None:
        a, b = saved.to_dict(), config.to_dict()
        a.pop("iters"), b.pop("iters")
        a.pop("workers"), b.pop("workers")
        if a != b:
            raise ValueError(f"checkpoint {path} was written with a different configuration")
    return SearchState.from_dict(payload["state"]), saved


ITER_COLUMNS = ("t", "f_t", "n_evals", "hits", "kendall_tau", "t_inference", "t_inference_per_cand",
                "t_update", "t_vqc", "t_bookkeeping", "t_iter")
DIAG_COLUMNS = ("t", "n", "mse", "mae", "r2", "nll", "cov1", "cov2", "uce", "calib_a", "calib_b")


def _write_logs(run_dir: Path, state: SearchState) -> None:
    with (run_dir / "iterations.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, ITER_COLUMNS, extrasaction="ignore")
        w.writeheader()
        w.writerows(state.log_rows)
    rows = [r["diag"] for r in state.log_rows if r.get("diag")]
    with (run_dir / "diagnostics.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, DIAG_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def bo_loop(
    data: SearchData,
    config: SearchConfig,
    run_dir: str | Path | None = None,
    resume: bool = False,
    stop_after: int | None = None,
    on_iteration: Callable[[SearchState], None] | None = None,
) -> SearchState:
    """Run one search strategy; only the train and validation splits are visible here.

    ``stop_after`` halts after that many iterations (checkpointing first), which
    is how interruption is simulated for resume tests.
    """
    config.validate()
    Q = data.train.features.shape[1]
    run_dir = Path(run_dir) if run_dir is not None else None
    state = None
    if resume and run_dir is not None and latest_checkpoint(run_dir) is not None:
        state, _ = load_checkpoint(latest_checkpoint(run_dir), config)
        log.info("resuming from iteration %d", state.iteration)
    if state is None:
        state = SearchState(archive=initial_archive(data, config, Q))
        state.trace.append(state.f_star)
        if config.strategy != "random":
            state.surrogate = _new_surrogate(config, Q)
            # warm start the output bias at the target mean
            state.surrogate.params["bo"][:] = np.mean(state.perfs)
            _fit_surrogate(state, config, config.init_epochs, 0)
        if run_dir is not None:
            run_dir.mkdir(parents=True, exist_ok=True)
            _write_checkpoint(run_dir, state, config)
            _write_logs(run_dir, state)

    seen = {e.record.circuit_hash for e in state.archive}
    done = 0
    while state.iteration < config.iters:
        if stop_after is not None and done >= stop_after:
            break
        t = state.iteration + 1
        t0 = time.perf_counter()
        f_prev = state.f_star
        tm = {"t_inference": 0.0, "t_update": 0.0, "t_vqc": 0.0}
        mus = sigmas = None
        if config.strategy == "random":
            chosen = _propose(state, config, t, config.m_eval, seen)
        else:
            cands = _propose(state, config, t, config.n_cands, seen)
            ti = time.perf_counter()
            items = _featurize(config, cands)
            stats = mc_predict_batch(state.surrogate, items, config.mc_samples,
                                     [derived_rng(config.seed, _S_MC, t, i) for i in range(len(cands))])
            tm["t_inference"] = time.perf_counter() - ti
            mus = np.array([s.mu for s in stats])
            sigmas = np.array([s.sigma for s in stats])
            if config.strategy == "greedy":
                order = np.lexsort((np.arange(len(cands)), -mus))
            else:
                sig_cal = state.calibration.apply(sigmas)
                summaries = [complexity_summary(c) for c in cands]
                nz = config.noise
                decoh = [decoherence_proxy(s, nz.t_1q, nz.t_2q, nz.T2) for s in summaries]
                cb = base_cost(summaries, decoh, config.weights)
                ei = expected_improvement(mus, sig_cal, f_prev)
                _, order = acquisition(ei, cb, config.weights.alpha, cb)
            picks = [int(i) for i in order[:config.m_eval]]
            chosen = [cands[i] for i in picks]
        tv = time.perf_counter()
        jobs = [(bp, derived_seed(config.seed, _S_EVAL, t, m)) for m, bp in enumerate(chosen)]
        records = _evaluate_many(jobs, data, config)
        tm["t_vqc"] = time.perf_counter() - tv
        for m, (bp, rec) in enumerate(zip(chosen, records)):
            mu = sigma = None
            if mus is not None:
                mu, sigma = float(mus[picks[m]]), float(sigmas[picks[m]])
            state.archive.append(ArchiveEntry(bp, rec, t, mu, sigma))
            seen.add(rec.circuit_hash)
            state.hits.append(bool(rec.perf >= f_prev))
        state.trace.append(state.f_star)
        state.iteration = t

        diag = None
        tau = None
        if state.surrogate is not None:
            tu = time.perf_counter()
            _fit_surrogate(state, config, config.retrain_epochs, t)
            _recalibrate(state, config)
            tm["t_update"] = time.perf_counter() - tu
            window = state.pairs()[-config.tau_window:]
            if len(window) >= 2:
                mu_w, sig_w, y_w = map(np.asarray, zip(*window))
                tau = kendall_tau(mu_w, y_w)
                d = diagnostics(mu_w, state.calibration.apply(sig_w), y_w)
                diag = {"t": t, "n": len(window), **d, "calib_a": state.calibration.a,
                        "calib_b": state.calibration.b}
        t_iter = time.perf_counter() - t0
        row = {
            "t": t, "f_t": state.trace[-1], "n_evals": len(state.archive), "hits": int(sum(state.hits[-len(chosen):])),
            "kendall_tau": tau, **tm,
            "t_inference_per_cand": tm["t_inference"] / config.n_cands if config.strategy != "random" else 0.0,
            "t_bookkeeping": max(t_iter - tm["t_inference"] - tm["t_update"] - tm["t_vqc"], 0.0),
            "t_iter": t_iter,
            "diag": diag,
        }
        state.log_rows.append(row)
        done += 1
        if run_dir is not None:
            _write_logs(run_dir, state)
            if t % config.checkpoint_every == 0 or t == config.iters or (stop_after is not None and done >= stop_after):
                _write_checkpoint(run_dir, state, config)
        if on_iteration is not None:
            on_iteration(state)
    return state


# ---------------------------------------------------------------------------
# finalisation and run artefacts


@dataclass
class FinalResult:
    blueprint: CircuitBlueprint
    val_perf: float
    test_accuracy: float
    circuit_hash: str
    model: object = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"circuit_hash": self.circuit_hash, "val_perf": self.val_perf, "test_accuracy": self.test_accuracy,
                "blueprint": self.blueprint.to_dict(), "complexity": complexity_summary(self.blueprint).to_dict()}


def finalize(state: SearchState, prepared: PreparedData, config: SearchConfig) -> FinalResult:
    """Retrain the best-by-validation circuit on train+val and score it once on the test split."""
    best = state.best
    pool = Dataset(np.concatenate([prepared.train.features, prepared.val.features]),
                   np.concatenate([prepared.train.labels, prepared.val.labels]))
    model, acc = fit_and_score(best.blueprint, pool, prepared.test, config.final_train, config.noise,
                               derived_seed(config.seed, _S_EVAL, 10 ** 6))
    return FinalResult(best.blueprint, best.perf, float(acc), best.record.circuit_hash, model)


def run_search(prepared: PreparedData, config: SearchConfig, run_dir: str | Path | None = None,
               resume: bool = False, manifest_extra: dict | None = None) -> tuple[SearchState, FinalResult]:
    """Search on the train/validation view, finalise on test, and write the run directory."""
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "config": config.to_dict(),
            "budget": {"initial": config.initial, "iters": config.iters, "m_eval": config.m_eval,
                       "true_evaluations": config.initial + config.iters * config.m_eval},
            "data": {"train": len(prepared.train), "val": len(prepared.val), "test": len(prepared.test),
                     "preprocessor": prepared.preprocessor.to_dict()},
        }
        manifest.update(manifest_extra or {})
        (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    state = bo_loop(prepared.search_view(), config, run_dir, resume)
    final = finalize(state, prepared, config)
    if run_dir is not None:
        write_results(run_dir, state, final, config)
    return state, final


def write_results(run_dir: Path, state: SearchState, final: FinalResult, config: SearchConfig) -> None:
    (run_dir / "archive.json").write_text(json.dumps([e.to_dict() for e in state.archive]))
    (run_dir / "best.qasm").write_text(export_qasm(final.blueprint))
    best = final.to_dict()
    if final.model is not None:
        best["model"] = final.model.to_dict()
    (run_dir / "best.json").write_text(json.dumps(best, indent=2))
    summary = {
        "strategy": config.strategy,
        "seed": config.seed,
        "iterations": state.iteration,
        "true_evaluations": len(state.archive),
        "trace": state.trace,
        "f_star": state.f_star,
        "best_hash": final.circuit_hash,
        "test_accuracy": final.test_accuracy,
        "hit_rate": hit_rate(state),
        "dedup_overflows": state.dedup_overflows,
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2))


def strategy_config(base: SearchConfig, strategy: str) -> SearchConfig:
    """Same budgets and seed, different selection policy."""
    return replace(base, strategy=strategy)
