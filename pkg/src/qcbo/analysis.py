"""Post-hoc reporting: Pareto fronts, convergence, timing and noise-robustness sweeps."""
from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import CircuitBlueprint
from .data import SearchData
from .simulator import InvalidPhysicsError, NoiseConfig, noise_probs
from .vqc import TrainConfig, fit_and_score

log = logging.getLogger(__name__)

SWEEP_T1 = (20.0, 50.0, 100.0, 200.0, 300.0, 400.0)
SWEEP_T2 = (30.0, 60.0, 120.0, 240.0, 360.0, 480.0)
SWEEP_TRAIN = TrainConfig(epochs=5, batch_size=128, subset_size=1000)
COST_AXES = ("total_gates", "depth", "two_qubit_gates")


# ---------------------------------------------------------------------------
# Pareto


@dataclass
class ParetoPoint:
    cost: float
    perf: float
    ref: object = None


def pareto_front(points: Sequence) -> list:
    """Non-dominated points (lower cost, higher perf), sorted by cost.

    ``a`` dominates ``b`` iff it is no worse on both axes and strictly better
    on one, so exact duplicates survive together. Accepts ``ParetoPoint`` or
    ``(cost, perf)`` pairs and returns the same objects.
    """
    pts = list(points)
    if not pts:
        raise ValueError("need at least one point")
    cp = np.array([(p.cost, p.perf) if isinstance(p, ParetoPoint) else (p[0], p[1]) for p in pts], dtype=float)
    if not np.all(np.isfinite(cp)):
        raise ValueError("points must be finite")
    order = np.lexsort((np.arange(len(pts)), -cp[:, 1], cp[:, 0]))
    front = []
    best_lower = -np.inf  # best perf among strictly cheaper points
    i = 0
    while i < len(order):
        j = i
        cost = cp[order[i], 0]
        while j < len(order) and cp[order[j], 0] == cost:
            j += 1
        group = order[i:j]
        top = cp[group[0], 1]
        if top > best_lower:
            front += [pts[k] for k in group if cp[k, 1] == top]
        best_lower = max(best_lower, top)
        i = j
    return front


def archive_points(archive, axis: str = "total_gates") -> list[ParetoPoint]:
    """(cost, perf) points from search archive entries."""
    if axis not in COST_AXES:
        raise ValueError(f"cost axis must be one of {COST_AXES}")
    return [ParetoPoint(float(getattr(e.record.complexity, axis)), e.perf, e) for e in archive]


# ---------------------------------------------------------------------------
# convergence


def time_to_target(trace: Sequence[float], target: float, f0: float | None = None) -> int | None:
    """First 1-based t with ``f_t >= target``; 0 if the starting value ``f0`` already meets it."""
    if f0 is not None and f0 >= target:
        return 0
    for t, f in enumerate(trace, start=1):
        if f >= target:
            return t
    return None


def evals_to_target(perfs: Sequence[float], target: float) -> int | None:
    """Number of true evaluations (archive order) until the running best reaches ``target``."""
    for k, p in enumerate(perfs, start=1):
        if p >= target:
            return k
    return None


def convergence_metrics(trace: Sequence[float], target: float, baseline_trace: Sequence[float] | None = None,
                        f0: float | None = None, baseline_f0: float | None = None,
                        times: Sequence[float] | None = None,
                        baseline_times: Sequence[float] | None = None) -> dict:
    """Time-to-target, best-so-far AUC and speedup over a baseline.

    ``trace`` holds f_1..f_T. With cumulative wall ``times`` per iteration the
    speedup is a wall-clock ratio, otherwise a ratio of iteration counts.
    """
    trace = [float(f) for f in trace]
    if not trace and f0 is None:
        raise ValueError("empty trace")
    tau = time_to_target(trace, target, f0)
    out = {"tau_target": tau, "auc": float(np.mean(trace)) if trace else None, "speedup": None}
    if baseline_trace is not None:
        tau_b = time_to_target(baseline_trace, target, baseline_f0)
        out["baseline_tau_target"] = tau_b
        if tau is not None and tau_b is not None:
            ours = _elapsed(tau, times)
            base = _elapsed(tau_b, baseline_times)
            out["speedup"] = base / ours if ours > 0 else None
    return out


def _elapsed(tau: int, times) -> float:
    if times is None:
        return float(tau)
    return 0.0 if tau == 0 else float(times[tau - 1])


# ---------------------------------------------------------------------------
# timing

STAGES = ("t_inference", "t_update", "t_vqc", "t_bookkeeping")


def timing_report(rows: Sequence[dict], n_cands: int) -> dict:
    """Per-stage totals and means from per-iteration log rows, plus candidate throughput."""
    rows = list(rows)
    if not rows:
        return {"iterations": 0, "stages": {}, "total": 0.0, "unattributed": 0.0, "throughput": None}
    total = sum(float(r["t_iter"]) for r in rows)
    stages = {}
    for s in STAGES:
        vals = [float(r[s]) for r in rows]
        stages[s] = {"total": sum(vals), "mean": sum(vals) / len(vals)}
    per_cand = [float(r.get("t_inference_per_cand") or 0.0) for r in rows]
    stages["t_inference_per_cand"] = {"total": sum(per_cand), "mean": sum(per_cand) / len(per_cand)}
    attributed = sum(stages[s]["total"] for s in STAGES)
    mean_iter = total / len(rows)
    return {
        "iterations": len(rows),
        "stages": stages,
        "total": total,
        "unattributed": total - attributed,
        "throughput": throughput(n_cands, mean_iter),
    }


def throughput(n_cands: int, t_iter: float) -> float | None:
    """Candidates scored per second."""
    return n_cands / t_iter if t_iter > 0 else None


# ---------------------------------------------------------------------------
# robustness sweep


@dataclass
class SweepResult:
    channel: str
    rows: list[dict]
    skipped: list[tuple[float, float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    COLUMNS = ("T1", "T2", "p_ad_1q", "p_pd_1q", "p_ad_2q", "p_pd_2q", "accuracy")

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r["accuracy"] for r in self.rows], dtype=float)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, self.COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: repr(float(r[k])) for k in self.COLUMNS})

    @classmethod
    def read_csv(cls, path: str | Path, channel: str = "") -> "SweepResult":
        with Path(path).open(newline="") as fh:
            rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
        return cls(channel, rows)


def _sweep_point(args):
    blueprint, data, train_cfg, noise, seed = args
    _, acc = fit_and_score(blueprint, data.train, data.val, train_cfg, noise, seed)
    return acc


def robustness_sweep(
    blueprint: CircuitBlueprint,
    data: SearchData,
    T1s: Sequence[float] = SWEEP_T1,
    T2s: Sequence[float] = SWEEP_T2,
    channel: str = "thermal",
    base_noise: NoiseConfig | None = None,
    train: TrainConfig = SWEEP_TRAIN,
    seed: int = 0,
    workers: int = 1,
) -> SweepResult:
    """Retrain and score the circuit at every physical (T1, T2) grid point.

    Points with ``T2 > 2 T1`` are skipped and listed in ``skipped``.
    """
    base = base_noise or NoiseConfig()
    jobs, meta, skipped = [], [], []
    for T1, T2 in itertools.product(T1s, T2s):
        try:
            p1 = noise_probs(base.t_1q * 1e-3, T1, T2)
            p2 = noise_probs(base.t_2q * 1e-3, T1, T2)
        except InvalidPhysicsError:
            skipped.append((float(T1), float(T2)))
            log.info("skipping unphysical grid point T1=%s T2=%s", T1, T2)
            continue
        noise = replace(base, mode=channel, T1=float(T1), T2=float(T2))
        noise.validate()
        jobs.append((blueprint, data, train, noise, seed))
        meta.append({"T1": float(T1), "T2": float(T2), "p_ad_1q": p1[0], "p_pd_1q": p1[1],
                     "p_ad_2q": p2[0], "p_pd_2q": p2[1]})
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            accs = list(ex.map(_sweep_point, jobs))
    else:
        accs = [_sweep_point(j) for j in jobs]
    rows = [dict(m, accuracy=float(a)) for m, a in zip(meta, accs)]
    cfg = {"T1": list(map(float, T1s)), "T2": list(map(float, T2s)), "noise": base.to_dict(),
           "train": vars(train).copy(), "seed": seed}
    return SweepResult(channel, rows, skipped, cfg)


def robustness_metrics(sweep: SweepResult, gammas: Sequence[float] = (0.8, 0.9), ideal: float | None = None,
                       point: tuple[float, float] = (100.0, 120.0)) -> dict:
    acc = sweep.accuracies
    if acc.size == 0:
        raise ValueError("empty sweep")
    out = {
        "avg": float(acc.mean()),
        "min": float(acc.min()),
        "contour_area": {str(g): contour_area(acc, g) for g in gammas},
        "degradation": None,
        "point": list(point),
    }
    at = [r["accuracy"] for r in sweep.rows if (r["T1"], r["T2"]) == tuple(map(float, point))]
    if ideal is not None and at:
        out["degradation"] = float(ideal - at[0])
    return out


def contour_area(acc, gamma: float) -> float:
    """Fraction of grid points with accuracy >= gamma."""
    acc = np.asarray(acc, dtype=float)
    return float(np.mean(acc >= gamma))
