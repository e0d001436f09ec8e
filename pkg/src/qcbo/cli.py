"""Command-line entry point: ``qcbo {search,sweep,report,export-qasm,synth-data}``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (archive_points, convergence_metrics, pareto_front, robustness_metrics, robustness_sweep,
                       timing_report)
from .circuit import CircuitBlueprint, export_qasm, parse_qasm
from .config import ConfigError, RunConfig, SyntheticSpec, config_from_dict, load_config, parse_value
from .data import Dataset, PreparedData, SplitSpec, load_csv, prepare, synth_generate
from .search import ArchiveEntry, run_search
from .surrogate import kendall_tau, spearman_rho
from .vqc import TrainConfig, fit_and_score

log = logging.getLogger("qcbo")

OUTPUT_ROOT_ENV = "QCBO_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def load_dataset(cfg: RunConfig) -> Dataset:
    d = cfg.data
    if d.csv is not None:
        return load_csv(d.csv, d.label_column)
    s = d.synthetic
    return synth_generate(s.n, s.d, s.informative, s.seed, s.margin, s.noise, s.task)


def prepare_data(cfg: RunConfig) -> PreparedData:
    ds = load_dataset(cfg)
    try:
        return prepare(ds, SplitSpec(cfg.data.test_size, cfg.data.val_size, cfg.data.split_seed), cfg.qubits)
    except ValueError as e:
        raise ConfigError(f"data: {e}") from e


# ---------------------------------------------------------------------------
# search


def _search_overrides(args) -> dict:
    ov = {
        "qubits": args.qubits,
        "data.csv": args.csv,
        "data.label_column": args.label_column,
        "search.strategy": args.strategy,
        "search.seed": args.seed,
        "search.iters": args.iters,
        "search.initial": args.initial,
        "search.n_cands": args.n_cands,
        "search.m_eval": args.m_eval,
        "search.workers": args.workers,
        "output": args.out,
    }
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = parse_value(v)
    return ov


def _config_from_args(args) -> tuple[RunConfig, dict]:
    overrides = _search_overrides(args) if hasattr(args, "strategy") else {}
    cfg, applied = load_config(args.config, overrides)
    if getattr(args, "synthetic", False):
        if cfg.data.synthetic is None:
            cfg.data.synthetic = SyntheticSpec()
        cfg.data.csv = None
        applied["data.synthetic"] = True
    cfg.validate()
    return cfg, applied


def cmd_search(args) -> int:
    cfg, applied = _config_from_args(args)
    run_dir = Path(cfg.output) if cfg.output else output_root() / f"{cfg.search.strategy}-seed{cfg.search.seed}"
    prepared = prepare_data(cfg)
    # the run directory is not part of the experiment, keep it out of the manifest
    extra = {"run_config": cfg.to_dict(), "overrides": {k: v for k, v in applied.items() if k != "output"}}
    extra["run_config"].pop("output", None)
    state, final = run_search(prepared, cfg.search, run_dir, resume=args.resume, manifest_extra=extra)
    print(json.dumps({"run_dir": str(run_dir), "best_hash": final.circuit_hash, "val_perf": final.val_perf,
                      "test_accuracy": final.test_accuracy, "true_evaluations": len(state.archive)}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _circuit_source(args) -> tuple[CircuitBlueprint, int | None, RunConfig | None]:
    if args.run_dir:
        rd = Path(args.run_dir)
        best, manifest = rd / "best.json", rd / "manifest.json"
        if not best.exists() or not manifest.exists():
            raise ConfigError(f"{rd}: not a completed run directory (best.json / manifest.json missing)")
        b = json.loads(best.read_text())
        archive = json.loads((rd / "archive.json").read_text())
        seed = next((e["record"]["seed"] for e in archive if e["record"]["circuit_hash"] == b["circuit_hash"]), None)
        run_cfg = json.loads(manifest.read_text()).get("run_config")
        cfg = config_from_dict(run_cfg) if run_cfg else None
        return CircuitBlueprint.from_dict(b["blueprint"]), seed, cfg
    if args.qasm:
        p = Path(args.qasm)
        if not p.exists():
            raise ConfigError(f"QASM file not found: {p}")
        try:
            return parse_qasm(p.read_text()), None, None
        except ValueError as e:
            raise ConfigError(f"{p}: {e}") from e
    raise ConfigError("sweep needs --run-dir or --qasm")


def cmd_sweep(args) -> int:
    blueprint, seed, run_cfg = _circuit_source(args)
    if args.config or run_cfg is None:
        cfg, _ = _config_from_args(args)
    else:
        cfg = run_cfg
        cfg.validate()
    if blueprint.num_qubits != cfg.qubits:
        raise ConfigError(f"circuit has {blueprint.num_qubits} qubits but the data config selects {cfg.qubits}")
    channels = args.channels.split(",") if args.channels else cfg.sweep.channels
    sw = cfg.sweep
    out = Path(args.out) if args.out else (Path(args.run_dir) if args.run_dir else output_root()) / "sweeps"
    out.mkdir(parents=True, exist_ok=True)
    data = prepare_data(cfg).search_view()
    train = TrainConfig(sw.epochs, sw.batch_size, sw.subset_size, cfg.search.train.learning_rate,
                        cfg.search.train.optimizer)
    seed = seed if seed is not None else cfg.search.seed
    # noiseless reference for the degradation metric, same budget and seed
    _, ideal = fit_and_score(blueprint, data.train, data.val, train, replace(cfg.search.noise, mode="none"), seed)
    metrics = {"ideal_accuracy": ideal}
    for ch in channels:
        res = robustness_sweep(blueprint, data, sw.T1, sw.T2, ch, cfg.search.noise, train, seed, cfg.search.workers)
        res.write_csv(out / f"sweep_{ch}.csv")
        metrics[ch] = {**robustness_metrics(res, sw.gammas, ideal, tuple(sw.point)),
                       "rows": len(res.rows), "skipped": [list(p) for p in res.skipped]}
    (out / "sweep_metrics.json").write_text(json.dumps(metrics, indent=2))
    print(json.dumps({"out": str(out), "channels": channels}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def _read_run(rd: Path):
    need = ("manifest.json", "summary.json", "archive.json", "iterations.csv")
    missing = [n for n in need if not (rd / n).exists()]
    if missing:
        raise ConfigError(f"{rd}: incomplete run directory, missing {missing}")
    summary = json.loads((rd / "summary.json").read_text())
    archive = [ArchiveEntry.from_dict(e) for e in json.loads((rd / "archive.json").read_text())]
    with (rd / "iterations.csv").open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    manifest = json.loads((rd / "manifest.json").read_text())
    return manifest, summary, archive, rows


def _wall_times(rows) -> list[float]:
    return list(np.cumsum([float(r["t_iter"]) for r in rows]))


def write_pareto_csv(path: Path, archive, axis: str) -> list:
    front = pareto_front(archive_points(archive, axis))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis, "perf", "circuit_hash", "iteration"])
        for p in front:
            w.writerow([repr(p.cost), repr(p.perf), p.ref.record.circuit_hash, p.ref.iteration])
    return front


def build_report(rd: Path, target: float | None, axis: str) -> dict:
    manifest, summary, archive, rows = _read_run(rd)
    trace = summary["trace"]
    target = summary["f_star"] if target is None else target
    front = write_pareto_csv(rd / "pareto.csv", archive, axis)
    pairs = [(e.mu, e.perf) for e in archive if e.mu is not None]
    surrogate = {"pairs": len(pairs)}
    if len(pairs) >= 2:
        mu, y = map(np.asarray, zip(*pairs))
        surrogate.update(kendall_tau=kendall_tau(mu, y), spearman_rho=spearman_rho(mu, y))
    diag_path = rd / "diagnostics.csv"
    if diag_path.exists():
        with diag_path.open(newline="") as fh:
            drows = list(csv.DictReader(fh))
        if drows:
            surrogate["last_window"] = drows[-1]
    n_cands = manifest["config"]["n_cands"] if manifest["config"]["strategy"] != "random" else manifest["config"]["m_eval"]
    return {
        "strategy": summary["strategy"],
        "seed": summary["seed"],
        "target": target,
        "convergence": convergence_metrics(trace[1:], target, f0=trace[0]),
        "test_accuracy": summary["test_accuracy"],
        "hit_rate": summary["hit_rate"],
        "pareto": {"axis": axis, "size": len(front)},
        "timing": timing_report(rows, n_cands),
        "surrogate": surrogate,
    }


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.run_dirs]
    reports = [build_report(d, args.target, args.axis) for d in dirs]
    for d, r in zip(dirs, reports):
        (d / "report.json").write_text(json.dumps(r, indent=2))
    out = reports[0]
    if len(dirs) == 2:
        # ours = first, baseline = second; shared target so both times refer to the same level
        target = args.target if args.target is not None else min(r["target"] for r in reports)
        (m0, s0, _, r0), (m1, s1, _, r1) = _read_run(dirs[0]), _read_run(dirs[1])
        cm = convergence_metrics(s0["trace"][1:], target, s1["trace"][1:], f0=s0["trace"][0],
                                 baseline_f0=s1["trace"][0], times=_wall_times(r0), baseline_times=_wall_times(r1))
        out = {"ours": str(dirs[0]), "baseline": str(dirs[1]), "target": target, **cm}
        (dirs[0] / "comparison.json").write_text(json.dumps(out, indent=2))
    print(json.dumps(out, indent=2, default=str))
    return EXIT_OK


# ---------------------------------------------------------------------------
# export / synth


def cmd_export_qasm(args) -> int:
    src = Path(args.source)
    path = src / "best.json" if src.is_dir() else src
    if not path.exists():
        raise ConfigError(f"no best.json at {path}")
    bp = CircuitBlueprint.from_dict(json.loads(path.read_text())["blueprint"])
    text = export_qasm(bp)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth_data(args) -> int:
    try:
        ds = synth_generate(args.n, args.d, args.informative, args.seed, args.margin, args.noise, args.task)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
    print(json.dumps({"output": str(out), "rows": len(ds)}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcbo", description="Surrogate-guided search over variational circuits.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="run one search strategy end to end")
    s.add_argument("--config", help="YAML config file")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--csv", help="numeric CSV with a binary label column")
    src.add_argument("--synthetic", action="store_true", help="use the synthetic Gaussian task")
    s.add_argument("--label-column")
    s.add_argument("--qubits", type=int)
    s.add_argument("--strategy", choices=("gnn", "mlp", "greedy", "random"))
    s.add_argument("--seed", type=int)
    s.add_argument("--iters", type=int)
    s.add_argument("--initial", type=int)
    s.add_argument("--n-cands", type=int)
    s.add_argument("--m-eval", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", help=f"run directory (default: ${OUTPUT_ROOT_ENV}/<strategy>-seed<seed>)")
    s.add_argument("--resume", action="store_true", help="continue from the latest checkpoint in the run directory")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. search.train.epochs=5")
    s.set_defaults(func=cmd_search)

    w = sub.add_parser("sweep", help="noise-robustness sweep of a best circuit")
    w.add_argument("--run-dir")
    w.add_argument("--qasm")
    w.add_argument("--config")
    w.add_argument("--channels", help="comma-separated noise modes (default from config)")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summarise one run, or compare two (ours, baseline)")
    r.add_argument("run_dirs", nargs="+")
    r.add_argument("--target", type=float)
    r.add_argument("--axis", default="total_gates", choices=("total_gates", "depth", "two_qubit_gates"))
    r.set_defaults(func=cmd_report)

    e = sub.add_parser("export-qasm", help="write the best circuit of a run as OpenQASM 2.0")
    e.add_argument("source", help="run directory or best.json")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_export_qasm)

    g = sub.add_parser("synth-data", help="write a synthetic binary task as CSV")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--n", type=int, default=6000)
    g.add_argument("--d", type=int, default=8)
    g.add_argument("--informative", type=int, default=4)
    g.add_argument("--margin", type=float, default=1.2)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--task", choices=("linear", "parity"), default="linear")
    g.add_argument("--seed", type=int, default=1)
    g.set_defaults(func=cmd_synth_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
