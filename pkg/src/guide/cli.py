"""Command-line entry point: ``guide {gen-data,train,design,evaluate,benchmark}``.

Exit codes: 0 success, 2 usage, 3 data, 4 training, 10 refusal.
"""

from __future__ import annotations

import os

# thread caps must be in place before numpy loads its BLAS
_threads = os.environ.get("GUIDE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import config_hash, load_config, resolve_path
from .core import Dataset, load_dataset, load_target, save_dataset, save_target
from .errors import (ConfigError, DegenerateStats, GuideError, InfeasibleDesign, InvalidDimension,
                     InvalidInput, RangesInfeasible, TrainingFailed)
from .evaluation import GaConfig, binned_correlation, evaluate_designs
from .initsearch import PsoConfig
from .oracle import (OracleConfig, ParameterRanges, feasible_batch, peak_tolerance_target,
                     sample_designs, toy_response_batch)
from .pipeline import BenchmarkConfig, design_for_target, run_benchmark
from .sampler import ChainConfig, save_trace
from .surrogate import EnsembleModel, MemberConfig, train, validation_rmse

log = logging.getLogger("guide")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING, EXIT_REFUSAL = 0, 2, 3, 4, 10


class UsageError(GuideError):
    pass


# builders from the config dict


def oracle_config(cfg) -> OracleConfig:
    return OracleConfig.from_dict(cfg["oracle"])


def parameter_ranges(cfg) -> ParameterRanges:
    r = cfg["oracle"].get("ranges")
    return ParameterRanges() if r is None else ParameterRanges.from_dict(r)


def pso_config(cfg) -> PsoConfig:
    return PsoConfig(**cfg["pso"])


def chain_config(cfg, stats) -> ChainConfig:
    c = dict(cfg["chain"])
    return ChainConfig.from_stats(stats, prior_alpha=c.pop("prior_alpha"),
                                  step_fraction=c.pop("step_fraction"), **c)


def ga_config(cfg) -> GaConfig:
    return GaConfig(alpha=cfg["pso"]["alpha"], **cfg["ga"])


def _emit(args, msg):
    if not args.quiet:
        print(msg)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _load_model(cfg, args) -> EnsembleModel:
    return EnsembleModel.load(_require(resolve_path(cfg, "model", args.out), "model file"))


def _target(cfg, args):
    p = Path(args.target) if getattr(args, "target", None) else resolve_path(cfg, "target", args.out)
    return load_target(_require(p, "target file"))


def write_designs_csv(path, ranked, chash: str) -> None:
    d = ranked[0][0].size if ranked else 0
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={chash}\n")
        w = csv.writer(fh)
        w.writerow(["rank", "likelihood", "multiplicity"] + [f"x_{i + 1}" for i in range(d)])
        for r, (x, lik, mult) in enumerate(ranked, start=1):
            w.writerow([r, repr(float(lik)), mult] + [repr(float(v)) for v in x])


def read_designs_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(line for line in fh if not line.startswith("#"))]
    if len(rows) < 2:
        raise UsageError(f"{path} holds no designs")
    header = rows[0]
    cols = [i for i, h in enumerate(header) if h.startswith("x_")]
    return np.array([[float(row[i]) for i in cols] for row in rows[1:]])


# commands


def cmd_gen_data(cfg, args) -> int:
    ocfg, ranges = oracle_config(cfg), parameter_ranges(cfg)
    chash = config_hash(cfg)
    n_train, n_test = cfg["oracle"]["n_train"], cfg["oracle"]["n_test"]
    if n_train < 1 or n_test < 0:
        raise UsageError("n_train must be positive and n_test nonnegative")
    for key, n, seed in (("dataset", n_train, cfg["seeds"]["data"]),
                         ("test_dataset", n_test, cfg["seeds"]["test"])):
        if n == 0:
            continue
        X, draws = sample_designs(n, ranges, seed)
        ds = Dataset(X, toy_response_batch(X, ocfg), ocfg.grid)
        path = resolve_path(cfg, key, args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_dataset(ds, path, {"config_hash": chash, "seed": seed, "draws": draws,
                                "rejected": draws - n, "oracle": ocfg.to_dict()})
        _emit(args, f"{path}: {n} rows, {draws - n} constraint rejections "
                    f"({(draws - n) / draws:.1%} of draws)")
        if key == "test_dataset":
            tpath = resolve_path(cfg, "target", args.out)
            if not tpath.exists():
                frac = cfg["benchmark"]["tolerance_fraction"]
                save_target(peak_tolerance_target(ds.responses[0], ds.grid, frac), tpath)
                _emit(args, f"{tpath}: first test response, tolerance {frac:.0%} of peak")
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    s = cfg["surrogate"]
    ds = load_dataset(_require(resolve_path(cfg, "dataset", args.out), "dataset"))
    mc = MemberConfig(s["feature_dim"], s["lengthscale"], s["ridge"])
    gamma = s["gamma"] if s["gamma"] == "fit" else float(s["gamma"])
    model = train(ds, T=s["T"], member_config=mc, seed=cfg["seeds"]["train"], gamma=gamma,
                  sigma_floor=s["sigma_floor"])
    path = resolve_path(cfg, "model", args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path, extra={"config_hash": config_hash(cfg)})
    test_path = resolve_path(cfg, "test_dataset", args.out)
    if test_path.exists():
        rmse = validation_rmse(model, load_dataset(test_path))
        _emit(args, f"validation RMSE {rmse:.4f} MPa on {test_path.name}")
    _emit(args, f"gamma {model.gamma:g}; model written to {path}")
    return EXIT_OK


def cmd_design(cfg, args) -> int:
    model = _load_model(cfg, args)
    target = _target(cfg, args)
    chash = config_hash(cfg)
    out_dir = Path(args.out or cfg["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    run = design_for_target(model, target, model.norm, pso_config(cfg),
                            chain_config(cfg, model.norm), cfg["likelihood"]["n_mc"],
                            cfg["seeds"]["design"])
    designs_path = resolve_path(cfg, "designs", args.out)
    if run.refused:
        report = {"refused": True, "iterations": run.support.iterations_used,
                  "best_objective": run.support.best_objective, "config_hash": chash}
        (out_dir / "refusal.json").write_text(json.dumps(report, indent=2, sort_keys=True))
        write_designs_csv(designs_path, [], chash)
        _emit(args, f"refused: no design with nonzero likelihood after "
                    f"{run.support.iterations_used} PSO iterations")
        return EXIT_REFUSAL
    ranked = run.ranked_designs()
    write_designs_csv(designs_path, ranked, chash)
    save_trace(run.records, out_dir / "trace.jsonl", meta={
        "config_hash": chash, "x0": [float(v) for v in run.support.x0],
        "likelihood0": run.support.likelihood0, "pso_iterations": run.support.iterations_used})
    acc = np.mean([r.accepted for r in run.records])
    _emit(args, f"support at PSO iteration {run.support.iterations_used} "
                f"(likelihood {run.support.likelihood0:.3g}); {len(ranked)} unique designs, "
                f"acceptance {acc:.2f}; written to {designs_path}")
    return EXIT_OK


def cmd_evaluate(cfg, args) -> int:
    designs_path = Path(args.designs) if args.designs else resolve_path(cfg, "designs", args.out)
    X = read_designs_csv(_require(designs_path, "designs file"))
    target = _target(cfg, args)
    train_ds = load_dataset(_require(resolve_path(cfg, "dataset", args.out), "dataset"))
    ocfg = oracle_config(cfg)
    rep = evaluate_designs(X, target, train_ds.norm, train_ds.designs, ocfg)
    out_dir = Path(args.out or cfg["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    body = json.loads(rep.to_json())
    body["config_hash"] = config_hash(cfg)
    (out_dir / "metrics.json").write_text(json.dumps(body, indent=2, sort_keys=True))
    ok = feasible_batch(X, target, ocfg)
    with open(out_dir / "feasibility.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "feasible"])
        for i, f in enumerate(ok):
            w.writerow([i, int(f)])
    _emit(args, f"feasibility {rep.feasibility_rate:.3f}, vendi {rep.vendi:.3f}, "
                f"knn novelty {rep.knn_novelty:.3f} over {rep.n_designs} designs")
    return EXIT_OK


def cmd_benchmark(cfg, args) -> int:
    model = _load_model(cfg, args)
    train_ds = load_dataset(_require(resolve_path(cfg, "dataset", args.out), "dataset"))
    test_ds = load_dataset(_require(resolve_path(cfg, "test_dataset", args.out), "test dataset"))
    b = cfg["benchmark"]
    res = run_benchmark(model, train_ds, test_ds,
                        BenchmarkConfig(b["n_targets"], b["tolerance_fraction"], b["n_designs"]),
                        pso_config(cfg), chain_config(cfg, train_ds.norm), ga_config(cfg),
                        oracle_config(cfg), cfg["likelihood"]["n_mc"], cfg["seeds"]["design"])
    out_dir = Path(args.out or cfg["paths"]["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = ["target", "method", "refused", "iterations", "feasibility_rate", "vendi",
            "knn_novelty", "n_designs"]
    with open(out_dir / "benchmark.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(res.rows)
    with open(out_dir / "likelihood_records.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["likelihood", "feasible"])
        for lik, f in res.records:
            w.writerow([repr(float(lik)), int(f)])
    r = binned_correlation(res.records) if res.records else None
    summary = {"config_hash": config_hash(cfg), "guide_feasibility": res.mean_rate("guide"),
               "ga_feasibility": res.mean_rate("ga"), "pearson_r": r,
               "n_records": len(res.records)}
    (out_dir / "benchmark.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _emit(args, f"mean feasibility: guide {summary['guide_feasibility']:.3f}, "
                f"ga {summary['ga_feasibility']:.3f}; pearson r {r}")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "design": cmd_design,
            "evaluate": cmd_evaluate, "benchmark": cmd_benchmark}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed-override", action="append", default=[], metavar="NAME=VALUE",
                        help="override a named seed (data, test, train, design)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="guide", description="Likelihood-guided inverse design.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate train/test datasets")
    sub.add_parser("train", parents=[common], help="train the surrogate ensemble")
    d = sub.add_parser("design", parents=[common], help="search and sample designs for a target")
    d.add_argument("--target", default=None, help="target JSON (default: paths.target)")
    e = sub.add_parser("evaluate", parents=[common], help="oracle-validate a designs CSV")
    e.add_argument("--target", default=None)
    e.add_argument("--designs", default=None)
    sub.add_parser("benchmark", parents=[common], help="GUIDe vs GA on test targets")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed_override)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RangesInfeasible, DegenerateStats, InfeasibleDesign, InvalidDimension,
            InvalidInput, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingFailed as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
