"""Config-driven command-line entry point.

Verbs: train, noise-sweep, ablate, diagnose, attack, verify-theory. Each
takes one TOML config file; only --seed and --output-dir may override it.
Every command echoes its config into the output directory so a run can be
reproduced exactly.

Exit codes: 0 success, 1 theory/assertion failure, 2 usage/config error,
3 IO error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .attacks import fgsm, gaussian_eval, pgd
from .config import (
    ABLATION_METHODS,
    ExperimentConfig,
    build_dataset,
    load_config,
    resolve_train_config,
)
from .diagnostics import compute_report
from .errors import (
    ConfigError,
    DegenerateNorm,
    IncompatibleShapes,
    MinTrials,
    SubspaceLabError,
    TheoryCheckFailed,
)
from .partition import build_partition
from .reports import write_csv, write_json, write_pgm
from .sweeps import aggregate_rows, grid_csv_header, run_grid
from .theory import verification_suite
from .training import TrainHistory, extract_features, train
from .probes import probe, retrieval_map

PROBE_PROTOCOL_NOTE = (
    "probes train on clean train-split labels; accuracy is reported on the "
    "held-out split"
)
PGD_PROTOCOL_NOTE = "pgd evaluated at every configured epsilon, not only the largest"


def _prepare_output(cfg: ExperimentConfig):
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "config_echo.toml").write_bytes(cfg.raw_bytes)


def _history_rows(history: TrainHistory):
    return history.rows()


def cmd_train(cfg: ExperimentConfig) -> int:
    _prepare_output(cfg)
    dataset = build_dataset(cfg.dataset)
    train_cfg = resolve_train_config(cfg.train, dataset)
    model, history = train(train_cfg, dataset)

    partition = build_partition(train_cfg.feature_dim, train_cfg.num_classes)
    metadata = {
        "seed": train_cfg.seed,
        "epoch": train_cfg.epochs,
        "noise_rate": train_cfg.noise_rate,
        "regularizer": train_cfg.regularizer.tag,
        "reg_strength": train_cfg.reg_strength,
    }
    ckpt.save_checkpoint(model, partition, metadata, cfg.checkpoint)
    write_csv(cfg.output_dir / "history.csv", TrainHistory.CSV_HEADER,
              _history_rows(history))
    last = history.records[-1]
    print(f"trained {train_cfg.epochs} epochs: "
          f"train_acc={last.train_accuracy:.4f} "
          f"forbidden_energy={last.forbidden_energy:.6f}")
    print(f"checkpoint: {cfg.checkpoint}")
    return 0


def _sweep_command(cfg: ExperimentConfig, methods, csv_name: str) -> int:
    _prepare_output(cfg)
    probe_cfg = cfg.probes[0]
    results = run_grid(cfg.dataset, cfg.train, probe_cfg, methods,
                       cfg.sweep_noise_rates, cfg.seeds, workers=cfg.workers)
    write_csv(cfg.output_dir / f"{csv_name}_cells.csv",
              ("method", "noise_rate", "seed", "accuracy"),
              [(r.method, r.noise_rate, r.seed, r.accuracy) for r in results])
    rows = aggregate_rows(results, methods, cfg.sweep_noise_rates)
    write_csv(cfg.output_dir / f"{csv_name}.csv", grid_csv_header(methods), rows)
    write_json(cfg.output_dir / f"{csv_name}_meta.json", {
        "methods": list(methods),
        "noise_rates": list(cfg.sweep_noise_rates),
        "seeds": list(cfg.seeds),
        "probe": {"kind": probe_cfg.kind, "epochs": probe_cfg.epochs,
                  "lr0": probe_cfg.lr0},
        "protocol": PROBE_PROTOCOL_NOTE,
    })
    for row in rows:
        cells = " ".join(f"{m}={row[1 + 2 * i]:.4f}" for i, m in enumerate(methods))
        print(f"noise={row[0]:.1f} {cells}")
    return 0


def cmd_noise_sweep(cfg: ExperimentConfig) -> int:
    return _sweep_command(cfg, cfg.sweep_methods, "noise_sweep")


def cmd_ablate(cfg: ExperimentConfig) -> int:
    return _sweep_command(cfg, ABLATION_METHODS, "ablation")


def _load_model_and_data(cfg: ExperimentConfig):
    if not cfg.checkpoint.exists():
        raise ConfigError(f"checkpoint not found: {cfg.checkpoint}")
    model, partition, metadata = ckpt.load_checkpoint(cfg.checkpoint)
    dataset = build_dataset(cfg.dataset)
    expected = model.layers[0].in_features if model.layers else model.feature_dim
    if dataset.input_dim != expected:
        raise IncompatibleShapes(
            f"dataset width {dataset.input_dim} != model input {expected}"
        )
    if dataset.num_classes != model.num_classes:
        raise IncompatibleShapes(
            f"dataset classes {dataset.num_classes} != model classes {model.num_classes}"
        )
    return model, partition, metadata, dataset


def cmd_diagnose(cfg: ExperimentConfig) -> int:
    _prepare_output(cfg)
    model, partition, metadata, dataset = _load_model_and_data(cfg)
    x_te, _, clean_te = dataset.test()
    fb = extract_features(model, x_te, clean_te)
    report = compute_report(fb, partition,
                            ccr_top_k=cfg.diagnostics.ccr_top_k,
                            spectrum_top_k=cfg.diagnostics.spectrum_top_k)
    payload = report.to_jsonable()
    try:
        payload["map_at_10"] = retrieval_map(fb, k=10)
    except DegenerateNorm:
        # a sample with an all-zero feature vector has no cosine ranking
        payload["map_at_10"] = None
    payload["checkpoint_metadata"] = metadata
    payload["protocol"] = PROBE_PROTOCOL_NOTE
    write_json(cfg.output_dir / "diagnostics.json", payload)
    if cfg.diagnostics.emit_csv:
        write_csv(cfg.output_dir / "correlation.csv",
                  [str(int(j)) for j in report.live_dims],
                  [list(row) for row in report.correlation])
    if cfg.diagnostics.emit_heatmap:
        write_pgm(cfg.output_dir / "correlation.pgm", report.correlation)
    map_text = ("n/a" if payload["map_at_10"] is None
                else f"{payload['map_at_10']:.4f}")
    print(f"sparsity={report.sparsity:.4f} ccr={report.ccr:.4f} "
          f"fisher_ratio={report.fisher_ratio:.4f} map@10={map_text}")
    return 0


def cmd_attack(cfg: ExperimentConfig) -> int:
    _prepare_output(cfg)
    model, _, _, dataset = _load_model_and_data(cfg)
    x_tr, _, _ = dataset.train()
    x_te, _, clean_te = dataset.test()
    lo_default = x_tr.min(axis=0)
    hi_default = x_tr.max(axis=0)

    def head_accuracy(x):
        from .nn import forward
        _, z, _ = forward(model, x)
        return float((z.argmax(axis=1) == clean_te).mean())

    clean_acc = head_accuracy(x_te)
    n = x_te.shape[0]
    rows = [("clean", 0.0, 0, clean_acc, clean_acc, n, 0)]
    for spec in cfg.attacks:
        lo = lo_default if spec.clamp_lo is None else spec.clamp_lo
        hi = hi_default if spec.clamp_hi is None else spec.clamp_hi
        if spec.kind == "fgsm":
            adv = fgsm(model, x_te, clean_te, spec.epsilon, lo, hi)
            acc, steps = head_accuracy(adv), 1
        elif spec.kind == "pgd":
            adv = pgd(model, x_te, clean_te, spec.epsilon, spec.step_size,
                      spec.steps, lo, hi, rng=spec.seed)
            acc, steps = head_accuracy(adv), spec.steps
        else:
            acc = gaussian_eval(model, x_te, clean_te, spec.epsilon,
                                trials=spec.trials, seed=spec.seed)
            steps = 0
        rows.append((spec.kind, spec.epsilon, steps, clean_acc, acc, n, spec.seed))
        print(f"{spec.kind} eps={spec.epsilon:.6g}: adv_acc={acc:.4f} "
              f"(clean {clean_acc:.4f})")
    write_csv(cfg.output_dir / "attacks.csv",
              ("kind", "epsilon", "steps", "clean_acc", "adv_acc",
               "n_samples", "seed"), rows)
    write_json(cfg.output_dir / "attacks_meta.json",
               {"protocol": PGD_PROTOCOL_NOTE})
    return 0


def cmd_verify_theory(cfg: ExperimentConfig) -> int:
    _prepare_output(cfg)
    t = cfg.theory
    checks = verification_suite(trials=t.trials, seed=t.seed, dims=t.dims,
                                classes=t.classes, taus=t.taus,
                                sigma2=t.sigma2)
    write_json(cfg.output_dir / "verify_theory.json", {"checks": checks})
    first_failure = None
    for check in checks:
        print(f"{check['status'].upper():4s} {check['name']}")
        if check["status"] == "fail" and first_failure is None:
            first_failure = check["name"]
    if first_failure is not None:
        print(f"FIRST FAILURE: {first_failure}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "train": cmd_train,
    "noise-sweep": cmd_noise_sweep,
    "ablate": cmd_ablate,
    "diagnose": cmd_diagnose,
    "attack": cmd_attack,
    "verify-theory": cmd_verify_theory,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subspacelab",
        description="Train, diagnose, and stress-test class-subspace "
                    "regularized feature geometry.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed(s)")
        p.add_argument("--output-dir", default=None,
                       help="override the configured output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed,
                          output_dir_override=args.output_dir)
        return COMMANDS[args.command](cfg)
    except TheoryCheckFailed as exc:
        print(f"theory check failed: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, MinTrials) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except SubspaceLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
