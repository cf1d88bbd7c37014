"""Experiment configuration: one TOML file per experiment.

The schema is strict: unknown keys or sections are hard errors, so a
config echo is always sufficient to rerun an experiment exactly. Only two
values may be overridden from the command line: the seed(s) and the
output directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .attacks import AttackSpec
from .errors import ConfigError
from .probes import ProbeConfig
from .regularizers import REGULARIZER_TAGS, RegularizerKind
from .training import TrainConfig

OUTPUT_DIR_ENV = "SUBSPACELAB_OUTPUT_DIR"

SWEEP_METHODS = ("ce",) + REGULARIZER_TAGS
ABLATION_METHODS = ("l1", "cosine_margin", "energy_ratio",
                    "orthogonal_projection", "ccar_l2")
DEFAULT_NOISE_RATES = tuple(round(0.1 * i, 1) for i in range(10))


def _require(table: dict, section: str, key: str):
    if key not in table:
        raise ConfigError(f"[{section}] is missing required key {key!r}")
    return table[key]


def _typed(section: str, key: str, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"[{section}] {key} must be an integer")
    if not isinstance(value, kind):
        raise ConfigError(
            f"[{section}] {key} has type {type(value).__name__}, expected {kind.__name__}"
        )
    return value


def _check_keys(table: dict, section: str, allowed):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def _number_list(section: str, key: str, value, kind):
    if not isinstance(value, list):
        raise ConfigError(f"[{section}] {key} must be a list")
    return [_typed(section, key, v, kind) for v in value]


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "blobs"
    classes: int = 10
    input_dim: int = 32
    per_class: int = 500
    separation: float = 6.0
    within_sigma: float = 1.0
    seed: int = 2024
    images: str | None = None
    labels: str | None = None
    limit: int | None = None
    num_classes_hint: int | None = None


@dataclass(frozen=True)
class TheoryConfig:
    trials: int = 100_000
    seed: int = 7
    dims: tuple = (50, 100, 200)
    classes: tuple = (5, 10)
    taus: tuple = (0.25, 0.5)
    sigma2: float = 1.0


@dataclass(frozen=True)
class DiagnosticsConfig:
    ccr_top_k: int = 10
    spectrum_top_k: int = 50
    emit_heatmap: bool = True
    emit_csv: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    train: TrainConfig
    sweep_noise_rates: tuple
    sweep_methods: tuple
    probes: tuple
    attacks: tuple
    diagnostics: DiagnosticsConfig
    theory: TheoryConfig
    output_dir: Path
    checkpoint: Path
    seeds: tuple
    workers: int
    raw_bytes: bytes = field(repr=False, default=b"")


def _parse_dataset(table: dict) -> DatasetConfig:
    kind = _typed("dataset", "kind", table.get("kind", "blobs"), str)
    if kind == "blobs":
        _check_keys(table, "dataset", ("kind", "classes", "input_dim", "per_class",
                                       "separation", "within_sigma", "seed"))
        return DatasetConfig(
            kind="blobs",
            classes=_typed("dataset", "classes", table.get("classes", 10), int),
            input_dim=_typed("dataset", "input_dim", table.get("input_dim", 32), int),
            per_class=_typed("dataset", "per_class", table.get("per_class", 500), int),
            separation=_typed("dataset", "separation", table.get("separation", 6.0), float),
            within_sigma=_typed("dataset", "within_sigma", table.get("within_sigma", 1.0), float),
            seed=_typed("dataset", "seed", table.get("seed", 2024), int),
        )
    if kind == "idx":
        _check_keys(table, "dataset", ("kind", "images", "labels", "limit", "classes"))
        images = _typed("dataset", "images", _require(table, "dataset", "images"), str)
        labels = _typed("dataset", "labels", _require(table, "dataset", "labels"), str)
        for name, p in (("images", images), ("labels", labels)):
            if not Path(p).exists():
                raise ConfigError(f"[dataset] {name} path does not exist: {p}")
        return DatasetConfig(
            kind="idx",
            images=images,
            labels=labels,
            limit=_typed("dataset", "limit", table["limit"], int) if "limit" in table else None,
            num_classes_hint=(_typed("dataset", "classes", table["classes"], int)
                              if "classes" in table else None),
        )
    raise ConfigError(f"[dataset] kind must be 'blobs' or 'idx', got {kind!r}")


def _parse_train(table: dict, dataset: DatasetConfig) -> TrainConfig:
    allowed = ("feature_dim", "hidden", "epochs", "batch_size", "lr0",
               "weight_decay", "lambda", "regularizer", "margin", "ratio_eps",
               "centroid_momentum", "noise_rate", "seed")
    _check_keys(table, "train", allowed)
    tag = _typed("train", "regularizer", table.get("regularizer", "ccar_l2"), str)
    if tag not in REGULARIZER_TAGS:
        raise ConfigError(
            f"[train] regularizer must be one of {REGULARIZER_TAGS}, got {tag!r}"
        )
    kind = RegularizerKind(
        tag=tag,
        margin=_typed("train", "margin", table.get("margin", 0.2), float),
        eps=_typed("train", "ratio_eps", table.get("ratio_eps", 1e-8), float),
    )
    if dataset.kind == "blobs":
        input_dim, num_classes = dataset.input_dim, dataset.classes
    else:
        # IDX dims are known only after loading; filled in by the command.
        input_dim, num_classes = -1, -1
    return TrainConfig(
        input_dim=input_dim,
        feature_dim=_typed("train", "feature_dim", table.get("feature_dim", 64), int),
        num_classes=num_classes,
        hidden=tuple(_number_list("train", "hidden", table.get("hidden", [128]), int)),
        epochs=_typed("train", "epochs", table.get("epochs", 40), int),
        batch_size=_typed("train", "batch_size", table.get("batch_size", 256), int),
        lr0=_typed("train", "lr0", table.get("lr0", 0.1), float),
        weight_decay=_typed("train", "weight_decay", table.get("weight_decay", 5e-4), float),
        reg_strength=_typed("train", "lambda", table.get("lambda", 3.0), float),
        regularizer=kind,
        noise_rate=_typed("train", "noise_rate", table.get("noise_rate", 0.0), float),
        seed=_typed("train", "seed", table.get("seed", 0), int),
        centroid_momentum=_typed("train", "centroid_momentum",
                                 table.get("centroid_momentum", 0.9), float),
    )


def _parse_probe(table: dict, index: int) -> ProbeConfig:
    section = f"probes[{index}]"
    _check_keys(table, section, ("kind", "hidden", "epochs", "lr0", "batch_size"))
    return ProbeConfig(
        kind=_typed(section, "kind", table.get("kind", "linear"), str),
        hidden=_typed(section, "hidden", table["hidden"], int) if "hidden" in table else None,
        epochs=_typed(section, "epochs", table.get("epochs", 50), int),
        lr0=_typed(section, "lr0", table.get("lr0", 0.1), float),
        batch_size=_typed(section, "batch_size", table.get("batch_size", 256), int),
    )


def _parse_attack(table: dict, index: int) -> AttackSpec:
    section = f"attacks[{index}]"
    _check_keys(table, section, ("kind", "epsilon", "steps", "alpha",
                                 "clamp_lo", "clamp_hi", "trials", "seed"))
    return AttackSpec(
        kind=_typed(section, "kind", _require(table, section, "kind"), str),
        epsilon=_typed(section, "epsilon", _require(table, section, "epsilon"), float),
        steps=_typed(section, "steps", table.get("steps", 20), int),
        alpha=_typed(section, "alpha", table["alpha"], float) if "alpha" in table else None,
        clamp_lo=_typed(section, "clamp_lo", table["clamp_lo"], float) if "clamp_lo" in table else None,
        clamp_hi=_typed(section, "clamp_hi", table["clamp_hi"], float) if "clamp_hi" in table else None,
        trials=_typed(section, "trials", table.get("trials", 1), int),
        seed=_typed(section, "seed", table.get("seed", 0), int),
    )


def _parse_sweep(table: dict):
    _check_keys(table, "sweep", ("noise_rates", "methods"))
    rates = tuple(_number_list("sweep", "noise_rates",
                               table.get("noise_rates", list(DEFAULT_NOISE_RATES)), float))
    methods = table.get("methods", ["ce", "ccar_l2"])
    if not isinstance(methods, list):
        raise ConfigError("[sweep] methods must be a list")
    for m in methods:
        if m not in SWEEP_METHODS:
            raise ConfigError(f"[sweep] unknown method {m!r}; expected one of {SWEEP_METHODS}")
    for r in rates:
        if not 0.0 <= r <= 1.0:
            raise ConfigError(f"[sweep] noise rate {r} outside [0, 1]")
    return rates, tuple(methods)


def _parse_theory(table: dict) -> TheoryConfig:
    _check_keys(table, "theory", ("trials", "seed", "dims", "classes", "taus", "sigma2"))
    return TheoryConfig(
        trials=_typed("theory", "trials", table.get("trials", 100_000), int),
        seed=_typed("theory", "seed", table.get("seed", 7), int),
        dims=tuple(_number_list("theory", "dims", table.get("dims", [50, 100, 200]), int)),
        classes=tuple(_number_list("theory", "classes", table.get("classes", [5, 10]), int)),
        taus=tuple(_number_list("theory", "taus", table.get("taus", [0.25, 0.5]), float)),
        sigma2=_typed("theory", "sigma2", table.get("sigma2", 1.0), float),
    )


def _parse_diagnostics(table: dict) -> DiagnosticsConfig:
    _check_keys(table, "diagnostics", ("ccr_top_k", "spectrum_top_k",
                                       "emit_heatmap", "emit_csv"))
    return DiagnosticsConfig(
        ccr_top_k=_typed("diagnostics", "ccr_top_k", table.get("ccr_top_k", 10), int),
        spectrum_top_k=_typed("diagnostics", "spectrum_top_k",
                              table.get("spectrum_top_k", 50), int),
        emit_heatmap=_typed("diagnostics", "emit_heatmap",
                            table.get("emit_heatmap", True), bool),
        emit_csv=_typed("diagnostics", "emit_csv", table.get("emit_csv", True), bool),
    )


TOP_LEVEL_KEYS = ("output_dir", "seeds", "workers", "checkpoint", "dataset",
                  "train", "sweep", "probes", "attacks", "diagnostics", "theory")


def load_config(path, seed_override: int | None = None,
                output_dir_override: str | None = None) -> ExperimentConfig:
    """Parse and validate one experiment TOML file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    _check_keys(doc, "top level", TOP_LEVEL_KEYS)

    dataset = _parse_dataset(_typed("top level", "dataset", doc.get("dataset", {}), dict))
    train = _parse_train(_typed("top level", "train", doc.get("train", {}), dict), dataset)
    rates, methods = _parse_sweep(_typed("top level", "sweep", doc.get("sweep", {}), dict))

    probe_tables = doc.get("probes", [{"kind": "linear"}])
    if not isinstance(probe_tables, list):
        raise ConfigError("probes must be an array of tables")
    probes = tuple(_parse_probe(t, i) for i, t in enumerate(probe_tables))

    attack_tables = doc.get("attacks", [])
    if not isinstance(attack_tables, list):
        raise ConfigError("attacks must be an array of tables")
    attacks = tuple(_parse_attack(t, i) for i, t in enumerate(attack_tables))

    diagnostics = _parse_diagnostics(
        _typed("top level", "diagnostics", doc.get("diagnostics", {}), dict))
    theory = _parse_theory(_typed("top level", "theory", doc.get("theory", {}), dict))

    seeds = tuple(_number_list("top level", "seeds", doc.get("seeds", [0]), int))
    workers = _typed("top level", "workers", doc.get("workers", 1), int)
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    out = output_dir_override or doc.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV)
    if out is None:
        raise ConfigError(
            f"no output_dir in config, no --output-dir flag, and ${OUTPUT_DIR_ENV} unset"
        )
    output_dir = Path(_typed("top level", "output_dir", out, str))

    if seed_override is not None:
        train = TrainConfig(**{**_asdict_train(train), "seed": seed_override})
        seeds = (seed_override,)

    checkpoint = doc.get("checkpoint")
    checkpoint = Path(checkpoint) if checkpoint else output_dir / "checkpoint.bin"

    return ExperimentConfig(
        dataset=dataset, train=train, sweep_noise_rates=rates,
        sweep_methods=methods, probes=probes, attacks=attacks,
        diagnostics=diagnostics, theory=theory, output_dir=output_dir,
        checkpoint=checkpoint, seeds=seeds, workers=workers, raw_bytes=raw,
    )


def _asdict_train(cfg: TrainConfig) -> dict:
    return {
        "input_dim": cfg.input_dim,
        "feature_dim": cfg.feature_dim,
        "num_classes": cfg.num_classes,
        "hidden": cfg.hidden,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr0": cfg.lr0,
        "weight_decay": cfg.weight_decay,
        "reg_strength": cfg.reg_strength,
        "regularizer": cfg.regularizer,
        "noise_rate": cfg.noise_rate,
        "seed": cfg.seed,
        "centroid_momentum": cfg.centroid_momentum,
    }


def build_dataset(cfg: DatasetConfig):
    from .data import generate_blobs, load_idx

    if cfg.kind == "blobs":
        return generate_blobs(cfg.classes, cfg.input_dim, cfg.per_class,
                              cfg.separation, cfg.within_sigma, cfg.seed)
    return load_idx(cfg.images, cfg.labels, limit=cfg.limit,
                    num_classes=cfg.num_classes_hint)


def resolve_train_config(train: TrainConfig, dataset) -> TrainConfig:
    """Fill input/class dims discovered from a loaded dataset (IDX case)."""
    if train.input_dim == dataset.input_dim and train.num_classes == dataset.num_classes:
        return train
    return TrainConfig(**{**_asdict_train(train),
                          "input_dim": dataset.input_dim,
                          "num_classes": dataset.num_classes})
