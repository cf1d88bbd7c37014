"""Noise-sweep and ablation protocols over (method, noise rate, seed) grids.

Each grid cell trains an encoder end to end on (possibly corrupted)
labels, freezes it, and linear-probes the features with clean labels:
probe training on the train split, accuracy reported on the held-out
split. Cells are independent and may run in parallel; assembly is sorted,
so results are identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import DatasetConfig, build_dataset, resolve_train_config
from .probes import ProbeConfig, probe
from .regularizers import RegularizerKind
from .training import TrainConfig, extract_features, train


@dataclass(frozen=True)
class CellResult:
    method: str
    noise_rate: float
    seed: int
    accuracy: float


def method_train_config(base: TrainConfig, method: str, noise_rate: float,
                        seed: int) -> TrainConfig:
    """Specialize the base config for one grid cell.

    Method "ce" zeroes the penalty strength; any regularizer tag keeps the
    base strength and swaps the penalty in.
    """
    if method == "ce":
        return replace(base, reg_strength=0.0, noise_rate=noise_rate, seed=seed)
    kind = RegularizerKind(tag=method, margin=base.regularizer.margin,
                           eps=base.regularizer.eps)
    return replace(base, regularizer=kind, noise_rate=noise_rate, seed=seed)


def run_cell(dataset_cfg: DatasetConfig, base_train: TrainConfig,
             probe_cfg: ProbeConfig, method: str, noise_rate: float,
             seed: int) -> CellResult:
    """Train one cell and linear-probe its frozen features (clean labels)."""
    dataset = build_dataset(dataset_cfg)
    base_train = resolve_train_config(base_train, dataset)
    cfg = method_train_config(base_train, method, noise_rate, seed)
    model, _ = train(cfg, dataset)

    x_tr, _, clean_tr = dataset.train()
    x_te, _, clean_te = dataset.test()
    fb_train = extract_features(model, x_tr, clean_tr)
    fb_test = extract_features(model, x_te, clean_te)
    acc = probe(fb_train, fb_test, probe_cfg, seed=seed)
    return CellResult(method=method, noise_rate=noise_rate, seed=seed,
                      accuracy=acc)


def _run_cell_args(args):
    return run_cell(*args)


def run_grid(dataset_cfg: DatasetConfig, base_train: TrainConfig,
             probe_cfg: ProbeConfig, methods, noise_rates, seeds,
             workers: int = 1):
    """All cells of methods x noise_rates x seeds, in deterministic order."""
    cells = [(dataset_cfg, base_train, probe_cfg, m, r, s)
             for m in methods for r in noise_rates for s in seeds]
    if workers <= 1:
        return [run_cell(*args) for args in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_run_cell_args, cells))
    return results


def aggregate_rows(results, methods, noise_rates):
    """Rows mirroring the noise-table layout: one row per rate, a
    (mean, std) column pair per method. std is the sample std (ddof=1)
    over seeds, 0.0 for a single seed."""
    by_cell = {}
    for res in results:
        by_cell.setdefault((res.method, res.noise_rate), []).append(res.accuracy)
    rows = []
    for rate in noise_rates:
        row = [rate]
        for method in methods:
            accs = np.array(by_cell[(method, rate)])
            row.append(float(accs.mean()))
            row.append(float(accs.std(ddof=1)) if accs.size > 1 else 0.0)
        rows.append(row)
    return rows


def grid_csv_header(methods):
    header = ["noise_rate"]
    for m in methods:
        header += [f"{m}_mean", f"{m}_std"]
    return header
