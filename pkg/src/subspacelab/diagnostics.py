"""Geometric diagnostics computed on a batch of penultimate features.

The battery covers per-sample sparsity, per-neuron class consistency,
scatter-trace separability, dimension-wise correlation structure, the
activation/eigenvalue spectra, and per-class cluster radii. Everything is
a pure function of an immutable FeatureBatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllDead,
    DegenerateScatter,
    InsufficientSamples,
    NoLiveNeurons,
    NonFiniteInput,
    ShapeMismatch,
    SingleClass,
)
from .partition import SubspacePartition

# A feature entry below this magnitude counts as inactive.
SPARSITY_EPS = 1e-5
# A dimension whose activation variance is below this is a dead neuron.
DEAD_VARIANCE_EPS = 1e-12


@dataclass(frozen=True)
class FeatureBatch:
    """Penultimate activations (N x D) with aligned labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        f, y = self.features, self.labels
        if f.ndim != 2 or f.shape[0] < 1:
            raise ShapeMismatch(f"features must be (N>=1, D), got {f.shape}")
        if y.shape != (f.shape[0],):
            raise ShapeMismatch(f"labels shape {y.shape} != ({f.shape[0]},)")
        if not np.isfinite(f).all():
            raise NonFiniteInput("features contain NaN or Inf")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def feature_sparsity(fb: FeatureBatch) -> float:
    """Mean fraction of entries with magnitude below SPARSITY_EPS."""
    return float((np.abs(fb.features) < SPARSITY_EPS).mean())


def activated_dims(fb: FeatureBatch) -> np.ndarray:
    """Per-sample count of entries with magnitude >= SPARSITY_EPS."""
    return (np.abs(fb.features) >= SPARSITY_EPS).sum(axis=1)


def class_consistency_rate(fb: FeatureBatch, partition: SubspacePartition,
                           top_k: int = 10) -> float:
    """Mean over live, class-owned neurons of the fraction of each neuron's
    top-K activating samples whose label owns that neuron's block.

    Remainder dimensions (owned by no class) are skipped; ties in
    activation are broken by ascending sample index.
    """
    h, y = fb.features, fb.labels
    if fb.n < top_k:
        raise InsufficientSamples(f"need at least {top_k} samples, have {fb.n}")
    if fb.dim != partition.feature_dim:
        raise ShapeMismatch(
            f"feature width {fb.dim} != partition dim {partition.feature_dim}"
        )
    owned = partition.num_classes * partition.block_size
    variances = h.var(axis=0)
    scores = []
    for j in range(owned):
        if variances[j] <= DEAD_VARIANCE_EPS:
            continue
        owner = j // partition.block_size
        top = np.argsort(-h[:, j], kind="stable")[:top_k]
        scores.append(float((y[top] == owner).mean()))
    if not scores:
        raise NoLiveNeurons("every class-owned neuron has zero variance")
    return float(np.mean(scores))


def scatter_traces(fb: FeatureBatch):
    """Traces of the class-prior-weighted between/within scatter matrices."""
    h, y = fb.features, fb.labels
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClass("scatter ratio needs at least two classes")
    n = fb.n
    mu = h.mean(axis=0)
    tr_b = 0.0
    tr_w = 0.0
    for c in classes:
        hc = h[y == c]
        w = hc.shape[0] / n
        mu_c = hc.mean(axis=0)
        tr_b += w * float(((mu_c - mu) ** 2).sum())
        tr_w += w * float(((hc - mu_c) ** 2).sum() / hc.shape[0])
    return tr_b, tr_w


def fisher_ratio(fb: FeatureBatch) -> float:
    """Tr(between-class scatter) / Tr(within-class scatter)."""
    tr_b, tr_w = scatter_traces(fb)
    if tr_w <= 1e-12:
        raise DegenerateScatter(f"within-class scatter trace {tr_w} ~ 0")
    return tr_b / tr_w


def correlation_matrix(fb: FeatureBatch):
    """Absolute cosine similarity between live activation columns.

    Dead dimensions (activation variance ~ 0) are excluded. Rows/columns
    follow ascending feature index, which is class-block order by
    construction. Returns (matrix, live_indices).
    """
    h = fb.features
    live = np.flatnonzero(h.var(axis=0) > DEAD_VARIANCE_EPS)
    if live.size == 0:
        raise AllDead("no live feature dimension")
    cols = h[:, live]
    gram = cols.T @ cols
    norms = np.sqrt(np.diag(gram))
    cm = np.abs(gram) / np.outer(norms, norms)
    cm = np.clip((cm + cm.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(cm, 1.0)
    return cm, live


def spectrum_stats(fb: FeatureBatch, top_k: int = 50):
    """Largest covariance eigenvalues and per-dimension mean activations.

    Returns (eigenvalues, mean_activations), each sorted descending and
    truncated to top_k entries.
    """
    if fb.n < 2:
        raise InsufficientSamples("spectrum needs at least 2 samples")
    h = fb.features
    centered = h - h.mean(axis=0)
    cov = centered.T @ centered / fb.n
    eigs = np.linalg.eigvalsh(cov)[::-1][:top_k]
    means = np.sort(h.mean(axis=0))[::-1][:top_k]
    return eigs, means


def cluster_radii(fb: FeatureBatch) -> dict:
    """Per class: mean Euclidean distance of its samples to the class mean."""
    h, y = fb.features, fb.labels
    out = {}
    for c in np.unique(y):
        hc = h[y == c]
        mu_c = hc.mean(axis=0)
        out[int(c)] = float(np.linalg.norm(hc - mu_c, axis=1).mean())
    return out


@dataclass
class DiagnosticsReport:
    """The full metric battery for one feature set."""

    sparsity: float
    ccr: float
    fisher_ratio: float
    correlation: np.ndarray
    live_dims: np.ndarray
    activated_dims: np.ndarray
    eigenvalues: np.ndarray
    ea_values: np.ndarray
    cluster_radii: dict
    trace_sb: float
    trace_sw: float

    def to_jsonable(self) -> dict:
        return {
            "sparsity": float(self.sparsity),
            "ccr": float(self.ccr),
            "fisher_ratio": float(self.fisher_ratio),
            "live_dims": [int(j) for j in self.live_dims],
            "correlation": [[float(v) for v in row] for row in self.correlation],
            "activated_dims": [int(v) for v in self.activated_dims],
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "ea_values": [float(v) for v in self.ea_values],
            "cluster_radii": {str(k): float(v) for k, v in self.cluster_radii.items()},
            "scatter": {"trace_Sb": float(self.trace_sb),
                        "trace_Sw": float(self.trace_sw)},
        }


def compute_report(fb: FeatureBatch, partition: SubspacePartition,
                   ccr_top_k: int = 10, spectrum_top_k: int = 50) -> DiagnosticsReport:
    """Run the whole battery on one feature batch."""
    cm, live = correlation_matrix(fb)
    eigs, means = spectrum_stats(fb, top_k=spectrum_top_k)
    tr_b, tr_w = scatter_traces(fb)
    if tr_w <= 1e-12:
        raise DegenerateScatter(f"within-class scatter trace {tr_w} ~ 0")
    return DiagnosticsReport(
        sparsity=feature_sparsity(fb),
        ccr=class_consistency_rate(fb, partition, top_k=ccr_top_k),
        fisher_ratio=tr_b / tr_w,
        correlation=cm,
        live_dims=live,
        activated_dims=activated_dims(fb),
        eigenvalues=eigs,
        ea_values=means,
        cluster_radii=cluster_radii(fb),
        trace_sb=tr_b,
        trace_sw=tr_w,
    )
