"""Desk-scale lab for class-conditional subspace regularization.

Trains small dense networks whose penultimate features are pushed into
per-class index blocks, measures the resulting feature geometry, evaluates
input-perturbation robustness, and verifies the supporting theory by
Monte Carlo.
"""

from .attacks import AttackSpec, certified_check, fgsm, gaussian_eval, geometric_margin, pgd
from .data import Dataset, generate_blobs, load_idx
from .diagnostics import (
    DiagnosticsReport,
    FeatureBatch,
    activated_dims,
    class_consistency_rate,
    cluster_radii,
    compute_report,
    correlation_matrix,
    feature_sparsity,
    fisher_ratio,
    spectrum_stats,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import Model, cosine_lr, cross_entropy, forward, init_model, sgd_step
from .partition import ClassMask, SubspacePartition, build_partition, forbidden_mask, project
from .probes import ProbeConfig, probe, retrieval_map
from .regularizers import (
    ClassCentroids,
    RegularizerKind,
    ccar_l2,
    cosine_margin,
    energy_ratio,
    l1_penalty,
    orthogonal_projection,
    update_centroids,
)
from .theory import (
    LemmaBoundParams,
    lemma_tail_check,
    tail_rate_constant,
    trace_identity_check,
    verification_suite,
)
from .training import TrainConfig, TrainHistory, extract_features, inject_label_noise, train

__version__ = "0.1.0"
