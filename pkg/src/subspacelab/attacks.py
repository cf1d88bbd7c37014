"""Input-perturbation evaluation: Gaussian noise, FGSM, PGD, and the
feature-space geometric margin with its brute-force certification check.

Attacks operate in the model's input space. Clamp bounds are per-dimension
boxes (typically the [min, max] of the training data); the L-infinity ball
projection in PGD is exact coordinate-wise clipping around the clean input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateWeights, NonFiniteGradient
from .nn import Model, backward, cross_entropy, forward

ATTACK_KINDS = ("gaussian", "fgsm", "pgd")


@dataclass(frozen=True)
class AttackSpec:
    """One attack configuration row.

    epsilon is the L-infinity budget for fgsm/pgd and the noise sigma for
    gaussian. alpha defaults to epsilon / 4 when unset. trials only applies
    to gaussian (number of independent noise draws averaged).
    """

    kind: str
    epsilon: float
    steps: int = 20
    alpha: float | None = None
    clamp_lo: float | None = None
    clamp_hi: float | None = None
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.kind == "pgd":
            if self.epsilon == 0:
                raise ConfigError("pgd needs epsilon > 0")
            a = self.step_size
            if not 0 < a <= self.epsilon:
                raise ConfigError("pgd needs 0 < alpha <= epsilon")

    @property
    def step_size(self) -> float:
        return self.epsilon / 4.0 if self.alpha is None else self.alpha


def _clamp(x: np.ndarray, lo, hi) -> np.ndarray:
    if lo is not None:
        x = np.maximum(x, lo)
    if hi is not None:
        x = np.minimum(x, hi)
    return x


def _effective_box(x_clean: np.ndarray, lo, hi):
    """Widen the clamp box to contain each clean coordinate.

    Image attacks clamp to a range that contains every sample by
    construction; with data-derived boxes a held-out point can start
    outside, and clamping must never move the unperturbed input.
    """
    lo_eff = None if lo is None else np.minimum(lo, x_clean)
    hi_eff = None if hi is None else np.maximum(hi, x_clean)
    return lo_eff, hi_eff


def input_gradient(model: Model, x, y) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the input."""
    _, z, tape = forward(model, x)
    _, dz = cross_entropy(z, y)
    grads = backward(model, tape, dz)
    g = grads.d_input
    if not np.isfinite(g).all():
        raise NonFiniteGradient("input gradient contains NaN or Inf")
    return g


def fgsm(model: Model, x, y, epsilon: float, clamp_lo=None, clamp_hi=None):
    """Single-step sign attack: clamp(x + eps * sign(grad_x CE))."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = _effective_box(x, clamp_lo, clamp_hi)
    g = input_gradient(model, x, y)
    return _clamp(x + epsilon * np.sign(g), lo, hi)


def pgd(model: Model, x, y, epsilon: float, alpha: float, steps: int,
        clamp_lo=None, clamp_hi=None, rng=None, random_start: bool = True):
    """Iterated sign attack with exact L-infinity ball projection.

    Starts uniformly inside the epsilon-ball around x (unless
    random_start=False), then repeats: ascend by alpha * sign(grad),
    clamp to the box, project back into the ball.
    """
    if alpha <= 0 or alpha > epsilon:
        raise ConfigError("pgd needs 0 < alpha <= epsilon")
    x = np.asarray(x, dtype=np.float64)
    lo, hi = _effective_box(x, clamp_lo, clamp_hi)
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if random_start:
        x_adv = x + rng.uniform(-epsilon, epsilon, size=x.shape)
        x_adv = _clamp(x_adv, lo, hi)
    else:
        x_adv = x.copy()
    for _ in range(steps):
        g = input_gradient(model, x_adv, y)
        x_adv = _clamp(x_adv + alpha * np.sign(g), lo, hi)
        x_adv = x + np.clip(x_adv - x, -epsilon, epsilon)
    return x_adv


def gaussian_eval(model: Model, x, y, sigma: float, trials: int = 1,
                  seed=0) -> float:
    """Mean accuracy under additive isotropic Gaussian input noise."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    acc = 0.0
    for _ in range(trials):
        noisy = x + rng.normal(0.0, sigma, size=x.shape) if sigma > 0 else x
        _, z, _ = forward(model, noisy)
        acc += float((z.argmax(axis=1) == y).mean())
    return acc / trials


def geometric_margin(weights: np.ndarray, h: np.ndarray, y: int) -> float:
    """Feature-space margin: min over k != y of (w_y . h) / ||w_y - w_k||.

    Bias terms are deliberately excluded; certification fixtures use
    zero-bias heads.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 2:
        raise DegenerateWeights("margin needs a (C>=2, D) weight matrix")
    y = int(y)
    others = np.delete(np.arange(w.shape[0]), y)
    diffs = w[y] - w[others]
    norms = np.linalg.norm(diffs, axis=1)
    if (norms <= 1e-12).any():
        raise DegenerateWeights("two classifier rows coincide")
    signal = float(w[y] @ np.asarray(h, dtype=np.float64))
    return float((signal / norms).min())


def certified_check(weights: np.ndarray, h: np.ndarray, y: int,
                    trials: int, delta_norm: float, seed=0) -> int:
    """Count misclassifications under random perturbations of fixed L2 norm.

    Samples `trials` directions uniformly on the sphere, scales them to
    delta_norm, and counts argmax flips of the (bias-free) linear head.
    """
    w = np.asarray(weights, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    rng = np.random.default_rng(seed)
    violations = 0
    chunk = 20_000
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        dirs = rng.standard_normal((m, h.shape[0]))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        logits = (h + delta_norm * dirs) @ w.T
        violations += int((logits.argmax(axis=1) != y).sum())
        done += m
    return violations


def directed_attack_succeeds(weights: np.ndarray, h: np.ndarray, y: int,
                             delta_norm: float) -> bool:
    """Perturb along (w_k - w_y) for the margin-minimizing k; True if the
    prediction flips."""
    w = np.asarray(weights, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    others = np.delete(np.arange(w.shape[0]), int(y))
    diffs = w[others] - w[int(y)]
    norms = np.linalg.norm(diffs, axis=1)
    ratios = (w[int(y)] @ h) / norms
    k = others[int(np.argmin(ratios))]
    direction = (w[k] - w[int(y)]) / np.linalg.norm(w[k] - w[int(y)])
    logits = w @ (h + delta_norm * direction)
    return int(logits.argmax()) != int(y)
