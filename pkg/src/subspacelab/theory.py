"""Monte-Carlo verification of the three theoretical guarantees.

1. Trace identity: the expected block-energy penalty, rescaled by the
   forbidden-region size, equals Tr(P Sigma) + ||P mu||^2 for Gaussian
   class-conditional features (P the forbidden-index projector).
2. Certified margin: random feature perturbations strictly below the
   geometric margin never flip a block-aligned linear head.
3. Chi-square tail bound: the probability that isotropic noise of total
   energy sigma^2 puts more than tau of it into one class block is at
   most exp(-D * A) with a closed-form rate constant A.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConditionViolated, MinTrials, TheoryCheckFailed
from .partition import SubspacePartition, build_partition
from .regularizers import ccar_l2

MIN_TAIL_TRIALS = 10_000


def tail_rate_constant(num_classes: int, ratio: float) -> float:
    """Rate constant A as a function of C and the ratio C*tau/sigma^2.

    A = (ratio - 1 - ln(ratio)) / (2C); zero exactly at ratio == 1 and
    strictly positive elsewhere on ratio > 0.
    """
    if ratio <= 0:
        raise ConditionViolated("ratio C*tau/sigma^2 must be positive")
    return (ratio - 1.0 - math.log(ratio)) / (2.0 * num_classes)


@dataclass(frozen=True)
class LemmaBoundParams:
    """Parameters of one tail-bound cell."""

    dim: int
    num_classes: int
    sigma2: float
    tau: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ConditionViolated("sigma2 must be > 0")

    @property
    def ratio(self) -> float:
        return self.num_classes * self.tau / self.sigma2

    @property
    def rate_constant(self) -> float:
        return tail_rate_constant(self.num_classes, self.ratio)

    @property
    def bound(self) -> float:
        return math.exp(-self.dim * self.rate_constant)

    @property
    def condition_holds(self) -> bool:
        return self.tau > self.sigma2 / self.num_classes


@dataclass(frozen=True)
class TailCheckResult:
    empirical: float
    bound: float
    stderr: float
    trials: int

    @property
    def satisfied(self) -> bool:
        return self.empirical <= self.bound + 3.0 * self.stderr


def lemma_tail_check(params: LemmaBoundParams, trials: int,
                     seed=0) -> TailCheckResult:
    """Empirical tail of the per-block noise energy versus the bound.

    Draws noise ~ N(0, (sigma^2 / D) I_D), measures how often the energy
    restricted to one block of size D // C reaches tau, and checks the
    result against exp(-D * A) plus three Monte-Carlo standard errors.
    Raises TheoryCheckFailed if the bound is exceeded.
    """
    if trials < MIN_TAIL_TRIALS:
        raise MinTrials(f"need at least {MIN_TAIL_TRIALS} trials, got {trials}")
    if not params.condition_holds:
        raise ConditionViolated(
            f"tau={params.tau} must exceed sigma2/C={params.sigma2 / params.num_classes}"
        )
    d, c = params.dim, params.num_classes
    k = d // c
    scale = math.sqrt(params.sigma2 / d)
    rng = np.random.default_rng(seed)

    hits = 0
    done = 0
    chunk = max(1, 20_000_000 // max(d, 1))
    while done < trials:
        m = min(chunk, trials - done)
        noise = rng.normal(0.0, scale, size=(m, d))
        energy = (noise[:, :k] ** 2).sum(axis=1)
        hits += int((energy >= params.tau).sum())
        done += m

    empirical = hits / trials
    stderr = math.sqrt(empirical * (1.0 - empirical) / trials)
    result = TailCheckResult(empirical=empirical, bound=params.bound,
                             stderr=stderr, trials=trials)
    if not result.satisfied:
        raise TheoryCheckFailed(
            f"empirical tail {empirical} > bound {params.bound} "
            f"+ 3*stderr {3 * stderr} (D={d}, C={c}, tau={params.tau})"
        )
    return result


@dataclass(frozen=True)
class TraceIdentityResult:
    mc_value: float
    analytic_value: float

    @property
    def rel_error(self) -> float:
        return abs(self.mc_value - self.analytic_value) / abs(self.analytic_value)


def trace_identity_check(partition: SubspacePartition, class_id: int,
                         mu: np.ndarray, cov: np.ndarray, trials: int,
                         seed=0) -> TraceIdentityResult:
    """Monte-Carlo expectation of the rescaled block-energy penalty versus
    the closed form Tr(P Sigma) + ||P mu||^2.

    The MC side routes through the actual penalty implementation so the
    two values come from independent paths.
    """
    d = partition.feature_dim
    mu = np.asarray(mu, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(cov)
    samples = mu + rng.standard_normal((trials, d)) @ chol.T
    labels = np.full(trials, int(class_id), dtype=np.int64)

    loss, _ = ccar_l2(samples, labels, partition)
    mc = loss * partition.forbidden_size

    mask = np.zeros(d)
    for j in range(d):
        if j not in partition.active_sets[int(class_id)]:
            mask[j] = 1.0
    analytic = float((np.diag(cov) * mask).sum() + ((mu * mask) ** 2).sum())
    return TraceIdentityResult(mc_value=mc, analytic_value=analytic)


def block_aligned_fixture(feature_dim: int, num_classes: int, class_id: int,
                          seed=0):
    """Deterministic bias-free fixture for margin certification.

    Classifier rows live strictly inside their own blocks with positive
    entries; the feature vector lives inside class_id's block, so the
    correct-class signal is strictly positive.
    """
    partition = build_partition(feature_dim, num_classes)
    k = partition.block_size
    rng = np.random.default_rng(seed)
    w = np.zeros((num_classes, feature_dim))
    for c in range(num_classes):
        w[c, c * k:(c + 1) * k] = rng.uniform(0.5, 1.5, size=k)
    h = np.zeros(feature_dim)
    h[class_id * k:(class_id + 1) * k] = rng.uniform(0.5, 1.5, size=k)
    return partition, w, h


def verification_suite(trials: int = 100_000, seed: int = 7,
                       dims=(50, 100, 200), classes=(5, 10),
                       taus=(0.25, 0.5), sigma2: float = 1.0):
    """Run every theory check; returns a list of result dicts.

    Each dict has a name, a status of "pass" / "fail" / "skip" (skip only
    for tail cells whose margin condition fails), and the measured values.
    """
    from .attacks import certified_check, directed_attack_succeeds, geometric_margin

    if trials < MIN_TAIL_TRIALS:
        raise MinTrials(f"need at least {MIN_TAIL_TRIALS} trials, got {trials}")
    checks = []

    spot = tail_rate_constant(2, math.e)
    expected = (math.e - 2.0) / 4.0
    checks.append({
        "name": "rate_constant_spot",
        "status": "pass" if abs(spot - expected) < 1e-6 else "fail",
        "value": spot,
        "expected": expected,
    })

    partition = build_partition(20, 4)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((20, 20))
    cov = a @ a.T / 20.0 + 0.5 * np.eye(20)
    class_id = 1
    k = partition.block_size
    mu_aligned = np.zeros(20)
    mu_aligned[class_id * k:(class_id + 1) * k] = rng.uniform(0.5, 1.5, size=k)
    mu_general = rng.uniform(-1.0, 1.0, size=20)
    for label, mu in (("aligned_mean", mu_aligned), ("general_mean", mu_general)):
        res = trace_identity_check(partition, class_id, mu, cov, trials, seed=seed)
        checks.append({
            "name": f"trace_identity_{label}",
            "status": "pass" if res.rel_error < 0.02 else "fail",
            "mc": res.mc_value,
            "analytic": res.analytic_value,
            "rel_error": res.rel_error,
        })

    _, w, h = block_aligned_fixture(20, 4, class_id, seed=seed)
    tau = geometric_margin(w, h, class_id)
    zero_viol = certified_check(w, h, class_id, 1000, 0.0, seed=seed)
    checks.append({
        "name": "certified_zero_perturbation",
        "status": "pass" if zero_viol == 0 else "fail",
        "violations": zero_viol,
    })
    sub_viol = certified_check(w, h, class_id, trials, 0.99 * tau, seed=seed)
    checks.append({
        "name": "certified_below_margin",
        "status": "pass" if sub_viol == 0 else "fail",
        "violations": sub_viol,
        "tau": tau,
    })
    flipped = directed_attack_succeeds(w, h, class_id, 10.0 * tau)
    checks.append({
        "name": "directed_above_margin",
        "status": "pass" if flipped else "fail",
        "attack_succeeded": flipped,
    })

    for d in dims:
        for c in classes:
            for tau_cell in taus:
                params = LemmaBoundParams(dim=d, num_classes=c,
                                          sigma2=sigma2, tau=tau_cell)
                name = f"tail_bound_D{d}_C{c}_tau{tau_cell}"
                if not params.condition_holds:
                    checks.append({"name": name, "status": "skip",
                                   "reason": "tau <= sigma2/C"})
                    continue
                try:
                    res = lemma_tail_check(params, trials, seed=seed)
                    checks.append({
                        "name": name, "status": "pass",
                        "empirical": res.empirical, "bound": res.bound,
                        "stderr": res.stderr,
                    })
                except TheoryCheckFailed as exc:
                    checks.append({"name": name, "status": "fail",
                                   "detail": str(exc)})
    return checks
