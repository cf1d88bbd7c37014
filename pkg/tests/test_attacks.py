import numpy as np
import pytest

from subspacelab.attacks import (
    AttackSpec,
    certified_check,
    directed_attack_succeeds,
    fgsm,
    gaussian_eval,
    geometric_margin,
    pgd,
)
from subspacelab.data import generate_blobs
from subspacelab.errors import ConfigError, DegenerateWeights
from subspacelab.nn import Model, cross_entropy, forward, init_model
from subspacelab.training import TrainConfig, train


def linear_model(weights):
    w = np.asarray(weights, dtype=np.float64)
    return Model(layers=[], classifier_w=w, classifier_b=np.zeros(w.shape[0]))


@pytest.fixture(scope="module")
def trained_setup():
    blobs = generate_blobs(num_classes=3, input_dim=8, per_class=80,
                           separation=5.0, within_sigma=1.0, seed=10)
    cfg = TrainConfig(input_dim=8, feature_dim=9, num_classes=3, hidden=(16,),
                      epochs=25, batch_size=64, reg_strength=3.0, seed=1)
    model, _ = train(cfg, blobs)
    x_te, y_te, _ = blobs.test()
    x_tr, _, _ = blobs.train()
    clamp = (x_tr.min(axis=0), x_tr.max(axis=0))
    return model, x_te, y_te, clamp


# --- attack spec validation ---

def test_attack_spec_invariants():
    AttackSpec(kind="fgsm", epsilon=0.0)
    spec = AttackSpec(kind="pgd", epsilon=0.4)
    assert spec.step_size == pytest.approx(0.1)  # alpha defaults to eps/4
    with pytest.raises(ConfigError):
        AttackSpec(kind="pgd", epsilon=0.1, alpha=0.2)  # alpha > eps
    with pytest.raises(ConfigError):
        AttackSpec(kind="pgd", epsilon=0.0)
    with pytest.raises(ConfigError):
        AttackSpec(kind="warp", epsilon=0.1)
    with pytest.raises(ConfigError):
        AttackSpec(kind="fgsm", epsilon=-1.0)


# --- fgsm ---

def test_fgsm_zero_epsilon_identity(trained_setup):
    model, x, y, clamp = trained_setup
    adv = fgsm(model, x, y, 0.0, *clamp)
    np.testing.assert_array_equal(adv, x)


def test_fgsm_linf_bound_and_saturation(trained_setup):
    model, x, y, _ = trained_setup
    eps = 0.05
    adv = fgsm(model, x, y, eps)  # no clamp: every nonzero-grad coord moves eps
    delta = np.abs(adv - x)
    assert delta.max() <= eps + 1e-15
    from subspacelab.attacks import input_gradient
    g = input_gradient(model, x, y)
    moved = delta[np.abs(g) > 0]
    assert np.allclose(moved, eps)


def test_fgsm_respects_clamp_box(trained_setup):
    # the box is widened per coordinate to include the clean value, so a
    # held-out point that starts outside is never moved by clamping alone
    model, x, y, clamp = trained_setup
    adv = fgsm(model, x, y, 10.0, *clamp)
    lo = np.minimum(clamp[0], x)
    hi = np.maximum(clamp[1], x)
    assert (adv >= lo - 1e-12).all() and (adv <= hi + 1e-12).all()


def test_fgsm_increases_ce_on_linear_model():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(4, 6))
    model = linear_model(w)
    x = rng.normal(size=(40, 6))
    y = rng.integers(0, 4, size=40)
    _, z0, _ = forward(model, x)
    base, _ = cross_entropy(z0, y)
    for eps in (0.01, 0.05, 0.2):
        adv = fgsm(model, x, y, eps)
        _, z1, _ = forward(model, adv)
        attacked, _ = cross_entropy(z1, y)
        assert attacked >= base


# --- pgd ---

def test_pgd_single_step_no_restart_equals_fgsm_at_alpha(trained_setup):
    model, x, y, clamp = trained_setup
    eps, alpha = 0.1, 0.025
    via_pgd = pgd(model, x, y, eps, alpha, steps=1, clamp_lo=clamp[0],
                  clamp_hi=clamp[1], random_start=False)
    via_fgsm = fgsm(model, x, y, alpha, *clamp)
    np.testing.assert_array_equal(via_pgd, via_fgsm)


def test_pgd_ball_constraint(trained_setup):
    model, x, y, clamp = trained_setup
    eps = 0.07
    adv = pgd(model, x, y, eps, eps / 4, steps=10, clamp_lo=clamp[0],
              clamp_hi=clamp[1], rng=0)
    assert np.abs(adv - x).max() <= eps + 1e-12


def test_pgd_projection_idempotent_on_feasible_points():
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(5, 4))
    eps = 0.3
    inside = x0 + rng.uniform(-eps, eps, size=x0.shape)
    projected = x0 + np.clip(inside - x0, -eps, eps)
    np.testing.assert_array_equal(projected, inside)


def test_pgd_at_least_as_strong_as_fgsm(trained_setup):
    model, x, y, clamp = trained_setup
    eps = 0.25
    adv_f = fgsm(model, x, y, eps, *clamp)
    adv_p = pgd(model, x, y, eps, eps / 4, steps=20, clamp_lo=clamp[0],
                clamp_hi=clamp[1], rng=0)

    def acc(inputs):
        _, z, _ = forward(model, inputs)
        return float((z.argmax(axis=1) == y).mean())

    assert acc(adv_p) <= acc(adv_f) + 0.02


def test_pgd_validates_step_size(trained_setup):
    model, x, y, _ = trained_setup
    with pytest.raises(ConfigError):
        pgd(model, x, y, 0.1, 0.5, steps=3)


# --- gaussian ---

def test_gaussian_zero_sigma_is_clean_accuracy(trained_setup):
    model, x, y, _ = trained_setup
    from subspacelab.training import evaluate_accuracy
    assert gaussian_eval(model, x, y, 0.0, trials=3, seed=0) == \
        evaluate_accuracy(model, x, y)


def test_gaussian_huge_sigma_hits_chance_level(trained_setup):
    model, x, y, _ = trained_setup
    acc = gaussian_eval(model, x, y, 1e4, trials=10, seed=0)
    assert abs(acc - 1.0 / 3.0) < 0.07


def test_gaussian_accuracy_non_increasing(trained_setup):
    model, x, y, _ = trained_setup
    accs = [gaussian_eval(model, x, y, s, trials=5, seed=0)
            for s in (0.0, 0.5, 1.5, 4.0)]
    for a, b in zip(accs, accs[1:]):
        assert b <= a + 0.02


# --- geometric margin ---

def test_margin_orthonormal_example():
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    tau = geometric_margin(w, np.array([1.0, 0.0]), 0)
    assert tau == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-12)


def test_margin_orthogonal_feature_is_zero():
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert geometric_margin(w, np.array([0.0, 2.0]), 0) == 0.0


def test_margin_homogeneous_in_feature_scale():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(4, 6))
    h = rng.normal(size=6)
    tau = geometric_margin(w, h, 1)
    assert geometric_margin(w, 3.5 * h, 1) == pytest.approx(3.5 * tau, rel=1e-12)


def test_margin_monotone_in_signal():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(4, 6))
    h = rng.normal(size=6)
    if w[1] @ h < 0:
        h = -h
    tau = geometric_margin(w, h, 1)
    boosted = h + 0.5 * w[1]  # increases w_y . h, denominators unchanged
    assert geometric_margin(w, boosted, 1) >= tau


def test_margin_degenerate_weights():
    w = np.ones((2, 3))
    with pytest.raises(DegenerateWeights):
        geometric_margin(w, np.ones(3), 0)
    with pytest.raises(DegenerateWeights):
        geometric_margin(np.ones((1, 3)), np.ones(3), 0)


def test_certified_check_zero_perturbation():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(3, 6))
    h = w[1] * 2.0
    assert certified_check(w, h, 1, trials=500, delta_norm=0.0, seed=0) == 0


def test_directed_attack_beyond_margin_flips():
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    h = np.array([1.0, 0.0])
    tau = geometric_margin(w, h, 0)
    assert directed_attack_succeeds(w, h, 0, 10.0 * tau)
    assert not directed_attack_succeeds(w, h, 0, 0.5 * tau)
