"""Shared test utilities: independent finite-difference oracles."""

import numpy as np


def finite_diff_grad(f, x, step=1e-5):
    """Central-difference gradient of a scalar function at x (in place
    perturbation, restored after each evaluation)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        f_plus = f(x)
        x[idx] = orig - step
        f_minus = f(x)
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_rel_err(analytic, numeric):
    """Max absolute deviation normalized by the larger gradient scale."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)
