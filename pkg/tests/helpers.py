"""
Shared numeric helpers for the test suite
"""
import numpy as np


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(f, x, indices, step=1e-3):
    """Central differences of scalar f with respect to x at the given flat indices"""
    grads = []
    flat = x.reshape(-1)
    for i in indices:
        original = flat[i]
        flat[i] = original + step
        plus = f()
        flat[i] = original - step
        minus = f()
        flat[i] = original
        grads.append((plus - minus) / (2 * step))
    return np.array(grads)


def sample_indices(rng, size, count=40):
    return rng.choice(size, size=min(size, count), replace=False)


def separated(rng, shape, gap=0.05):
    """Random values whose pairwise gaps are at least `gap` (no near-ties)"""
    n = int(np.prod(shape))
    return (rng.permutation(n).astype(np.float64) * gap - n * gap / 2).reshape(shape)


def away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    x[np.abs(x) < margin] += np.sign(x[np.abs(x) < margin] + 1e-12) * 2 * margin
    return x
