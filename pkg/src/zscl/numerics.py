"""Small numerical primitives shared by the model, losses, and tests.

Everything here operates on plain float64 numpy arrays and is pure:
no global state, safe to call from multiple threads.
"""

import numpy as np

# Floor applied to probabilities inside logarithms. The same floor is used
# in analytic gradients so that gradient checks agree with the values.
PROB_FLOOR = 1e-12


class DimensionError(ValueError):
    """Inputs have incompatible or empty shapes."""


class DegenerateInputError(ValueError):
    """An input is outside the operation's domain (e.g. a zero vector)."""


def _as_f64(x):
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise DegenerateInputError("non-finite entries in input")
    return a


def softmax(logits):
    """Stable softmax of a 1-D array of logits.

    Uses max-subtraction, so arbitrarily large logits stay finite. The
    result is invariant under adding a constant to every logit.
    """
    z = _as_f64(logits)
    if z.ndim != 1 or z.size == 0:
        raise DimensionError("softmax expects a nonempty 1-D array")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_rows(logits):
    """Row-wise stable softmax of a 2-D array."""
    z = _as_f64(logits)
    if z.ndim != 2 or z.size == 0:
        raise DimensionError("softmax_rows expects a nonempty 2-D array")
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cosine_sim(a, b):
    """Cosine similarity of two equal-length nonzero vectors."""
    a = _as_f64(a)
    b = _as_f64(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cross_entropy(target, pred):
    """Cross entropy -sum(target * log(pred)) with the probability floor.

    Equals the entropy of `target` when pred == target (up to the floor).
    """
    t = _as_f64(target)
    q = _as_f64(pred)
    if t.shape != q.shape or t.ndim != 1:
        raise DimensionError(f"shape mismatch: {t.shape} vs {q.shape}")
    return float(-(t * np.log(np.maximum(q, PROB_FLOOR))).sum())


def entropy(p):
    """Shannon entropy in nats, with the same probability floor."""
    p = _as_f64(p)
    return float(-(p * np.log(np.maximum(p, PROB_FLOOR))).sum())


def finite_diff_grad(f, x, h=1e-5):
    """Central finite-difference gradient of a scalar function.

    The independent oracle used by the gradient test suites; it never
    shares code with any analytic gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    if h <= 0:
        raise ValueError("step size must be positive")
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(xp)
        fm = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise DegenerateInputError("non-finite function value in finite differences")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad
