"""Dense numeric primitives: nonlinearities, initializers, gradient checking.

Everything here is a pure function over float64 numpy arrays.  Random
draws go through an explicit ``numpy.random.Generator`` (PCG64), so a
fixed seed reproduces the exact same stream.
"""

import numpy as np

__all__ = [
    "softmax",
    "log_softmax",
    "sigmoid",
    "relu",
    "orthogonal_init",
    "gaussian_init",
    "spectral_radius",
    "finite_diff_gradient",
    "new_rng",
]


def new_rng(seed):
    """Seeded PCG64 generator; same seed gives a bit-identical stream."""
    return np.random.default_rng(seed)


def softmax(v, axis=-1):
    """Normalized exponentials along ``axis``, max-subtracted for overflow safety.

    Raises ValueError if the reduced axis is empty.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape == () or v.shape[axis] == 0:
        raise ValueError("softmax requires a nonempty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(v, axis=-1):
    """log(softmax(v)) computed without forming the exponentials' ratio."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape == () or v.shape[axis] == 0:
        raise ValueError("log_softmax requires a nonempty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def sigmoid(x):
    """Logistic sigmoid, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    """Rectifier max(0, x); the subgradient at 0 is taken as 0."""
    return np.maximum(0.0, np.asarray(x, dtype=np.float64))


def orthogonal_init(n, radius, rng):
    """radius * Q for an orthogonal Q drawn via QR of a Gaussian matrix.

    The QR sign is fixed (positive diagonal of R) so the result depends
    only on the generator stream, not on the LAPACK build.
    """
    if n < 1:
        raise ValueError("orthogonal_init requires n >= 1")
    if radius <= 0:
        raise ValueError("orthogonal_init requires radius > 0")
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return radius * (q * d)


def gaussian_init(shape, sigma, rng):
    """Zero-mean Gaussian matrix with standard deviation sigma."""
    return sigma * rng.standard_normal(shape)


def spectral_radius(m, tol=1e-10, max_iter=10000):
    """Largest singular value of a square matrix, by power iteration on MᵀM.

    For the scaled orthogonal matrices this validates (radius * Q) the
    largest singular value equals the largest absolute eigenvalue, which
    is the quantity of interest.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"spectral_radius requires a square matrix, got shape {m.shape}")
    n = m.shape[0]
    gram = m.T @ m
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ (gram @ v))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def finite_diff_gradient(f, theta, eps=1e-5):
    """Central-difference gradient of a scalar function at theta.

    The independent oracle used by every gradient test: g_i is
    (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps).
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step.flat[i] = eps
        fp = float(f(theta + step))
        fm = float(f(theta - step))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value at coordinate {i}")
        grad.flat[i] = (fp - fm) / (2.0 * eps)
    return grad
