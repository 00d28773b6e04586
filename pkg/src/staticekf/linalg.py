"""Small dense symmetric-matrix kernel.

Everything here accepts stacked inputs: a ``(..., d, d)`` matrix with a
``(..., d)`` vector broadcasts over the leading axes, which is how the
experiment harness runs many replications at once. Reductions are written as
broadcast-multiply plus ``sum(axis=-1)`` so that the result for one stacked
item never depends on how many other items share the batch.
"""

import numpy as np
from scipy import linalg as sla


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")


def _check_dims(P, x):
    if P.ndim < 2 or P.shape[-1] != P.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {P.shape}")
    if x.shape[-1] != P.shape[-1]:
        raise ValueError(f"dimension mismatch: matrix {P.shape[-1]}, vector {x.shape[-1]}")


def symmetrize(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def matvec(P, x):
    """P @ x over stacked inputs, reduction along the contiguous axis."""
    return (P * x[..., None, :]).sum(axis=-1)


def _shrink(P, x, alpha):
    # unchecked hot-path version of sherman_morrison_shrink
    Px = matvec(P, x)
    q = (x * Px).sum(axis=-1)
    coef = alpha / (1.0 + alpha * q)
    new = P - coef[..., None, None] * (Px[..., :, None] * Px[..., None, :])
    return symmetrize(new), Px, q


def sherman_morrison_shrink(P, x, alpha):
    """Covariance-form rank-one update ``P - a P x x^T P / (1 + a x^T P x)``.

    Equivalent to adding ``alpha * x x^T`` to the precision ``P^{-1}``. The
    output is symmetrized so it is exactly symmetric in floating point.
    """
    P = np.asarray(P, dtype=float)
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    _check_dims(P, x)
    _check_finite("P", P)
    _check_finite("x", x)
    _check_finite("alpha", alpha)
    if np.any(alpha < 0):
        raise ValueError("alpha must be nonnegative")
    return _shrink(P, x, alpha)[0]


def quad_form(P, x):
    P = np.asarray(P, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_dims(P, x)
    return (x * matvec(P, x)).sum(axis=-1)


def eigen_extremes(P):
    """Return ``(lambda_min, lambda_max)`` of a symmetric matrix (or stack)."""
    P = np.asarray(P, dtype=float)
    _check_finite("P", P)
    w = np.linalg.eigvalsh(P)
    return w[..., 0], w[..., -1]


def lambda_max(P):
    return np.linalg.eigvalsh(P)[..., -1]


def solve_pd(P, b):
    """Solve ``P x = b`` for symmetric positive-definite ``P`` by Cholesky.

    Raises :class:`NotPositiveDefinite` when the factorization fails or a
    squared pivot falls below ``1e-14 * trace(P) / d``.
    """
    P = np.asarray(P, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_dims(P, b)
    _check_finite("P", P)
    _check_finite("b", b)
    d = P.shape[-1]
    floor = 1e-14 * np.trace(P) / d
    try:
        c, lower = sla.cho_factor(P, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = np.diag(c) ** 2
    if not np.all(pivots > floor):
        raise NotPositiveDefinite(f"pivot {pivots.min():.3e} below {floor:.3e}")
    return sla.cho_solve((c, lower), b, check_finite=False)


def is_positive_definite(P):
    try:
        np.linalg.cholesky(np.asarray(P, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True
