"""Online Newton Step and averaged constant-step SGD baselines."""

from dataclasses import dataclass

import numpy as np

from .linalg import _shrink, matvec
from .models import LOGISTIC


@dataclass(frozen=True)
class OnsConfig:
    gamma: float
    D: float
    model: object
    p1_scale: float = 1.0

    def __post_init__(self):
        if not (self.gamma > 0 and self.D > 0 and self.p1_scale > 0):
            raise ValueError("gamma, D and p1_scale must be positive")


@dataclass(frozen=True)
class OnsState:
    w: np.ndarray
    P: np.ndarray
    t: int = 1
    avg_w: np.ndarray | None = None

    def __post_init__(self):
        if self.avg_w is None:
            object.__setattr__(self, "avg_w", np.array(self.w, dtype=float))

    @classmethod
    def initial(cls, cfg, d, w1=None):
        w = np.zeros(d) if w1 is None else np.asarray(w1, dtype=float)
        return cls(w=w, P=cfg.p1_scale * np.eye(d))


class ProjectionError(RuntimeError):
    pass


def _ball_metric_projection(mu, Q, U, D, tol=1e-15, max_iter=200):
    """Project rows of ``U`` onto ``{|w| <= D}`` in the metric with eigenpairs ``(mu, Q)``.

    The minimizer is ``w(lam) = (M + lam I)^{-1} M u`` where ``lam >= 0``
    makes ``|w(lam)| = D``. The root is bracketed and refined by Newton steps
    on ``1/|w(lam)| - 1/D`` (nearly linear in ``lam``), falling back to
    bisection whenever a step leaves the bracket. Returns ``(W, lam)``.
    """
    c = (np.swapaxes(Q, -1, -2) * U[..., None, :]).sum(axis=-1)   # Q^T u
    mc = mu * c
    lo = np.zeros(U.shape[:-1])
    norm_u = np.sqrt((U * U).sum(axis=-1))
    hi = mu[..., -1] * norm_u / D
    if not np.all(np.isfinite(hi)) or np.any(mu <= 0):
        raise ProjectionError("metric is not positive definite")
    lam = lo.copy()
    eps = 4 * np.finfo(float).eps
    for _ in range(max_iter):
        denom = mu + lam[..., None]
        z = mc / denom
        nrm = np.sqrt((z * z).sum(axis=-1))
        phi = nrm - D
        above = phi > 0
        lo = np.where(above, lam, lo)
        hi = np.where(above, hi, lam)
        done = (np.abs(phi) <= tol * D) | ((hi - lo) <= eps * np.maximum(hi, 1e-300))
        if np.all(done):
            break
        dpsi = (z * z / denom).sum(axis=-1) / nrm ** 3
        newton = lam - (1.0 / nrm - 1.0 / D) / dpsi
        inside = (newton > lo) & (newton < hi)
        lam = np.where(done, lam, np.where(inside, newton, 0.5 * (lo + hi)))
    else:
        raise ProjectionError("multiplier search did not converge")
    z = mc / (mu + lam[..., None])
    W = (Q * z[..., None, :]).sum(axis=-1)
    return W, lam


def project_ball_metric(u, D, Pinv):
    """``argmin_{|w| <= D} (w - u)^T Pinv (w - u)``; interior points are returned as is."""
    if not D > 0:
        raise ValueError("D must be positive")
    u = np.asarray(u, dtype=float)
    Pinv = np.asarray(Pinv, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ProjectionError("non-finite point")
    if np.linalg.norm(u) <= D:
        return u.copy()
    mu, Q = np.linalg.eigh(Pinv)
    if mu[0] <= 0:
        raise ProjectionError("metric is not positive definite")
    return _ball_metric_projection(mu, Q, u, D)[0]


def project_rows_metric_from_cov(W, P, D):
    """Project each row of ``W`` in the metric ``P[i]^{-1}``; only rows outside the ball move."""
    out = W.copy()
    outside = (W * W).sum(axis=-1) > D * D
    if np.any(outside):
        p, Q = np.linalg.eigh(P[outside])
        # eigenvalues of P^{-1} ascending; reverse the eigenvector columns to match
        mu = 1.0 / p[..., ::-1]
        out[outside] = _ball_metric_projection(mu, Q[..., ::-1], W[outside], D)[0]
    return out


def ons_update(w, P, x, y, cfg):
    """Stacked ONS step; returns ``(w_next, P_next)``."""
    u = (w * x).sum(axis=-1)
    grad, _ = cfg.model.grad_curv(y, u)
    P_next, Px, q = _shrink(P, x, grad * grad)
    step = matvec(P_next, x) * grad[..., None]
    cand = w - step / cfg.gamma
    if not np.all(np.isfinite(cand)):
        raise ProjectionError("non-finite ONS candidate")
    return project_rows_metric_from_cov(cand, P_next, cfg.D), P_next


def ons_step(state, x, y, cfg):
    x = np.asarray(x, dtype=float)
    y = float(cfg.model.check_labels(y))
    w, P = ons_update(state.w[None], state.P[None], x[None], np.array([y]), cfg)
    t = state.t + 1
    avg = state.avg_w + (w[0] - state.avg_w) / t
    return OnsState(w=w[0], P=P[0], t=t, avg_w=avg)


def ons_stepsize(G, D, alpha_exp):
    if not (G > 0 and D > 0 and alpha_exp > 0):
        raise ValueError("all inputs must be positive")
    return 0.5 * min(1.0 / (4.0 * G * D), alpha_exp)


def logistic_expconcavity_analytic(D, D_X):
    """``exp(-D * D_X)``: the logistic loss is this exp-concave on the radius-``D`` ball."""
    return float(np.exp(-D * D_X))


def logistic_expconcavity_at(theta, x_low, x_high):
    """Pointwise exp-concavity ``exp(-max_x |theta.x|)`` over a box of regressors.

    For the logistic loss ``l'' / l'^2 = exp(y theta.x)``, so the worst case is
    the largest ``|theta.x|`` over the box, which sits at a vertex.
    """
    theta = np.asarray(theta, dtype=float)
    hi = np.maximum(theta * x_low, theta * x_high).sum(axis=-1)
    lo = np.minimum(theta * x_low, theta * x_high).sum(axis=-1)
    return np.exp(-np.maximum(np.abs(hi), np.abs(lo)))


def logistic_expconcavity_sampled(D, x_low, x_high, rng, n_points=1000):
    """Minimum pointwise exp-concavity over uniform points on the radius-``D`` sphere.

    Optimistic: the minimum over a finite sample is not a proven constant.
    """
    x_low = np.asarray(x_low, dtype=float)
    g = rng.standard_normal((n_points, x_low.shape[0]))
    pts = D * g / np.linalg.norm(g, axis=1, keepdims=True)
    return float(logistic_expconcavity_at(pts, x_low, x_high).min())


@dataclass(frozen=True)
class AsgdConfig:
    gamma: float
    horizon: int
    model: object

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def asgd_stepsize(d, N):
    return 1.0 / (2.0 * d * np.sqrt(N))


def asgd_oracle_stepsize(theta_star_norm, d, N):
    return theta_star_norm / np.sqrt(d * N)


def asgd_run(cfg, stream, theta1):
    """Constant-step SGD over exactly ``cfg.horizon`` observations.

    Returns the mean of the pre-update iterates ``theta_1, ..., theta_N``.
    """
    theta = np.array(theta1, dtype=float)
    total = np.zeros_like(theta)
    n = 0
    for x, y in stream:
        if n == cfg.horizon:
            raise ValueError(f"stream longer than horizon {cfg.horizon}")
        x = np.asarray(x, dtype=float)
        y = float(cfg.model.check_labels(y))
        total += theta
        grad, _ = cfg.model.grad_curv(y, float(theta @ x))
        theta = theta - cfg.gamma * grad * x
        n += 1
    if n != cfg.horizon:
        raise ValueError(f"stream length {n} does not match horizon {cfg.horizon}")
    return total / n


def default_gradient_bound(model, D_X):
    # |l'| <= 1 for the logistic loss, so |grad| <= D_X
    if model.kind != LOGISTIC:
        raise ValueError("no almost-sure gradient bound for the Gaussian model")
    return D_X
