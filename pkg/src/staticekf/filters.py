"""Static extended Kalman filter for GLMs, with optional curvature floor.

The filter keeps ``theta`` and the covariance-form matrix ``P`` (never its
inverse). One step with regressor ``x`` and label ``y``::

    alpha = b''(theta.x) / a            (floored at c / t**beta if truncated)
    P    <- P - alpha P x x^T P / (1 + alpha x^T P x)
    theta <- theta - P l'(y, theta.x) x  (with the updated P)

For the Gaussian model this is the Kalman filter, i.e. recursive ridge
regression with regularization ``P_1^{-1}`` centred at ``theta_1``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import _shrink, eigen_extremes, is_positive_definite
from .models import GAUSSIAN, GlmModel


@dataclass(frozen=True)
class Truncation:
    """Curvature floor ``c / t**beta``; ``c = 1e-10`` practically never binds."""

    beta: float = 0.49
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError("beta must lie in (0, 1/2)")
        if not self.c > 0:
            raise ValueError("threshold scale c must be positive")

    def floor(self, t):
        return self.c / float(t) ** self.beta


@dataclass(frozen=True)
class EkfConfig:
    model: GlmModel
    theta1: np.ndarray
    p1_scale: float = 1.0
    truncation: Truncation | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta1", np.asarray(self.theta1, dtype=float).copy())
        if self.theta1.ndim != 1:
            raise ValueError("theta1 must be a vector")
        if not self.p1_scale > 0:
            raise ValueError("p1_scale must be positive")
        if self.truncation is not None and self.model.kind == GAUSSIAN:
            raise ValueError("truncation is only defined for the logistic model")

    @classmethod
    def zeros(cls, model, d, **kw):
        return cls(model=model, theta1=np.zeros(d), **kw)

    @property
    def d(self):
        return self.theta1.shape[0]

    def P1(self):
        return self.p1_scale * np.eye(self.d)

    def initial_state(self):
        return FilterState(theta=self.theta1.copy(), P=self.P1(), t=1,
                           avg_theta=self.theta1.copy())


@dataclass(frozen=True)
class FilterState:
    theta: np.ndarray
    P: np.ndarray
    t: int = 1
    avg_theta: np.ndarray | None = None
    truncated_last: bool = False

    def __post_init__(self):
        if self.avg_theta is None:
            object.__setattr__(self, "avg_theta", np.array(self.theta, dtype=float))


def ekf_update(theta, P, x, y, t, model, truncation=None):
    """One filter step on (possibly stacked) arrays; no validation.

    Returns ``(theta_next, P_next, alpha, truncated, grad, curv)``.
    """
    u = (theta * x).sum(axis=-1)
    grad, curv = model.grad_curv(y, u)
    if truncation is None:
        alpha = curv
        truncated = np.zeros(np.shape(curv), dtype=bool)
    else:
        floor = truncation.floor(t)
        truncated = floor > curv
        alpha = np.maximum(floor, curv)
    P_next, Px, q = _shrink(P, x, alpha)
    # P_{t+1} x = P_t x / (1 + alpha x^T P_t x)
    gain = Px / (1.0 + alpha * q)[..., None]
    theta_next = theta - grad[..., None] * gain
    return theta_next, P_next, alpha, truncated, grad, curv


def ekf_step(state, x, y, cfg):
    x = np.asarray(x, dtype=float)
    if x.shape != state.theta.shape:
        raise ValueError(f"regressor shape {x.shape} does not match {state.theta.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("regressor has non-finite entries")
    y = float(cfg.model.check_labels(y))
    theta, P, _, truncated, _, _ = ekf_update(
        state.theta, state.P, x, y, state.t, cfg.model, cfg.truncation)
    t_next = state.t + 1
    avg = state.avg_theta + (theta - state.avg_theta) / t_next
    return FilterState(theta=theta, P=P, t=t_next, avg_theta=avg,
                       truncated_last=bool(truncated))


def averaged_estimate(state):
    return state.avg_theta


class TrajectoryError(RuntimeError):
    pass


@dataclass
class TrajectoryRecord:
    """Per-step log of a filter run.

    Row ``k`` describes step ``t = steps[k]``: the estimate ``theta[k]`` used
    at that step (``theta_t``), the observation, the loss quantities at
    ``theta_t``, and the spectral extremes of the *updated* matrix
    ``P_{t+1}``. With ``store_P`` the pre-step matrices ``P_t`` are kept too.
    """

    config: EkfConfig
    steps: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    loss: np.ndarray
    grad_scalar: np.ndarray
    curv_scalar: np.ndarray
    alpha: np.ndarray
    truncated: np.ndarray
    lambda_min_P: np.ndarray
    lambda_max_P: np.ndarray
    final: FilterState
    P_before: np.ndarray | None = None
    record_every: int = 1
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.steps)

    @property
    def complete(self):
        return self.record_every == 1

    def thetas(self):
        """``theta_1, ..., theta_{n+1}`` (requires a complete record)."""
        return np.vstack([self.theta.reshape(-1, self.config.d), self.final.theta[None, :]])

    def matrices(self):
        """``P_1, ..., P_{n+1}`` (requires ``store_P``)."""
        if self.P_before is None:
            raise ValueError("record was produced without store_P=True")
        d = self.config.d
        return np.concatenate([self.P_before.reshape(-1, d, d), self.final.P[None]], axis=0)


def run_trajectory(cfg, stream, record_every=1, store_P=False):
    """Drive the filter over an iterable of ``(x, y)`` pairs and log it."""
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    model = cfg.model
    state = cfg.initial_state()
    if not is_positive_definite(state.P):
        raise ValueError("P_1 must be positive definite")
    rows = {k: [] for k in ("steps", "theta", "x", "y", "loss", "grad", "curv",
                            "alpha", "trunc", "Pn", "P")}
    for k, (x, y) in enumerate(stream):
        t = state.t
        try:
            x = np.asarray(x, dtype=float)
            if x.shape != state.theta.shape or not np.all(np.isfinite(x)):
                raise ValueError(f"bad regressor {x!r}")
            y = float(model.check_labels(y))
            theta, P, alpha, truncated, grad, curv = ekf_update(
                state.theta, state.P, x, y, t, model, cfg.truncation)
        except (ValueError, FloatingPointError) as exc:
            raise TrajectoryError(f"step {t}: {exc}") from exc
        if k % record_every == 0:
            rows["steps"].append(t)
            rows["theta"].append(state.theta)
            rows["x"].append(x)
            rows["y"].append(y)
            rows["grad"].append(float(grad))
            rows["curv"].append(float(curv))
            rows["alpha"].append(float(alpha))
            rows["trunc"].append(bool(truncated))
            rows["Pn"].append(P)
            if store_P:
                rows["P"].append(state.P)
        avg = state.avg_theta + (theta - state.avg_theta) / (t + 1)
        state = FilterState(theta=theta, P=P, t=t + 1, avg_theta=avg,
                            truncated_last=bool(truncated))
    d = cfg.d
    # spectra and losses in one batched pass after the loop
    lmin, lmax = eigen_extremes(np.asarray(rows["Pn"], dtype=float).reshape(-1, d, d))
    theta_rows = np.asarray(rows["theta"], dtype=float).reshape(-1, d)
    x_rows = np.asarray(rows["x"], dtype=float).reshape(-1, d)
    y_rows = np.asarray(rows["y"], dtype=float)
    loss = model.evaluate(y_rows, (theta_rows * x_rows).sum(axis=1)).loss
    return TrajectoryRecord(
        config=cfg,
        steps=np.asarray(rows["steps"], dtype=np.int64),
        theta=theta_rows,
        x=x_rows,
        y=y_rows,
        loss=np.asarray(loss, dtype=float),
        grad_scalar=np.asarray(rows["grad"]),
        curv_scalar=np.asarray(rows["curv"]),
        alpha=np.asarray(rows["alpha"]),
        truncated=np.asarray(rows["trunc"], dtype=bool),
        lambda_min_P=np.asarray(lmin, dtype=float),
        lambda_max_P=np.asarray(lmax, dtype=float),
        final=state,
        P_before=np.asarray(rows["P"], dtype=float).reshape(-1, d, d) if store_P else None,
        record_every=record_every,
    )


def with_truncation(cfg, truncation):
    return replace(cfg, truncation=truncation)
