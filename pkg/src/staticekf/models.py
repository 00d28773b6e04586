"""Generalized linear models with likelihood ``h(y) exp((y u - b(u)) / a)``.

Two members are provided, logistic (``a = 2``, ``b(u) = 2 ln(1 + e^u) - u``,
labels in {-1, +1}) and Gaussian (``a = 1``, ``b(u) = u^2 / 2``). Losses are
the negative log-likelihood with the label-only constant ``-ln h(y)``
dropped; every excess-risk quantity is a difference so it cancels.

Other families (Poisson, multinomial) would slot in as further ``kind``
values providing ``b'`` and ``b''``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LOGISTIC = "logistic"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class LossEval:
    loss: np.ndarray
    grad_scalar: np.ndarray
    curv_scalar: np.ndarray


@dataclass(frozen=True)
class GlmModel:
    kind: str

    def __post_init__(self):
        if self.kind not in (LOGISTIC, GAUSSIAN):
            raise ValueError(f"unknown GLM kind {self.kind!r}")

    @property
    def a(self):
        return 2.0 if self.kind == LOGISTIC else 1.0

    def b(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == LOGISTIC:
            return 2.0 * np.logaddexp(0.0, u) - u
        return 0.5 * u * u

    def b_prime(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == LOGISTIC:
            return np.tanh(0.5 * u)
        return u

    def b_second(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == LOGISTIC:
            return 2.0 * expit(u) * expit(-u)
        return np.ones_like(u)

    def check_labels(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("labels must be finite")
        if self.kind == LOGISTIC and not np.all(np.abs(y) == 1.0):
            raise ValueError("logistic labels must be -1 or +1")
        return y

    def grad_curv(self, y, u):
        """Unchecked ``(l'(y, u), l''(y, u))`` for hot loops."""
        if self.kind == LOGISTIC:
            return -y * expit(-y * u), expit(u) * expit(-u)
        return u - y, np.ones_like(u)

    def evaluate(self, y, u):
        return evaluate(self, y, u)

    def sample_y(self, u, noise_sigma, rng):
        return sample_y(self, u, noise_sigma, rng)


LOGISTIC_MODEL = GlmModel(LOGISTIC)
GAUSSIAN_MODEL = GlmModel(GAUSSIAN)


def get_model(kind):
    return {LOGISTIC: LOGISTIC_MODEL, GAUSSIAN: GAUSSIAN_MODEL}[kind]


def evaluate(model, y, u):
    """Loss, first and second derivative in ``u`` of ``l(y, u)``."""
    y = model.check_labels(y)
    u = np.asarray(u, dtype=float)
    if model.kind == LOGISTIC:
        loss = np.logaddexp(0.0, -y * u)
    else:
        loss = 0.5 * (y - u) ** 2
    grad, curv = model.grad_curv(y, u)
    return LossEval(loss=loss, grad_scalar=grad, curv_scalar=curv)


def sample_y(model, u, noise_sigma, rng):
    """Draw labels from the model at linear predictor ``u``.

    Logistic draws +1 with probability ``1 / (1 + e^{-u})``; Gaussian adds
    ``noise_sigma`` times a standard normal.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    u = np.asarray(u, dtype=float)
    if model.kind == LOGISTIC:
        return np.where(rng.random(u.shape) < expit(u), 1.0, -1.0)
    if noise_sigma == 0:
        return u.copy()
    return u + noise_sigma * rng.standard_normal(u.shape)
