"""Simulated data processes.

Regressors are ``x = (1, z)`` with ``z`` uniform on ``[0, 1]^{d-1}`` (the
``uniform_box`` design), or random sign vectors (``rademacher``, used where
a well-conditioned second-moment matrix is needed). Labels follow one of

* ``logistic``    well-specified logistic model at ``theta_star``;
* ``switch_mix``  per draw, a fair coin picks ``theta_star`` or ``theta2``;
* ``linear``      ``y = theta_star.x + d_app * s(x) + sigma * N(0, 1)`` where
  ``s(x) = +-1`` is uncorrelated with every coordinate of ``x``. The
  approximation error is then bounded by ``d_app`` and ``theta_star`` is
  still the risk minimizer.

Seeding: every stream is keyed by ``(master_seed, purpose, replication)``
through :class:`numpy.random.SeedSequence`, and the regressors, labels and
mixture coin each get their own generator, so draws do not depend on chunk
sizes and adding algorithms never perturbs the data.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .linalg import eigen_extremes

UNIFORM_BOX = "uniform_box"
RADEMACHER = "rademacher"

LOGISTIC_WELLSPEC = "logistic"
LOGISTIC_SWITCH = "switch_mix"
LINEAR = "linear"

# SeedSequence spawn-key namespaces
DATA_STREAM = 0
REFERENCE_STREAM = 1
PROBE_STREAM = 2
ALGORITHM_STREAM = 3

_SETTING1 = (-9.0, 0.0, 3.0, -9.0, 4.0, -9.0, 15.0, 0.0, -7.0, 1.0, 0.0)


def default_theta_stars():
    s1 = np.array(_SETTING1)
    s2 = s1 / 10.0
    t2 = s2.copy()
    t2[0] = 15.0 / 10.0
    return {"setting1": s1, "setting2": s2, "misspec_theta2": t2}


def theta_star_preset(name):
    try:
        return default_theta_stars()[name].copy()
    except KeyError:
        raise KeyError(f"unknown parameter preset {name!r}") from None


@dataclass(frozen=True)
class DataGeometry:
    D_X: float
    Lambda_min: float
    Lambda_min_se: float = 0.0

    def __post_init__(self):
        if not (0 < self.Lambda_min <= self.D_X ** 2 * (1 + 1e-12)):
            raise ValueError("need 0 < Lambda_min <= D_X^2")


@dataclass(frozen=True)
class DataProcess:
    kind: str
    theta_star: np.ndarray
    theta2: np.ndarray | None = None
    sigma: float = 0.0
    d_app: float = 0.0
    design: str = UNIFORM_BOX

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float).copy())
        if self.kind not in (LOGISTIC_WELLSPEC, LOGISTIC_SWITCH, LINEAR):
            raise ValueError(f"unknown process kind {self.kind!r}")
        if self.design not in (UNIFORM_BOX, RADEMACHER):
            raise ValueError(f"unknown design {self.design!r}")
        if self.kind == LOGISTIC_SWITCH:
            if self.theta2 is None:
                raise ValueError("switch_mix needs theta2")
            object.__setattr__(self, "theta2", np.asarray(self.theta2, dtype=float).copy())
            if self.theta2.shape != self.theta_star.shape:
                raise ValueError("theta2 dimension mismatch")
        if self.sigma < 0 or self.d_app < 0:
            raise ValueError("sigma and d_app must be nonnegative")
        if self.d_app > 0 and self.d < 2:
            raise ValueError("an approximation bias needs d >= 2")

    @property
    def d(self):
        return self.theta_star.shape[0]

    @property
    def model_kind(self):
        return "gaussian" if self.kind == LINEAR else "logistic"

    # regressors ------------------------------------------------------
    def draw_x(self, n, rng):
        if self.design == UNIFORM_BOX:
            return np.hstack([np.ones((n, 1)), rng.random((n, self.d - 1))])
        return np.where(rng.random((n, self.d)) < 0.5, -1.0, 1.0)

    def box(self):
        """Per-coordinate regressor bounds ``(low, high)``."""
        lo, hi = np.zeros(self.d), np.ones(self.d)
        if self.design == UNIFORM_BOX:
            lo[0] = 1.0
        else:
            lo[:] = -1.0
        return lo, hi

    def second_moment(self):
        """Closed-form ``E[x x^T]``."""
        d = self.d
        if self.design == RADEMACHER:
            return np.eye(d)
        M = np.full((d, d), 0.25)
        np.fill_diagonal(M, 1.0 / 3.0)
        M[0, :] = M[:, 0] = 0.5
        M[0, 0] = 1.0
        return M

    def D_X(self):
        # norm bound of the regressors (sqrt(d) for both designs)
        return math.sqrt(self.d)

    # labels ----------------------------------------------------------
    def bias(self, X):
        if self.d_app == 0:
            return np.zeros(X.shape[0])
        if self.design == UNIFORM_BOX:
            # sign(cos(2 pi z_1)) is +,-,-,+ on the quarters of [0, 1]:
            # zero mean and zero correlation with z_1
            s = np.cos(2 * np.pi * X[:, 1])
        else:
            s = X[:, 0] * X[:, 1]
        return self.d_app * np.where(s >= 0, 1.0, -1.0)

    def labels(self, X, u_rng, coin_rng=None):
        n = X.shape[0]
        if self.kind == LINEAR:
            mean = X @ self.theta_star + self.bias(X)
            if self.sigma == 0:
                return mean
            return mean + self.sigma * u_rng.standard_normal(n)
        p = self.bernoulli_parameter(X, coin_rng)
        return np.where(u_rng.random(n) < p, 1.0, -1.0)

    def bernoulli_parameter(self, X, coin_rng=None):
        p = expit(X @ self.theta_star)
        if self.kind == LOGISTIC_SWITCH:
            other = expit(X @ self.theta2)
            p = np.where(coin_rng.random(X.shape[0]) < 0.5, p, other)
        return p

    def sample(self, n, rng):
        """Draw ``n`` observations from a single generator."""
        X = self.draw_x(n, rng)
        return X, self.labels(X, rng, rng)


def next_observation(proc, rng):
    X, y = proc.sample(1, rng)
    return X[0], float(y[0])


def _seed(master_seed, purpose, replication):
    return np.random.SeedSequence(int(master_seed), spawn_key=(purpose, replication))


class ObservationStream:
    """Deterministic, chunk-invariant stream for one replication."""

    def __init__(self, proc, master_seed, replication=0, purpose=DATA_STREAM):
        self.proc = proc
        ss_x, ss_y, ss_c = _seed(master_seed, purpose, replication).spawn(3)
        self._x_rng = np.random.Generator(np.random.PCG64(ss_x))
        self._y_rng = np.random.Generator(np.random.PCG64(ss_y))
        self._c_rng = np.random.Generator(np.random.PCG64(ss_c))
        # separate digests keep the checksum independent of how draws are chunked
        self._hash_x = hashlib.sha256()
        self._hash_y = hashlib.sha256()
        self.consumed = 0

    def draw(self, n):
        X = self.proc.draw_x(n, self._x_rng)
        y = self.proc.labels(X, self._y_rng, self._c_rng)
        self._hash_x.update(X.tobytes())
        self._hash_y.update(y.tobytes())
        self.consumed += n
        return X, y

    def __iter__(self):
        while True:
            X, y = self.draw(1)
            yield X[0], float(y[0])

    def checksum(self):
        """SHA-256 over the regressor and label digests of everything drawn so far."""
        return hashlib.sha256((self._hash_x.hexdigest() + self._hash_y.hexdigest()).encode()).hexdigest()


def data_geometry(proc, n_probe, rng, n_batches=10):
    """``D_X`` (analytic) and ``Lambda_min`` of the empirical second moment.

    The standard error of ``Lambda_min`` comes from ``n_batches`` equal batches.
    """
    d = proc.d
    if n_probe < 10 * d * d:
        raise ValueError(f"n_probe must be >= 10 d^2 = {10 * d * d}")
    X = proc.draw_x(n_probe, rng)
    lam = float(eigen_extremes(X.T @ X / n_probe)[0])
    per = []
    for chunk in np.array_split(X, n_batches):
        per.append(eigen_extremes(chunk.T @ chunk / len(chunk))[0])
    se = float(np.std(per, ddof=1) / math.sqrt(n_batches)) if n_batches > 1 else 0.0
    return DataGeometry(D_X=proc.D_X(), Lambda_min=lam, Lambda_min_se=se)


def analytic_geometry(proc):
    return DataGeometry(D_X=proc.D_X(), Lambda_min=float(eigen_extremes(proc.second_moment())[0]))


def bernoulli_parameters(proc, theta, n, rng):
    """``(1 + exp(-theta.x))^{-1}`` over ``n`` fresh regressors."""
    return expit(proc.draw_x(n, rng) @ np.asarray(theta, dtype=float))


def density_diagnostics(proc, n, seed, bins=50, low_mass=0.01):
    """Bernoulli-parameter distribution of each logistic component of ``proc``.

    Returns ``{component: {mean, se, mass_below, hist}}`` where ``hist`` holds
    counts over ``bins`` equal cells of [0, 1]. Components are ``theta_star``
    and, for the switching process, ``theta2``.
    """
    if proc.kind == LINEAR:
        raise ValueError("density diagnostics need a logistic process")
    comps = {"theta_star": proc.theta_star}
    if proc.kind == LOGISTIC_SWITCH:
        comps["theta2"] = proc.theta2
    out = {}
    for i, (name, theta) in enumerate(comps.items()):
        rng = np.random.default_rng(_seed(seed, PROBE_STREAM, i))
        p = bernoulli_parameters(proc, theta, n, rng)
        hist, _ = np.histogram(p, bins=bins, range=(0.0, 1.0))
        out[name] = {"mean": float(p.mean()), "se": float(p.std(ddof=1) / math.sqrt(n)),
                     "mass_below": float(np.mean(p < low_mass)), "hist": hist.tolist()}
    return out
