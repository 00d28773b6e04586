"""Risk estimators and closed-form bound calculators.

All calculators work with logarithms of nonnegative terms so that
convergence times of order ``exp(1e9)`` do not overflow; a report carries
both the log value and the (possibly infinite) plain value with an overflow
flag.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import LINEAR, DataGeometry  # noqa: F401  (re-exported)
from .models import GAUSSIAN

NEG_INF = -math.inf
OVERFLOW_LOG = math.log(1e308)


class HypothesisViolation(ValueError):
    """Inputs fall outside the range where a bound was proved."""


# -- small log-space helpers -------------------------------------------------

def _log(x):
    x = float(x)
    if x < 0:
        raise ValueError(f"log of negative quantity {x}")
    return math.log(x) if x > 0 else NEG_INF


def _lsum(*logs):
    """log of a sum of exponentials."""
    finite = [v for v in logs if v != NEG_INF]
    if not finite:
        return NEG_INF
    m = max(finite)
    if m == math.inf:
        return math.inf
    return m + math.log(sum(math.exp(v - m) for v in finite))


def _log_log1p(log_z):
    """``log(log(1 + exp(log_z)))``; the log of ``ln(1 + z)``."""
    if log_z == NEG_INF:
        return NEG_INF
    if log_z > 30:
        return math.log(log_z + math.log1p(math.exp(-log_z)))
    return math.log(math.log1p(math.exp(log_z)))


def _log_softplus(a):
    """``log(1 + e^a)``."""
    return float(np.logaddexp(0.0, a))


def _log_of_log(log_arg):
    """log of ``ln(arg)`` given ``log(arg)``; ``-inf`` when ``arg <= 1``."""
    if log_arg <= 0:
        return NEG_INF
    return math.log(log_arg)


def _exp(v):
    return math.exp(v) if v < OVERFLOW_LOG else math.inf


def _log_conf(delta):
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    return math.log(1.0 / delta)


# -- domain types ------------------------------------------------------------

@dataclass(frozen=True)
class BoundedConstants:
    kappa_eps: float
    h_eps: float
    rho_eps: float
    epsilon: float

    def __post_init__(self):
        if not (self.kappa_eps > 0 and self.h_eps > 0 and 0 < self.rho_eps <= 1):
            raise ValueError("need kappa, h > 0 and rho in (0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    @classmethod
    def logistic(cls, D_X, theta_star_norm, epsilon):
        return cls(kappa_eps=math.exp(D_X * (theta_star_norm + epsilon)), h_eps=0.25,
                   rho_eps=math.exp(-epsilon * D_X), epsilon=epsilon)


@dataclass(frozen=True)
class SubGaussianParams:
    sigma2: float
    D_app: float = 0.0

    def __post_init__(self):
        if self.sigma2 < 0 or self.D_app < 0:
            raise ValueError("sigma2 and D_app must be nonnegative")


@dataclass
class BoundReport:
    name: str
    inputs: dict
    log_components: dict
    log_value: float = field(init=False)

    def __post_init__(self):
        self.log_value = _lsum(*self.log_components.values())

    @property
    def components(self):
        return {k: _exp(v) for k, v in self.log_components.items()}

    @property
    def value(self):
        return _exp(self.log_value)

    @property
    def overflow(self):
        return self.log_value >= OVERFLOW_LOG

    def as_dict(self):
        out = {"name": self.name}
        out.update({f"input.{k}": v for k, v in self.inputs.items()})
        out.update({f"component.{k}": v for k, v in self.components.items()})
        out.update({"value": self.value, "log_value": self.log_value,
                    "overflow": self.overflow})
        return out


@dataclass
class TauValue:
    name: str
    inputs: dict
    log_terms: dict
    log_value: float = field(init=False)
    dominant: str = field(init=False)

    def __post_init__(self):
        self.dominant, self.log_value = max(self.log_terms.items(), key=lambda kv: kv[1])

    @property
    def value(self):
        return _exp(self.log_value)

    @property
    def overflow(self):
        return self.log_value >= OVERFLOW_LOG

    @property
    def log10_value(self):
        return self.log_value / math.log(10)

    def as_dict(self):
        out = {"name": self.name}
        out.update({f"input.{k}": v for k, v in self.inputs.items()})
        out.update({f"log_term.{k}": v for k, v in self.log_terms.items()})
        out.update({"value": self.value, "log_value": self.log_value,
                    "log10_value": self.log10_value, "overflow": self.overflow,
                    "dominant": self.dominant})
        return out


def _log_tau(tau):
    if isinstance(tau, TauValue):
        return tau.log_value
    return _log(tau)


# -- estimators ---------------------------------------------------------------

def estimate_mse(theta_hat, theta_star):
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_hat.shape[-1] != theta_star.shape[-1]:
        raise ValueError("dimension mismatch")
    diff = theta_hat - theta_star
    return (diff * diff).sum(axis=-1)


def estimate_excess_risk(model, proc, theta, theta_star, n_mc, rng):
    """``L(theta) - L(theta_star)`` as ``(mean, std_err)``.

    Uses the closed form ``0.5 (theta - theta*)^T E[x x^T] (theta - theta*)``
    for well-specified linear data, otherwise Monte Carlo with common random
    numbers (the same draws for both parameters).
    """
    if n_mc < 100:
        raise ValueError("n_mc must be >= 100")
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if model.kind == GAUSSIAN and proc.kind == LINEAR and proc.d_app == 0:
        diff = theta - theta_star
        return 0.5 * float(diff @ proc.second_moment() @ diff), 0.0
    X, y = proc.sample(n_mc, rng)
    diff = model.evaluate(y, X @ theta).loss - model.evaluate(y, X @ theta_star).loss
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(n_mc))


# -- bounds -----------------------------------------------------------------

def lemma1_threshold(lam, delta):
    """Right-hand side ``ln(1/delta) / lambda`` of the simultaneous martingale bound."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return _log_conf(delta) / lam


def bound_theorem1(consts, geom, n, d, lambda_max_P1, lambda_max_Ptau_inv, delta):
    """Local cumulative excess risk bound under bounded curvature."""
    if consts.rho_eps <= 0.95:
        raise HypothesisViolation(f"rho_eps = {consts.rho_eps} must exceed 0.95")
    k, h, eps, DX = consts.kappa_eps, consts.h_eps, consts.epsilon, geom.D_X
    L = _log_conf(delta)
    log_z = _log(n) + _log(h) + _log(lambda_max_P1) + 2 * _log(DX) - _log(d)
    comps = {
        "log_term": _log(2.5 * d * k) + _log_log1p(log_z),
        "initialization": _log(5.0) + _log(lambda_max_Ptau_inv) + 2 * _log(eps),
        "confidence": _log(30.0) + _lsum(_log(2 * k), _log(h) + 2 * _log(eps) + 2 * _log(DX)) + _log(L),
    }
    inputs = dict(kappa_eps=k, h_eps=h, rho_eps=consts.rho_eps, epsilon=eps, D_X=DX, n=n, d=d,
                  lambda_max_P1=lambda_max_P1, lambda_max_Ptau_inv=lambda_max_Ptau_inv, delta=delta)
    return BoundReport("theorem1", inputs, comps)


def bound_theorem2(params, geom, n, d, lambda_max_P1, lambda_max_Ptau_inv, epsilon, delta):
    """Local cumulative excess risk bound for the quadratic loss."""
    s2, Da, DX = params.sigma2, params.D_app, geom.D_X
    L = _log_conf(delta)
    eps2DX2 = epsilon ** 2 * DX ** 2
    log_z = _log(n) + _log(lambda_max_P1) + 2 * _log(DX) - _log(d)
    comps = {
        "log_term": _log(7.5 * d) + _log(8 * s2 + Da ** 2 + eps2DX2) + _log_log1p(log_z),
        "initialization": _log(5.0) + _log(lambda_max_Ptau_inv) + 2 * _log(epsilon),
        "confidence": _log(115.0) + _log(s2 * (4 + lambda_max_P1 * DX ** 2 / 4) + Da ** 2 + 2 * eps2DX2) + _log(L),
    }
    inputs = dict(sigma2=s2, D_app=Da, D_X=DX, n=n, d=d, lambda_max_P1=lambda_max_P1,
                  lambda_max_Ptau_inv=lambda_max_Ptau_inv, epsilon=epsilon, delta=delta)
    return BoundReport("theorem2", inputs, comps)


def bound_theorem3_ons(G, D, lam, gamma, n, d, delta):
    """Cumulative excess risk of ONS with ``P_1 = lam I`` and step ``gamma``."""
    for name, v in (("G", G), ("D", D), ("lambda", lam), ("gamma", gamma)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    L = _log_conf(delta)
    log_z = _log(n) + 2 * _log(G) - _log(lam) - _log(d)
    comps = {
        "log_term": _log(1.5 * d / gamma) + _log_log1p(log_z),
        "initialization": _log(lam * gamma / 6.0) + 2 * _log(D),
        "confidence": _lsum(_log(12.0 / gamma), _log(4 * gamma / 3.0) + 2 * _log(G) + 2 * _log(D)) + _log(L),
    }
    inputs = dict(G=G, D=D, lam=lam, gamma=gamma, n=n, d=d, delta=delta)
    return BoundReport("theorem3", inputs, comps)


def bound_theorem5_logistic(geom, theta_star_norm, theta1_dist, n, d,
                            lambda_max_P1, lambda_max_P1_inv, tau, delta):
    """Global cumulative excess risk of the truncated filter for logistic regression.

    ``tau`` is the convergence time at ``epsilon = 1 / (20 D_X)``, given as a
    number or a :class:`TauValue` (whose log is used directly).
    """
    DX = geom.D_X
    L = _log_conf(delta)
    log_tau = _log_tau(tau)
    log_e = DX * theta_star_norm
    log_z = _log(n) + _log(lambda_max_P1) + 2 * _log(DX) - _log(4 * d)
    comps = {
        "log_term": _log(3 * d) + log_e + _log_log1p(log_z),
        "initialization": _log(lambda_max_P1_inv) - _log(75.0) - 2 * _log(DX),
        "confidence": _log(64.0) + log_e + _log(L),
        "convergence_linear": log_tau + _log(1.0 / 300 + DX * theta1_dist),
        "convergence_quadratic": 2 * log_tau + _log(lambda_max_P1) + 2 * _log(DX) - math.log(2.0),
    }
    inputs = dict(D_X=DX, theta_star_norm=theta_star_norm, theta1_dist=theta1_dist, n=n, d=d,
                  lambda_max_P1=lambda_max_P1, lambda_max_P1_inv=lambda_max_P1_inv,
                  log_tau=log_tau, delta=delta)
    return BoundReport("theorem5", inputs, comps)


def bound_theorem8_quadratic(params, geom, theta1_dist, n, d, lambda_max_P1,
                             lambda_max_P1_inv, epsilon, tau, delta):
    """Global cumulative excess risk of the Kalman filter, terms as stated."""
    s2, Da, DX = params.sigma2, params.D_app, geom.D_X
    sigma = math.sqrt(s2)
    L = _log_conf(delta)
    log_tau = _log_tau(tau)
    eps2DX2 = epsilon ** 2 * DX ** 2
    log_z = _log(n) + _log(lambda_max_P1) + 2 * _log(DX) - _log(d)
    early = theta1_dist ** 2 + 3 * lambda_max_P1 * DX * sigma * L
    comps = {
        "log_term": _log(7.5 * d) + _log(8 * s2 + Da ** 2 + eps2DX2) + _log_log1p(log_z),
        "initialization": _log(5.0) + _log(lambda_max_P1_inv) + 2 * _log(epsilon),
        "confidence": _log(115.0) + _log(s2 * (4 + lambda_max_P1 * DX ** 2 / 4) + Da ** 2 + 2 * eps2DX2) + _log(L),
        "convergence_linear": 2 * _log(DX) + _log(5 * epsilon ** 2 + 2 * early ** 2) + log_tau,
        "convergence_cubic": (_log(2.0 / 3.0) + 2 * _log(lambda_max_P1) + 4 * _log(DX)
                              + 2 * _log(3 * sigma + Da) + 3 * log_tau),
    }
    inputs = dict(sigma2=s2, D_app=Da, D_X=DX, theta1_dist=theta1_dist, n=n, d=d,
                  lambda_max_P1=lambda_max_P1, lambda_max_P1_inv=lambda_max_P1_inv,
                  epsilon=epsilon, log_tau=log_tau, delta=delta)
    return BoundReport("theorem8", inputs, comps)


@dataclass(frozen=True)
class Prop4Threshold:
    log_t_threshold: float
    Lambda_min: float
    beta: float

    @property
    def t_threshold(self):
        return _exp(self.log_t_threshold)

    def envelope(self, t):
        """``4 / (Lambda_min t^{1 - beta})``."""
        return 4.0 / (self.Lambda_min * np.asarray(t, dtype=float) ** (1.0 - self.beta))


def _log_prop4_base(geom, d, delta):
    """log of ``20 D_X^4 / Lambda^2 * ln(625 d D_X^8 / (Lambda^4 delta))``."""
    DX, Lm = geom.D_X, geom.Lambda_min
    log_arg = math.log(625.0) + _log(d) + 8 * _log(DX) - 4 * _log(Lm) - _log(delta)
    return math.log(20.0) + 4 * _log(DX) - 2 * _log(Lm) + _log_of_log(log_arg)


def bound_prop4_concentration(geom, d, beta, delta):
    """Time after which ``lambda_max(P_t) <= 4 / (Lambda_min t^{1-beta})`` w.p. ``1 - delta``."""
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    if not delta > 0:
        raise ValueError("delta must be positive")
    log_base = _log_prop4_base(geom, d, delta)
    # a nonpositive base (log argument <= 1) means every t qualifies
    log_t = log_base / (1.0 - beta) if log_base != NEG_INF else NEG_INF
    return Prop4Threshold(log_t_threshold=log_t, Lambda_min=geom.Lambda_min, beta=beta)


def log_c_delta(geom, d, delta, lambda_max_P1):
    """log of ``max(4 / Lambda, lambda_max(P_1) * (20 D_X^4 / Lambda^2) ln(625 d D_X^8 / (Lambda^4 delta)))``."""
    return max(math.log(4.0) - _log(geom.Lambda_min),
               _log(lambda_max_P1) + _log_prop4_base(geom, d, delta))


def tau_logistic(geom, theta_star_norm, epsilon, beta, delta, lambda_max_P1, d):
    """Convergence time of the truncated filter (started at zero) for logistic regression.

    Maximum of ``(2(1 + e^{D_X(|theta*| + eps)}))^{1/beta}``, an exponential
    term driven by ``C_{delta/2}``, and ``6 / delta``.
    """
    if not 0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 1/2)")
    if not (epsilon > 0 and delta > 0):
        raise ValueError("epsilon and delta must be positive")
    DX, Lm = geom.D_X, geom.Lambda_min
    lsp = _log_softplus(DX * (theta_star_norm + epsilon))
    log_C = log_c_delta(geom, d, delta / 2.0, lambda_max_P1)
    log_exponent = (math.log(3 * 2.0 ** 15) + 12 * _log(DX) + 2 * log_C + 6 * lsp
                    - 6 * _log(Lm) - 1.5 * math.log(1 - 2 * beta) - 4 * math.log(epsilon))
    terms = {
        "floor": (math.log(2.0) + lsp) / beta,
        "exponential": _exp(log_exponent),
        "confidence": math.log(6.0 / delta),
    }
    inputs = dict(D_X=DX, Lambda_min=Lm, theta_star_norm=theta_star_norm, epsilon=epsilon,
                  beta=beta, delta=delta, lambda_max_P1=lambda_max_P1, d=d,
                  log_exponent=log_exponent)
    return TauValue("tau_logistic", inputs, terms)


def tau_quadratic(params, geom, theta1_dist, p1, theta_star_norm, epsilon, delta, d):
    """Convergence time of the Kalman filter, the max of three explicit terms."""
    if not (epsilon > 0 and 0 < delta <= 1 and p1 > 0):
        raise ValueError("need epsilon > 0, delta in (0, 1], p1 > 0")
    s2, Da = params.sigma2, params.D_app
    DX, Lm = geom.D_X, geom.Lambda_min
    L = math.log(1.0 / delta)
    r = DX ** 2 / Lm
    root = 1 + math.sqrt(8 * L)
    log_tau1 = max(_log(12 * r * (math.log(d) + L)), _log(48 * r) + _log_of_log(_log(24 * r)))
    S = theta1_dist ** 2 / (2 * p1) + r * Da ** 2 * 4 * root / 0.07 ** 2 + 3 * s2 * (d / 0.035 + L) / 0.07
    log_k2 = _log(24.0) - math.log(epsilon) - _log(Lm)
    log_tau2 = log_k2 + _log(S) + _log_of_log(log_k2 - math.log(2.0) + _log(S))
    shift = (DX / math.sqrt(Lm) * (Da + DX * theta_star_norm) + theta1_dist / math.sqrt(2 * p1)) ** 2 * L ** 2
    A = theta1_dist ** 2 / p1 * r * root + shift
    B = theta1_dist ** 2 / (2 * p1) * (1 + r) * root + shift
    log_k3 = math.log(96.0) - math.log(epsilon) - 2 * math.log(0.07) - _log(Lm)
    log_tau3 = 0.5 * log_k3 + 0.5 * _log(A) + _log_of_log(log_k3 + _log(B))
    terms = {"tau1": log_tau1, "tau2": log_tau2, "tau3": log_tau3}
    inputs = dict(sigma2=s2, D_app=Da, D_X=DX, Lambda_min=Lm, theta1_dist=theta1_dist, p1=p1,
                  theta_star_norm=theta_star_norm, epsilon=epsilon, delta=delta, d=d)
    return TauValue("tau_quadratic", inputs, terms)


def bound_lemma9_early(params, geom, lambda_max_P1, theta1_dist, t, delta):
    """Almost-worst-case distance ``|theta_t - theta*|`` during the first steps."""
    if t < 1:
        raise ValueError("t must be >= 1")
    sigma = math.sqrt(params.sigma2)
    return theta1_dist + lambda_max_P1 * geom.D_X * ((3 * sigma + params.D_app) * (t - 1)
                                                     + 3 * sigma * _log_conf(delta))
