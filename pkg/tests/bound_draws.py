"""Random parameter draws for every bound calculator, paired with the transcription oracle."""

import math

import numpy as np

import formula_oracle as fo
from staticekf import evaluation as ev


def _lu(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _geom(rng):
    D = _lu(rng, 0.3, 10)
    return D, D * D * _lu(rng, 1e-3, 1.0)


def draw_case(name, rng):
    """Return ``(package_log_value, oracle_log_value)`` for one random draw."""
    d = int(rng.integers(1, 50))
    n = _lu(rng, 1, 1e9)
    delta = _lu(rng, 1e-6, 0.99)
    D, Lm = _geom(rng)
    g = ev.DataGeometry(D, Lm)
    if name == "theorem1":
        k, h, eps = _lu(rng, 1, 1e4), _lu(rng, 1e-3, 1), _lu(rng, 1e-4, 1)
        l1, linv = _lu(rng, 0.1, 10), _lu(rng, 0.1, 1e4)
        rho = rng.uniform(0.951, 1.0)
        got = ev.bound_theorem1(ev.BoundedConstants(k, h, rho, eps), g, n, d, l1, linv, delta).log_value
        return got, fo.theorem1(k, h, eps, D, n, d, l1, linv, delta)
    if name == "theorem2":
        s2, Da, eps = _lu(rng, 1e-3, 10), _lu(rng, 1e-3, 3), _lu(rng, 1e-4, 1)
        l1, linv = _lu(rng, 0.1, 10), _lu(rng, 0.1, 1e4)
        got = ev.bound_theorem2(ev.SubGaussianParams(s2, Da), g, n, d, l1, linv, eps, delta).log_value
        return got, fo.theorem2(s2, Da, D, n, d, l1, linv, eps, delta)
    if name == "theorem3":
        G, Dr, lam, gam = _lu(rng, 0.1, 10), _lu(rng, 0.1, 10), _lu(rng, 0.01, 10), _lu(rng, 1e-4, 1)
        return ev.bound_theorem3_ons(G, Dr, lam, gam, n, d, delta).log_value, fo.theorem3(G, Dr, lam, gam, n, d, delta)
    if name == "theorem5":
        s, r, l1, linv, tau = _lu(rng, 0.01, 30), _lu(rng, 0.01, 30), _lu(rng, 0.1, 10), _lu(rng, 0.1, 10), _lu(rng, 1, 1e30)
        got = ev.bound_theorem5_logistic(g, s, r, n, d, l1, linv, tau, delta).log_value
        return got, fo.theorem5(D, s, r, n, d, l1, linv, tau, delta)
    if name == "theorem8":
        s2, Da, r, eps = _lu(rng, 1e-3, 10), _lu(rng, 1e-3, 3), _lu(rng, 0.01, 30), _lu(rng, 1e-4, 1)
        l1, linv, tau = _lu(rng, 0.1, 10), _lu(rng, 0.1, 10), _lu(rng, 1, 1e30)
        got = ev.bound_theorem8_quadratic(ev.SubGaussianParams(s2, Da), g, r, n, d, l1, linv, eps, tau, delta).log_value
        return got, fo.theorem8(s2, Da, D, r, n, d, l1, linv, eps, tau, delta)
    if name == "prop4":
        beta = rng.uniform(0, 0.99)
        return (ev.bound_prop4_concentration(g, d, beta, delta).log_t_threshold,
                fo.prop4_threshold(D, Lm, d, beta, delta))
    if name == "tau_logistic":
        s, eps, beta, l1 = _lu(rng, 0.01, 30), _lu(rng, 1e-3, 1), rng.uniform(0.01, 0.499), _lu(rng, 0.1, 10)
        got = ev.tau_logistic(g, s, eps, beta, delta, l1, d).log_value
        return got, fo.tau_logistic(D, Lm, s, eps, beta, delta, l1, d)
    if name == "tau_quadratic":
        s2, Da, r, p1, s = _lu(rng, 1e-3, 10), _lu(rng, 1e-3, 3), _lu(rng, 0.01, 30), _lu(rng, 0.1, 10), _lu(rng, 0.01, 30)
        eps = _lu(rng, 1e-4, 0.5)
        got = ev.tau_quadratic(ev.SubGaussianParams(s2, Da), g, r, p1, s, eps, delta, d).log_value
        return got, fo.tau_quadratic(s2, Da, D, Lm, r, p1, s, eps, delta, d)
    if name == "lemma9":
        s2, Da, l1, r, t = _lu(rng, 1e-3, 10), _lu(rng, 1e-3, 3), _lu(rng, 0.1, 10), _lu(rng, 0.01, 30), int(rng.integers(1, 10**6))
        return (math.log(ev.bound_lemma9_early(ev.SubGaussianParams(s2, Da), g, l1, r, t, delta)),
                fo.lemma9(s2, Da, D, l1, r, t, delta))
    if name == "lemma1":
        lam = _lu(rng, 1e-3, 10)
        return math.log(ev.lemma1_threshold(lam, delta)), fo.lemma1(lam, delta)
    raise KeyError(name)


CALCULATORS = ("theorem1", "theorem2", "theorem3", "theorem5", "theorem8", "prop4",
               "tau_logistic", "tau_quadratic", "lemma9", "lemma1")


def worst_log_error(name, n_draws=100, seed=0):
    """Largest ``|got - oracle| / max(1, |oracle|)`` over ``n_draws`` draws."""
    rng = np.random.default_rng([seed, CALCULATORS.index(name)])
    worst = 0.0
    for _ in range(n_draws):
        got, want = draw_case(name, rng)
        err = abs(got - float(want)) / max(1.0, abs(float(want)))
        worst = max(worst, err)
    return worst
