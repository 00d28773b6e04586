"""Named verification suites built from :mod:`staticekf.properties`.

Each suite returns a list of :class:`~staticekf.properties.CheckResult`.
Seeds are derived per suite and per trajectory, so a suite's verdicts are a
function of ``seed`` alone.
"""

import numpy as np

from .datagen import (PROBE_STREAM, RADEMACHER, DataProcess, ObservationStream, analytic_geometry,
                      theta_star_preset)
from .filters import EkfConfig, Truncation, run_trajectory
from .linalg import eigen_extremes, sherman_morrison_shrink, solve_pd
from .models import GAUSSIAN_MODEL, LOGISTIC_MODEL
from .properties import (RADEMACHER_MDS, UNIFORM_MDS, CheckResult, check_lemma1_frequency,
                         check_lemma2_pathwise, check_precision_recursion, check_prop4_concentration,
                         check_ridge_equivalence, lemma1_sup_statistic)

SUITES = ("linalg", "pathwise", "ridge", "martingale", "concentration")

# namespaces for suite seeds
_LINALG, _PATHWISE, _RIDGE, _MARTINGALE = range(4)


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(PROBE_STREAM,) + key))


def _random_pd(rng, d):
    A = rng.standard_normal((d, d))
    return A @ A.T / d + 0.1 * np.eye(d)


def linalg_suite(seed=0, reps=200):
    rng = _rng(seed, _LINALG)
    inv_dev, loewner, asym, resid = 0.0, 0.0, 0.0, 0.0
    for _ in range(reps):
        d = int(rng.integers(1, 21))
        P = _random_pd(rng, d)
        x = rng.standard_normal(d) * rng.uniform(0.1, 3.0)
        a = rng.uniform(0.0, 5.0)
        Pn = sherman_morrison_shrink(P, x, a)
        Pi = np.linalg.inv(P)
        inv_dev = max(inv_dev, np.linalg.norm(np.linalg.inv(Pn) - (Pi + a * np.outer(x, x)))
                      / np.linalg.norm(Pi))
        loewner = min(loewner, eigen_extremes(P - Pn)[0] / eigen_extremes(P)[1])
        asym = max(asym, float(np.max(np.abs(Pn - Pn.T))))
        b = rng.standard_normal(d)
        sol = solve_pd(P, b)
        resid = max(resid, np.linalg.norm(P @ sol - b)
                    / (np.linalg.norm(P, 2) * np.linalg.norm(sol) + np.linalg.norm(b)))
    return [
        CheckResult("shrink_inverse_consistency", inv_dev, 1e-8, inv_dev <= 1e-8),
        CheckResult("shrink_loewner", loewner, -1e-12, loewner >= -1e-12),
        CheckResult("shrink_symmetry", asym, 0.0, asym == 0.0),
        CheckResult("solve_pd_residual", resid, 1e-10, resid <= 1e-10),
    ]


def _random_theta(rng, d, max_norm=5.0):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v) * rng.uniform(0, max_norm)


def pathwise_trajectories(seed, reps, n=1000, d=11):
    """``reps`` logistic and ``reps`` Gaussian records with stored matrices, plus their ``theta*``."""
    out = []
    for model, kind in ((LOGISTIC_MODEL, "logistic"), (GAUSSIAN_MODEL, "linear")):
        for r in range(reps):
            rng = _rng(seed, _PATHWISE, len(out))
            gen = _random_theta(rng, d)
            proc = DataProcess(kind, gen, sigma=1.0 if kind == "linear" else 0.0)
            X, y = ObservationStream(proc, seed, r, purpose=PROBE_STREAM).draw(n)
            rec = run_trajectory(EkfConfig.zeros(model, d), zip(X, y), store_P=True)
            out.append((rec, _random_theta(rng, d)))
    return out


def pathwise_suite(seed=0, reps=100, n=1000, d=11):
    worst = {}
    for rec, ts in pathwise_trajectories(seed, reps, n, d):
        res = check_lemma2_pathwise(rec, ts)
        key = rec.config.model.kind
        if key not in worst or res.statistic < worst[key].statistic:
            worst[key] = res
    return [CheckResult(f"lemma2_pathwise[{k}]", r.statistic, r.threshold, r.passed,
                        dict(r.info, trajectories=reps)) for k, r in worst.items()]


def ridge_suite(seed=0, reps=20, n=1000, d=11):
    ridge_dev, prec = 0.0, {"logistic": 0.0, "gaussian": 0.0}
    for r in range(reps):
        rng = _rng(seed, _RIDGE, r)
        for model, kind in ((GAUSSIAN_MODEL, "linear"), (LOGISTIC_MODEL, "logistic")):
            proc = DataProcess(kind, _random_theta(rng, d), sigma=1.0 if kind == "linear" else 0.0)
            X, y = proc.sample(n, rng)
            rec = run_trajectory(EkfConfig.zeros(model, d), zip(X, y), store_P=True)
            if model is GAUSSIAN_MODEL:
                ridge_dev = max(ridge_dev, check_ridge_equivalence(rec).statistic)
            prec[model.kind] = max(prec[model.kind], check_precision_recursion(rec).statistic)
    out = [CheckResult("ridge_equivalence", ridge_dev, 1e-8, ridge_dev <= 1e-8, {"streams": reps})]
    out += [CheckResult(f"precision_recursion[{k}]", v, 1e-7, v <= 1e-7, {"streams": reps})
            for k, v in prec.items()]
    return out


def martingale_suite(seed=0, reps=10_000, n_max=10_000, lambdas=(0.05, 0.1, 0.5), deltas=(0.01, 0.05)):
    out = []
    for gi, gen in enumerate((RADEMACHER_MDS, UNIFORM_MDS)):
        for li, lam in enumerate(lambdas):
            sup = lemma1_sup_statistic(gen, lam, n_max, reps, _rng(seed, _MARTINGALE, gi, li))
            out += [check_lemma1_frequency(gen, lam, delta, n_max, reps, None, sup=sup) for delta in deltas]
    return out


def concentration_suite(seed=0, reps=200, horizon=10_000, fallback_horizon=1_000_000, delta=0.1):
    """Envelope check on setting2 data; if that is vacuous at ``horizon``, also run a
    two-dimensional sign design where the threshold falls inside ``fallback_horizon``."""
    tr = Truncation(beta=0.49)
    proc = DataProcess("logistic", theta_star_preset("setting2"))
    cfg = EkfConfig.zeros(LOGISTIC_MODEL, proc.d, truncation=tr)
    first = check_prop4_concentration(cfg, proc, delta, horizon, reps, seed)
    first.name = "prop4_concentration[setting2]"
    out = [first]
    if first.info["vacuous"]:
        small = DataProcess("logistic", np.array([0.5, -0.5]), design=RADEMACHER)
        cfg2 = EkfConfig.zeros(LOGISTIC_MODEL, 2, truncation=tr)
        res = check_prop4_concentration(cfg2, small, delta, fallback_horizon, reps, seed + 1,
                                        geom=analytic_geometry(small))
        res.name = "prop4_concentration[d2_sign_design]"
        out.append(res)
    return out


def run_suite(name, seed=0, reps=None):
    if name == "all":
        return [r for s in SUITES for r in run_suite(s, seed, reps)]
    fn = {"linalg": linalg_suite, "pathwise": pathwise_suite, "ridge": ridge_suite,
          "martingale": martingale_suite, "concentration": concentration_suite}.get(name)
    if fn is None:
        raise ValueError(f"unknown suite {name!r}")
    return fn(seed) if reps is None else fn(seed, reps)


def results_table(results):
    """Rows ``(name, statistic, threshold, pass, info)``; scalar info items joined as ``k=v``."""
    rows = []
    for r in results:
        info = ";".join(f"{k}={v}" for k, v in sorted(r.info.items()) if not isinstance(v, dict))
        rows.append((r.name, float(r.statistic), float(r.threshold), bool(r.passed), info))
    return rows
