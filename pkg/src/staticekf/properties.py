"""Verifiers for the filter's pathwise inequalities and probabilistic guarantees.

Each checker returns a :class:`CheckResult` (name, statistic, threshold,
pass flag, extra details) and never mutates its inputs. Quantities that a
record also logs (gradient and curvature scalars) are recomputed from the
raw ``(theta_t, x_t, y_t)`` so that a logging bug cannot hide a violation.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import ObservationStream, analytic_geometry
from .evaluation import bound_prop4_concentration, lemma1_threshold
from .filters import ekf_update
from .linalg import eigen_extremes, lambda_max
from .models import GAUSSIAN


@dataclass
class CheckResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    info: dict = field(default_factory=dict)

    def as_row(self):
        return {"name": self.name, "statistic": self.statistic,
                "threshold": self.threshold, "pass": bool(self.passed)}


def _binomial_tolerance(delta, n_reps):
    return delta + 3.0 * math.sqrt(delta * (1.0 - delta) / n_reps)


def _require_complete(rec):
    if not rec.complete:
        raise ValueError("checker needs a record with record_every=1")


# -- deterministic pathwise checks ---------------------------------------------

def check_lemma2_pathwise(rec, theta_star, rtol=1e-8):
    """Second-order pathwise inequality of the untruncated filter, at every prefix.

    LHS_n = sum_t [l'_t x_t.(theta_t - theta*) - l''_t (x_t.(theta_t - theta*))^2 / 2]
    RHS_n = sum_t x_t^T P_{t+1} x_t l'_t^2 / 2 + |theta_1 - theta*|^2 / lambda_min(P_1)
    """
    _require_complete(rec)
    cfg = rec.config
    if cfg.truncation is not None:
        raise ValueError("the pathwise inequality holds for the untruncated filter only")
    theta_star = np.asarray(theta_star, dtype=float)
    P_all = rec.matrices()
    lmin_P1 = eigen_extremes(P_all[0])[0]
    init = float(np.sum((cfg.theta1 - theta_star) ** 2) / lmin_P1)

    diff = rec.theta - theta_star
    u = (rec.theta * rec.x).sum(axis=1)
    g, c = cfg.model.grad_curv(rec.y, u)
    r = (rec.x * diff).sum(axis=1)
    lhs_terms = g * r - 0.5 * c * r * r
    q_next = np.einsum("ti,tij,tj->t", rec.x, P_all[1:], rec.x)
    rhs_terms = 0.5 * q_next * g * g

    lhs = np.concatenate([[0.0], np.cumsum(lhs_terms)])
    rhs = init + np.concatenate([[0.0], np.cumsum(rhs_terms)])
    margin = rhs - lhs
    normalized = margin / np.maximum(1.0, np.abs(rhs))
    worst = int(np.argmin(normalized))
    stat = float(normalized[worst])
    return CheckResult("lemma2_pathwise", stat, -rtol, stat >= -rtol,
                       {"lhs": float(lhs[-1]), "rhs": float(rhs[-1]), "margin": float(margin[-1]),
                        "worst_prefix": worst, "n": len(rec)})


def ridge_path(rec):
    """Regularized least-squares solutions ``theta_1, ..., theta_{n+1}`` for a Gaussian record."""
    cfg = rec.config
    d = cfg.d
    A = np.eye(d) / cfg.p1_scale
    b = A @ cfg.theta1
    out = [np.linalg.solve(A, b)]
    for x, y in zip(rec.x, rec.y):
        A = A + np.outer(x, x)
        b = b + y * x
        out.append(np.linalg.solve(A, b))
    return np.array(out)


def check_ridge_equivalence(rec, rtol=1e-8):
    """Max relative deviation between filter estimates and direct ridge solves."""
    _require_complete(rec)
    if rec.config.model.kind != GAUSSIAN or rec.config.truncation is not None:
        raise ValueError("ridge equivalence needs an untruncated Gaussian record")
    ridge = ridge_path(rec)
    est = rec.thetas()
    dev = np.linalg.norm(est - ridge, axis=1) / np.maximum(np.linalg.norm(ridge, axis=1), 1e-300)
    stat = float(dev.max())
    return CheckResult("ridge_equivalence", stat, rtol, stat <= rtol, {"n": len(rec)})


def _recomputed_alpha(rec):
    cfg = rec.config
    u = (rec.theta * rec.x).sum(axis=1)
    _, curv = cfg.model.grad_curv(rec.y, u)
    if cfg.truncation is None:
        return curv
    floors = cfg.truncation.c / rec.steps.astype(float) ** cfg.truncation.beta
    return np.maximum(floors, curv)


def check_sumtrace(rec, h_eps, geom, rtol=1e-10):
    """``sum_t alpha_t x_t^T P_{t+1} x_t <= d ln(1 + n h lambda_max(P_1) D_X^2 / d)``.

    Uses ``Tr(P_{t+1}(P_{t+1}^{-1} - P_t^{-1})) = alpha_t x_t^T P_{t+1} x_t``.
    Requires ``alpha_t <= h_eps`` and ``|x_t| <= D_X`` along the record.
    """
    _require_complete(rec)
    alpha = _recomputed_alpha(rec)
    if np.any(alpha > h_eps * (1 + 1e-12)):
        raise ValueError("record leaves the curvature bound h_eps")
    if np.any(np.linalg.norm(rec.x, axis=1) > geom.D_X * (1 + 1e-12)):
        raise ValueError("record leaves the regressor bound D_X")
    P_all = rec.matrices()
    d, n = rec.config.d, len(rec)
    q_next = np.einsum("ti,tij,tj->t", rec.x, P_all[1:], rec.x)
    lhs = float(np.sum(alpha * q_next))
    rhs = d * math.log1p(n * h_eps * lambda_max(P_all[0]) * geom.D_X ** 2 / d)
    ok = lhs <= rhs + rtol * max(1.0, rhs)
    return CheckResult("sumtrace", lhs, rhs, ok, {"lhs": lhs, "rhs": rhs, "n": n})


def check_precision_recursion(rec, rtol=1e-7):
    """Rebuild ``P_t^{-1} = P_1^{-1} + sum_{s<t} alpha_s x_s x_s^T`` and compare to ``inv(P_t)``."""
    _require_complete(rec)
    P_all = rec.matrices()
    alpha = _recomputed_alpha(rec)
    outer = rec.x[:, :, None] * rec.x[:, None, :] * alpha[:, None, None]
    rebuilt = np.linalg.inv(P_all[0])[None] + np.concatenate(
        [np.zeros((1,) + P_all.shape[1:]), np.cumsum(outer, axis=0)])
    inv = np.linalg.inv(P_all)
    dev = (np.linalg.norm(rebuilt - inv, axis=(1, 2))
           / np.linalg.norm(inv, axis=(1, 2)))
    stat = float(dev.max())
    return CheckResult("precision_recursion", stat, rtol, stat <= rtol, {"n": len(rec)})


# -- martingale inequality --------------------------------------------------

RADEMACHER_MDS = "rademacher"
UNIFORM_MDS = "uniform"
STATE_DEPENDENT_MDS = "state_dependent"
ZERO_MDS = "zero"
MDS_GENERATORS = (RADEMACHER_MDS, UNIFORM_MDS, STATE_DEPENDENT_MDS, ZERO_MDS)


def _mds_block(generator, n_rows, n_cols, rng):
    """Martingale differences and their conditional variances, shape ``(n_rows, n_cols)``."""
    if generator == RADEMACHER_MDS:
        dn = np.where(rng.random((n_rows, n_cols)) < 0.5, -1.0, 1.0)
        return dn, np.ones_like(dn)
    if generator == UNIFORM_MDS:
        dn = rng.uniform(-1.0, 1.0, (n_rows, n_cols))
        return dn, np.full_like(dn, 1.0 / 3.0)
    if generator == ZERO_MDS:
        z = np.zeros((n_rows, n_cols))
        return z, z
    raise ValueError(f"unknown generator {generator!r}")


def lemma1_sup_statistic(generator, lam, n_max, n_reps, rng, chunk=500):
    """Per replication, ``sup_n sum_{t<=n} (dN_t - lam/2 (dN_t^2 + E[dN_t^2 | F_{t-1}]))``."""
    if generator not in MDS_GENERATORS:
        raise ValueError(f"unknown generator {generator!r}")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    out = np.empty(n_reps)
    for start in range(0, n_reps, chunk):
        m = min(chunk, n_reps - start)
        if generator == STATE_DEPENDENT_MDS:
            # scale 1 after a nonnegative running sum, 1/2 otherwise
            s = np.zeros(m)
            run = np.zeros(m)
            best = np.full(m, -np.inf)
            signs = np.where(rng.random((n_max, m)) < 0.5, -1.0, 1.0)
            for t in range(n_max):
                scale = np.where(s >= 0, 1.0, 0.5)
                dn = scale * signs[t]
                s += dn
                run += dn - 0.5 * lam * (dn * dn + scale * scale)
                np.maximum(best, run, out=best)
            out[start:start + m] = best
            continue
        dn, v = _mds_block(generator, m, n_max, rng)
        out[start:start + m] = np.cumsum(dn - 0.5 * lam * (dn * dn + v), axis=1).max(axis=1)
    return out


def check_lemma1_frequency(generator, lam, delta, n_max, n_reps, rng, sup=None):
    """Fraction of replications whose running statistic ever exceeds ``ln(1/delta) / lam``.

    A precomputed ``sup`` (from :func:`lemma1_sup_statistic`) may be passed to
    share simulations across several ``delta``.
    """
    if sup is None:
        sup = lemma1_sup_statistic(generator, lam, n_max, n_reps, rng)
    level = lemma1_threshold(lam, delta)
    rate = float(np.mean(sup > level))
    tol = _binomial_tolerance(delta, len(sup))
    return CheckResult(f"lemma1[{generator},lam={lam:g},delta={delta:g}]", rate, tol, rate <= tol,
                       {"level": level, "n_max": n_max, "n_reps": len(sup)})


# -- concentration of P_t ---------------------------------------------------

def _lambda_max_batch(P):
    d = P.shape[-1]
    if d == 1:
        return P[:, 0, 0].copy()
    if d == 2:
        a, b, c = P[:, 0, 0], P[:, 0, 1], P[:, 1, 1]
        return 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return np.linalg.eigvalsh(P)[:, -1]


def check_prop4_concentration(cfg, proc, delta, horizon, n_reps, seed, geom=None, block=2048):
    """Envelope violations of ``lambda_max(P_t)`` past the concentration threshold.

    Runs ``n_reps`` truncated-filter replications (replication ``r`` reads the
    data stream keyed by ``(seed, r)``). A replication violates when
    ``lambda_max(P_t) > 4 / (Lambda_min t^{1-beta})`` for some
    ``threshold < t <= horizon + 1``. If the threshold is beyond the horizon
    the check passes vacuously and says so.
    """
    if cfg.truncation is None:
        raise ValueError("concentration check needs a truncated filter")
    geom = analytic_geometry(proc) if geom is None else geom
    beta = cfg.truncation.beta
    prop = bound_prop4_concentration(geom, proc.d, beta, delta)
    t0 = prop.t_threshold
    vacuous = t0 >= horizon + 1

    d = proc.d
    streams = [ObservationStream(proc, seed, r) for r in range(n_reps)]
    theta = np.tile(cfg.theta1, (n_reps, 1))
    P = np.tile(cfg.P1(), (n_reps, 1, 1))
    violated = np.zeros(n_reps, dtype=bool)
    worst_ratio = np.zeros(n_reps)       # past the threshold
    worst_any = np.zeros(n_reps)         # over all t, reported even when vacuous
    n_checked = 0
    t = 1
    while t <= horizon:
        m = min(block, horizon - t + 1)
        draws = [s.draw(m) for s in streams]
        X = np.stack([dx for dx, _ in draws], axis=1)      # (m, R, d)
        Y = np.stack([dy for _, dy in draws], axis=1)
        for k in range(m):
            theta, P, *_ = ekf_update(theta, P, X[k], Y[k], t, cfg.model, cfg.truncation)
            t += 1   # P now holds P_t
            ratio = _lambda_max_batch(P) / prop.envelope(t)
            np.maximum(worst_any, ratio, out=worst_any)
            if t > t0:
                violated |= ratio > 1.0
                np.maximum(worst_ratio, ratio, out=worst_ratio)
                n_checked += 1
    rate = float(violated.mean())
    tol = _binomial_tolerance(delta, n_reps)
    qs = (0.5, 0.9, 0.99)
    quantiles = {f"q{int(q * 100)}": float(np.quantile(worst_ratio, q)) for q in qs} if n_checked else {}
    quantiles_all = {f"q{int(q * 100)}": float(np.quantile(worst_any, q)) for q in qs}
    return CheckResult("prop4_concentration", rate, tol, rate <= tol,
                       {"vacuous": bool(vacuous), "t_threshold": t0,
                        "log_t_threshold": prop.log_t_threshold, "horizon": horizon, "d": d,
                        "n_reps": n_reps, "steps_checked": n_checked,
                        "Lambda_min": geom.Lambda_min, "D_X": geom.D_X,
                        "envelope_ratio_quantiles": quantiles,
                        "envelope_ratio_quantiles_all_t": quantiles_all})
