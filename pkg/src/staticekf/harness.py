"""Replicated experiments: every algorithm reads the same per-replication stream.

Replications are split into contiguous chunks, one per worker thread. Within
a chunk each algorithm runs as a batched engine over the chunk's
replications; all batched arithmetic is elementwise or a per-row reduction,
so a replication's numbers do not depend on which chunk it landed in and the
outputs are identical for any thread count.

``t`` in every output means the number of observations consumed: the
filter's estimate at ``t`` is ``theta_{t+1}``, and a fixed-horizon ASGD row
at ``t = N`` is the average of its ``N`` pre-update iterates.
"""

import csv
import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baselines import (OnsConfig, asgd_oracle_stepsize, asgd_stepsize, default_gradient_bound,
                        logistic_expconcavity_analytic, logistic_expconcavity_sampled, ons_stepsize,
                        ons_update)
from .config import (ASGD, ASGD_ORACLE, EKF_AVERAGED, EKF_TRUNCATED, ONS, ONS_AVERAGED,
                     ConfigError, decade_horizons)
from .datagen import (ALGORITHM_STREAM, LINEAR, LOGISTIC_SWITCH, REFERENCE_STREAM, ObservationStream,
                      analytic_geometry, density_diagnostics)
from .evaluation import estimate_mse
from .filters import Truncation, ekf_update
from .linalg import lambda_max
from .models import LOGISTIC, get_model

FLOAT_FMT = "%.17g"


class Interrupted(Exception):
    pass


# -- engines -----------------------------------------------------------------

class _EkfEngine:
    def __init__(self, spec, model, d, n):
        p = spec.params
        self.model = model
        self.trunc = None
        if spec.kind == EKF_TRUNCATED:
            self.trunc = Truncation(beta=p.get("beta", 0.49), c=p.get("c", 1.0))
        self.averaged = spec.kind == EKF_AVERAGED
        self.theta = np.zeros((n, d))
        self.P = np.tile(p.get("p1_scale", 1.0) * np.eye(d), (n, 1, 1))
        self.avg = self.theta.copy()
        self.t = 1
        self.n_truncated = np.zeros(n, dtype=np.int64)

    def advance(self, X, Y):
        for k in range(X.shape[0]):
            self.theta, self.P, _, tr, _, _ = ekf_update(
                self.theta, self.P, X[k], Y[k], self.t, self.model, self.trunc)
            self.t += 1
            if self.averaged:
                self.avg += (self.theta - self.avg) / self.t
            self.n_truncated += tr

    def records(self, t):
        return True

    def snapshot(self, t):
        est = self.avg if self.averaged else self.theta
        return est.copy(), lambda_max(self.P)


class _OnsEngine:
    def __init__(self, cfg, d, n, averaged):
        self.cfg = cfg
        self.averaged = averaged
        self.w = np.zeros((n, d))
        self.P = np.tile(cfg.p1_scale * np.eye(d), (n, 1, 1))
        self.avg = self.w.copy()
        self.t = 1

    def advance(self, X, Y):
        for k in range(X.shape[0]):
            self.w, self.P = ons_update(self.w, self.P, X[k], Y[k], self.cfg)
            self.t += 1
            if self.averaged:
                self.avg += (self.w - self.avg) / self.t

    def records(self, t):
        return True

    def snapshot(self, t):
        est = self.avg if self.averaged else self.w
        return est.copy(), lambda_max(self.P)


class _AsgdEngine:
    """Constant-step SGD restarted for every horizon, all horizons advanced together."""

    def __init__(self, model, horizons, gammas, d, n):
        self.model = model
        self.horizons = np.asarray(horizons, dtype=np.int64)
        self.gammas = np.asarray(gammas, dtype=float)
        self.theta = np.zeros((n, len(self.horizons), d))
        self.total = np.zeros_like(self.theta)
        self.consumed = 0

    def advance(self, X, Y):
        for k in range(X.shape[0]):
            j = int(np.searchsorted(self.horizons, self.consumed, side="right"))
            if j == len(self.horizons):
                self.consumed += 1
                continue
            th = self.theta[:, j:]
            x = X[k][:, None, :]
            u = (th * x).sum(axis=-1)
            grad, _ = self.model.grad_curv(Y[k][:, None], u)
            self.total[:, j:] += th
            self.theta[:, j:] = th - (self.gammas[j:, None] * grad[..., None]) * x
            self.consumed += 1

    def records(self, t):
        return t in self.horizons

    def snapshot(self, t):
        h = int(np.searchsorted(self.horizons, t))
        return self.total[:, h] / t, None


def _asgd_gammas(kind, horizons, d, ref_norm):
    if kind == ASGD:
        return [asgd_stepsize(d, N) for N in horizons]
    return [asgd_oracle_stepsize(ref_norm, d, N) for N in horizons]


def ons_config(spec, model, proc, ref_norm, master_seed, index):
    """Resolve an ONS section into an :class:`OnsConfig` and a description of the choices."""
    p = spec.params
    D = p.get("radius", p.get("radius_factor", 1.1) * ref_norm)
    if not D > 0:
        raise ConfigError(f"algorithm.{spec.name}: zero radius, set radius explicitly")
    D_X = analytic_geometry(proc).D_X
    if "gamma" in p:
        return OnsConfig(gamma=p["gamma"], D=D, model=model, p1_scale=p.get("p1_scale", 1.0)), \
            {"D": D, "gamma": p["gamma"]}
    ec = p.get("expconcavity", "analytic")
    if model.kind != LOGISTIC and isinstance(ec, str):
        raise ConfigError(f"algorithm.{spec.name}.expconcavity: give a number for the Gaussian model")
    if ec == "analytic":
        alpha = logistic_expconcavity_analytic(D, D_X)
    elif ec == "sampled":
        rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(ALGORITHM_STREAM, index)))
        lo, hi = proc.box()
        alpha = logistic_expconcavity_sampled(D, lo, hi, rng, p.get("n_sphere_points", 1000))
    else:
        alpha = float(ec)
    if "gradient_bound" in p:
        G = p["gradient_bound"]
    elif model.kind == LOGISTIC:
        G = default_gradient_bound(model, D_X)
    else:
        raise ConfigError(f"algorithm.{spec.name}.gradient_bound: required for the Gaussian model")
    gamma = ons_stepsize(G, D, alpha)
    return OnsConfig(gamma=gamma, D=D, model=model, p1_scale=p.get("p1_scale", 1.0)), \
        {"D": D, "G": G, "alpha_exp": alpha, "gamma": gamma}


def _make_engines(cfg, resolved, n):
    model = get_model(cfg.process.model_kind)
    d = cfg.process.d
    engines = {}
    for spec in cfg.algorithms:
        info = resolved[spec.name]
        if spec.kind in (ONS, ONS_AVERAGED):
            engines[spec.name] = _OnsEngine(info["ons_config"], d, n, spec.kind == ONS_AVERAGED)
        elif spec.kind in (ASGD, ASGD_ORACLE):
            engines[spec.name] = _AsgdEngine(model, info["horizons"], info["gammas"], d, n)
        else:
            engines[spec.name] = _EkfEngine(spec, model, d, n)
    return engines


def resolve_algorithms(cfg, reference):
    """Per-algorithm derived settings (ONS step size, ASGD horizons and steps)."""
    model = get_model(cfg.process.model_kind)
    ref_norm = float(np.linalg.norm(reference))
    out = {}
    for i, spec in enumerate(cfg.algorithms):
        if spec.kind in (ONS, ONS_AVERAGED):
            ons_cfg, desc = ons_config(spec, model, cfg.process, ref_norm, cfg.master_seed, i)
            out[spec.name] = {"ons_config": ons_cfg, "describe": desc}
        elif spec.kind in (ASGD, ASGD_ORACLE):
            hs = np.array(sorted(set(spec.params.get("horizons", decade_horizons(cfg.horizon).tolist()))),
                          dtype=np.int64)
            gammas = _asgd_gammas(spec.kind, hs, cfg.process.d, ref_norm)
            out[spec.name] = {"horizons": hs, "gammas": gammas,
                              "describe": {"horizons": hs.tolist(), "gammas": list(map(float, gammas))}}
        else:
            out[spec.name] = {"describe": dict(spec.params)}
    return out


# -- reference parameter -----------------------------------------------------

def _ekf_single(theta, P, X, Y, t, model):
    # unbatched loop for long single trajectories
    for x, y in zip(X, Y):
        u = theta @ x
        grad, curv = model.grad_curv(y, u)
        Px = P @ x
        denom = 1.0 + curv * (x @ Px)
        P = P - (curv / denom) * np.outer(Px, Px)
        P = 0.5 * (P + P.T)
        theta = theta - (grad / denom) * Px
        t += 1
    return theta, P, t


def misspec_theta_star_reference(proc, n_iters, seed, block=65536):
    """Long static-EKF run on the process; returns ``(theta_ref, diagnostic)``.

    The diagnostic is ``|theta_n - theta_{n/2}|``, a convergence indicator.
    """
    if n_iters < 0:
        raise ValueError("n_iters must be nonnegative")
    model = get_model(proc.model_kind)
    d = proc.d
    stream = ObservationStream(proc, seed, 0, REFERENCE_STREAM)
    theta, P, t = np.zeros(d), np.eye(d), 1
    half_point = n_iters // 2
    half = theta.copy()
    done = 0
    while done < n_iters:
        m = min(block, n_iters - done)
        if done < half_point < done + m:
            m = half_point - done
        X, Y = stream.draw(m)
        theta, P, t = _ekf_single(theta, P, X, Y, t, model)
        done += m
        if done == half_point:
            half = theta.copy()
    diag = float(np.linalg.norm(theta - half)) if n_iters else 0.0
    return theta, diag


def risk_gradient(proc, theta, n_mc, rng):
    """Monte-Carlo ``grad L(theta)`` with per-coordinate standard errors."""
    model = get_model(proc.model_kind)
    X, y = proc.sample(n_mc, rng)
    g, _ = model.grad_curv(y, X @ theta)
    G = g[:, None] * X
    return G.mean(axis=0), G.std(axis=0, ddof=1) / math.sqrt(n_mc)


def mse_reference(cfg):
    """Parameter the MSE is measured against, with an optional diagnostic."""
    if cfg.process.kind == LOGISTIC_SWITCH:
        return misspec_theta_star_reference(cfg.process, cfg.reference_iters, cfg.reference_seed)
    return cfg.process.theta_star.copy(), None


# -- running -----------------------------------------------------------------

@dataclass
class ChunkResult:
    reps: list
    mse: dict
    lam: dict
    checksums: list
    truncations: dict
    wall_ns: dict
    points: dict = field(default_factory=dict)


def _record_points(cfg, resolved):
    pts = set(cfg.eval_grid.tolist())
    for info in resolved.values():
        if "horizons" in info:
            pts.update(info["horizons"].tolist())
    return np.array(sorted(pts), dtype=np.int64)


def _run_chunk(cfg, resolved, reference, reps, stop=None):
    n = len(reps)
    engines = _make_engines(cfg, resolved, n)
    streams = [ObservationStream(cfg.process, cfg.master_seed, r) for r in reps]
    eval_set = set(cfg.eval_grid.tolist())
    mse = {k: [] for k in engines}
    lam = {k: [] for k in engines}
    points = {k: [] for k in engines}
    wall = {k: 0 for k in engines}
    consumed = 0
    for target in _record_points(cfg, resolved):
        while consumed < target:
            if stop is not None and stop.is_set():
                raise Interrupted
            m = int(min(cfg.block, target - consumed))
            draws = [s.draw(m) for s in streams]
            X = np.stack([dx for dx, _ in draws], axis=1)
            Y = np.stack([dy for _, dy in draws], axis=1)
            for name, eng in engines.items():
                t0 = time.perf_counter_ns()
                eng.advance(X, Y)
                wall[name] += time.perf_counter_ns() - t0
            consumed += m
        t = int(target)
        for name, eng in engines.items():
            is_asgd = isinstance(eng, _AsgdEngine)
            if (is_asgd and eng.records(t)) or (not is_asgd and t in eval_set):
                est, lm = eng.snapshot(t)
                mse[name].append(estimate_mse(est, reference))
                lam[name].append(lm)
                points[name].append(t)
    trunc = {k: e.n_truncated.tolist() for k, e in engines.items() if isinstance(e, _EkfEngine)}
    return ChunkResult(reps=list(reps), mse=mse, lam=lam, checksums=[s.checksum() for s in streams],
                       truncations=trunc, wall_ns=wall, points=points)


def _chunks(n_reps, threads):
    k = max(1, min(threads, n_reps))
    return [c.tolist() for c in np.array_split(np.arange(n_reps), k)]


def run_replications(cfg, threads=1, reference=None, resolved=None):
    """Run all replications; returns ``(chunk_results, interrupted)``."""
    if reference is None:
        reference, _ = mse_reference(cfg)
    if resolved is None:
        resolved = resolve_algorithms(cfg, reference)
    chunks = _chunks(cfg.replications, threads)
    done = []
    if len(chunks) == 1:
        try:
            done.append(_run_chunk(cfg, resolved, reference, chunks[0]))
        except KeyboardInterrupt:
            return done, True
        return done, False
    stop = threading.Event()
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        futures = [pool.submit(_run_chunk, cfg, resolved, reference, c, stop) for c in chunks]
        try:
            for f in futures:
                f.result()
        except KeyboardInterrupt:
            stop.set()
        for f in futures:
            try:
                done.append(f.result())
            except Interrupted:
                pass
    return done, stop.is_set()


# -- outputs -----------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    return FLOAT_FMT % v


def result_rows(cfg, chunks):
    """Rows ``(setting, algorithm, replication, t, mse, lambda_max_P)`` in a fixed order."""
    rows = []
    for spec in cfg.algorithms:
        name = spec.name
        for ch in sorted(chunks, key=lambda c: c.reps[0]):
            for i, r in enumerate(ch.reps):
                for j, t in enumerate(ch.points[name]):
                    lm = ch.lam[name][j]
                    rows.append((cfg.setting, name, r, t, float(ch.mse[name][j][i]),
                                 None if lm is None else float(lm[i])))
    return rows


def aggregate(rows):
    """Mean and standard error of the MSE per ``(algorithm, t)``, from raw rows."""
    groups = {}
    order = []
    for setting, alg, _, t, mse, lm in rows:
        key = (setting, alg, t)
        if key not in groups:
            groups[key] = ([], [])
            order.append(key)
        groups[key][0].append(mse)
        if lm is not None:
            groups[key][1].append(lm)
    out = []
    for key in order:
        m, lm = np.array(groups[key][0]), groups[key][1]
        se = float(m.std(ddof=1) / math.sqrt(len(m))) if len(m) > 1 else float("nan")
        out.append((*key, len(m), float(m.mean()), se, float(np.mean(lm)) if lm else None))
    return out


def hitting_rows(rows, epsilon):
    """Empirical proxy for the localization time: first grid ``t`` after which
    ``|theta_t - theta*| <= epsilon`` at every later grid point (blank if never)."""
    per = {}
    for setting, alg, r, t, mse, _ in rows:
        per.setdefault((setting, alg, r), []).append((t, mse))
    out = []
    for key, seq in per.items():
        seq.sort()
        hit = None
        for t, mse in reversed(seq):
            if math.sqrt(mse) > epsilon:
                break
            hit = t
        out.append((*key, hit))
    return out


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) or v is None else v for v in row])


@dataclass
class RunOutput:
    out_dir: str
    rows: list
    aggregated: list
    manifest: dict
    truncated: bool
    paths: dict


def run_experiment(cfg, out_dir, threads=1, plot=True):
    """Run, then write results.csv, aggregated.csv, manifest.json, timing.json,
    density.csv for logistic processes, and the MSE figure unless ``plot`` is false."""
    os.makedirs(out_dir, exist_ok=True)
    reference, ref_diag = mse_reference(cfg)
    resolved = resolve_algorithms(cfg, reference)
    chunks, interrupted = run_replications(cfg, threads, reference, resolved)
    rows = result_rows(cfg, chunks)
    agg = aggregate(rows)
    paths = {"results": os.path.join(out_dir, "results.csv"),
             "aggregated": os.path.join(out_dir, "aggregated.csv"),
             "manifest": os.path.join(out_dir, "manifest.json"),
             "timing": os.path.join(out_dir, "timing.json")}
    _write_csv(paths["results"], ["setting", "algorithm", "replication", "t", "mse", "lambda_max_P"], rows)
    _write_csv(paths["aggregated"],
               ["setting", "algorithm", "t", "n", "mean_mse", "se_mse", "mean_lambda_max_P"], agg)
    if cfg.hitting_epsilon is not None:
        paths["hitting"] = os.path.join(out_dir, "hitting.csv")
        _write_csv(paths["hitting"], ["setting", "algorithm", "replication", "t_hit_proxy"],
                   hitting_rows(rows, cfg.hitting_epsilon))

    density = None
    if cfg.density_samples > 0 and cfg.process.kind != LINEAR:
        density = density_diagnostics(cfg.process, cfg.density_samples, cfg.master_seed)
        paths["density"] = os.path.join(out_dir, "density.csv")
        nb = len(next(iter(density.values()))["hist"])
        _write_csv(paths["density"], ["component", "bin_low", "bin_high", "count"],
                   [(name, k / nb, (k + 1) / nb, c) for name, dd in density.items()
                    for k, c in enumerate(dd["hist"])])
        density = {k: {m: v for m, v in dd.items() if m != "hist"} for k, dd in density.items()}

    ordered = sorted(chunks, key=lambda c: c.reps[0])
    completed = [r for c in ordered for r in c.reps]
    truncs = {}
    for c in ordered:
        for k, v in c.truncations.items():
            truncs.setdefault(k, []).extend(v)
    manifest = {
        "version": __version__,
        "numpy_version": np.__version__,
        "config": cfg.resolved(),
        "reference_theta": [float(v) for v in reference],
        "reference_diagnostic": ref_diag,
        "algorithms_resolved": {k: v["describe"] for k, v in resolved.items()},
        "paired_streams": True,
        "stream_checksums": [h for c in ordered for h in c.checksums],
        "completed_replications": completed,
        "truncated_steps": truncs,
        "truncated": bool(interrupted),
        "label_parameter_density": density,
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    steps = {k: 0 for k in resolved}
    wall = {k: 0 for k in resolved}
    for c in ordered:
        for k in wall:
            wall[k] += c.wall_ns[k]
            steps[k] += len(c.reps) * int(max(c.points[k], default=0))
    timing = {k: {"wall_ns": wall[k], "replication_steps": steps[k],
                  "ns_per_step": wall[k] / steps[k] if steps[k] else None,
                  "d": cfg.process.d, "threads": threads} for k in wall}
    with open(paths["timing"], "w", encoding="utf-8") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if plot and agg and not interrupted:
        from .plotting import plot_mse
        paths["figure"] = os.path.join(out_dir, "mse.png")
        plot_mse(agg, paths["figure"], title=cfg.setting)
    return RunOutput(out_dir, rows, agg, manifest, bool(interrupted), paths)


def fixed_horizon_sweep(cfg, algorithm, horizons, reference=None):
    """Re-run one ASGD variant from scratch for each horizon; one row per (replication, horizon)."""
    spec = next((a for a in cfg.algorithms if a.name == algorithm), None)
    if spec is None or spec.kind not in (ASGD, ASGD_ORACLE):
        raise ConfigError(f"{algorithm!r} is not an ASGD algorithm of this config")
    if reference is None:
        reference, _ = mse_reference(cfg)
    hs = np.array(sorted(set(int(h) for h in horizons)), dtype=np.int64)
    if hs.min() < 1:
        raise ValueError("horizons must be >= 1")
    gammas = _asgd_gammas(spec.kind, hs, cfg.process.d, float(np.linalg.norm(reference)))
    model = get_model(cfg.process.model_kind)
    n = cfg.replications
    eng = _AsgdEngine(model, hs, gammas, cfg.process.d, n)
    streams = [ObservationStream(cfg.process, cfg.master_seed, r) for r in range(n)]
    rows = []
    consumed = 0
    for N in hs:
        while consumed < N:
            m = int(min(cfg.block, N - consumed))
            draws = [s.draw(m) for s in streams]
            eng.advance(np.stack([a for a, _ in draws], axis=1), np.stack([b for _, b in draws], axis=1))
            consumed += m
        est, _ = eng.snapshot(int(N))
        mse = estimate_mse(est, reference)
        g = gammas[int(np.searchsorted(hs, N))]
        rows.extend((cfg.setting, algorithm, r, int(N), float(g), float(mse[r])) for r in range(n))
    return rows
