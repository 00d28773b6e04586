"""Experiment configuration: an INI file with strict keys.

Grammar (``;`` or ``#`` start comments, keys are case-sensitive)::

    [experiment]
    setting = setting2              ; label written to every CSV row
    horizon = 100000
    replications = 100
    master_seed = 1
    grid_per_decade = 30            ; log-spaced grid, capped at horizon
    eval_grid = 10, 100, 1000       ; explicit grid (overrides grid_per_decade)
    block = 1024                    ; observations drawn per stream refill
    hitting_epsilon = 0.1           ; optional hitting-time proxy
    density_samples = 1000000       ; draws behind the label-parameter histogram (0 = skip)

    [process]
    kind = logistic                 ; logistic | switch_mix | linear
    theta_star = setting2           ; preset name or comma-separated numbers
    theta2 = misspec_theta2         ; switch_mix only
    sigma = 0                       ; linear only
    d_app = 0                       ; linear only
    design = uniform_box            ; uniform_box | rademacher

    [reference]                     ; switch_mix only
    n_iters = 10000000
    seed = 7

    [algorithm.NAME]                ; one section per algorithm, NAME is free
    kind = ekf                      ; see ALGORITHM_KEYS

Unknown sections or keys raise :class:`ConfigError` naming the field.
"""

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .datagen import (LINEAR, LOGISTIC_SWITCH, LOGISTIC_WELLSPEC, RADEMACHER, UNIFORM_BOX,
                      DataProcess, default_theta_stars)


class ConfigError(ValueError):
    pass


EXPERIMENT_KEYS = {"setting", "horizon", "replications", "master_seed", "grid_per_decade",
                   "eval_grid", "block", "hitting_epsilon", "density_samples"}
PROCESS_KEYS = {"kind", "theta_star", "theta2", "sigma", "d_app", "design"}
REFERENCE_KEYS = {"n_iters", "seed"}

EKF, EKF_TRUNCATED, EKF_AVERAGED = "ekf", "ekf_truncated", "ekf_averaged"
ONS, ONS_AVERAGED = "ons", "ons_averaged"
ASGD, ASGD_ORACLE = "asgd", "asgd_oracle"

ALGORITHM_KEYS = {
    EKF: {"p1_scale"},
    EKF_AVERAGED: {"p1_scale"},
    EKF_TRUNCATED: {"p1_scale", "beta", "c"},
    ONS: {"p1_scale", "radius_factor", "radius", "expconcavity", "gradient_bound", "gamma",
          "n_sphere_points"},
    ONS_AVERAGED: {"p1_scale", "radius_factor", "radius", "expconcavity", "gradient_bound",
                   "gamma", "n_sphere_points"},
    ASGD: {"horizons"},
    ASGD_ORACLE: {"horizons"},
}


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    setting: str
    process: DataProcess
    horizon: int
    replications: int
    master_seed: int
    eval_grid: np.ndarray
    algorithms: list
    block: int = 1024
    reference_iters: int = 10_000_000
    reference_seed: int = 0
    hitting_epsilon: float | None = None
    density_samples: int = 1_000_000

    def __post_init__(self):
        self.eval_grid = np.asarray(self.eval_grid, dtype=np.int64)
        if self.horizon < 1:
            raise ConfigError("experiment.horizon: must be >= 1")
        if self.replications < 1:
            raise ConfigError("experiment.replications: must be >= 1")
        if self.eval_grid.size == 0 or self.eval_grid.min() < 1:
            raise ConfigError("experiment.eval_grid: needs positive entries")
        if self.eval_grid.max() > self.horizon:
            raise ConfigError("experiment.eval_grid: exceeds horizon")
        if np.any(np.diff(self.eval_grid) <= 0):
            raise ConfigError("experiment.eval_grid: must be strictly increasing")
        if not self.algorithms:
            raise ConfigError("no [algorithm.*] section")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate algorithm names")
        if self.block < 1:
            raise ConfigError("experiment.block: must be >= 1")
        if self.density_samples < 0:
            raise ConfigError("experiment.density_samples: must be >= 0")

    def resolved(self):
        """Plain-data echo of the configuration, for the manifest."""
        p = self.process
        return {
            "setting": self.setting, "horizon": self.horizon, "replications": self.replications,
            "master_seed": self.master_seed, "block": self.block,
            "eval_grid": self.eval_grid.tolist(),
            "hitting_epsilon": self.hitting_epsilon, "density_samples": self.density_samples,
            "process": {"kind": p.kind, "theta_star": p.theta_star.tolist(),
                        "theta2": None if p.theta2 is None else p.theta2.tolist(),
                        "sigma": p.sigma, "d_app": p.d_app, "design": p.design},
            "reference": {"n_iters": self.reference_iters, "seed": self.reference_seed},
            "algorithms": [{"name": a.name, "kind": a.kind, "params": dict(a.params)}
                           for a in self.algorithms],
        }


def log_grid(horizon, per_decade=30):
    """Integer grid with ``per_decade`` log-spaced points per decade, from 1 up to ``horizon``."""
    if horizon < 1 or per_decade < 1:
        raise ValueError("horizon and per_decade must be >= 1")
    n = int(math.floor(per_decade * math.log10(horizon) + 1e-9))
    pts = np.unique(np.round(10.0 ** (np.arange(n + 1) / per_decade)).astype(np.int64))
    pts = pts[pts <= horizon]
    if pts[-1] != horizon:
        pts = np.append(pts, horizon)
    return pts


def decade_horizons(horizon):
    """``10, 100, ...`` up to ``horizon``, plus ``horizon`` itself."""
    hs = [10 ** k for k in range(1, int(math.log10(horizon) + 1e-9) + 1)]
    if not hs or hs[-1] != horizon:
        hs.append(horizon)
    return np.array(hs, dtype=np.int64)


def _vector(section, key, text):
    presets = default_theta_stars()
    text = text.strip()
    if text in presets:
        return presets[text].copy()
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected a preset name or numbers, got {text!r}") from None


def _int(text):
    return int(float(text))


def _number(section, key, text, kind=float, positive=False, allow_zero=True):
    try:
        v = kind(text)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected a number, got {text!r}") from None
    if positive and not (v > 0 or (allow_zero and v == 0)):
        raise ConfigError(f"{section}.{key}: must be {'nonnegative' if allow_zero else 'positive'}")
    return v


def _int_list(section, key, text):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected comma-separated integers") from None


def _check_keys(section, keys, allowed):
    extra = sorted(set(keys) - allowed)
    if extra:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(extra)}")


def _algorithm(name, sec):
    section = f"algorithm.{name}"
    if "kind" not in sec:
        raise ConfigError(f"{section}.kind: missing")
    kind = sec["kind"].strip()
    if kind not in ALGORITHM_KEYS:
        raise ConfigError(f"{section}.kind: unknown algorithm kind {kind!r}")
    _check_keys(section, set(sec) - {"kind"}, ALGORITHM_KEYS[kind])
    params = {}
    for key, raw in sec.items():
        if key == "kind":
            continue
        if key == "horizons":
            params[key] = _int_list(section, key, raw)
        elif key == "expconcavity":
            raw = raw.strip()
            params[key] = raw if raw in ("analytic", "sampled") else _number(section, key, raw, positive=True,
                                                                            allow_zero=False)
        elif key == "n_sphere_points":
            params[key] = _number(section, key, raw, int, positive=True, allow_zero=False)
        else:
            params[key] = _number(section, key, raw, positive=True, allow_zero=False)
    if kind == EKF_TRUNCATED and not 0 < params.get("beta", 0.49) < 0.5:
        raise ConfigError(f"{section}.beta: must lie in (0, 1/2)")
    return AlgorithmSpec(name=name, kind=kind, params=params)


def parse_config(text, seed_override=None):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax: {exc}") from None
    for sec in cp.sections():
        if sec not in ("experiment", "process", "reference") and not sec.startswith("algorithm."):
            raise ConfigError(f"unknown section [{sec}]")
    for req in ("experiment", "process"):
        if req not in cp:
            raise ConfigError(f"missing section [{req}]")

    ex = cp["experiment"]
    _check_keys("experiment", ex.keys(), EXPERIMENT_KEYS)
    for req in ("horizon", "replications"):
        if req not in ex:
            raise ConfigError(f"experiment.{req}: missing")
    horizon = _number("experiment", "horizon", ex["horizon"], _int)
    reps = _number("experiment", "replications", ex["replications"], int)
    seed = _number("experiment", "master_seed", ex.get("master_seed", "0"), int, positive=True)
    if seed_override is not None:
        seed = int(seed_override)
    if "eval_grid" in ex:
        grid = _int_list("experiment", "eval_grid", ex["eval_grid"])
    else:
        per = _number("experiment", "grid_per_decade", ex.get("grid_per_decade", "30"), int,
                      positive=True, allow_zero=False)
        grid = log_grid(horizon, per) if horizon >= 1 else []
    block = _number("experiment", "block", ex.get("block", "1024"), int)
    hit = ex.get("hitting_epsilon")
    hit = None if hit is None else _number("experiment", "hitting_epsilon", hit, positive=True,
                                           allow_zero=False)

    dens = _number("experiment", "density_samples", ex.get("density_samples", "1000000"), _int,
                   positive=True)

    pr = cp["process"]
    _check_keys("process", pr.keys(), PROCESS_KEYS)
    kind = pr.get("kind", LOGISTIC_WELLSPEC).strip()
    if kind not in (LOGISTIC_WELLSPEC, LOGISTIC_SWITCH, LINEAR):
        raise ConfigError(f"process.kind: unknown process {kind!r}")
    if "theta_star" not in pr:
        raise ConfigError("process.theta_star: missing")
    design = pr.get("design", UNIFORM_BOX).strip()
    if design not in (UNIFORM_BOX, RADEMACHER):
        raise ConfigError(f"process.design: unknown design {design!r}")
    if kind != LOGISTIC_SWITCH and "theta2" in pr:
        raise ConfigError("process.theta2: only valid for switch_mix")
    if kind != LINEAR and ("sigma" in pr or "d_app" in pr):
        raise ConfigError("process.sigma/d_app: only valid for linear")
    try:
        proc = DataProcess(
            kind=kind,
            theta_star=_vector("process", "theta_star", pr["theta_star"]),
            theta2=_vector("process", "theta2", pr["theta2"]) if "theta2" in pr else None,
            sigma=_number("process", "sigma", pr.get("sigma", "0"), positive=True),
            d_app=_number("process", "d_app", pr.get("d_app", "0"), positive=True),
            design=design,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"process: {exc}") from None

    ref_iters, ref_seed = 10_000_000, seed
    if "reference" in cp:
        rf = cp["reference"]
        _check_keys("reference", rf.keys(), REFERENCE_KEYS)
        if kind != LOGISTIC_SWITCH:
            raise ConfigError("[reference] is only used by switch_mix processes")
        ref_iters = _number("reference", "n_iters", rf.get("n_iters", str(ref_iters)),
                            _int, positive=True)
        ref_seed = _number("reference", "seed", rf.get("seed", str(seed)), int, positive=True)

    algos = [_algorithm(sec.split(".", 1)[1], cp[sec]) for sec in cp.sections()
             if sec.startswith("algorithm.")]
    for a in algos:
        if a.kind in (ASGD, ASGD_ORACLE) and "horizons" in a.params:
            hs = a.params["horizons"]
            if min(hs) < 1 or max(hs) > horizon:
                raise ConfigError(f"algorithm.{a.name}.horizons: must lie in [1, horizon]")
        if a.kind == EKF_TRUNCATED and proc.model_kind != "logistic":
            raise ConfigError(f"algorithm.{a.name}: truncation needs a logistic process")
    return ExperimentConfig(setting=ex.get("setting", "custom").strip(), process=proc,
                            horizon=horizon, replications=reps, master_seed=seed,
                            eval_grid=grid, algorithms=algos, block=block,
                            reference_iters=ref_iters, reference_seed=ref_seed,
                            hitting_epsilon=hit, density_samples=dens)


def load_config(path, seed_override=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), seed_override)
