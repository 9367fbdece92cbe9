"""Experiment configuration.

Configs are flat JSON objects. Power fields are given in dBm and converted
to linear watts once, in :func:`load_config` / :func:`make_config`.
"""
from dataclasses import dataclass, field
import json
import math

from ..errors import ConfigError

EXPERIMENTS = ("table1", "table2", "table3", "table4", "table5", "fig2", "fig3", "custom")

# desk-scale defaults; ``full`` restores the trial counts used for the published runs
_COMMON = dict(N=64, M=1, K=50, b=2, T=100, P_dBm=30.0, sigma_w2_dBm=-10.0, eps_h=1.0, eps_g=1.0,
               trials=2000, randomization_trials=1000, seed=2024, format="csv", out=None, workers=1)

DEFAULTS = {
    "table1": dict(K=50, rho=[0.05, 0.10, 0.15]),
    "fig2": dict(K=50, rho=[0.05, 0.10, 0.15], xi=[0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], trials=500),
    "table2": dict(K=1000, a_glr=[0.01, 0.015, 0.02], max_run_factor=20, baseline_cap=5000),
    "fig3": dict(K=1000, a_glr=[0.01, 0.015, 0.02], tau=[5, 10, 20, 50, 100, 150, 200, 300],
                 trials=500),
    "table3": dict(N=8, b=2, zeta=[0.10, 0.20, 0.30, 0.40], states=100, trials=3,
                   moment_samples=100000),
    "table5": dict(N=8, b=2, kappa=[[0.56, 0.52], [0.61, 0.58]], states=100, trials=3,
                   moment_samples=100000, detect_trials=200),
    "table4": dict(N=64, K=100, iota=0.23, eps_ks=[0.02, 0.04],
                   nu_ks=[0.10, 0.15, 0.20, 0.25, 0.30, 0.35], sigma_e2=0.01),
}

FULL_TRIALS = {"table1": 10000, "fig2": 10000, "table2": 10000, "fig3": 10000, "table3": 1,
               "table5": 1, "table4": 10000}

_GRIDS = ("rho", "xi", "a_glr", "tau", "zeta", "kappa", "eps_ks", "nu_ks")


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    @property
    def p_tx(self):
        return self.params["P"]

    @property
    def noise_var(self):
        return self.params["sigma_w2"]

    @property
    def kappa_bar(self):
        return self.p_tx / self.noise_var

    @property
    def seed(self):
        return self.params["seed"]

    @property
    def trials(self):
        return self.params["trials"]

    def to_dict(self):
        return {"experiment": self.experiment, **self.params}


def make_config(experiment, overrides=None, full=False):
    """Merge defaults, ``full`` trial counts and explicit overrides."""
    overrides = dict(overrides or {})
    procedure = overrides.get("procedure")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    base_id = experiment
    if experiment == "custom":
        if procedure not in DEFAULTS:
            raise ConfigError("custom experiments need 'procedure' naming one of "
                              + ", ".join(sorted(DEFAULTS)))
        base_id = procedure
    p = dict(_COMMON)
    p.update(DEFAULTS[base_id])
    if full:
        p["trials"] = FULL_TRIALS[base_id]
    unknown = set(overrides) - set(p) - {"procedure", "P", "sigma_w2"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    p.update(overrides)
    p["procedure"] = base_id
    _validate(p)
    if "P" not in overrides:
        p["P"] = dbm_to_watt(float(p["P_dBm"]))
    if "sigma_w2" not in overrides:
        p["sigma_w2"] = dbm_to_watt(float(p["sigma_w2_dBm"]))
    return ExperimentConfig(experiment, p)


def _validate(p):
    try:
        if int(p["trials"]) < 1:
            raise ConfigError("trials must be >= 1")
        p["trials"] = int(p["trials"])
        for k in ("N", "M", "K", "b", "T", "randomization_trials", "workers"):
            if int(p[k]) < 1:
                raise ConfigError(f"{k} must be >= 1")
            p[k] = int(p[k])
        p["seed"] = int(p["seed"])
        for g in _GRIDS:
            if g in p:
                if not isinstance(p[g], (list, tuple)) or len(p[g]) == 0:
                    raise ConfigError(f"grid {g!r} must be a nonempty list")
                p[g] = list(p[g])
        for k in ("P_dBm", "sigma_w2_dBm", "eps_h", "eps_g"):
            v = float(p[k])
            if not math.isfinite(v):
                raise ConfigError(f"{k} must be finite")
        if p["eps_h"] <= 0 or p["eps_g"] <= 0:
            raise ConfigError("path losses must be positive")
        if p["format"] not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config: {exc}") from exc


def load_config(path, experiment=None, overrides=None, full=False):
    """Read a JSON config file; ``experiment`` and ``overrides`` take precedence."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    exp = experiment or data.pop("experiment", None)
    data.pop("experiment", None)
    if exp is None:
        raise ConfigError("config does not name an experiment")
    data.update(overrides or {})
    return make_config(exp, data, full=full)
