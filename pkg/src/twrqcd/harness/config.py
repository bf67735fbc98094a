"""Experiment configuration: a single JSON document, fully resolved before running.

Schema (all keys optional except where noted)::

    {
      "family": {"kind": "mlp-gaussian", "obs_dim": 4, "param_dim": 4, "widths": [16, 16]},
      "per_trial_family": true,          # fresh network seed per trial
      "target_kl": 0.3, "kl_tol": 0.05,
      "trials": 50, "horizon": 400,
      "lambda": 200,                     # or null together with "prior"
      "prior": {"rho": 0.005},
      "no_change": true,                 # also run change-free streams (FAR)
      "no_change_horizon": 400,          # required when no_change is true
      "history_fraction": 0.1,           # pre-change data for the adaptive baseline
      "thresholds": [3, 5, 8] | {"min": 5, "max": 20, "num": 6},
      "detectors": [{"type": "oracle"}, {"type": "twr", "step_size": 0.1}, ...],
      "master_seed": 2024,
      "emit_traces": false, "emit_plots": true,
      "multi": {"n_changes": 3, "gap_factor": 10, "threshold": 20, "pilot_trials": 20},
      "sweep": {"key": "target_kl", "values": [0.3, 1.5]}   # used by the sweep command only
    }

Detector entries take ``type`` in {oracle, twr, adaptive, glr} plus any field
of the matching config dataclass; ``name`` defaults to the type.
"""
import json
from dataclasses import dataclass, field, fields

import numpy as np

from ..detectors import AdaptiveConfig, GlrConfig, OracleConfig, TwrConfig
from ..errors import ConfigError, InvalidArgumentError
from ..param_kernels import KernelFamily
from ..posterior import PriorSpec

DETECTOR_TYPES = {"oracle": OracleConfig, "twr": TwrConfig, "adaptive": AdaptiveConfig, "glr": GlrConfig}

# desk-scale grid: the oracle delay at the top (about 20 / KL) stays well inside the post-change window
DEFAULT_THRESHOLDS = tuple(float(b) for b in np.geomspace(5.0, 20.0, 6))

DEFAULT_FAMILY = {"kind": "mlp-gaussian", "obs_dim": 4, "param_dim": 4, "widths": [16, 16]}


@dataclass(frozen=True)
class MultiSpec:
    n_changes: int = 3
    gap_factor: float = 10.0
    threshold: float = 20.0
    pilot_trials: int = 20
    gap: int = None  # explicit gap overrides the pilot estimate


@dataclass(frozen=True)
class ExperimentConfig:
    family: dict = field(default_factory=lambda: dict(DEFAULT_FAMILY))
    per_trial_family: bool = True
    target_kl: float = 0.3
    kl_tol: float = 0.05
    trials: int = 50
    horizon: int = 400
    lam: int = 200
    prior: dict = field(default_factory=lambda: {"rho": 0.005})
    no_change: bool = True
    no_change_horizon: int = 400
    history_fraction: float = 0.1
    thresholds: tuple = DEFAULT_THRESHOLDS
    detectors: tuple = ({"type": "oracle"}, {"type": "twr"}, {"type": "adaptive"})
    master_seed: int = 2024
    emit_traces: bool = False
    emit_plots: bool = True
    multi: MultiSpec = field(default_factory=MultiSpec)
    sweep: dict = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.horizon < 2:
            raise ConfigError("horizon must be >= 2")
        if self.lam is not None and not 0 < self.lam < self.horizon:
            raise ConfigError("lambda must lie strictly inside (0, horizon)")
        if self.no_change and (self.no_change_horizon is None or self.no_change_horizon < 1):
            raise ConfigError("no_change_horizon is required (>= 1) when no_change is enabled")
        if not self.target_kl > 0 or not self.kl_tol > 0:
            raise ConfigError("target_kl and kl_tol must be > 0")
        if not 0 < self.history_fraction <= 1:
            raise ConfigError("history_fraction must lie in (0, 1]")
        if not self.thresholds or any(not (b >= 0) for b in self.thresholds):
            raise ConfigError("thresholds must be a non-empty list of non-negative numbers")
        names = [d.name for d in self.detector_configs()]
        if len(set(names)) != len(names):
            raise ConfigError(f"detector names must be unique, got {names}")
        self.family_template()
        if self.sweep is not None:
            if not isinstance(self.sweep, dict) or set(self.sweep) != {"key", "values"} or not self.sweep["values"]:
                raise ConfigError('sweep must be {"key": name, "values": [non-empty list]}')

    # -- derived objects ----------------------------------------------------

    def family_template(self):
        try:
            return KernelFamily.from_dict(self.family)
        except (InvalidArgumentError, TypeError) as exc:
            raise ConfigError(f"bad family spec: {exc}") from exc

    def family_for_trial(self, seed):
        fam = self.family_template()
        return fam.with_seed(seed) if self.per_trial_family and fam.kind == "mlp-gaussian" else fam

    def prior_spec(self):
        try:
            return PriorSpec(**self.prior)
        except (InvalidArgumentError, TypeError) as exc:
            raise ConfigError(f"bad prior spec: {exc}") from exc

    def detector_configs(self):
        return [build_detector(d) for d in self.detectors]

    @property
    def history_length(self):
        ref = self.lam if self.lam is not None else self.horizon // 2
        return max(1, int(round(self.history_fraction * ref)))

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["lambda"] = d.pop("lam")
        d["thresholds"] = [float(b) for b in self.thresholds]
        d["detectors"] = [dict(x) for x in self.detectors]
        d["multi"] = {f.name: getattr(self.multi, f.name) for f in fields(self.multi)}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_detector(entry):
    entry = dict(entry)
    kind = entry.pop("type", None)
    if kind not in DETECTOR_TYPES:
        raise ConfigError(f"detector type must be one of {sorted(DETECTOR_TYPES)}, got {kind!r}")
    cls = DETECTOR_TYPES[kind]
    entry.setdefault("name", kind)
    if "prior" in entry:
        entry["prior"] = PriorSpec(**entry["prior"])
    known = {f.name for f in fields(cls)}
    unknown = set(entry) - known
    if unknown:
        raise ConfigError(f"unknown {kind} fields: {sorted(unknown)}")
    try:
        return cls(**entry)
    except (InvalidArgumentError, TypeError) as exc:
        raise ConfigError(f"bad {kind} detector config: {exc}") from exc


def _thresholds(spec):
    if isinstance(spec, dict):
        try:
            lo, hi, num = float(spec["min"]), float(spec["max"]), int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("threshold grid dict needs numeric min, max and num") from exc
        if not 0 < lo <= hi or num < 1:
            raise ConfigError("threshold grid needs 0 < min <= max and num >= 1")
        return tuple(float(b) for b in np.geomspace(lo, hi, num))
    if isinstance(spec, (list, tuple)):
        try:
            return tuple(float(b) for b in spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError("thresholds must be numbers") from exc
    raise ConfigError("thresholds must be a list or a {min, max, num} dict")


def config_from_dict(d, seed=None):
    """Validate and resolve a config document; ``seed`` overrides master_seed."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    d = dict(d)
    known = {f.name for f in fields(ExperimentConfig)} - {"lam"} | {"lambda"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    if "thresholds" in d:
        d["thresholds"] = _thresholds(d["thresholds"])
    if "detectors" in d:
        if not isinstance(d["detectors"], list) or not d["detectors"]:
            raise ConfigError("detectors must be a non-empty list")
        d["detectors"] = tuple(dict(x) for x in d["detectors"])
    if "multi" in d:
        try:
            d["multi"] = MultiSpec(**d["multi"])
        except TypeError as exc:
            raise ConfigError(f"bad multi spec: {exc}") from exc
    if seed is not None:
        d["master_seed"] = int(seed)
    try:
        return ExperimentConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, seed=None):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc, seed=seed)
