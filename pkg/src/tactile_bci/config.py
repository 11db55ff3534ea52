"""Experiment configuration: schema, validation, canonical hashing.

Defaults reproduce the reference protocol: 20 rounds per run, 32 online
trials per session, 3 calibration runs per target, both task conditions
over three days. The config hash stamps every artifact a session writes,
so mixed-config archives are detectable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .profiles import CONDITIONS, DAYS

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration or command-line usage (CLI exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    days: tuple[int, ...] = (1, 2, 3)
    conditions: tuple[str, ...] = ("single", "dual")
    n_rounds: int = 20
    n_trials: int = 32
    calibration_runs_per_target: int = 3
    n_continuous_runs: int = 8
    n_filters: int = 5
    svm_c: float = 1.0
    threshold_mode: str = "fixed"
    decision_threshold: float = 0.0
    bandpass_taps: int = 501
    notch_taps: int = 501
    forbid_repeat: bool = True
    save_recordings: bool = False
    profile_overrides: dict = field(default_factory=dict)
    output_dir: str = "archive"
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not self.days or any(d not in DAYS for d in self.days):
            raise ConfigError(f"days must be a non-empty subset of {DAYS}")
        if not self.conditions or any(c not in CONDITIONS for c in self.conditions):
            raise ConfigError(f"conditions must be a non-empty subset of {CONDITIONS}")
        if self.n_rounds < 4:
            raise ConfigError("n_rounds must be >= 4 (first decision needs 4 rounds)")
        if self.n_trials < 4 or self.n_trials % 4 != 0:
            raise ConfigError("n_trials must be a positive multiple of 4")
        if self.calibration_runs_per_target < 1:
            raise ConfigError("calibration_runs_per_target must be >= 1")
        if self.n_continuous_runs < 4 or self.n_continuous_runs % 4 != 0:
            raise ConfigError("n_continuous_runs must be a positive multiple of 4")
        if not 1 <= self.n_filters <= 44:
            raise ConfigError("n_filters must lie in 1..44")
        if self.svm_c <= 0:
            raise ConfigError("svm_c must be positive")
        if self.threshold_mode not in ("fixed", "calibrated"):
            raise ConfigError("threshold_mode must be 'fixed' or 'calibrated'")
        for taps in (self.bandpass_taps, self.notch_taps):
            if taps % 2 == 0 or taps < 3 or taps >= 801:
                raise ConfigError("filter taps must be odd, >= 3 and shorter than an epoch")
        for key, over in self.profile_overrides.items():
            parts = key.split(":")
            if len(parts) != 2 or parts[0] not in CONDITIONS or int(parts[1]) not in DAYS:
                raise ConfigError(f"profile override key must be 'condition:day', got {key!r}")
            if not isinstance(over, dict):
                raise ConfigError("profile overrides must be field dicts")
        return self

    def overrides_for(self, condition: str, day: int) -> dict:
        return dict(self.profile_overrides.get(f"{condition}:{day}", {}))

    def to_json(self) -> str:
        d = asdict(self)
        d["days"] = list(self.days)
        d["conditions"] = list(self.conditions)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        """16 hex chars over the generative fields (output_dir excluded)."""
        d = asdict(self)
        d.pop("output_dir")
        d["days"] = list(self.days)
        d["conditions"] = list(self.conditions)
        payload = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def config_from_dict(d: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    d = dict(d)
    if "days" in d:
        d["days"] = tuple(d["days"])
    if "conditions" in d:
        d["conditions"] = tuple(d["conditions"])
    try:
        cfg = ExperimentConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def config_from_json(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config JSON must be an object")
    return config_from_dict(data)
