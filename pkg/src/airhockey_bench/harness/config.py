"""Environment profiles and their configuration surface.

A profile selects which sim-to-sim gap factors are active: `ideal` none,
`evaluation` all four, `ablation` exactly one. Factor knobs live in separate
groups so an ablation run provably differs from the ideal profile in exactly
one group (see `knob_groups` / `diff_knob_groups`).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..estimation import MismatchConfig, NoiseConfig
from ..simcore.arm import ArmTrackingModel, TrackingMode
from ..simcore.table import PuckParams, TableGeometry
from ..simcore.world import MatchConfig

FACTORS = ("model_mismatch", "obs_noise", "puck_disturbance", "track_loss")
PROFILES = ("ideal", "evaluation", "ablation")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    profile: str = "ideal"
    factor: Optional[str] = None        # ablation profile only
    geometry: TableGeometry = TableGeometry()
    puck_params: PuckParams = PuckParams()
    noise: NoiseConfig = NoiseConfig()
    mismatch: MismatchConfig = MismatchConfig(gain_scale_range=(0.85, 0.95),
                                              tau_range=(1.2, 1.8),
                                              friction_range=(1.1, 1.4),
                                              restitution_range=(0.92, 0.98))
    disturbance_std: float = 0.3        # m/s^2 when the disturbance factor is on
    fault_limit_s: float = 15.0
    max_steps: int = 500
    timing_enabled: bool = True
    master_seed: int = 0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.profile == "ablation":
            if self.factor not in FACTORS:
                raise ConfigError(f"ablation profile needs a factor from {FACTORS}")
        elif self.factor is not None:
            raise ConfigError("factor is only valid with the ablation profile")

    def enabled_factors(self) -> frozenset:
        if self.profile == "ideal":
            return frozenset()
        if self.profile == "evaluation":
            return frozenset(FACTORS)
        return frozenset({self.factor})

    def effective_noise(self) -> NoiseConfig:
        on = self.enabled_factors()
        return replace(self.noise, noise_enabled="obs_noise" in on,
                       loss_enabled="track_loss" in on)

    def effective_puck_params(self) -> PuckParams:
        if "puck_disturbance" in self.enabled_factors():
            return replace(self.puck_params, disturbance_std=self.disturbance_std)
        return self.puck_params

    def knob_groups(self) -> dict:
        """Configuration grouped by factor, for ablation config diffing."""
        on = self.enabled_factors()
        noise = self.effective_noise()
        return {
            "model_mismatch": {"enabled": "model_mismatch" in on,
                               "mismatch": _to_jsonable(self.mismatch)},
            "obs_noise": {"enabled": noise.noise_enabled,
                          "puck_pos_std": noise.puck_pos_std,
                          "puck_angle_std": noise.puck_angle_std,
                          "joint_pos_std": noise.joint_pos_std},
            "puck_disturbance": {"enabled": "puck_disturbance" in on,
                                 "std": self.effective_puck_params().disturbance_std},
            "track_loss": {"enabled": noise.loss_enabled,
                           "enter_prob": noise.loss_enter_prob,
                           "mean_duration": noise.loss_mean_duration},
            "base": {"geometry": _to_jsonable(self.geometry),
                     "puck": _to_jsonable(self.puck_params),
                     "fault_limit_s": self.fault_limit_s,
                     "max_steps": self.max_steps},
        }

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "factor": self.factor,
            "geometry": _to_jsonable(self.geometry),
            "puck_params": _to_jsonable(self.puck_params),
            "noise": _to_jsonable(self.noise),
            "mismatch": _to_jsonable(self.mismatch),
            "disturbance_std": self.disturbance_std,
            "fault_limit_s": self.fault_limit_s,
            "max_steps": self.max_steps,
            "timing_enabled": self.timing_enabled,
            "master_seed": self.master_seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "EnvConfig":
        known = {f.name for f in dataclasses.fields(EnvConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def build(cls, value, current):
            if value is None:
                return current
            if not isinstance(value, dict):
                raise ConfigError(f"{cls.__name__} section must be an object")
            try:
                return replace(current, **{k: _tupled(v) for k, v in value.items()})
            except (TypeError, ValueError) as err:
                raise ConfigError(f"bad {cls.__name__} section: {err}") from None

        base = EnvConfig()
        kwargs = {}
        for key, value in data.items():
            if key == "geometry":
                kwargs[key] = build(TableGeometry, value, base.geometry)
            elif key == "puck_params":
                kwargs[key] = build(PuckParams, value, base.puck_params)
            elif key == "noise":
                kwargs[key] = build(NoiseConfig, value, base.noise)
            elif key == "mismatch":
                kwargs[key] = build(MismatchConfig, value, base.mismatch)
            else:
                kwargs[key] = value
        try:
            return EnvConfig(**kwargs)
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from None

    @staticmethod
    def load(path) -> "EnvConfig":
        try:
            with open(path) as f:
                data = json.load(f)
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}") from None
        return EnvConfig.from_dict(data)


def _tupled(v):
    return tuple(v) if isinstance(v, list) else v


def _to_jsonable(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, tuple):
            v = list(v)
        elif isinstance(v, TrackingMode):
            v = v.value
        out[f.name] = v
    return out


def config_hash(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def diff_knob_groups(a: EnvConfig, b: EnvConfig) -> set:
    """Names of the knob groups on which two configurations differ."""
    ga, gb = a.knob_groups(), b.knob_groups()
    return {name for name in ga if ga[name] != gb[name]}


def make_match_config(env: EnvConfig, rng: Optional[np.random.Generator] = None
                      ) -> MatchConfig:
    """Instantiate the per-match physics config; the mismatch factor draws
    its perturbation from rng (per-episode, deterministic under seeding)."""
    from ..estimation import perturb_model
    tracking = ArmTrackingModel()
    puck = env.effective_puck_params()
    if "model_mismatch" in env.enabled_factors():
        if rng is None:
            raise ConfigError("model mismatch requires an episode rng")
        tracking, puck = perturb_model(tracking, puck, env.mismatch, rng)
    return MatchConfig(geom=env.geometry, puck_params=puck,
                       tracking=(tracking, ArmTrackingModel()),
                       fault_limit_s=env.fault_limit_s)
