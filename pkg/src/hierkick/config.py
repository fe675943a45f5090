"""Configuration loading.

Every tunable of the pipeline lives in one YAML document with the sections
``field``, ``randomization``, ``tracker``, ``camera``, ``perception_noise``,
``coach``, ``rewards``, ``network``, ``ppo`` and ``train``.  Two profiles ship
with the package: ``small`` (desk-scale training) and ``faithful`` (the full
network and batch sizes).  A user file is merged over the chosen profile, so it
only needs the keys it changes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .coach import CommandLimits
from .perception import CameraCalib, NoiseModel
from .ppo import PpoConfig
from .rewards import PhaseThresholds, RewardWeights
from .tracker import TrackerConfig
from .world import FieldConfig, RandomizationSpec

PROFILES = ("small", "faithful")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


@dataclass
class NetworkConfig:
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (64, 64)
    init_std_frac: float = 0.5


@dataclass
class TrainConfig:
    n_worlds: int = 64
    iterations: int = 1000
    seed: int = 0
    curriculum_widening: bool = False


@dataclass
class Config:
    field: FieldConfig
    randomization: RandomizationSpec
    tracker: TrackerConfig
    camera: CameraCalib
    noise: NoiseModel
    limits: CommandLimits
    thresholds: PhaseThresholds
    weights: RewardWeights
    network: NetworkConfig
    ppo: PpoConfig
    train: TrainConfig
    raw: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.raw)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def profile_dict(name: str) -> dict[str, Any]:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {PROFILES}")
    text = resources.files("hierkick.configs").joinpath(f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def _pair(section: dict, key: str) -> tuple[float, float]:
    value = section[key]
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{key} must be a [low, high] pair, got {value!r}")
    return float(value[0]), float(value[1])


def from_dict(raw: dict[str, Any]) -> Config:
    try:
        f = raw["field"]
        field = FieldConfig(
            field_length=float(f["field_length"]),
            field_width=float(f["field_width"]),
            goal_center=tuple(float(v) for v in f["goal_center"]),
            goal_width=float(f["goal_width"]),
            ball_radius=float(f["ball_radius"]),
            robot_contact_radius=float(f["robot_contact_radius"]),
            ball_friction_decel=float(f["ball_friction_decel"]),
            contact_restitution=float(f["contact_restitution"]),
            kick_transfer_gain=float(f["kick_transfer_gain"]),
            boundary_margin=float(f["boundary_margin"]),
        )
        r = raw["randomization"]
        randomization = RandomizationSpec(
            ball_friction_decel=_pair(r, "ball_friction_decel"),
            contact_restitution=_pair(r, "contact_restitution"),
            robot_x=_pair(r, "robot_x"),
            robot_y=_pair(r, "robot_y"),
            robot_heading=_pair(r, "robot_heading"),
            ball_x=_pair(r, "ball_x"),
            ball_y=_pair(r, "ball_y"),
            rng_seed=int(r["rng_seed"]),
        )
        t = raw["tracker"]
        tracker = TrackerConfig(
            time_constant=float(t["time_constant"]),
            tracking_noise_std=tuple(float(v) for v in t["tracking_noise_std"]),
            max_feasible=tuple(float(v) for v in t["max_feasible"]),
            fall_speed_threshold=float(t["fall_speed_threshold"]),
            fall_hazard_rate=float(t["fall_hazard_rate"]),
        )
        c = raw["camera"]
        camera = CameraCalib.from_flat(
            list(c["intrinsics"]) + list(c["rotation"]) + list(c["translation"])
        )
        n = raw["perception_noise"]
        noise = NoiseModel(
            pixel_noise_std=float(n["pixel_noise_std"]),
            depth_noise_frac=float(n["depth_noise_frac"]),
            dropout_prob=float(n["dropout_prob"]),
            detection_latency=int(n["detection_latency"]),
            rate_hz=float(n.get("rate_hz", 10.0)),
        )
        co = raw["coach"]
        limits = CommandLimits(
            increment_bound=tuple(float(v) for v in co["increment_bound"]),
            command_low=tuple(float(v) for v in co["command_low"]),
            command_high=tuple(float(v) for v in co["command_high"]),
        )
        rw = raw["rewards"]
        thresholds = PhaseThresholds(u1=float(rw["u1"]), u2=float(rw["u2"]), u3=float(rw["u3"]))
        weights = RewardWeights(
            lambdas=tuple(float(v) for v in rw["lambdas"]),
            beta=float(rw["beta"]),
            mu=float(rw["mu"]),
            v_max=float(rw["v_max"]),
            alpha=float(rw["alpha"]),
            eps=float(rw["eps"]),
            zeta1=float(rw["zeta1"]),
            zeta2=float(rw["zeta2"]),
            delta_max=float(rw["delta_max"]),
            delta_min=float(rw["delta_min"]),
            survival_bonus=float(rw["survival_bonus"]),
            k_p=float(rw["k_p"]),
            goal_bonus=float(rw["goal_bonus"]),
        )
        nw = raw["network"]
        network = NetworkConfig(
            actor_hidden=tuple(int(v) for v in nw["actor_hidden"]),
            critic_hidden=tuple(int(v) for v in nw["critic_hidden"]),
            init_std_frac=float(nw["init_std_frac"]),
        )
        p = raw["ppo"]
        ppo = PpoConfig(
            gamma=float(p["gamma"]),
            gae_lambda=float(p["gae_lambda"]),
            clip_eps=float(p["clip_eps"]),
            kl_target=float(p["kl_target"]),
            learning_rate=float(p["learning_rate"]),
            batch_size=int(p["batch_size"]),
            minibatch_size=int(p["minibatch_size"]),
            epochs=int(p["epochs"]),
            value_loss_coef=float(p["value_loss_coef"]),
            entropy_coef=float(p["entropy_coef"]),
            max_episode_seconds=float(p["max_episode_seconds"]),
            max_grad_norm=float(p.get("max_grad_norm", 0.0)),
            reward_scale=float(p.get("reward_scale", 1.0)),
        )
        tr = raw["train"]
        train = TrainConfig(
            n_worlds=int(tr["n_worlds"]),
            iterations=int(tr["iterations"]),
            seed=int(tr["seed"]),
            curriculum_widening=bool(tr.get("curriculum_widening", False)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing configuration key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    if ppo.batch_size % train.n_worlds:
        raise ConfigError("ppo.batch_size must be a multiple of train.n_worlds")
    return Config(
        field=field,
        randomization=randomization,
        tracker=tracker,
        camera=camera,
        noise=noise,
        limits=limits,
        thresholds=thresholds,
        weights=weights,
        network=network,
        ppo=ppo,
        train=train,
        raw=copy.deepcopy(raw),
    )


def load_config(profile: str = "small", path: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> Config:
    raw = profile_dict(profile)
    if path is not None:
        user = yaml.safe_load(Path(path).read_text()) or {}
        raw = _merge(raw, user)
    if overrides:
        raw = _merge(raw, overrides)
    return from_dict(raw)
