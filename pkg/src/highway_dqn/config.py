"""Flat run configuration and its ``key = value`` text format."""

from __future__ import annotations

import math
import typing
from dataclasses import asdict, dataclass, fields

from .agent import AgentConfig, EpsilonSchedule
from .env import EnvConfig, RewardConfig, TrafficConfig
from .kinematics import KinematicsParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # experiment
    episodes: int = 2000
    seed: int = 0
    algo: str = "ddqn"
    checkpoint_every: int = 500
    record_wall_time: bool = True
    # kinematics
    axle_distance: float = 2.5
    dt: float = 0.1
    v_min: float = 0.0
    v_max: float = 40.0
    delta_max: float = math.pi / 6
    # episode and ego control
    horizon: int = 20
    substeps: int = 10
    ego_speed_range: tuple[float, float] = (23.0, 25.0)
    ego_accel: float = 3.0
    k_head: float = 1.0
    k_lat: float = 1.0
    lookahead: float = 10.0
    road_bounds: tuple[float, float] = (-2.0, 10.0)
    # traffic
    n_per_lane: int = 4
    spawn_gap_range: tuple[float, float] = (20.0, 60.0)
    traffic_speed_range: tuple[float, float] = (18.0, 24.0)
    lane_change_prob: float = 0.1
    safe_gap_front: float = 15.0
    safe_gap_rear: float = 10.0
    traffic_gain: float = 0.5
    hard_brake: float = -5.0
    # reward
    reward_mode: str = "normalized"
    collision_penalty: float = -10.0
    v_ref_max: float = 40.0
    v_ref_min: float = 0.0
    # observation
    obs_neighbors: int = 6
    obs_range: float = 100.0
    # network and optimizer
    hidden: tuple[int, ...] = (128, 128)
    aggregation: str = "max"
    optimizer: str = "adam"
    learning_rate: float = 5e-4
    # learner
    gamma: float = 0.8
    batch_size: int = 32
    buffer_capacity: int = 15_000
    target_sync_every: int = 50
    learn_start: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_tau: float = 6000.0

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if self.checkpoint_every <= 0:
            raise ConfigError("checkpoint_every must be positive")
        try:
            self.env_config()
            self.agent_config()
            self.schedule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            horizon=self.horizon,
            substeps=self.substeps,
            ego_speed_range=self.ego_speed_range,
            ego_accel=self.ego_accel,
            traffic_gain=self.traffic_gain,
            hard_brake=self.hard_brake,
            k_head=self.k_head,
            k_lat=self.k_lat,
            lookahead=self.lookahead,
            road_bounds=self.road_bounds,
            obs_neighbors=self.obs_neighbors,
            obs_range=self.obs_range,
            kinematics=KinematicsParams(self.axle_distance, self.dt, self.v_min, self.v_max,
                                        self.delta_max),
            traffic=TrafficConfig(self.n_per_lane, self.spawn_gap_range, self.traffic_speed_range,
                                  self.lane_change_prob, self.safe_gap_front, self.safe_gap_rear),
            reward=RewardConfig(self.reward_mode, self.collision_penalty, self.v_ref_max,
                                self.v_ref_min),
        )

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            algo=self.algo, gamma=self.gamma, batch_size=self.batch_size,
            buffer_capacity=self.buffer_capacity, target_sync_every=self.target_sync_every,
            learn_start=self.learn_start, hidden=self.hidden, aggregation=self.aggregation,
            optimizer=self.optimizer, learning_rate=self.learning_rate,
        )

    def schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.eps_start, self.eps_end, self.eps_tau)

    def network_dims(self) -> tuple[int, ...]:
        return (self.env_config().obs_dim, *self.hidden)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def to_text(self) -> str:
        return "".join(f"{k} = {format_value(getattr(self, k))}\n" for k in field_types())


def field_types() -> dict[str, typing.Any]:
    hints = typing.get_type_hints(RunConfig)
    return {f.name: hints[f.name] for f in fields(RunConfig)}


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def _parse_scalar(kind, text: str):
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return kind(text)


def parse_value(kind, text: str):
    text = text.strip()
    if typing.get_origin(kind) is tuple:
        args = typing.get_args(kind)
        items = [t.strip() for t in text.split(",") if t.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_parse_scalar(args[0], t) for t in items)
        if len(items) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values, got {len(items)}")
        return tuple(_parse_scalar(a, t) for a, t in zip(args, items))
    return _parse_scalar(kind, text)


def coerce(values: dict) -> dict:
    """Convert JSON-ish values (lists for tuples) back to field types."""
    types = field_types()
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, value in values.items():
        if typing.get_origin(types[key]) is tuple:
            value = tuple(value)
        out[key] = value
    return out


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into typed overrides.

    Blank lines and ``#`` comments are ignored; unknown keys, repeated keys
    and malformed values raise :class:`ConfigError`.
    """
    types = field_types()
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in overrides:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            overrides[key] = parse_value(types[key], value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return overrides


def load_config(path=None, **overrides) -> RunConfig:
    values = {}
    if path is not None:
        with open(path) as fh:
            values = parse_config_text(fh.read(), str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
