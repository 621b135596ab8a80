"""Run configuration: defaults, YAML loading and validation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from app.errors import ConfigError
from app.utils.units import db_to_linear, dbm_to_watts

MODES = ("train", "eval", "baseline", "oracle", "sweep")
SWEEP_AXES = ("pmax_dbm", "elements", "antennas")
NOISE_KINDS = ("gaussian", "ou")


@dataclass(slots=True)
class ChannelConfig:
    antennas: int = 10
    elements: int = 30
    users_t: int = 2
    users_r: int = 2
    bs_ris_distance: float = 50.0
    user_distance_min: float = 5.0
    user_distance_max: float = 10.0
    reference_path_loss: float = 1e-3
    exponent_bs_ris: float = 2.2
    exponent_ris_user: float = 2.5
    rician_bs_ris: float = 10.0
    rician_ris_user: float = 10.0
    resample_each_episode: bool = True

    @property
    def num_users(self) -> int:
        return self.users_t + self.users_r

    def validate(self, prefix: str = "channel") -> None:
        for name in ("antennas", "elements"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{prefix}.{name}", "must be >= 1")
        if self.users_t < 0 or self.users_r < 0:
            raise ConfigError(f"{prefix}.users_t", "user counts must be >= 0")
        if self.num_users < 1:
            raise ConfigError(f"{prefix}.users_t", "at least one user is required")
        if self.bs_ris_distance <= 0:
            raise ConfigError(f"{prefix}.bs_ris_distance_m", "must be > 0")
        if not 0 < self.user_distance_min <= self.user_distance_max:
            raise ConfigError(f"{prefix}.user_distance_m", "need 0 < min <= max")
        if self.reference_path_loss <= 0:
            raise ConfigError(f"{prefix}.reference_path_loss_db", "must give a positive linear value")
        for name in ("exponent_bs_ris", "exponent_ris_user"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{prefix}.{name}", "must be > 0")
        for name in ("rician_bs_ris", "rician_ris_user"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{prefix}.{name}", "must be >= 0")


@dataclass(slots=True)
class SystemConfig:
    max_power: float = dbm_to_watts(20.0)
    min_rate: float = 0.1
    noise_power: float = dbm_to_watts(-80.0)
    bandwidth: float = 180e3
    amplifier_efficiency: float = 0.35
    static_power: float = dbm_to_watts(40.0)
    channel: ChannelConfig = field(default_factory=ChannelConfig)

    def validate(self, prefix: str = "system") -> None:
        if self.max_power <= 0:
            raise ConfigError(f"{prefix}.pmax_dbm", "must give a positive power")
        if self.min_rate < 0:
            raise ConfigError(f"{prefix}.rmin", "must be >= 0")
        if self.noise_power <= 0:
            raise ConfigError(f"{prefix}.noise_dbm", "must give a positive power")
        if self.bandwidth <= 0:
            raise ConfigError(f"{prefix}.bandwidth_hz", "must be > 0")
        if not 0 < self.amplifier_efficiency <= 1:
            raise ConfigError(f"{prefix}.amplifier_efficiency", "must lie in (0, 1]")
        if self.static_power <= 0:
            raise ConfigError(f"{prefix}.static_power_dbm", "must give a positive power")
        self.channel.validate()


@dataclass(slots=True)
class AgentConfig:
    actor_lr: float = 0.001
    critic_lr: float = 0.002
    batch_size: int = 32
    buffer_capacity: int = 10000
    hidden_units: int = 300
    soft_update_rate: float = 0.005
    discount: float = 0.99
    reward_scale: float = 1e-5
    warmup_steps: int = 0
    rate_ramp_episodes: int = 0
    noise_kind: str = "gaussian"
    noise_sigma: float = 0.1
    noise_decay: float = 0.9995
    noise_floor: float = 0.01
    ou_theta: float = 0.15
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5

    def validate(self, prefix: str = "agent") -> None:
        for name in ("actor_lr", "critic_lr", "reward_scale"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{prefix}.{name}", "must be > 0")
        if self.buffer_capacity < 1:
            raise ConfigError(f"{prefix}.buffer_capacity", "must be >= 1")
        if not 0 <= self.warmup_steps <= self.buffer_capacity:
            raise ConfigError(f"{prefix}.warmup_steps", "need 0 <= warmup_steps <= buffer_capacity")
        if self.rate_ramp_episodes < 0:
            raise ConfigError(f"{prefix}.rate_ramp_episodes", "must be >= 0")
        if not 1 <= self.batch_size <= self.buffer_capacity:
            raise ConfigError(f"{prefix}.batch_size", "need 1 <= batch_size <= buffer_capacity")
        if self.hidden_units < 1:
            raise ConfigError(f"{prefix}.hidden_units", "must be >= 1")
        if not 0 < self.soft_update_rate <= 1:
            raise ConfigError(f"{prefix}.soft_update_rate", "must lie in (0, 1]")
        if not 0 <= self.discount < 1:
            raise ConfigError(f"{prefix}.discount", "must lie in [0, 1)")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigError(f"{prefix}.noise.kind", f"must be one of {', '.join(NOISE_KINDS)}")
        if self.noise_sigma < 0 or self.noise_floor < 0:
            raise ConfigError(f"{prefix}.noise.sigma", "must be >= 0")
        if not 0 < self.noise_decay <= 1:
            raise ConfigError(f"{prefix}.noise.decay", "must lie in (0, 1]")
        if not 0 < self.bn_momentum < 1:
            raise ConfigError(f"{prefix}.batch_norm.momentum", "must lie in (0, 1)")
        if self.bn_eps <= 0:
            raise ConfigError(f"{prefix}.batch_norm.eps", "must be > 0")


@dataclass(slots=True)
class GridSpec:
    phase_levels: int = 8
    split_levels: int = 5
    power_levels: int = 5
    directions: int = 1
    direction_seed: int = 0
    budget: int = 10**7
    workers: int = 1
    export_table: bool = False

    def validate(self, prefix: str = "oracle") -> None:
        for name in ("phase_levels", "split_levels", "power_levels", "directions", "budget", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{prefix}.{name}", "must be >= 1")
        if self.direction_seed < 0:
            raise ConfigError(f"{prefix}.direction_seed", "must be >= 0")


@dataclass(slots=True)
class SweepConfig:
    axis: str = "pmax_dbm"
    values: List[float] = field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0])
    seeds: int = 3
    antennas_series: List[int] = field(default_factory=list)
    workers: int = 1

    def validate(self, prefix: str = "sweep") -> None:
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"{prefix}.axis", f"must be one of {', '.join(SWEEP_AXES)}")
        if not self.values:
            raise ConfigError(f"{prefix}.values", "must not be empty")
        if self.axis != "pmax_dbm" and any(v < 1 or v != int(v) for v in self.values):
            raise ConfigError(f"{prefix}.values", "counts must be positive integers")
        if self.seeds < 1:
            raise ConfigError(f"{prefix}.seeds", "must be >= 1")
        if any(m < 1 for m in self.antennas_series):
            raise ConfigError(f"{prefix}.antennas_series", "antenna counts must be >= 1")
        if self.workers < 1:
            raise ConfigError(f"{prefix}.workers", "must be >= 1")


@dataclass(slots=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    oracle: GridSpec = field(default_factory=GridSpec)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    mode: str = "train"
    seed: Optional[int] = None
    output_dir: Optional[Path] = None
    episodes: int = 300
    steps: int = 100
    eval_episodes: int = 20
    checkpoint_every: int = 50
    checkpoint: Optional[Path] = None
    pmax_dbm: List[float] = field(default_factory=lambda: [20.0])

    @property
    def channel(self) -> ChannelConfig:
        return self.system.channel

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError("run.mode", f"must be one of {', '.join(MODES)}")
        if self.mode in ("train", "eval", "sweep") and self.seed is None:
            raise ConfigError("run.seed", f"a seed is required for {self.mode}")
        if self.episodes < 1:
            raise ConfigError("run.episodes", "must be >= 1")
        if self.steps < 1:
            raise ConfigError("run.steps", "must be >= 1")
        if self.eval_episodes < 1:
            raise ConfigError("run.eval_episodes", "must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("run.checkpoint_every", "must be >= 1")
        if not self.pmax_dbm:
            raise ConfigError("system.pmax_dbm", "at least one value is required")
        self.system.validate()
        self.agent.validate()
        self.oracle.validate()
        self.sweep.validate()
        return self

    @classmethod
    def from_document(cls, document: Dict[str, Any] | None) -> "RunConfig":
        root = _Section(document, "")
        system_raw = root.section("system")
        channel_raw = root.section("channel")
        agent_raw = root.section("agent")
        run_raw = root.section("run")
        sweep_raw = root.section("sweep")
        oracle_raw = root.section("oracle")
        root.finish()

        pmax_values = system_raw.numbers("pmax_dbm", [20.0])
        channel = ChannelConfig(
            antennas=channel_raw.integer("antennas", 10),
            elements=channel_raw.integer("elements", 30),
            users_t=channel_raw.integer("users_t", 2),
            users_r=channel_raw.integer("users_r", 2),
            bs_ris_distance=channel_raw.number("bs_ris_distance_m", 50.0),
            reference_path_loss=db_to_linear(channel_raw.number("reference_path_loss_db", -30.0)),
            exponent_bs_ris=channel_raw.number("pathloss_exponent_bs_ris", 2.2),
            exponent_ris_user=channel_raw.number("pathloss_exponent_ris_user", 2.5),
            rician_bs_ris=channel_raw.number("rician_factor_bs_ris", 10.0),
            rician_ris_user=channel_raw.number("rician_factor_ris_user", 10.0),
            resample_each_episode=channel_raw.boolean("resample_each_episode", True),
        )
        d_min, d_max = channel_raw.pair("user_distance_m", (5.0, 10.0))
        channel.user_distance_min, channel.user_distance_max = d_min, d_max
        channel_raw.finish()

        system = SystemConfig(
            max_power=dbm_to_watts(pmax_values[0]),
            min_rate=system_raw.number("rmin", 0.1),
            noise_power=dbm_to_watts(system_raw.number("noise_dbm", -80.0)),
            bandwidth=system_raw.number("bandwidth_hz", 180e3),
            amplifier_efficiency=system_raw.number("amplifier_efficiency", 0.35),
            static_power=dbm_to_watts(system_raw.number("static_power_dbm", 40.0)),
            channel=channel,
        )
        system_raw.finish()

        noise_raw = agent_raw.section("noise")
        bn_raw = agent_raw.section("batch_norm")
        agent = AgentConfig(
            actor_lr=agent_raw.number("actor_lr", 0.001),
            critic_lr=agent_raw.number("critic_lr", 0.002),
            batch_size=agent_raw.integer("batch_size", 32),
            buffer_capacity=agent_raw.integer("buffer_capacity", 10000),
            hidden_units=agent_raw.integer("hidden_units", 300),
            soft_update_rate=agent_raw.number("soft_update_rate", 0.005),
            discount=agent_raw.number("discount", 0.99),
            reward_scale=agent_raw.number("reward_scale", 1e-5),
            warmup_steps=agent_raw.integer("warmup_steps", 0),
            rate_ramp_episodes=agent_raw.integer("rate_ramp_episodes", 0),
            noise_kind=noise_raw.string("kind", "gaussian"),
            noise_sigma=noise_raw.number("sigma", 0.1),
            noise_decay=noise_raw.number("decay", 0.9995),
            noise_floor=noise_raw.number("floor", 0.01),
            ou_theta=noise_raw.number("ou_theta", 0.15),
            bn_momentum=bn_raw.number("momentum", 0.99),
            bn_eps=bn_raw.number("eps", 1e-5),
        )
        noise_raw.finish()
        bn_raw.finish()
        agent_raw.finish()

        oracle = GridSpec(
            phase_levels=oracle_raw.integer("phase_levels", 8),
            split_levels=oracle_raw.integer("split_levels", 5),
            power_levels=oracle_raw.integer("power_levels", 5),
            directions=oracle_raw.integer("directions", 1),
            direction_seed=oracle_raw.integer("direction_seed", 0),
            budget=oracle_raw.integer("budget", 10**7),
            workers=oracle_raw.integer("workers", 1),
            export_table=oracle_raw.boolean("export_table", False),
        )
        oracle_raw.finish()

        sweep = SweepConfig(
            axis=sweep_raw.string("axis", "pmax_dbm"),
            values=sweep_raw.numbers("values", [10.0, 20.0, 30.0, 40.0]),
            seeds=sweep_raw.integer("seeds", 3),
            antennas_series=[int(v) for v in sweep_raw.numbers("antennas_series", [])],
            workers=sweep_raw.integer("workers", 1),
        )
        sweep_raw.finish()

        checkpoint = run_raw.string("checkpoint", "")
        output_dir = run_raw.string("output_dir", "")
        config = cls(
            system=system,
            agent=agent,
            oracle=oracle,
            sweep=sweep,
            mode=run_raw.string("mode", "train"),
            seed=run_raw.optional_integer("seed"),
            output_dir=Path(output_dir) if output_dir else None,
            episodes=run_raw.integer("episodes", 300),
            steps=run_raw.integer("steps", 100),
            eval_episodes=run_raw.integer("eval_episodes", 20),
            checkpoint_every=run_raw.integer("checkpoint_every", 50),
            checkpoint=Path(checkpoint) if checkpoint else None,
            pmax_dbm=pmax_values,
        )
        run_raw.finish()
        return config

    def with_overrides(
        self,
        *,
        mode: Optional[str] = None,
        seed: Optional[int] = None,
        output_dir: Optional[Path] = None,
        episodes: Optional[int] = None,
        steps: Optional[int] = None,
        pmax_dbm: Optional[List[float]] = None,
        antennas: Optional[int] = None,
        elements: Optional[int] = None,
        users_t: Optional[int] = None,
        users_r: Optional[int] = None,
        rmin: Optional[float] = None,
        checkpoint: Optional[Path] = None,
    ) -> "RunConfig":
        """Apply command-line flags; unset flags keep the document value."""
        channel = self.channel
        channel_changes = {
            key: value
            for key, value in (
                ("antennas", antennas),
                ("elements", elements),
                ("users_t", users_t),
                ("users_r", users_r),
            )
            if value is not None
        }
        if channel_changes:
            channel = replace(channel, **channel_changes)
        system = replace(self.system, channel=channel)
        if rmin is not None:
            system = replace(system, min_rate=rmin)
        pmax_values = list(pmax_dbm) if pmax_dbm else list(self.pmax_dbm)
        if pmax_dbm:
            system = replace(system, max_power=dbm_to_watts(pmax_values[0]))
        return replace(
            self,
            system=system,
            mode=mode or self.mode,
            seed=self.seed if seed is None else seed,
            output_dir=output_dir or self.output_dir,
            episodes=episodes or self.episodes,
            steps=steps or self.steps,
            checkpoint=checkpoint or self.checkpoint,
            pmax_dbm=pmax_values,
        )

    def with_output_root(self, root: Path | str) -> "RunConfig":
        """Fill an unset output directory with ``<root>/<mode>``."""
        if self.output_dir is not None:
            return self
        return replace(self, output_dir=Path(root) / self.mode)

    def at_power_dbm(self, pmax_dbm: float) -> "RunConfig":
        system = replace(self.system, max_power=dbm_to_watts(pmax_dbm))
        return replace(self, system=system, pmax_dbm=[pmax_dbm])

    def to_document(self) -> Dict[str, Any]:
        """Resolved configuration in linear units, for the config-echo file."""
        document = asdict(self)
        document["output_dir"] = str(self.output_dir) if self.output_dir else None
        document["checkpoint"] = str(self.checkpoint) if self.checkpoint else None
        return document


def load_config(path: Path | str | None) -> RunConfig:
    """Parse a YAML run configuration; missing fields take the defaults above."""
    if path is None:
        return RunConfig.from_document({})
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"configuration file not found: {file_path}")
    try:
        document = yaml.safe_load(file_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"malformed YAML: {exc}") from exc
    return RunConfig.from_document(document)


class _Section:
    """Typed reader over one mapping of the YAML document."""

    def __init__(self, raw: Any, path: str) -> None:
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(path or "<document>", "must be a mapping")
        self._raw: Dict[str, Any] = dict(raw)
        self._path = path

    def _field(self, key: str) -> str:
        return f"{self._path}.{key}" if self._path else key

    def section(self, key: str) -> "_Section":
        return _Section(self._raw.pop(key, None), self._field(key))

    def number(self, key: str, default: float) -> float:
        value = self._raw.pop(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(self._field(key), f"expected a number, got {value!r}")
        if not math.isfinite(float(value)):
            raise ConfigError(self._field(key), "must be finite")
        return float(value)

    def integer(self, key: str, default: int) -> int:
        value = self._raw.pop(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(self._field(key), f"expected an integer, got {value!r}")
        return value

    def optional_integer(self, key: str) -> Optional[int]:
        if self._raw.get(key) is None:
            self._raw.pop(key, None)
            return None
        return self.integer(key, 0)

    def boolean(self, key: str, default: bool) -> bool:
        value = self._raw.pop(key, default)
        if not isinstance(value, bool):
            raise ConfigError(self._field(key), f"expected true or false, got {value!r}")
        return value

    def string(self, key: str, default: str) -> str:
        value = self._raw.pop(key, default)
        if value is None:
            return default
        if not isinstance(value, str):
            raise ConfigError(self._field(key), f"expected a string, got {value!r}")
        return value

    def numbers(self, key: str, default: List[float]) -> List[float]:
        value = self._raw.pop(key, default)
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, list):
            raise ConfigError(self._field(key), f"expected a list of numbers, got {value!r}")
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(self._field(key), f"expected a list of numbers, got {item!r}")
        return [float(item) for item in value]

    def pair(self, key: str, default: tuple[float, float]) -> tuple[float, float]:
        values = self.numbers(key, list(default))
        if len(values) != 2:
            raise ConfigError(self._field(key), "expected [min, max]")
        return values[0], values[1]

    def finish(self) -> None:
        if self._raw:
            unknown = sorted(self._raw)[0]
            raise ConfigError(self._field(unknown), "unknown field")
