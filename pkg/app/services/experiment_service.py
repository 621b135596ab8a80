"""Run-mode orchestration: train, eval, baseline, oracle and sweep artifacts."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import yaml

from app import __version__
from app.config import RunConfig
from app.errors import InvalidArgumentError
from app.numerics.checkpoint import load_document
from app.physics.channel import channels_from_document, dump_channels, load_channels, sample_channels
from app.services.baseline_service import GridOracle, random_coefficients_policy
from app.services.environment_service import StarRisEnvironment
from app.services.metrics_service import MetricsService
from app.services.training_service import (
    CHECKPOINT_NAME,
    EvaluationRow,
    MetricsRow,
    TrainingService,
    evaluate_policy,
    load_agent,
    spawn_streams,
)
from app.utils.csv_writer import header_of, write_csv

LOGGER = logging.getLogger("starris.experiment")



@dataclass(frozen=True)
class SummaryRow:
    axis: str
    value: float
    antennas: int
    mean_ee: float
    std_ee: float
    num_seeds: int


@dataclass
class RunOutcome:
    mode: str
    artifacts: List[Path] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)


class ExperimentService:
    def __init__(
        self,
        config: RunConfig,
        metrics_service: Optional[MetricsService] = None,
        quiet: bool = False,
        resume: Optional[Path] = None,
        channels_path: Optional[Path] = None,
    ) -> None:
        self.config = config.validate()
        self.metrics = metrics_service or MetricsService()
        self.quiet = quiet
        self.resume = resume
        self.channels_path = channels_path
        if config.output_dir is None:
            raise InvalidArgumentError("no output directory configured")
        self.output_dir = Path(config.output_dir)

    def run(self) -> RunOutcome:
        handlers: Dict[str, Callable[[], RunOutcome]] = {
            "train": self.train,
            "eval": self.evaluate,
            "baseline": self.baseline,
            "oracle": self.oracle,
            "sweep": self.sweep,
        }
        self.output_dir.mkdir(parents=True, exist_ok=True)
        echo = self.write_config_echo()
        status = "failed"
        outcome = RunOutcome(mode=self.config.mode)
        try:
            outcome = handlers[self.config.mode]()
            status = "completed"
        finally:
            outcome.artifacts.insert(0, echo)
            self.write_manifest(outcome, status)
        return outcome

    # --- modes ------------------------------------------------------------

    def train(self) -> RunOutcome:
        outcome = RunOutcome(mode="train")
        powers = self.config.pmax_dbm
        for pmax_dbm in powers:
            config = self.config.at_power_dbm(pmax_dbm)
            suffix = "" if len(powers) == 1 else f"_pmax{pmax_dbm:g}dbm"
            metrics_path = self.output_dir / f"metrics{suffix}.csv"
            checkpoint_path = self.output_dir / (CHECKPOINT_NAME if not suffix else f"checkpoint{suffix}.json")
            service = TrainingService(config, quiet=self.quiet)
            if self.resume is not None:
                if len(powers) > 1:
                    raise InvalidArgumentError("--resume needs a single --pmax-dbm value")
                service.resume(self.resume)
            LOGGER.info("Training at P_max=%g dBm for %d episodes x %d steps", pmax_dbm, config.episodes, config.steps)
            result = service.train(metrics_path, checkpoint_path)
            outcome.artifacts += [metrics_path, checkpoint_path]
            if not config.channel.resample_each_episode:
                outcome.artifacts.append(dump_channels(self.output_dir / f"channel_dump{suffix}.json", service.env.channels))
            outcome.details[f"{pmax_dbm:g}"] = {
                "episodes": len(result.rows),
                "final_mean_ee": result.rows[-1].mean_ee if result.rows else None,
            }
        return outcome

    def evaluate(self) -> RunOutcome:
        config = self.config
        if config.checkpoint is None:
            raise InvalidArgumentError("eval needs --checkpoint")
        if not Path(config.checkpoint).exists():
            raise FileNotFoundError(f"checkpoint not found: {config.checkpoint}")
        env = StarRisEnvironment(config.system, np.random.default_rng(0))
        agent = load_agent(Path(config.checkpoint), config, env.state_dim, env.action_dim)
        channels = None
        if not config.channel.resample_each_episode:
            document = load_document(config.checkpoint)
            if "channels" in document:
                channels = channels_from_document(document["channels"])
        rows = evaluate_policy(
            agent, config.system, spawn_streams(config.seed)["eval"], config.eval_episodes, config.steps, channels
        )
        path = write_csv(self.output_dir / "eval.csv", header_of(EvaluationRow), rows)
        efficiencies = np.array([row.mean_ee for row in rows])
        return RunOutcome(
            mode="eval",
            artifacts=[path],
            details={"mean_ee": float(efficiencies.mean()), "std_ee": float(efficiencies.std())},
        )

    def baseline(self) -> RunOutcome:
        config = self.config
        streams = spawn_streams(config.seed if config.seed is not None else 0)
        env = StarRisEnvironment(config.system, streams["env"], reward_scale=config.agent.reward_scale)
        rows = random_coefficients_policy(env, config.episodes, config.steps, streams["explore"])
        path = write_csv(self.output_dir / "baseline.csv", header_of(MetricsRow), rows)
        return RunOutcome(mode="baseline", artifacts=[path], details={"mean_ee": float(np.mean([r.mean_ee for r in rows]))})

    def oracle(self) -> RunOutcome:
        config = self.config
        if self.channels_path is not None:
            channels = load_channels(self.channels_path)
        else:
            channels = sample_channels(config.channel, spawn_streams(config.seed if config.seed is not None else 0)["env"])
        artifacts = [dump_channels(self.output_dir / "channel_dump.json", channels)]
        oracle = GridOracle(channels, config.system, config.oracle)
        table_path = self.output_dir / "oracle_table.csv" if config.oracle.export_table else None
        result = oracle.search(table_path)
        if table_path is not None:
            artifacts.append(table_path)
        summary: Dict[str, Any] = {
            "grid_size": result.size,
            "best_ee": result.best_efficiency,
            "feasible": result.best is not None,
            "best_unconstrained_ee": result.best_unconstrained.efficiency,
        }
        if result.best is not None:
            coefficients, beams = oracle.decode_point(result.best.index)
            summary.update(
                best_index=result.best.index,
                rates=result.best.rates.tolist(),
                beta_t=coefficients.beta_t.tolist(),
                theta_t=coefficients.theta_t.tolist(),
                theta_r=coefficients.theta_r.tolist(),
                beam_powers=beams.powers().tolist(),
            )
        summary_path = self.output_dir / "oracle.json"
        summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
        artifacts.append(summary_path)
        LOGGER.info("Oracle best feasible EE %.1f over %d grid points", result.best_efficiency, result.size)
        return RunOutcome(mode="oracle", artifacts=artifacts, details=summary)

    def sweep(self) -> RunOutcome:
        config = self.config
        sweep = config.sweep
        series = sweep.antennas_series if sweep.axis != "antennas" and sweep.antennas_series else [None]
        jobs: List[tuple[RunConfig, Path]] = []
        keys: List[tuple[float, int]] = []
        for antennas in series:
            for value in sweep.values:
                point = sweep_point_config(config, sweep.axis, value, antennas)
                keys.append((value, point.channel.antennas))
                for offset in range(sweep.seeds):
                    seeded = replace(point, seed=config.seed + offset, mode="train")
                    tag = f"{sweep.axis}{value:g}_m{point.channel.antennas}_s{seeded.seed}"
                    jobs.append((seeded, self.output_dir / "points" / tag))
        LOGGER.info("Sweep over %s: %d points, %d runs", sweep.axis, len(keys), len(jobs))
        if sweep.workers > 1:
            with ProcessPoolExecutor(max_workers=sweep.workers) as pool:
                scores = list(pool.map(run_sweep_point, [job[0] for job in jobs], [job[1] for job in jobs]))
        else:
            scores = [run_sweep_point(point, out, self.quiet) for point, out in jobs]
        rows: List[SummaryRow] = []
        for k, (value, antennas) in enumerate(keys):
            chunk = np.array(scores[k * sweep.seeds : (k + 1) * sweep.seeds])
            rows.append(SummaryRow(sweep.axis, float(value), int(antennas), float(chunk.mean()), float(chunk.std()), sweep.seeds))
            LOGGER.info("%s=%g M=%d: EE %.1f +/- %.1f", sweep.axis, value, antennas, chunk.mean(), chunk.std())
        path = write_csv(self.output_dir / "summary.csv", header_of(SummaryRow), rows)
        return RunOutcome(mode="sweep", artifacts=[path], details={"points": len(rows)})

    # --- artifacts --------------------------------------------------------

    def write_config_echo(self) -> Path:
        path = self.output_dir / "config.resolved.yaml"
        path.write_text(yaml.safe_dump(self.config.to_document(), sort_keys=False), encoding="utf-8")
        return path

    def write_manifest(self, outcome: RunOutcome, status: str) -> Path:
        manifest = {
            "mode": self.config.mode,
            "seed": self.config.seed,
            "status": status,
            "version": __version__,
            "started_at": self.metrics.started_at,
            "elapsed_seconds": self.metrics.elapsed(),
            "artifacts": [str(path) for path in outcome.artifacts],
            "details": outcome.details,
            "host": self.metrics.current(),
        }
        path = self.output_dir / "run.json"
        path.write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")
        return path


def sweep_point_config(config: RunConfig, axis: str, value: float, antennas: Optional[int]) -> RunConfig:
    if axis == "pmax_dbm":
        point = config.at_power_dbm(value)
    elif axis == "elements":
        point = config.with_overrides(elements=int(value))
    elif axis == "antennas":
        point = config.with_overrides(antennas=int(value))
    else:
        raise InvalidArgumentError(f"unknown sweep axis {axis!r}")
    if antennas is not None:
        point = point.with_overrides(antennas=antennas)
    return point


def run_sweep_point(config: RunConfig, output_dir: Path, quiet: bool = True) -> float:
    """Train then evaluate one (axis value, seed) point; returns the mean greedy EE."""
    output_dir.mkdir(parents=True, exist_ok=True)
    service = TrainingService(config, quiet=quiet)
    service.train(output_dir / "metrics.csv", output_dir / CHECKPOINT_NAME)
    rows = service.evaluate()
    write_csv(output_dir / "eval.csv", header_of(EvaluationRow), rows)
    return float(np.mean([row.mean_ee for row in rows]))
