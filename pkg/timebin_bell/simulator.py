"""Monte Carlo timetag generation for the pulsed time-bin experiment."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import logging

import numpy as np

from . import lhv, quantum
from .const import MODEL_LHV, SIMULATOR_BLOCK_PULSES
from .exceptions import InvalidArgumentError
from .timebin_data import (
    Channel,
    ChainedSettings,
    ExperimentConfig,
    Phase,
    RunPlan,
    StateModel,
    StreamHeader,
    TimetagStream,
)

_LOGGER = logging.getLogger(__name__)

# spawn_key components under (seed, run_index, ...)
_STREAM_JITTER = 0
_STREAM_PULSES = 1


def _generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


class _RunSampler:
    """Draws the detections of one run, one pulse block at a time."""

    def __init__(
        self,
        config: ExperimentConfig,
        alice_phase: Phase,
        bob_phase: Phase,
        run_index: int,
    ) -> None:
        self._config = config
        self._alice_phase = alice_phase
        self._bob_phase = bob_phase
        self._run_index = run_index
        self._table = None
        if config.model != MODEL_LHV:
            table = quantum.joint_table(
                StateModel(config.visibility), alice_phase, bob_phase
            ).p.ravel()
            self._table = table / table.sum()

    def _outcomes(self, rng: np.random.Generator, k: int) -> tuple[np.ndarray, np.ndarray]:
        if self._table is None:
            lam = lhv.sample_hidden_variables(rng, k)
            return lhv.outcome_indices(lam, self._alice_phase, self._bob_phase)
        index = rng.choice(36, size=k, p=self._table)
        return index // 6, index % 6

    def block(self, block: int, first_pulse: int, pulses: int) -> tuple[np.ndarray, np.ndarray]:
        """(channels, ticks) of one pulse block, unsorted."""
        cfg = self._config
        rng = _generator(cfg.seed, self._run_index, _STREAM_PULSES, block)
        period = cfg.period

        k = int(rng.binomial(pulses, cfg.pair_prob_per_pulse))
        pulse = np.sort(rng.choice(pulses, size=k, replace=False)) + first_pulse
        a, b = self._outcomes(rng, k)

        times: list[np.ndarray] = []
        channels: list[np.ndarray] = []
        # Only the "+" port is instrumented; "−" outcomes are lost.
        for channel, outcome, efficiency in (
            (Channel.ALICE_PLUS, a, cfg.detector_efficiency[0]),
            (Channel.BOB_PLUS, b, cfg.detector_efficiency[1]),
        ):
            detected = (outcome % 2 == 0) & (rng.random(k) < efficiency)
            slot = outcome[detected] // 2
            times.append(pulse[detected] * period + cfg.t0 + (slot - 1) * cfg.delta_t)
            channels.append(np.full(times[-1].size, int(channel), np.uint8))

        span = pulses * period
        for channel in Channel:
            darks = int(rng.poisson(cfg.dark_count_rate * span))
            times.append(first_pulse * period + rng.random(darks) * span)
            channels.append(np.full(darks, int(channel), np.uint8))

        all_times = np.concatenate(times)
        ticks = np.floor(all_times / cfg.tdc_bin).astype(np.uint64)
        return np.concatenate(channels), ticks


def _jittered(config: ExperimentConfig, run_index: int, phases: tuple[Phase, Phase]) -> tuple[Phase, Phase]:
    if config.phase_jitter_rms <= 0:
        return phases
    offsets = _generator(config.seed, run_index, _STREAM_JITTER).normal(
        0.0, config.phase_jitter_rms, size=2
    )
    return phases[0] + float(offsets[0]), phases[1] + float(offsets[1])


def simulate_run(
    config: ExperimentConfig,
    alice_phase: Phase,
    bob_phase: Phase,
    duration: float,
    *,
    label: str = "",
    run_index: int = 0,
    start_time: float = 0.0,
    settings: ChainedSettings | None = None,
    threads: int | None = None,
) -> TimetagStream:
    """Simulate one run held at fixed phases and return its merged timetag stream.

    Pulses are processed in fixed blocks, each with its own random stream keyed
    by (seed, run_index, block), so the output does not depend on `threads`.
    The LHV model reproduces the V = 1 table; visibility applies to the quantum
    model only.
    """
    if not isinstance(config, ExperimentConfig):
        raise InvalidArgumentError("config must be an ExperimentConfig")
    if not duration > 0:
        raise InvalidArgumentError(f"duration must be > 0, got {duration}")

    phases = _jittered(config, run_index, (alice_phase, bob_phase))
    sampler = _RunSampler(config, phases[0], phases[1], run_index)

    total = config.pulses_in(duration)
    blocks = [
        (index, first, min(SIMULATOR_BLOCK_PULSES, total - first))
        for index, first in enumerate(range(0, total, SIMULATOR_BLOCK_PULSES))
    ]
    if threads is not None and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda blk: sampler.block(*blk), blocks))
    else:
        parts = [sampler.block(*blk) for blk in blocks]

    if parts:
        channels = np.concatenate([part[0] for part in parts])
        ticks = np.concatenate([part[1] for part in parts])
        order = np.argsort(ticks, kind="stable")
        channels, ticks = channels[order], ticks[order]
    else:
        channels = np.zeros(0, np.uint8)
        ticks = np.zeros(0, np.uint64)

    header = StreamHeader(
        config=config,
        label=label,
        alice_phase=alice_phase,
        bob_phase=bob_phase,
        duration=duration,
        run_index=run_index,
        start_time=start_time,
        model_id=lhv.MODEL_ID if config.model == MODEL_LHV else quantum.MODEL_ID,
        settings=settings,
    )
    _LOGGER.debug(
        "Run %d %s: %d pulses in %d blocks, %d records",
        run_index,
        label or "-",
        total,
        len(blocks),
        ticks.size,
    )
    return TimetagStream(header, channels, ticks)


def simulate_plan(
    config: ExperimentConfig, plan: RunPlan, *, threads: int | None = None
) -> list[TimetagStream]:
    """One stream per plan entry; stabilization gaps produce no records."""
    streams = [
        simulate_run(
            config,
            entry.alice_phase,
            entry.bob_phase,
            entry.duration,
            label=entry.label,
            run_index=index,
            start_time=start,
            settings=plan.settings,
            threads=threads,
        )
        for index, (entry, start) in enumerate(zip(plan, plan.start_times(), strict=True))
    ]
    _LOGGER.info(
        "Simulated %d runs (%s model, seed %d): %d records",
        len(streams),
        config.model,
        config.seed,
        sum(len(s) for s in streams),
    )
    return streams


def expected_pairs(config: ExperimentConfig, duration: float) -> float:
    """Mean number of generated pairs in a run."""
    return config.pulses_in(duration) * config.pair_prob_per_pulse


def expected_dark_counts(config: ExperimentConfig, duration: float) -> float:
    """Mean number of dark counts per detector in a run."""
    return config.dark_count_rate * config.pulses_in(duration) * config.period

