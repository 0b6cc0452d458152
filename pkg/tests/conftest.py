"""Common fixtures for the timebin-bell tests."""

import numpy as np
import pytest

from timebin_bell.settings import optimal_chained_settings
from timebin_bell.timebin_data import (
    ChainedSettings,
    ExperimentConfig,
    StreamHeader,
    TimetagStream,
)


@pytest.fixture
def ideal_config() -> ExperimentConfig:
    """Lossless, noiseless source at a high pair rate."""
    return ExperimentConfig(
        pair_prob_per_pulse=1e-3,
        detector_efficiency=1.0,
        dark_count_rate=0.0,
        visibility=1.0,
        seed=11,
    )


@pytest.fixture
def default_config() -> ExperimentConfig:
    """Default experiment parameters."""
    return ExperimentConfig()


@pytest.fixture
def chained3() -> ChainedSettings:
    """Optimal settings for N=3."""
    return optimal_chained_settings(3)


@pytest.fixture
def make_stream(default_config):
    """Build a stream from (channel, tick) records with a default header."""

    def _make(
        records: list[tuple[int, int]],
        label: str = "run",
        config: ExperimentConfig | None = None,
    ) -> TimetagStream:
        records = sorted(records, key=lambda r: r[1])
        header = StreamHeader(
            config=config or default_config,
            label=label,
            alice_phase=0.0,
            bob_phase=0.0,
            duration=1.0,
        )
        return TimetagStream(
            header,
            np.array([c for c, _ in records], dtype=np.uint8),
            np.array([t for _, t in records], dtype=np.uint64),
        )

    return _make
