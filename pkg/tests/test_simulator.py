"""Test the timetag simulator."""

from dataclasses import replace
import math

import numpy as np
import pytest

from timebin_bell import lhv, quantum
from timebin_bell.analysis import count_coincidences, slot_coincidence_matrix
from timebin_bell.exceptions import InvalidArgumentError
from timebin_bell.settings import build_run_plan, optimal_chained_settings
from timebin_bell.simulator import (
    expected_dark_counts,
    expected_pairs,
    simulate_plan,
    simulate_run,
)
from timebin_bell.timebin_data import Channel


def _central(stream) -> int:
    return count_coincidences(stream, stream).central_count


def test_no_pairs_no_darks_gives_empty_stream(ideal_config):
    """Without pairs or dark counts nothing is recorded."""
    config = replace(ideal_config, pair_prob_per_pulse=0.0)
    stream = simulate_run(config, 0.0, 0.0, 0.01)
    assert len(stream) == 0
    assert _central(stream) == 0


def test_dark_counts_only(ideal_config):
    """Dark counts land on both channels at the configured rate."""
    config = replace(ideal_config, pair_prob_per_pulse=0.0, dark_count_rate=2e4)
    stream = simulate_run(config, 0.0, 0.0, 0.1)
    mean = expected_dark_counts(config, 0.1)
    assert mean == pytest.approx(2e3, rel=1e-6)
    for channel in Channel:
        assert abs(stream.count(channel) - mean) < 5 * math.sqrt(mean)


def test_same_seed_same_stream(ideal_config):
    """Runs are reproducible from the seed; another seed differs."""
    first = simulate_run(ideal_config, 0.4, 0.2, 0.01)
    second = simulate_run(ideal_config, 0.4, 0.2, 0.01)
    other = simulate_run(replace(ideal_config, seed=12), 0.4, 0.2, 0.01)
    np.testing.assert_array_equal(first.ticks, second.ticks)
    np.testing.assert_array_equal(first.channels, second.channels)
    assert len(other) != len(first) or not np.array_equal(other.ticks, first.ticks)


def test_output_independent_of_threads(ideal_config):
    """Block streams make the result identical for any thread count."""
    # 0.3 s spans two pulse blocks
    config = replace(ideal_config, pair_prob_per_pulse=1e-4)
    single = simulate_run(config, 1.0, 0.5, 0.3, threads=1)
    pooled = simulate_run(config, 1.0, 0.5, 0.3, threads=4)
    np.testing.assert_array_equal(single.ticks, pooled.ticks)
    np.testing.assert_array_equal(single.channels, pooled.channels)
    assert np.all(np.diff(single.ticks.astype(np.int64)) >= 0)


@pytest.mark.parametrize("model", ["quantum", "lhv"])
def test_no_central_coincidences_at_phase_sum_pi(ideal_config, model):
    """At α + β = π with V = 1 the '+' detectors never fire together in M."""
    config = replace(ideal_config, model=model)
    stream = simulate_run(config, math.pi / 3, 2 * math.pi / 3, 0.02)
    assert len(stream) > 0
    assert _central(stream) == 0


def test_central_coincidences_at_phase_sum_zero(ideal_config):
    """At α + β = 0 one pair in eight gives an M+ M+ coincidence."""
    duration = 0.05
    stream = simulate_run(ideal_config, 0.0, 0.0, duration)
    mean = expected_pairs(ideal_config, duration) / 8
    assert abs(_central(stream) - mean) < 5 * math.sqrt(mean)


def test_no_early_late_pairs(ideal_config):
    """E-L and L-E detections from the same pulse never occur."""
    stream = simulate_run(ideal_config, 0.7, 1.9, 0.05)
    matrix = slot_coincidence_matrix(stream)
    assert matrix[0, 2] == 0
    assert matrix[2, 0] == 0
    assert matrix[0, 0] > 0
    assert matrix[2, 2] > 0


def test_quantum_and_lhv_agree(ideal_config):
    """Under static settings the two models give compatible coincidence rates."""
    counts = [
        _central(simulate_run(replace(ideal_config, model=model), 0.3, 1.1, 0.05))
        for model in ("quantum", "lhv")
    ]
    assert abs(counts[0] - counts[1]) < 5 * math.sqrt(sum(counts))


def test_plan_headers(ideal_config):
    """Streams carry the plan label, index, start time, settings and model."""
    settings = optimal_chained_settings(2)
    plan = build_run_plan(settings, run_duration=0.001, stabilization_gap=0.5)
    streams = simulate_plan(ideal_config, plan)
    assert [s.label for s in streams] == plan.labels
    assert [s.header.run_index for s in streams] == list(range(len(plan)))
    assert [s.header.start_time for s in streams] == plan.start_times()
    assert streams[0].header.settings == settings
    assert streams[0].header.model_id == quantum.MODEL_ID
    assert streams[3].header.alice_phase == pytest.approx(plan.entries[3].alice_phase)

    lhv_streams = simulate_plan(replace(ideal_config, model="lhv"), plan)
    assert lhv_streams[0].header.model_id == lhv.MODEL_ID


def test_phase_jitter_keeps_nominal_header(ideal_config):
    """Jitter perturbs the sampled phases but not the recorded ones."""
    config = replace(ideal_config, phase_jitter_rms=0.5)
    jittered = simulate_run(config, 0.0, 0.0, 0.01)
    plain = simulate_run(ideal_config, 0.0, 0.0, 0.01)
    assert jittered.header.alice_phase == 0.0
    assert jittered.header.bob_phase == 0.0
    assert not np.array_equal(jittered.channels, plain.channels) or len(plain) == 0


def test_invalid_inputs(ideal_config):
    """Non-positive durations and foreign configs are rejected."""
    with pytest.raises(InvalidArgumentError):
        simulate_run(ideal_config, 0.0, 0.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        simulate_run({"seed": 1}, 0.0, 0.0, 1.0)
