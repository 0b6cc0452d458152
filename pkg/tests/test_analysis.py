"""Test the analysis pipeline from timetags to Bell statistics."""

from dataclasses import replace
import math

import numpy as np
import pytest

from timebin_bell import bell
from timebin_bell.analysis import (
    FAIR_SAMPLING_NOTE,
    NO_SLOT,
    SIDE_NOTE,
    ChFormResult,
    analyze_ch_form,
    analyze_counts,
    async_analyze_files,
    async_load_streams,
    ch_form_variant_of,
    classify_slots,
    coincidence_counts,
    combined_singles_histogram,
    correlation_from_probabilities,
    count_coincidences,
    delay_histogram,
    estimate_from_side_cells,
    estimate_probability,
    fringe_scan_from_streams,
    full_pipeline,
    peak_weights,
    singles_histogram,
    slot_coincidence_matrix,
    slot_matrices,
)
from timebin_bell.exceptions import DegenerateDataError, InvalidArgumentError
from timebin_bell.quantum import qm_chained_ch, qm_chained_chsh, qm_probabilities
from timebin_bell.settings import (
    build_fringe_plan,
    build_run_plan,
    format_term_label,
    optimal_chained_settings,
)
from timebin_bell.simulator import simulate_plan, simulate_run
from timebin_bell.timebin_data import (
    OUTCOME_ORDER,
    Channel,
    CoincidenceWindow,
    ExperimentConfig,
    StateModel,
    chained_index_pairs,
)
from timebin_bell.timetag_codec import TimetagCodec, stream_filename

A = int(Channel.ALICE_PLUS)
B = int(Channel.BOB_PLUS)

# Default config: t0 falls in tick 81, ΔT is ~24.7 ticks, one period ~162.4 ticks
E_TICK = 56
M_TICK = 81
L_TICK = 105
NEXT_PULSE_M_TICK = 243


def _exact_counts(settings, scale: int, visibility: float = 1.0) -> dict[str, int]:
    probabilities = qm_probabilities(settings, StateModel(visibility))
    return {
        format_term_label(k, j, a, b): round(scale * probabilities[(k, j, a, b)])
        for k, j in chained_index_pairs(settings.n)
        for a, b in OUTCOME_ORDER
    }


def _sampled_counts(settings, trials: int, rng) -> dict[str, int]:
    probabilities = qm_probabilities(settings, StateModel(0.99))
    counts: dict[str, int] = {}
    for k, j in chained_index_pairs(settings.n):
        p = [probabilities[(k, j, a, b)] for a, b in OUTCOME_ORDER]
        for (a, b), c in zip(OUTCOME_ORDER, rng.multinomial(trials, p), strict=True):
            counts[format_term_label(k, j, a, b)] = int(c)
    return counts


# ── slots and histograms ─────────────────────────────────────────────────────


def test_classify_slots(make_stream):
    """E, M and L ticks map to 0, 1, 2; ticks off every peak to NO_SLOT."""
    stream = make_stream([(A, E_TICK), (A, M_TICK), (A, 87), (A, L_TICK)])
    assert classify_slots(stream).tolist() == [0, 1, NO_SLOT, 2]
    # A wider window takes the off-peak tick into M
    wide = CoincidenceWindow(half_width=7)
    assert classify_slots(stream, wide).tolist() == [0, 1, 1, 2]


def test_singles_peaks_one_two_one(ideal_config):
    """The '+' detector sees E, M and L in the ratio 1:2:1."""
    stream = simulate_run(ideal_config, 0.3, 0.9, 0.05)
    for channel in Channel:
        histogram = singles_histogram(stream)[channel]
        weights = peak_weights(histogram)
        total = histogram.total
        assert weights.sum() == total
        for weight, share in zip(weights, (0.25, 0.5, 0.25), strict=True):
            mean = share * total
            assert abs(weight - mean) < 5 * math.sqrt(mean)


def test_singles_empty_stream(make_stream):
    """An empty stream gives empty histograms."""
    histograms = singles_histogram(make_stream([]))
    assert all(h.total == 0 for h in histograms.values())
    assert peak_weights(histograms[Channel.ALICE_PLUS]).tolist() == [0, 0, 0]


def test_singles_flat_for_dark_counts():
    """Dark counts alone fill every full TDC bin evenly."""
    config = ExperimentConfig(pair_prob_per_pulse=0.0, dark_count_rate=1e6, seed=21)
    stream = simulate_run(config, 0.0, 0.0, 0.1)
    for histogram in singles_histogram(stream).values():
        counts = histogram.counts[:-1]
        mean = counts.mean()
        assert mean > 400
        assert np.all(np.abs(counts - mean) < 5 * math.sqrt(mean))


def test_peak_weights_use_run_window(make_stream, default_config):
    """Without an explicit half width the window of the runs applies."""
    config = replace(default_config, window_half_width=2)
    stream = make_stream([(A, M_TICK + 4), (B, M_TICK)], config=config)
    histogram = singles_histogram(stream)[Channel.ALICE_PLUS]
    assert histogram.window_half_width == 2
    assert peak_weights(histogram).tolist() == [0, 0, 0]
    assert peak_weights(histogram, 5).tolist() == [0, 1, 0]


def test_combined_singles_histogram(ideal_config):
    """Histograms of several runs add up bin by bin."""
    plan = build_run_plan(optimal_chained_settings(2), run_duration=0.005)
    streams = simulate_plan(ideal_config, plan)
    combined = combined_singles_histogram(streams)
    for channel in Channel:
        expected = sum(singles_histogram(s)[channel].counts for s in streams)
        assert np.array_equal(combined[channel].counts, expected)
        assert combined[channel].total == sum(
            len(s.channel(channel)) for s in streams
        )


def test_combined_singles_histogram_mismatch(make_stream, default_config):
    """Runs with different timing cannot be summed."""
    other = replace(default_config, tdc_bin=50e-12)
    streams = [make_stream([(A, M_TICK)], "a"), make_stream([(A, M_TICK)], "b", other)]
    with pytest.raises(InvalidArgumentError, match="different"):
        combined_singles_histogram(streams)
    with pytest.raises(InvalidArgumentError):
        combined_singles_histogram([])


def test_delay_histogram(make_stream):
    """Delays between all Alice/Bob pairs, slot-blind."""
    stream = make_stream([(A, M_TICK), (B, M_TICK), (B, L_TICK)])
    delays, counts = delay_histogram(stream, 30)
    assert delays[0] == -30
    assert counts[delays == 0].item() == 1
    assert counts[delays == L_TICK - M_TICK].item() == 1
    assert counts.sum() == 2


def test_slot_coincidence_matrix(make_stream):
    """Same-pulse detections are tallied by (Alice slot, Bob slot)."""
    stream = make_stream(
        [(A, E_TICK), (B, E_TICK), (A, NEXT_PULSE_M_TICK), (B, NEXT_PULSE_M_TICK + 1)]
    )
    matrix = slot_coincidence_matrix(stream)
    assert matrix[0, 0] == 1
    assert matrix[1, 1] == 1
    assert matrix.sum() == 2


# ── coincidences ─────────────────────────────────────────────────────────────


def test_coincidence_same_tick(make_stream):
    """Two central detections in the same tick form one coincidence."""
    stream = make_stream([(A, M_TICK), (B, M_TICK)])
    result = count_coincidences(stream, stream)
    assert result.central_count == 1
    assert result.delta_tau_histogram[result.delta_tau_ticks == 0].item() == 1


def test_coincidence_outside_window(make_stream):
    """A partner six ticks off the peak is outside the ±5 tick acceptance."""
    stream = make_stream([(A, M_TICK), (B, M_TICK + 6)])
    assert count_coincidences(stream, stream).central_count == 0


def test_coincidence_side_slots_ignored(make_stream):
    """E-E and L-L detections are not central coincidences."""
    stream = make_stream([(A, E_TICK), (B, E_TICK), (A, L_TICK), (B, L_TICK)])
    assert count_coincidences(stream, stream).central_count == 0


def test_coincidence_tie_prefers_earlier_bob(make_stream):
    """With Bob events at Δτ = ±1 the earlier one is matched."""
    stream = make_stream([(B, M_TICK - 1), (A, M_TICK), (B, M_TICK + 1)])
    result = count_coincidences(stream, stream)
    assert result.central_count == 1
    assert result.delta_tau_histogram[result.delta_tau_ticks == -1].item() == 1
    assert result.delta_tau_histogram[result.delta_tau_ticks == 1].item() == 0


def test_coincidence_each_event_used_once(make_stream):
    """Two Alice events cannot share one Bob event."""
    stream = make_stream([(A, M_TICK), (A, M_TICK + 2), (B, M_TICK + 1)])
    assert count_coincidences(stream, stream).central_count == 1


def test_coincidence_symmetric_under_channel_swap(make_stream):
    """Swapping the detectors leaves the count unchanged."""
    records = [(A, M_TICK), (A, M_TICK + 3), (B, M_TICK + 2), (A, NEXT_PULSE_M_TICK), (B, NEXT_PULSE_M_TICK)]
    swapped = [(B if c == A else A, t) for c, t in records]
    first = make_stream(records)
    second = make_stream(swapped)
    assert count_coincidences(first, first).central_count == 2
    assert count_coincidences(second, second).central_count == 2


def test_coincidence_label_mismatch(make_stream):
    """Streams from different runs cannot be paired."""
    with pytest.raises(InvalidArgumentError, match="different runs"):
        count_coincidences(make_stream([], label="a"), make_stream([], label="b"))


def test_coincidence_counts_rejects_duplicates(make_stream):
    """Two streams with the same label are ambiguous."""
    with pytest.raises(InvalidArgumentError, match="duplicate"):
        coincidence_counts([make_stream([], label="x"), make_stream([], label="x")])


# ── estimators ───────────────────────────────────────────────────────────────


def test_estimate_probability():
    """p̂ = C_target / ΣC with a binomial error."""
    estimate = estimate_probability((30, 10, 40, 20))
    assert estimate.value == pytest.approx(0.3)
    assert estimate.std_error == pytest.approx(math.sqrt(0.3 * 0.7 / 100))
    assert estimate_probability((30, 10, 40, 20), target=2).value == pytest.approx(0.4)


def test_estimate_probability_errors():
    """All-zero runs are degenerate; malformed inputs are invalid."""
    with pytest.raises(DegenerateDataError):
        estimate_probability((0, 0, 0, 0))
    with pytest.raises(InvalidArgumentError):
        estimate_probability((1, 2, 3))
    with pytest.raises(InvalidArgumentError):
        estimate_probability((1, -2, 3, 4))
    with pytest.raises(InvalidArgumentError):
        estimate_probability((1, 2, 3, 4), target=4)


def test_correlation_from_probabilities():
    """E = p(++) + p(−−) − p(+−) − p(−+) with error sqrt((1 − E²)/M)."""
    counts = (30, 10, 40, 20)
    corr, err = correlation_from_probabilities([estimate_probability(counts, t) for t in range(4)])
    assert corr == pytest.approx(-0.2)
    assert err == pytest.approx(math.sqrt(0.96 / 100))


# ── analysis of counts ───────────────────────────────────────────────────────


def test_analyze_counts_missing_runs(chained3):
    """Every run of the plan is required and missing ones are listed."""
    counts = _exact_counts(chained3, 1000)
    del counts["A2B1-+"]
    with pytest.raises(InvalidArgumentError, match="A2B1-"):
        analyze_counts(counts, chained3)


def test_analyze_counts_degenerate_pair(chained3):
    """A pair with no coincidences at all names the pair."""
    counts = _exact_counts(chained3, 1000)
    for a, b in OUTCOME_ORDER:
        counts[format_term_label(1, 2, a, b)] = 0
    with pytest.raises(DegenerateDataError, match="A1B2"):
        analyze_counts(counts, chained3)


def test_analyze_counts_perfect_correlations(chained3):
    """Counts without spread leave no error to scale a violation by."""
    counts = {}
    for k, j in chained_index_pairs(3):
        for (a, b), c in zip(OUTCOME_ORDER, (2, 0, 0, 0), strict=True):
            counts[format_term_label(k, j, a, b)] = c
    with pytest.raises(DegenerateDataError, match="zero propagated error"):
        analyze_counts(counts, chained3)


@pytest.mark.parametrize("n", [3, 5])
def test_analyze_exact_counts(n):
    """Noise-free counts reproduce the closed-form predictions."""
    settings = optimal_chained_settings(n)
    result = analyze_counts(_exact_counts(settings, 10**7), settings, seed=3)
    assert result.chsh_report.statistic == pytest.approx(qm_chained_chsh(n), abs=1e-4)
    assert result.correlation_statistic == pytest.approx(qm_chained_chsh(n), abs=1e-4)
    assert result.ch_reports[0].statistic == pytest.approx(qm_chained_ch(n), abs=1e-5)
    assert result.consistency == pytest.approx(result.chsh_report.statistic, abs=1e-4)
    assert result.chsh_report.lhv_bound == 2 * n - 1
    assert result.chsh_report.classical_bound == 2 * n - 2
    assert [r.label for r in result.ch_reports] == ["CH1", "CH2", "CH3", "CH4"]
    assert [r.side for r in result.ch_reports] == ["upper", "lower", "lower", "upper"]
    assert result.ch_reports[1].lhv_bound == pytest.approx(0.75 - n)
    assert result.ch_reports[0].classical_bound == 0.0
    assert result.seed == 3
    assert result.fair_sampling_note == FAIR_SAMPLING_NOTE
    assert result.loophole_status.startswith("open")


def test_analyze_counts_fast_switching(chained3):
    """Fast switching closes the loophole in the status text."""
    result = analyze_counts(_exact_counts(chained3, 1000), chained3, fast_switching=True)
    assert result.loophole_status.startswith("closed")


def test_analyze_counts_extra_runs(chained3):
    """Runs outside the plan are reported and otherwise ignored."""
    counts = _exact_counts(chained3, 1000)
    counts["fringe00"] = 12
    result = analyze_counts(counts, chained3)
    assert result.extra_labels == ("fringe00",)


@pytest.mark.parametrize("trials", [1_000, 10_000, 100_000])
def test_paths_agree_on_sampled_counts(chained3, trials):
    """CH and correlation paths agree exactly; 4·CH1 + 2(N−1) within its error."""
    rng = np.random.default_rng(trials)
    result = analyze_counts(_sampled_counts(chained3, trials, rng), chained3)
    assert result.correlation_statistic == pytest.approx(result.chsh_report.statistic, abs=1e-9)
    assert result.correlation_std_error == pytest.approx(result.chsh_report.std_error)
    expected = 0.99 * qm_chained_chsh(3)
    assert abs(result.chsh_report.statistic - expected) < 5 * result.chsh_report.std_error
    assert abs(result.consistency - expected) < 5 * result.consistency_std_error


def test_error_shrinks_with_counts(chained3):
    """The statistical error falls as one over the square root of the counts."""
    rng = np.random.default_rng(17)
    trials = np.array([1_000, 10_000, 100_000])
    errors = [
        analyze_counts(_sampled_counts(chained3, int(t), rng), chained3).chsh_report.std_error
        for t in trials
    ]
    slope = np.polyfit(np.log(trials), np.log(errors), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_result_to_dict(chained3):
    """The JSON form carries every report."""
    data = analyze_counts(_exact_counts(chained3, 1000), chained3, seed=9).to_dict()
    assert data["n"] == 3
    assert data["seed"] == 9
    assert len(data["ch"]) == 4
    assert len(data["correlations"]) == 6
    assert data["chsh"]["label"] == "CHSH"


# ── full pipeline ────────────────────────────────────────────────────────────


@pytest.mark.parametrize("model", ["quantum", "lhv"])
def test_full_pipeline_on_simulated_runs(ideal_config, chained3, model):
    """Both models reproduce 2N·cos(π/2N) under static settings."""
    plan = build_run_plan(chained3, run_duration=0.02)
    streams = simulate_plan(replace(ideal_config, model=model), plan)
    result = full_pipeline(streams)
    expected = qm_chained_chsh(3)
    assert result.n == 3
    assert set(result.counts) == set(plan.labels)
    assert abs(result.chsh_report.statistic - expected) < 5 * result.chsh_report.std_error
    assert result.correlation_statistic == pytest.approx(result.chsh_report.statistic, abs=1e-9)
    assert result.seed == ideal_config.seed
    assert result.loophole_status.startswith("open")


def test_full_pipeline_requires_complete_plan(ideal_config, chained3):
    """Dropping one run of the plan is reported."""
    plan = build_run_plan(chained3, run_duration=0.001)
    streams = simulate_plan(ideal_config, plan)
    with pytest.raises(InvalidArgumentError, match="missing"):
        full_pipeline(streams[:-1])


def test_full_pipeline_needs_settings(make_stream):
    """Without settings in the call or the headers there is nothing to evaluate."""
    with pytest.raises(InvalidArgumentError, match="settings"):
        full_pipeline([make_stream([])])
    with pytest.raises(InvalidArgumentError):
        full_pipeline([])


def test_full_pipeline_error_shrinks_with_duration(ideal_config, chained3):
    """Longer runs shrink the error as one over the square root of the time."""
    durations = np.array([0.005, 0.02, 0.08])
    errors = []
    for duration in durations:
        plan = build_run_plan(chained3, run_duration=float(duration))
        result = full_pipeline(simulate_plan(ideal_config, plan))
        report = result.chsh_report
        assert abs(report.statistic - qm_chained_chsh(3)) < 5 * report.std_error
        errors.append(report.std_error)
    slope = np.polyfit(np.log(durations), np.log(errors), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


# ── single CH-form plans ─────────────────────────────────────────────────────


def test_estimate_from_side_cells():
    """p̂ = 3·C_MM / (4·C_side) with Poisson errors on both counts."""
    matrix = np.zeros((3, 3), dtype=np.int64)
    matrix[1, 1] = 100
    matrix[0, 0] = matrix[2, 2] = 100
    matrix[0, 1] = matrix[1, 0] = matrix[1, 2] = matrix[2, 1] = 25
    matrix[0, 2] = 7
    value, err = estimate_from_side_cells(matrix)
    assert value == pytest.approx(0.25)
    assert err == pytest.approx(math.sqrt((0.75 / 300) ** 2 * 100 + 0.25**2 / 300))


def test_estimate_from_side_cells_errors():
    """No side-cell coincidences or a wrong shape are refused."""
    matrix = np.zeros((3, 3), dtype=np.int64)
    matrix[1, 1] = 5
    with pytest.raises(DegenerateDataError, match="side-cell"):
        estimate_from_side_cells(matrix)
    with pytest.raises(InvalidArgumentError):
        estimate_from_side_cells(np.zeros((2, 2)))


def test_ch_form_variant_of(chained3):
    """Only a label set matching one CH plan selects that plan."""
    for variant in (1, 2, 3, 4):
        labels = build_run_plan(chained3, f"ch{variant}").labels
        assert ch_form_variant_of(labels, chained3) == variant
        assert ch_form_variant_of([*labels, "fringe00"], chained3) == variant
    chsh_labels = build_run_plan(chained3).labels
    assert ch_form_variant_of(chsh_labels, chained3) is None
    assert ch_form_variant_of(chsh_labels[:-1], chained3) is None


def test_analyze_ch_form_missing_runs(chained3):
    """Every term of the form needs its run."""
    matrices = {label: np.ones((3, 3), dtype=np.int64) for label in build_run_plan(chained3, "ch1").labels}
    del matrices["A1B1++"]
    with pytest.raises(InvalidArgumentError, match="A1B1"):
        analyze_ch_form(matrices, chained3, 1)


def test_analyze_ch_form_zero_error(chained3):
    """Counts that propagate to no error are a data error."""
    matrix = np.zeros((3, 3), dtype=np.int64)
    matrix[0, 0] = 10
    matrices = {label: matrix for label in build_run_plan(chained3, "ch1").labels}
    with pytest.raises(DegenerateDataError, match="zero propagated error"):
        analyze_ch_form(matrices, chained3, 1)


@pytest.mark.parametrize("variant", [1, 2])
def test_full_pipeline_on_ch_plan(ideal_config, chained3, variant):
    """A plan for one CH form is analyzed with side-cell normalization."""
    plan = build_run_plan(chained3, f"ch{variant}", run_duration=0.05)
    streams = simulate_plan(ideal_config, plan)
    result = full_pipeline(streams)
    assert isinstance(result, ChFormResult)
    assert result.variant == variant
    assert result.report.label == f"CH{variant}"
    assert result.report.side == ("upper" if variant == 1 else "lower")
    assert result.report.lhv_bound == pytest.approx(0.25 if variant == 1 else 0.75 - 3)
    expected = bell.ch_form(qm_probabilities(chained3), variant)
    assert abs(result.report.statistic - expected) < 5 * result.report.std_error
    assert set(result.counts) == set(plan.labels)
    assert result.fair_sampling_note == SIDE_NOTE
    matrices = slot_matrices(streams)
    assert result.side_counts == {
        label: int(m[0, 0] + m[0, 1] + m[1, 0] + m[1, 2] + m[2, 1] + m[2, 2])
        for label, m in matrices.items()
    }
    data = result.to_dict()
    assert data["functional"] == f"ch{variant}"
    assert len(data["probabilities"]) == 2 * 3


def test_fringe_scan_from_streams(ideal_config):
    """Points are sorted by phase sum; the fringe peaks at 0 and vanishes at π."""
    streams = simulate_plan(ideal_config, build_fringe_plan(8, run_duration=0.02))
    scan = fringe_scan_from_streams(streams)
    phases, counts, durations = scan.arrays()
    assert len(scan) == 8
    assert np.all(np.diff(phases) > 0)
    assert phases[0] == pytest.approx(0.0)
    assert counts[0] > 0
    assert counts[4] == 0
    assert durations.tolist() == [0.02] * 8


async def test_async_load_and_analyze(tmp_path, ideal_config):
    """Files are read concurrently and ordered by run index."""
    settings = optimal_chained_settings(2)
    plan = build_run_plan(settings, run_duration=0.01)
    streams = simulate_plan(ideal_config, plan)
    paths = []
    for index, stream in enumerate(streams):
        path = tmp_path / stream_filename(stream, "csv" if index % 2 else "ttb1")
        TimetagCodec.write(stream, path)
        paths.append(path)

    loaded = await async_load_streams(reversed(paths))
    assert [s.label for s in loaded] == plan.labels
    assert sum(len(s) for s in loaded) == sum(len(s) for s in streams)

    from_files = await async_analyze_files(paths)
    direct = full_pipeline(streams)
    assert from_files.counts == direct.counts
    assert from_files.chsh_report == direct.chsh_report
