"""From timetag streams to Bell statistics.

The pipeline is: fold and classify detections by slot, pair central-slot
detections into coincidences, turn the coincidence counts of the four
phase-shifted runs of each term into joint probabilities, and evaluate the
CH forms and the chained statistic with propagated errors.
"""

from __future__ import annotations

import asyncio
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from . import bell
from .exceptions import DegenerateDataError, InvalidArgumentError
from .settings import build_run_plan, ch_form_terms, format_term_label, normalize_phase
from .timebin_data import (
    OUTCOME_ORDER,
    SLOTS,
    BellFunctional,
    BellReport,
    ChainedSettings,
    Channel,
    CoincidenceWindow,
    CorrelationSet,
    ExperimentConfig,
    FringePoint,
    FringeScan,
    ProbabilityEstimate,
    ProbabilitySet,
    SinglesHistogram,
    Slot,
    TimetagStream,
    chained_index_pairs,
)
from .timetag_codec import TimetagCodec

_LOGGER = logging.getLogger(__name__)

NO_SLOT = -1

FAIR_SAMPLING_NOTE = (
    "Joint probabilities are coincidence counts normalized over the four "
    "phase-shifted runs of each term; this assumes the detected pairs are a "
    "fair sample of all emitted pairs."
)

SIDE_NOTE = (
    "CH-form probabilities are M,M counts normalized to the phase-independent "
    "side cells (E,E), (E,M), (M,E), (M,L), (L,M), (L,L) of the same run; "
    "this assumes the detected pairs are a fair sample of all emitted pairs."
)

# "+"-detector slot cells whose rate does not depend on the phases, 1/32 each
SIDE_CELLS: tuple[tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 2), (2, 1), (2, 2))
SIDE_CELLS_PROBABILITY = len(SIDE_CELLS) / 32
MM_PROBABILITY = 0.25


@dataclass(frozen=True, eq=False)
class CoincidenceResult:
    """Central-slot coincidences of one run."""

    central_count: int
    # Counts of Δτ = t_B − t_A for Δτ in [−2·hw, 2·hw] ticks
    delta_tau_histogram: np.ndarray
    window: CoincidenceWindow

    @property
    def delta_tau_ticks(self) -> np.ndarray:
        """Δτ value of each histogram bin."""
        span = 2 * self.window.half_width
        return np.arange(-span, span + 1)


@dataclass(frozen=True)
class PipelineResult:
    """Everything the analysis derives from one set of runs."""

    n: int
    ch_reports: tuple[BellReport, ...]
    chsh_report: BellReport
    correlation_statistic: float
    correlation_std_error: float
    consistency: float
    consistency_std_error: float
    correlations: Mapping[tuple[int, int], tuple[float, float]]
    counts: Mapping[str, int]
    loophole_status: str
    fair_sampling_note: str = FAIR_SAMPLING_NOTE
    seed: int | None = None
    extra_labels: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return {
            "n": self.n,
            "seed": self.seed,
            "ch": [r.to_dict() for r in self.ch_reports],
            "chsh": self.chsh_report.to_dict(),
            "correlation_path": {
                "statistic": self.correlation_statistic,
                "std_error": self.correlation_std_error,
            },
            "consistency": {
                "value": self.consistency,
                "std_error": self.consistency_std_error,
            },
            "correlations": [
                {"alice": k, "bob": j, "value": value, "std_error": err}
                for (k, j), (value, err) in self.correlations.items()
            ],
            "counts": dict(self.counts),
            "loophole_status": self.loophole_status,
            "fair_sampling_note": self.fair_sampling_note,
        }


@dataclass(frozen=True)
class ChFormResult:
    """Analysis of a run plan measuring a single CH form."""

    n: int
    variant: int
    report: BellReport
    # label -> (p̂, std error) of the M,M outcome the run measures
    probabilities: Mapping[str, tuple[float, float]]
    counts: Mapping[str, int]
    side_counts: Mapping[str, int]
    loophole_status: str
    fair_sampling_note: str = SIDE_NOTE
    seed: int | None = None
    extra_labels: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return {
            "n": self.n,
            "seed": self.seed,
            "functional": f"ch{self.variant}",
            "ch": [self.report.to_dict()],
            "probabilities": [
                {"label": label, "value": value, "std_error": err}
                for label, (value, err) in self.probabilities.items()
            ],
            "counts": dict(self.counts),
            "side_counts": dict(self.side_counts),
            "loophole_status": self.loophole_status,
            "fair_sampling_note": self.fair_sampling_note,
        }


# ── timing ───────────────────────────────────────────────────────────────────


def _locate(ticks: np.ndarray, config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Pulse index of each tick and its time offset from that pulse's t0."""
    times = (ticks.astype(np.float64) + 0.5) * config.tdc_bin
    pulse = np.rint((times - config.t0) / config.period).astype(np.int64)
    return pulse, times - pulse * config.period - config.t0


def _slot_codes(
    ticks: np.ndarray, config: ExperimentConfig, window: CoincidenceWindow
) -> tuple[np.ndarray, np.ndarray]:
    """(pulse index, slot code) per event; slot code NO_SLOT outside every window."""
    pulse, residual = _locate(ticks, config)
    slot = np.rint(residual / config.delta_t).astype(np.int64)
    offset = np.rint((residual - slot * config.delta_t) / config.tdc_bin).astype(np.int64)
    inside = (np.abs(slot) <= 1) & (
        np.abs(offset - window.center_offset) <= window.half_width
    )
    return pulse, np.where(inside, slot + 1, NO_SLOT)


def _window_for(stream: TimetagStream, window: CoincidenceWindow | None) -> CoincidenceWindow:
    if window is not None:
        return window
    return CoincidenceWindow(half_width=stream.header.config.window_half_width)


def classify_slots(
    stream: TimetagStream, window: CoincidenceWindow | None = None
) -> np.ndarray:
    """Slot index (0=E, 1=M, 2=L) of every record, -1 where none applies."""
    return _slot_codes(stream.ticks, stream.header.config, _window_for(stream, window))[1]


def _central_ticks(stream: TimetagStream, window: CoincidenceWindow) -> np.ndarray:
    codes = _slot_codes(stream.ticks, stream.header.config, window)[1]
    return stream.ticks[codes == Slot.M.index].astype(np.int64)


# ── histograms ───────────────────────────────────────────────────────────────


def singles_histogram(stream: TimetagStream) -> dict[Channel, SinglesHistogram]:
    """Per-channel detection counts folded modulo the pump period."""
    config = stream.header.config
    bins = math.ceil(config.period / config.tdc_bin)
    histograms: dict[Channel, SinglesHistogram] = {}
    for channel in Channel:
        ticks = stream.ticks[stream.channels == int(channel)]
        folded = np.fmod((ticks.astype(np.float64) + 0.5) * config.tdc_bin, config.period)
        index = np.minimum((folded / config.tdc_bin).astype(np.int64), bins - 1)
        histograms[channel] = SinglesHistogram(
            channel=channel,
            counts=np.bincount(index, minlength=bins),
            tdc_bin=config.tdc_bin,
            period=config.period,
            t0=config.t0,
            delta_t=config.delta_t,
            window_half_width=config.window_half_width,
        )
    return histograms


def combined_singles_histogram(
    streams: Iterable[TimetagStream],
) -> dict[Channel, SinglesHistogram]:
    """Singles histograms summed over runs recorded with the same timing."""
    combined: dict[Channel, SinglesHistogram] = {}
    for stream in streams:
        for channel, histogram in singles_histogram(stream).items():
            previous = combined.get(channel)
            if previous is None:
                combined[channel] = histogram
                continue
            if previous.counts.size != histogram.counts.size:
                raise InvalidArgumentError(
                    f"run {stream.label!r} has a different pulse period or TDC bin"
                )
            combined[channel] = replace(previous, counts=previous.counts + histogram.counts)
    if not combined:
        raise InvalidArgumentError("no streams to histogram")
    return combined


def peak_weights(
    histogram: SinglesHistogram, half_width: int | None = None
) -> np.ndarray:
    """Counts within ±half_width bins of the E, M and L peak centers.

    The half width defaults to the coincidence window of the recorded runs.
    """
    if half_width is None:
        half_width = histogram.window_half_width
    weights = np.zeros(3, dtype=np.int64)
    size = histogram.counts.size
    for i, slot in enumerate(SLOTS):
        center = histogram.bin_of(histogram.t0 + slot.offset * histogram.delta_t)
        index = np.arange(center - half_width, center + half_width + 1) % size
        weights[i] = histogram.counts[index].sum()
    return weights


def delay_histogram(
    stream: TimetagStream, max_delay_ticks: int
) -> tuple[np.ndarray, np.ndarray]:
    """All Alice/Bob delays t_B − t_A up to ±max_delay_ticks, no slot selection."""
    alice = stream.ticks[stream.channels == int(Channel.ALICE_PLUS)].astype(np.int64)
    bob = stream.ticks[stream.channels == int(Channel.BOB_PLUS)].astype(np.int64)
    ia, ib = _candidate_pairs(alice, bob, max_delay_ticks)
    delays = bob[ib] - alice[ia]
    counts = np.bincount(delays + max_delay_ticks, minlength=2 * max_delay_ticks + 1)
    return np.arange(-max_delay_ticks, max_delay_ticks + 1), counts


# ── coincidences ─────────────────────────────────────────────────────────────


def _candidate_pairs(
    alice: np.ndarray, bob: np.ndarray, max_delay: int
) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j) with |bob[j] − alice[i]| ≤ max_delay; inputs sorted."""
    lo = np.searchsorted(bob, alice - max_delay, side="left")
    hi = np.searchsorted(bob, alice + max_delay, side="right")
    per_alice = hi - lo
    ia = np.repeat(np.arange(alice.size), per_alice)
    first = np.cumsum(per_alice) - per_alice
    ib = lo[ia] + np.arange(ia.size) - first[ia]
    return ia, ib


def count_coincidences(
    alice: TimetagStream,
    bob: TimetagStream,
    window: CoincidenceWindow | None = None,
) -> CoincidenceResult:
    """Pair central-slot detections of Alice and Bob.

    Both events must lie in the central acceptance, which bounds |Δτ| by
    2·half_width. Each event is used at most once: candidates are matched
    greedily by |Δτ|, ties going to the earlier Bob event, then the earlier
    Alice event.
    """
    if alice.label != bob.label:
        raise InvalidArgumentError(
            f"streams belong to different runs: {alice.label!r} vs {bob.label!r}"
        )
    window = _window_for(alice, window)
    ta = _central_ticks(alice.channel(Channel.ALICE_PLUS), window)
    tb = _central_ticks(bob.channel(Channel.BOB_PLUS), window)
    span = 2 * window.half_width

    ia, ib = _candidate_pairs(ta, tb, span)
    delays = tb[ib] - ta[ia]
    order = np.lexsort((ta[ia], tb[ib], np.abs(delays)))

    used_a = np.zeros(ta.size, dtype=bool)
    used_b = np.zeros(tb.size, dtype=bool)
    histogram = np.zeros(2 * span + 1, dtype=np.int64)
    count = 0
    for c in order:
        i, j = ia[c], ib[c]
        if used_a[i] or used_b[j]:
            continue
        used_a[i] = used_b[j] = True
        histogram[delays[c] + span] += 1
        count += 1
    return CoincidenceResult(count, histogram, window)


def slot_coincidence_matrix(
    stream: TimetagStream, window: CoincidenceWindow | None = None
) -> np.ndarray:
    """3×3 counts of same-pulse (Alice slot, Bob slot) detection pairs."""
    window = _window_for(stream, window)
    config = stream.header.config
    sides = []
    for channel in (Channel.ALICE_PLUS, Channel.BOB_PLUS):
        ticks = stream.ticks[stream.channels == int(channel)]
        pulse, code = _slot_codes(ticks, config, window)
        keep = code != NO_SLOT
        sides.append((pulse[keep], code[keep]))
    (pa, sa), (pb, sb) = sides
    ia, ib = _candidate_pairs(pa, pb, 0)
    matrix = np.zeros((3, 3), dtype=np.int64)
    np.add.at(matrix, (sa[ia], sb[ib]), 1)
    return matrix


# ── estimators ───────────────────────────────────────────────────────────────


def estimate_probability(counts: Sequence[int], target: int = 0) -> ProbabilityEstimate:
    """p̂ = C_target / ΣC with binomial standard error sqrt(p̂(1−p̂)/ΣC)."""
    if len(counts) != 4:
        raise InvalidArgumentError(f"expected 4 run counts, got {len(counts)}")
    if not 0 <= target < 4:
        raise InvalidArgumentError(f"target must be in 0..3, got {target}")
    if any(c < 0 for c in counts):
        raise InvalidArgumentError(f"negative count in {tuple(counts)}")
    total = sum(counts)
    if total == 0:
        raise DegenerateDataError("all four runs recorded zero coincidences")
    p = counts[target] / total
    return ProbabilityEstimate(
        value=p,
        std_error=math.sqrt(p * (1 - p) / total),
        raw_counts=tuple(int(c) for c in counts),
        target=target,
    )


def correlation_from_probabilities(
    estimates: Sequence[ProbabilityEstimate],
) -> tuple[float, float]:
    """E = p(++) + p(−−) − p(+−) − p(−+), estimates given in OUTCOME_ORDER.

    The four values are renormalized first; the error follows from the
    multinomial covariance, Var(E) = (1 − E²)/M.
    """
    if len(estimates) != 4:
        raise InvalidArgumentError(f"expected 4 estimates, got {len(estimates)}")
    values = np.array([e.value for e in estimates], dtype=float)
    total = values.sum()
    if total <= 0:
        raise DegenerateDataError("probability estimates sum to zero")
    p = values / total
    corr = float(p[0] + p[1] - p[2] - p[3])
    trials = sum(estimates[0].raw_counts)
    err = math.sqrt(max(0.0, 1 - corr**2) / trials) if trials > 0 else math.nan
    return corr, err


def _pair_counts(
    counts_by_label: Mapping[str, int], k: int, j: int
) -> tuple[int, int, int, int]:
    return tuple(  # type: ignore[return-value]
        int(counts_by_label[format_term_label(k, j, a, b)]) for a, b in OUTCOME_ORDER
    )


def _ch_std_error(
    n: int, variant: int, probabilities: Mapping[tuple[int, int], np.ndarray], trials: Mapping[tuple[int, int], int]
) -> float:
    # Terms of different pairs come from independent runs; within a pair the
    # four outcomes share one multinomial.
    coefficients: dict[tuple[int, int], np.ndarray] = {}
    for k, j, a, b, coef in ch_form_terms(n, variant):
        vector = coefficients.setdefault((k, j), np.zeros(4))
        vector[OUTCOME_ORDER.index((a, b))] += coef
    variance = 0.0
    for pair, c in coefficients.items():
        p = probabilities[pair]
        variance += (np.dot(c**2, p) - np.dot(c, p) ** 2) / trials[pair]
    return math.sqrt(max(0.0, variance))


def _loophole_status(n: int, fast_switching: bool) -> str:
    bound = bell.effective_lhv_bound(n, fast_switching)
    if fast_switching:
        return (
            f"closed: fast setting changes restrict local models to S <= {bound:g}"
        )
    return (
        f"open: with static settings local models reach S = {bound:g} after "
        "postselection"
    )


def _significance(
    statistic: float,
    bound: float,
    std_error: float,
    *,
    classical_bound: float,
    label: str,
    side: str = "upper",
) -> BellReport:
    # Perfectly correlated or tiny samples propagate to a zero error
    if not std_error > 0:
        raise DegenerateDataError(
            f"{label}: zero propagated error, counts too sparse for a significance"
        )
    return bell.report(
        statistic, bound, std_error, classical_bound=classical_bound, label=label, side=side
    )


def analyze_counts(
    counts_by_label: Mapping[str, int],
    settings: ChainedSettings,
    *,
    fast_switching: bool = False,
    seed: int | None = None,
) -> PipelineResult:
    """Bell analysis of coincidence counts keyed by run label."""
    required = build_run_plan(settings, BellFunctional.CHSH).labels
    missing = [label for label in required if label not in counts_by_label]
    if missing:
        raise InvalidArgumentError(f"runs missing from the plan: {', '.join(missing)}")
    extra = tuple(sorted(set(counts_by_label) - set(required)))
    if extra:
        _LOGGER.debug("Ignoring %d runs outside the CHSH plan: %s", len(extra), extra)

    n = settings.n
    limits = bell.bounds(n)
    probabilities: dict[tuple[int, int], np.ndarray] = {}
    trials: dict[tuple[int, int], int] = {}
    correlations: dict[tuple[int, int], tuple[float, float]] = {}
    prob_values: dict[tuple[int, int, int, int], float] = {}
    for k, j in chained_index_pairs(n):
        raw = _pair_counts(counts_by_label, k, j)
        try:
            estimates = [estimate_probability(raw, target) for target in range(4)]
        except DegenerateDataError as err:
            raise DegenerateDataError(f"A{k}B{j}: {err}") from err
        correlations[(k, j)] = correlation_from_probabilities(estimates)
        probabilities[(k, j)] = np.array([e.value for e in estimates])
        trials[(k, j)] = sum(raw)
        for (a, b), e in zip(OUTCOME_ORDER, estimates, strict=True):
            prob_values[(k, j, a, b)] = e.value

    probability_set = ProbabilitySet(n, prob_values)
    ch_reports = []
    for variant in (1, 2, 3, 4):
        side = bell.CH_VARIANT_SIDES[variant]
        upper = side == "upper"
        ch_reports.append(
            _significance(
                bell.ch_form(probability_set, variant),
                limits.ch_interval[1] if upper else limits.ch_interval[0],
                _ch_std_error(n, variant, probabilities, trials),
                classical_bound=limits.ch_ll_interval[1] if upper else limits.ch_ll_interval[0],
                label=f"CH{variant}",
                side=side,
            )
        )

    correlation_set = CorrelationSet(n, {pair: v for pair, (v, _) in correlations.items()})
    correlation_statistic = bell.chained_chsh(correlation_set)
    chsh_error = math.sqrt(sum(err**2 for _, err in correlations.values()))
    chsh_report = _significance(
        bell.chsh_from_ch([r.statistic for r in ch_reports]),
        limits.timebin_chsh,
        chsh_error,
        classical_bound=limits.classical_chsh,
        label="CHSH",
    )
    consistency = 4 * ch_reports[0].statistic + 2 * (n - 1)

    _LOGGER.info(
        "n=%d: S=%.4f ± %.4f (%.2f sigma over %g)",
        n,
        chsh_report.statistic,
        chsh_report.std_error,
        chsh_report.violation_sigma,
        chsh_report.lhv_bound,
    )
    return PipelineResult(
        n=n,
        ch_reports=tuple(ch_reports),
        chsh_report=chsh_report,
        correlation_statistic=correlation_statistic,
        correlation_std_error=chsh_error,
        consistency=consistency,
        consistency_std_error=4 * ch_reports[0].std_error,
        correlations=correlations,
        counts=dict(counts_by_label),
        loophole_status=_loophole_status(n, fast_switching),
        seed=seed,
        extra_labels=extra,
    )


def _settings_from_streams(streams: Sequence[TimetagStream]) -> ChainedSettings:
    for stream in streams:
        if stream.header.settings is not None:
            return stream.header.settings
    raise InvalidArgumentError("no chained settings given and none recorded in the streams")


def _per_run(
    streams: Sequence[TimetagStream],
    func: Callable[[TimetagStream], Any],
    threads: int | None,
) -> dict[str, Any]:
    labels = [s.label for s in streams]
    duplicates = sorted({label for label in labels if labels.count(label) > 1})
    if duplicates:
        raise InvalidArgumentError(f"duplicate run labels: {', '.join(duplicates)}")
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(func, streams))
    else:
        values = [func(s) for s in streams]
    return dict(zip(labels, values, strict=True))


def coincidence_counts(
    streams: Iterable[TimetagStream],
    window: CoincidenceWindow | None = None,
    *,
    threads: int | None = None,
) -> dict[str, int]:
    """Central coincidence count per run label."""
    return _per_run(
        list(streams),
        lambda stream: count_coincidences(stream, stream, window).central_count,
        threads,
    )


def slot_matrices(
    streams: Iterable[TimetagStream],
    window: CoincidenceWindow | None = None,
    *,
    threads: int | None = None,
) -> dict[str, np.ndarray]:
    """Same-pulse slot coincidence matrix per run label."""
    return _per_run(
        list(streams), lambda stream: slot_coincidence_matrix(stream, window), threads
    )


def estimate_from_side_cells(matrix: np.ndarray) -> tuple[float, float]:
    """p̂ of the measured M,M outcome, normalized to the side cells of the run.

    p̂ = (P_side / P_MM) · C_MM / C_side, with Poisson errors on both counts.
    """
    matrix = np.asarray(matrix)
    if matrix.shape != (3, 3):
        raise InvalidArgumentError(f"expected a 3x3 slot matrix, got {matrix.shape}")
    side = int(sum(matrix[cell] for cell in SIDE_CELLS))
    if side == 0:
        raise DegenerateDataError("no side-cell coincidences to normalize against")
    scale = SIDE_CELLS_PROBABILITY / MM_PROBABILITY / side
    mm = int(matrix[1, 1])
    value = scale * mm
    return value, math.sqrt(scale**2 * mm + value**2 / side)


def ch_form_variant_of(labels: Iterable[str], settings: ChainedSettings) -> int | None:
    """CH variant whose single-form plan the labels match, or None.

    Labels outside the chained plan are ignored; an incomplete CHSH plan that
    happens to contain a CH plan does not match.
    """
    labels = set(labels) & set(build_run_plan(settings).labels)
    for variant in (1, 2, 3, 4):
        plan = build_run_plan(settings, BellFunctional(f"ch{variant}"))
        if set(plan.labels) == labels:
            return variant
    return None


def analyze_ch_form(
    matrices: Mapping[str, np.ndarray],
    settings: ChainedSettings,
    variant: int,
    *,
    fast_switching: bool = False,
    seed: int | None = None,
) -> ChFormResult:
    """Bell analysis of a plan that measured one CH form, one run per term."""
    n = settings.n
    terms = ch_form_terms(n, variant)
    required = [format_term_label(k, j, a, b) for k, j, a, b, _ in terms]
    missing = [label for label in required if label not in matrices]
    if missing:
        raise InvalidArgumentError(f"runs missing from the plan: {', '.join(missing)}")
    extra = tuple(sorted(set(matrices) - set(required)))

    probabilities: dict[str, tuple[float, float]] = {}
    for label in required:
        try:
            probabilities[label] = estimate_from_side_cells(matrices[label])
        except DegenerateDataError as err:
            raise DegenerateDataError(f"{label}: {err}") from err

    statistic = 0.0
    variance = 0.0
    for label, (*_, coef) in zip(required, terms, strict=True):
        value, err = probabilities[label]
        statistic += coef * value
        variance += (coef * err) ** 2

    limits = bell.bounds(n)
    side = bell.CH_VARIANT_SIDES[variant]
    upper = side == "upper"
    report = _significance(
        statistic,
        limits.ch_interval[1] if upper else limits.ch_interval[0],
        math.sqrt(variance),
        classical_bound=limits.ch_ll_interval[1] if upper else limits.ch_ll_interval[0],
        label=f"CH{variant}",
        side=side,
    )
    _LOGGER.info(
        "n=%d CH%d: %.4f ± %.4f (%.2f sigma)",
        n,
        variant,
        report.statistic,
        report.std_error,
        report.violation_sigma,
    )
    return ChFormResult(
        n=n,
        variant=variant,
        report=report,
        probabilities=probabilities,
        counts={label: int(matrices[label][1, 1]) for label in required},
        side_counts={
            label: int(sum(matrices[label][cell] for cell in SIDE_CELLS)) for label in required
        },
        loophole_status=_loophole_status(n, fast_switching),
        seed=seed,
        extra_labels=extra,
    )


def full_pipeline(
    streams: Sequence[TimetagStream],
    settings: ChainedSettings | None = None,
    *,
    window: CoincidenceWindow | None = None,
    threads: int | None = None,
) -> PipelineResult | ChFormResult:
    """Coincidence counting plus :func:`analyze_counts` over one set of runs.

    Runs that cover only the plan of a single CH form go through
    :func:`analyze_ch_form` instead.
    """
    if not streams:
        raise InvalidArgumentError("no streams to analyze")
    settings = settings or _settings_from_streams(streams)
    config = streams[0].header.config
    labels = {s.label for s in streams}
    if not set(build_run_plan(settings).labels) <= labels:
        variant = ch_form_variant_of(labels, settings)
        if variant is not None:
            _LOGGER.debug("Runs cover the CH%d plan only", variant)
            return analyze_ch_form(
                slot_matrices(streams, window, threads=threads),
                settings,
                variant,
                fast_switching=config.fast_switching,
                seed=config.seed,
            )
    return analyze_counts(
        coincidence_counts(streams, window, threads=threads),
        settings,
        fast_switching=config.fast_switching,
        seed=config.seed,
    )


def fringe_scan_from_streams(
    streams: Iterable[TimetagStream], window: CoincidenceWindow | None = None
) -> FringeScan:
    """Central coincidences against the phase sum recorded in each header."""
    points = [
        FringePoint(
            phase_sum=normalize_phase(s.header.alice_phase + s.header.bob_phase),
            coincidences=count_coincidences(s, s, window).central_count,
            duration=s.header.duration,
        )
        for s in streams
    ]
    return FringeScan(tuple(sorted(points, key=lambda p: p.phase_sum)))


# ── file loading ─────────────────────────────────────────────────────────────


async def async_load_streams(paths: Iterable[Path]) -> list[TimetagStream]:
    """Read timetag files concurrently; result ordered by run index, then label."""
    streams = await asyncio.gather(
        *(asyncio.to_thread(TimetagCodec.read, Path(p)) for p in paths)
    )
    return sorted(streams, key=lambda s: (s.header.run_index, s.label))


async def async_analyze_files(
    paths: Iterable[Path],
    settings: ChainedSettings | None = None,
    *,
    window: CoincidenceWindow | None = None,
    threads: int | None = None,
) -> PipelineResult | ChFormResult:
    """Load timetag files and run :func:`full_pipeline` on them."""
    streams = await async_load_streams(paths)
    _LOGGER.debug("Loaded %d streams", len(streams))
    return full_pipeline(streams, settings, window=window, threads=threads)
