"""Measurement-setting schedules for chained Bell experiments."""

from __future__ import annotations

import logging
import math
import re

from .const import DEFAULT_RUN_DURATION, DEFAULT_STABILIZATION_GAP, TWO_PI
from .exceptions import InvalidArgumentError
from .timebin_data import (
    BellFunctional,
    ChainedSettings,
    Phase,
    RunPlan,
    RunPlanEntry,
    chained_index_pairs,
)

_LOGGER = logging.getLogger(__name__)

_TERM_LABEL_RE = re.compile(r"^A(\d+)B(\d+)([+-])([+-])$")

# Outcome relabelling (flip Alice, flip Bob) per CH-form variant
CH_VARIANT_FLIPS: dict[int, tuple[bool, bool]] = {
    1: (False, False),
    2: (True, False),
    3: (False, True),
    4: (True, True),
}


def normalize_phase(phase: float) -> Phase:
    """Map any real phase into [0, 2π)."""
    value = math.fmod(float(phase), TWO_PI)
    if value < 0:
        value += TWO_PI
    # fmod of a tiny negative number can land exactly on 2π after the shift
    return 0.0 if value >= TWO_PI else value


def format_term_label(k: int, j: int, a: int, b: int) -> str:
    """Run label for the joint outcome (a, b) of the pair A_k B_j."""
    return f"A{k}B{j}{'+' if a == 1 else '-'}{'+' if b == 1 else '-'}"


def parse_term_label(label: str) -> tuple[int, int, int, int] | None:
    """Inverse of :func:`format_term_label`; None for non-Bell labels."""
    match = _TERM_LABEL_RE.match(label)
    if match is None:
        return None
    k, j, a, b = match.groups()
    return int(k), int(j), 1 if a == "+" else -1, 1 if b == "+" else -1


def optimal_chained_settings(n: int) -> ChainedSettings:
    """Phases maximizing the chained statistic for the correlation cos(φ_A + φ_B).

    The 2N measurements form the cycle
    A_1 – B_2 – A_3 – … – (A_N | B_N) – … – A_2 – B_1 – A_1.
    Walking the cycle, node m sits at position m·π/(2N); Alice measures at her
    node's position and Bob at minus his, so every chained sum φ_A + φ_B is
    ±π/(2N) except A_1 B_1, whose sum is −(π − π/(2N)).
    """
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    step = math.pi / (2 * n)

    def position(index: int, *, alice: bool) -> float:
        # First strand: A_odd / B_even; second strand walks back from N+1.
        on_first_strand = (index % 2 == 1) if alice else (index % 2 == 0)
        return (index - 1) * step if on_first_strand else (2 * n - index) * step

    alice = tuple(normalize_phase(position(k, alice=True)) for k in range(1, n + 1))
    bob = tuple(normalize_phase(-position(j, alice=False)) for j in range(1, n + 1))
    _LOGGER.debug("Optimal chained settings n=%d: A=%s B=%s", n, alice, bob)
    return ChainedSettings(n=n, alice_phases=alice, bob_phases=bob)


def ch_form_terms(n: int, variant: int) -> list[tuple[int, int, int, int, int]]:
    """Terms (k, j, a, b, coefficient) of the CH-form variant.

    Variant 1 is p(a_N b_N) − Σ[p(a_k b̄_{k−1}) + p(ā_{k−1} b_k)] − p(a_1 b_1);
    variants 2, 3, 4 relabel Alice's, Bob's, or both outcomes.
    """
    if variant not in CH_VARIANT_FLIPS:
        raise InvalidArgumentError(f"CH variant must be 1..4, got {variant}")
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    flip_a, flip_b = CH_VARIANT_FLIPS[variant]
    sa = -1 if flip_a else 1
    sb = -1 if flip_b else 1

    terms = [(n, n, sa, sb, 1)]
    for k in range(2, n + 1):
        terms.append((k, k - 1, sa, -sb, -1))
        terms.append((k - 1, k, -sa, sb, -1))
    terms.append((1, 1, sa, sb, -1))
    return terms


def _shifted(settings: ChainedSettings, k: int, j: int, a: int, b: int) -> tuple[Phase, Phase]:
    # A π shift flips the outcome seen by the single "+" detector.
    return (
        normalize_phase(settings.alice(k) + (0.0 if a == 1 else math.pi)),
        normalize_phase(settings.bob(j) + (0.0 if b == 1 else math.pi)),
    )


def build_run_plan(
    settings: ChainedSettings,
    functional: BellFunctional | str = BellFunctional.CHSH,
    run_duration: float = DEFAULT_RUN_DURATION,
    stabilization_gap: float = DEFAULT_STABILIZATION_GAP,
) -> RunPlan:
    """Expand settings into the runs measuring the functional with one detector per side.

    CHSH: the four phase combinations (φ_A, φ_B), (φ_A+π, φ_B), (φ_A, φ_B+π),
    (φ_A+π, φ_B+π) for each chained correlation term.
    CH form i: one run per joint probability term of that form.
    """
    if not isinstance(settings, ChainedSettings):
        raise InvalidArgumentError("settings must be a ChainedSettings instance")
    functional = BellFunctional(functional)
    if not run_duration > 0:
        raise InvalidArgumentError(f"run_duration must be > 0, got {run_duration}")
    if stabilization_gap < 0:
        raise InvalidArgumentError(
            f"stabilization_gap must be >= 0, got {stabilization_gap}"
        )

    entries: list[RunPlanEntry] = []
    if functional is BellFunctional.CHSH:
        for k, j in chained_index_pairs(settings.n):
            for a, b in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
                alice, bob = _shifted(settings, k, j, a, b)
                entries.append(
                    RunPlanEntry(alice, bob, run_duration, format_term_label(k, j, a, b))
                )
    else:
        for k, j, a, b, _ in ch_form_terms(settings.n, functional.ch_variant or 1):
            alice, bob = _shifted(settings, k, j, a, b)
            entries.append(
                RunPlanEntry(alice, bob, run_duration, format_term_label(k, j, a, b))
            )

    _LOGGER.debug(
        "Run plan for n=%d %s: %d runs of %.3g s",
        settings.n,
        functional.value,
        len(entries),
        run_duration,
    )
    return RunPlan(tuple(entries), stabilization_gap, settings)


def build_fringe_plan(
    points: int,
    run_duration: float = DEFAULT_RUN_DURATION,
    stabilization_gap: float = DEFAULT_STABILIZATION_GAP,
) -> RunPlan:
    """Visibility scan: Alice's phase stepped over [0, 2π), Bob held at 0."""
    if points < 4:
        raise InvalidArgumentError(f"a fringe scan needs >= 4 points, got {points}")
    entries = tuple(
        RunPlanEntry(i * TWO_PI / points, 0.0, run_duration, f"fringe{i:02d}")
        for i in range(points)
    )
    return RunPlan(entries, stabilization_gap)
