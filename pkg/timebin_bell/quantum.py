"""Quantum-mechanical predictions for the time-bin entangled state."""

from __future__ import annotations

import logging
import math

import numpy as np

from .exceptions import InvalidArgumentError
from .timebin_data import (
    OUTCOME_ORDER,
    ChainedSettings,
    CorrelationSet,
    JointOutcomeTable,
    Phase,
    ProbabilitySet,
    StateModel,
    chained_index_pairs,
)

_LOGGER = logging.getLogger(__name__)

MODEL_ID = "timebin-qm/1"

# Flat part of the table: every E/M/L cell except M,M and the E-L zeros.
_FLAT = np.full((6, 6), 1.0 / 32)
_FLAT[2:4, 2:4] = 0.0
_FLAT[0:2, 4:6] = 0.0
_FLAT[4:6, 0:2] = 0.0
_FLAT.setflags(write=False)


def _require_n(n: int) -> None:
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")


def joint_table(
    state: StateModel, alice_phase: Phase, bob_phase: Phase
) -> JointOutcomeTable:
    """Joint outcome probabilities over {E±, M±, L±}² for the given settings.

    Visibility only scales the M,M interference term.
    """
    c = state.visibility * math.cos(alice_phase + bob_phase)
    p = _FLAT.copy()
    same = (1.0 + c) / 16
    diff = (1.0 - c) / 16
    p[2, 2] = p[3, 3] = same
    p[2, 3] = p[3, 2] = diff
    return JointOutcomeTable(p)


def conditional_mm_correlation(
    state: StateModel, alice_phase: Phase, bob_phase: Phase
) -> float:
    """Correlation of the M,M-postselected subensemble, V·cos(φ_A + φ_B)."""
    mm = joint_table(state, alice_phase, bob_phase).mm_block()
    total = mm.sum()
    return float((mm[0, 0] + mm[1, 1] - mm[0, 1] - mm[1, 0]) / total)


def qm_chained_chsh(n: int) -> float:
    """Quantum maximum of the chained statistic, 2N·cos(π/2N)."""
    _require_n(n)
    return 2 * n * math.cos(math.pi / (2 * n))


def qm_chained_ch(n: int) -> float:
    """Quantum value of the CH-form chained statistic, 1/2 − N·sin²(π/4N)."""
    _require_n(n)
    return 0.5 - n * math.sin(math.pi / (4 * n)) ** 2


def critical_visibility(n: int) -> float:
    """Minimum visibility beating the time-bin bound, (2N−1)/(2N·cos(π/2N))."""
    _require_n(n)
    return (2 * n - 1) / qm_chained_chsh(n)


def qm_correlations(
    settings: ChainedSettings, state: StateModel | None = None
) -> CorrelationSet:
    """Postselected correlations for every chained pair of `settings`."""
    state = state or StateModel()
    values = {
        (k, j): conditional_mm_correlation(state, settings.alice(k), settings.bob(j))
        for k, j in chained_index_pairs(settings.n)
    }
    return CorrelationSet(settings.n, values)


def qm_probabilities(
    settings: ChainedSettings, state: StateModel | None = None
) -> ProbabilitySet:
    """Renormalized M,M joint probabilities for every chained pair of `settings`."""
    state = state or StateModel()
    values: dict[tuple[int, int, int, int], float] = {}
    for k, j in chained_index_pairs(settings.n):
        mm = joint_table(state, settings.alice(k), settings.bob(j)).mm_block()
        mm = mm / mm.sum()
        for a, b in OUTCOME_ORDER:
            values[(k, j, a, b)] = float(mm[0 if a == 1 else 1, 0 if b == 1 else 1])
    return ProbabilitySet(settings.n, values)
