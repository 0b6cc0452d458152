"""Test the quantum predictions."""

import math

import numpy as np
import pytest

from timebin_bell.bell import ch_form, chained_chsh, chsh
from timebin_bell.exceptions import InvalidArgumentError
from timebin_bell.quantum import (
    conditional_mm_correlation,
    critical_visibility,
    joint_table,
    qm_chained_ch,
    qm_chained_chsh,
    qm_correlations,
    qm_probabilities,
)
from timebin_bell.settings import optimal_chained_settings
from timebin_bell.timebin_data import ChainedSettings, Slot, SlotSign, StateModel

M_PLUS = SlotSign(Slot.M, 1)
M_MINUS = SlotSign(Slot.M, -1)


@pytest.mark.parametrize(("alpha", "beta"), [(0.0, 0.0), (0.3, 1.1), (math.pi, 0.0), (2.0, 5.5)])
def test_joint_table_structure(alpha, beta):
    """Normalized, no E-L cells, slot marginals 1/4, 1/2, 1/4."""
    table = joint_table(StateModel(1.0), alpha, beta)
    assert table.total() == pytest.approx(1.0, abs=1e-15)
    assert table.cross_el() == 0.0
    np.testing.assert_allclose(table.alice_slot_marginals(), [0.25, 0.5, 0.25], atol=1e-15)
    np.testing.assert_allclose(table.bob_slot_marginals(), [0.25, 0.5, 0.25], atol=1e-15)
    assert table[SlotSign(Slot.E, 1), SlotSign(Slot.M, -1)] == pytest.approx(1 / 32)


def test_joint_table_interference():
    """M+M+ is 1/8 at phase sum 0 and vanishes at π."""
    state = StateModel(1.0)
    assert joint_table(state, 0.0, 0.0)[M_PLUS, M_PLUS] == pytest.approx(1 / 8)
    assert joint_table(state, 0.0, 0.0)[M_PLUS, M_MINUS] == pytest.approx(0.0)
    assert joint_table(state, math.pi / 2, math.pi / 2)[M_PLUS, M_PLUS] == pytest.approx(0.0, abs=1e-17)


def test_visibility_scales_correlation():
    """The postselected correlation is V·cos(φ_A + φ_B)."""
    assert conditional_mm_correlation(StateModel(0.9), 0.2, 0.5) == pytest.approx(0.9 * math.cos(0.7))
    assert conditional_mm_correlation(StateModel(0.0), 0.2, 0.5) == pytest.approx(0.0)


@pytest.mark.parametrize(("n", "expected"), [(2, 2 * math.sqrt(2)), (3, 5.196), (4, 7.391), (5, 9.511)])
def test_qm_chained_chsh(n, expected):
    """2N·cos(π/2N)."""
    assert qm_chained_chsh(n) == pytest.approx(expected, abs=1e-3)


@pytest.mark.parametrize(("n", "expected"), [(3, 0.2990), (5, 0.3776)])
def test_qm_chained_ch(n, expected):
    """1/2 − N·sin²(π/4N)."""
    assert qm_chained_ch(n) == pytest.approx(expected, abs=1e-3)


def test_critical_visibility():
    """V_cr(5) = 94.63 %."""
    assert round(100 * critical_visibility(5), 2) == 94.63
    assert critical_visibility(2) > 1.0


@pytest.mark.parametrize("n", range(2, 9))
def test_violation_requires_three_settings(n):
    """The time-bin bound 2N−1 is beaten exactly from N = 3 on."""
    assert (qm_chained_chsh(n) > 2 * n - 1) == (n >= 3)


def test_invalid_n():
    """N < 2 is rejected."""
    with pytest.raises(InvalidArgumentError):
        qm_chained_chsh(1)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_correlations_at_optimal_settings(n):
    """Evaluated through the functionals, the optimal settings give the closed forms."""
    settings = optimal_chained_settings(n)
    assert chained_chsh(qm_correlations(settings, StateModel(1.0))) == pytest.approx(qm_chained_chsh(n))
    assert ch_form(qm_probabilities(settings, StateModel(1.0)), 1) == pytest.approx(qm_chained_ch(n))


def test_chsh_on_relabelled_settings():
    """Swapping indices 1↔2 turns the N=2 chain into the CHSH combination."""
    chain = optimal_chained_settings(2)
    swapped = ChainedSettings(2, chain.alice_phases[::-1], chain.bob_phases[::-1])
    assert chsh(qm_correlations(swapped, StateModel(1.0))) == pytest.approx(2 * math.sqrt(2))


def test_probabilities_are_normalized_per_pair(chained3):
    """The four renormalized M,M probabilities of a pair sum to one."""
    probabilities = qm_probabilities(chained3, StateModel(0.9))
    total = sum(probabilities[(2, 1, a, b)] for a in (1, -1) for b in (1, -1))
    assert total == pytest.approx(1.0)
