"""Local hidden variable model reproducing the time-bin joint outcome table.

Under static settings the postselected M,M subensemble of this model shows the
quantum correlation cos(φ_A + φ_B): the slot Bob reports depends on his own
phase, so discarding non-coincident events selects a setting-dependent
subensemble.

Strategy (λ = (θ, r_a, r_b, r_c, r_d), all components uniform):
    Alice:  r_a < 1/4 → E,  1/4 ≤ r_a < 3/4 → M,  r_a ≥ 3/4 → L.
            M takes the sign of cos(θ + φ_A); E and L take + iff r_d < 1/2.
    Bob:    r_b ≤ (π/4)|cos(φ_B − θ)| → M with the sign of cos(φ_B − θ);
            otherwise E if r_a < 1/2 else L, with + iff r_c < 1/2.

The π/4 amplitude makes ⟨(π/4)|cos|⟩ = 1/2, so Bob lands in M half the time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import logging
import math

import numpy as np

from .bell import chained_chsh
from .const import LHV_BATCH_SAMPLES, MIN_ORACLE_RESOLUTION, TWO_PI
from .exceptions import InvalidArgumentError
from .settings import normalize_phase
from .timebin_data import (
    ChainedSettings,
    CorrelationSet,
    HiddenVariable,
    JointOutcomeTable,
    Phase,
    SlotSign,
    chained_index_pairs,
)

_LOGGER = logging.getLogger(__name__)

MODEL_ID = "timebin-lhv-5c/1"

# Region cut points on r_a and the acceptance amplitude for Bob's M slot
ALICE_E_CUT = 0.25
ALICE_L_CUT = 0.75
BOB_E_CUT = 0.5
SIGN_CUT = 0.5
BOB_M_AMPLITUDE = math.pi / 4

_GAUSS_ORDER = 16
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(_GAUSS_ORDER)


# ── strategies ───────────────────────────────────────────────────────────────


def alice_outcome_index(
    theta: np.ndarray, r_a: np.ndarray, r_d: np.ndarray, phase: Phase
) -> np.ndarray:
    """Vectorized A(λ; φ_A) as outcome indices (2·slot + [sign is −])."""
    slot = np.where(r_a < ALICE_E_CUT, 0, np.where(r_a < ALICE_L_CUT, 1, 2))
    minus = np.where(slot == 1, np.cos(theta + phase) < 0, r_d >= SIGN_CUT)
    return 2 * slot + minus.astype(np.int64)


def bob_outcome_index(
    theta: np.ndarray,
    r_a: np.ndarray,
    r_b: np.ndarray,
    r_c: np.ndarray,
    phase: Phase,
) -> np.ndarray:
    """Vectorized B(λ; φ_B) as outcome indices (2·slot + [sign is −])."""
    c = np.cos(phase - theta)
    in_m = r_b <= BOB_M_AMPLITUDE * np.abs(c)
    slot = np.where(in_m, 1, np.where(r_a < BOB_E_CUT, 0, 2))
    minus = np.where(in_m, c < 0, r_c >= SIGN_CUT)
    return 2 * slot + minus.astype(np.int64)


def alice_outcome(lam: HiddenVariable, alice_phase: Phase) -> SlotSign:
    """Alice's outcome; depends only on λ and her own phase."""
    index = alice_outcome_index(
        np.array([lam.theta]), np.array([lam.r_a]), np.array([lam.r_d]), alice_phase
    )
    return SlotSign.from_index(int(index[0]))


def bob_outcome(lam: HiddenVariable, bob_phase: Phase) -> SlotSign:
    """Bob's outcome; depends only on λ and his own phase."""
    index = bob_outcome_index(
        np.array([lam.theta]),
        np.array([lam.r_a]),
        np.array([lam.r_b]),
        np.array([lam.r_c]),
        bob_phase,
    )
    return SlotSign.from_index(int(index[0]))


def sample_hidden_variables(rng: np.random.Generator, size: int) -> np.ndarray:
    """`size` uniform λ samples as a (5, size) array (θ, r_a, r_b, r_c, r_d)."""
    lam = rng.random((5, size))
    lam[0] *= TWO_PI
    return lam


def outcome_indices(
    lam: np.ndarray, alice_phase: Phase, bob_phase: Phase
) -> tuple[np.ndarray, np.ndarray]:
    """Apply both strategies to a (5, size) λ array."""
    theta, r_a, r_b, r_c, r_d = lam
    return (
        alice_outcome_index(theta, r_a, r_d, alice_phase),
        bob_outcome_index(theta, r_a, r_b, r_c, bob_phase),
    )


# ── integration oracle ───────────────────────────────────────────────────────


def _theta_nodes(
    alice_phase: Phase, bob_phase: Phase, resolution: int, method: str
) -> tuple[np.ndarray, np.ndarray]:
    """θ nodes with weights summing to 1 (the measure dθ/2π)."""
    if method == "midpoint":
        theta = (np.arange(resolution) + 0.5) * (TWO_PI / resolution)
        return theta, np.full(resolution, 1.0 / resolution)
    if method != "gauss":
        raise InvalidArgumentError(f"unknown integration method {method!r}")

    # Split [0, 2π) where either sign changes; each piece is smooth.
    cuts = {
        normalize_phase(math.pi / 2 - alice_phase),
        normalize_phase(3 * math.pi / 2 - alice_phase),
        normalize_phase(bob_phase + math.pi / 2),
        normalize_phase(bob_phase - math.pi / 2),
    }
    edges = np.array(sorted({0.0, TWO_PI, *cuts}))
    edges = edges[np.concatenate(([True], np.diff(edges) > 1e-15))]
    segments = len(edges) - 1
    panels = max(1, resolution // (segments * _GAUSS_ORDER))

    nodes: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    for lo, hi in zip(edges[:-1], edges[1:], strict=True):
        bounds = np.linspace(lo, hi, panels + 1)
        half = np.diff(bounds)[:, None] / 2
        mid = (bounds[:-1] + bounds[1:])[:, None] / 2
        nodes.append((mid + half * _GAUSS_NODES).ravel())
        weights.append((half * _GAUSS_WEIGHTS).ravel() / TWO_PI)
    return np.concatenate(nodes), np.concatenate(weights)


def lhv_table_oracle(
    alice_phase: Phase,
    bob_phase: Phase,
    resolution: int,
    method: str = "gauss",
) -> JointOutcomeTable:
    """Integrate the model's outcome indicators over the hidden-variable space.

    r-components are integrated exactly (the strategies are piecewise constant
    in them given θ); θ numerically, either by piecewise Gauss-Legendre panels
    between the sign-change points ("gauss") or a uniform midpoint grid
    ("midpoint", first-order convergent).
    """
    if resolution < MIN_ORACLE_RESOLUTION:
        raise InvalidArgumentError(
            f"resolution must be >= {MIN_ORACLE_RESOLUTION}, got {resolution}"
        )
    theta, w = _theta_nodes(alice_phase, bob_phase, resolution, method)

    alice_minus = np.cos(theta + alice_phase) < 0
    c = np.cos(bob_phase - theta)
    bob_minus = c < 0
    q = np.minimum(1.0, BOB_M_AMPLITUDE * np.abs(c))  # P(Bob in M | θ)

    # θ-integrated weights, split by Alice's M sign and Bob's M sign
    mm = np.zeros((2, 2))
    bob_m = np.zeros(2)
    alice_m_bob_el = np.zeros(2)
    for sa in (0, 1):
        a_mask = alice_minus == bool(sa)
        alice_m_bob_el[sa] = np.sum(w * (1 - q) * a_mask)
        for sb in (0, 1):
            mm[sa, sb] = np.sum(w * q * (a_mask & (bob_minus == bool(sb))))
    for sb in (0, 1):
        bob_m[sb] = np.sum(w * q * (bob_minus == bool(sb)))
    bob_el = float(np.sum(w * (1 - q)))

    p = np.zeros((6, 6))
    # Bob in M: Alice's slot comes from r_a alone
    for sb in (0, 1):
        p[0:2, 2 + sb] = bob_m[sb] * ALICE_E_CUT / 2
        p[4:6, 2 + sb] = bob_m[sb] * (1 - ALICE_L_CUT) / 2
    p[2:4, 2:4] = mm * (ALICE_L_CUT - ALICE_E_CUT)
    # Bob in E/L: r_a decides both Bob's slot and Alice's
    p[0:2, 0:2] = bob_el * ALICE_E_CUT / 4
    p[4:6, 4:6] = bob_el * (1 - ALICE_L_CUT) / 4
    for sa in (0, 1):
        p[2 + sa, 0:2] = alice_m_bob_el[sa] * (BOB_E_CUT - ALICE_E_CUT) / 2
        p[2 + sa, 4:6] = alice_m_bob_el[sa] * (ALICE_L_CUT - BOB_E_CUT) / 2
    return JointOutcomeTable(p)


# ── Monte Carlo ──────────────────────────────────────────────────────────────


def _batch_counts(
    seed: int, stream: tuple[int, ...], batch: int, size: int, phases: tuple[Phase, Phase]
) -> np.ndarray:
    seq = np.random.SeedSequence(seed, spawn_key=(*stream, batch))
    rng = np.random.Generator(np.random.Philox(seq))
    a, b = outcome_indices(sample_hidden_variables(rng, size), *phases)
    return np.bincount(6 * a + b, minlength=36)


def lhv_montecarlo_table(
    alice_phase: Phase,
    bob_phase: Phase,
    samples: int,
    seed: int = 0,
    *,
    stream: tuple[int, ...] = (),
    threads: int | None = None,
) -> JointOutcomeTable:
    """Sample λ, apply both strategies and tally outcome frequencies.

    Samples are drawn in fixed-size batches with their own Philox streams and
    summed, so the result does not depend on `threads`.
    """
    if samples < 1:
        raise InvalidArgumentError(f"samples must be >= 1, got {samples}")
    sizes = [LHV_BATCH_SAMPLES] * (samples // LHV_BATCH_SAMPLES)
    if samples % LHV_BATCH_SAMPLES:
        sizes.append(samples % LHV_BATCH_SAMPLES)

    phases = (alice_phase, bob_phase)
    if threads is not None and threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda item: _batch_counts(seed, stream, item[0], item[1], phases),
                    enumerate(sizes),
                )
            )
    else:
        parts = [_batch_counts(seed, stream, i, n, phases) for i, n in enumerate(sizes)]

    counts = np.sum(parts, axis=0).reshape(6, 6)
    p = counts / samples
    _LOGGER.debug(
        "LHV Monte Carlo (%.3f, %.3f): %d samples in %d batches",
        alice_phase,
        bob_phase,
        samples,
        len(sizes),
    )
    return JointOutcomeTable(p, np.sqrt(p * (1 - p) / samples))


def postselected_correlation(table: JointOutcomeTable, samples: int) -> tuple[float, float]:
    """M,M-postselected correlation of a sampled table and its standard error."""
    mm = table.mm_block()
    total = mm.sum()
    if total <= 0:
        return 0.0, math.inf
    corr = float((mm[0, 0] + mm[1, 1] - mm[0, 1] - mm[1, 0]) / total)
    return corr, math.sqrt(max(0.0, 1 - corr**2) / (total * samples))


def lhv_chained_statistic(
    settings: ChainedSettings,
    samples: int,
    seed: int = 0,
    *,
    threads: int | None = None,
) -> tuple[float, float]:
    """Postselected chained statistic of the model under static settings.

    Returns (value, standard error). At the optimal settings this reproduces
    the quantum value 2N·cos(π/2N), which is why static settings cannot close
    the postselection loophole.
    """
    values: dict[tuple[int, int], float] = {}
    variance = 0.0
    for index, (k, j) in enumerate(chained_index_pairs(settings.n)):
        table = lhv_montecarlo_table(
            settings.alice(k),
            settings.bob(j),
            samples,
            seed,
            stream=(index,),
            threads=threads,
        )
        values[(k, j)], err = postselected_correlation(table, samples)
        variance += err**2
    statistic = chained_chsh(CorrelationSet(settings.n, values))
    return statistic, math.sqrt(variance)


def find_slot_dependence(
    seed: int = 0, attempts: int = 10_000
) -> tuple[HiddenVariable, Phase, Phase]:
    """Find λ and two Bob phases for which Bob's slot differs."""
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        theta, r_a, r_b, r_c, r_d = sample_hidden_variables(rng, 1)[:, 0]
        lam = HiddenVariable(float(theta), float(r_a), float(r_b), float(r_c), float(r_d))
        phi, phi_other = (float(x) for x in rng.random(2) * TWO_PI)
        if bob_outcome(lam, phi).slot != bob_outcome(lam, phi_other).slot:
            return lam, phi, phi_other
    raise InvalidArgumentError(f"no slot dependence found in {attempts} attempts")
