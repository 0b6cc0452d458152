"""Chained Bell functionals, their bounds, and a deterministic-strategy verifier.

Postselecting on central-slot coincidences weakens the local bound of the
chained statistic: the EE/LL subensembles are governed by the trivial bound 2N
and the mixture averages it with the classical 2N − 2, giving 2N − 1. The CH
forms shift by the same averaging.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass
import itertools
import logging

import numpy as np

from .const import MAX_ENUMERATION_N
from .exceptions import InvalidArgumentError
from .settings import ch_form_terms
from .timebin_data import (
    OUTCOME_ORDER,
    BellReport,
    CorrelationSet,
    ProbabilitySet,
    chained_index_pairs,
)

_LOGGER = logging.getLogger(__name__)

# S_CHSH = CH1 − CH2 − CH3 + CH4 (regression-tested against a least-squares
# calibration on random distributions)
CHSH_FROM_CH_COEFFICIENTS: tuple[int, int, int, int] = (1, -1, -1, 1)

# Sides on which each CH variant is tested: 1 and 4 against the upper bound,
# 2 and 3 (one side relabelled) against the lower bound.
CH_VARIANT_SIDES: dict[int, str] = {1: "upper", 2: "lower", 3: "lower", 4: "upper"}


@dataclass(frozen=True)
class BellBounds:
    """All bounds of the chained family for one N."""

    n: int
    classical_chsh: float
    timebin_chsh: float
    trivial_ee_chsh: float
    ch_interval: tuple[float, float]
    ch_ll_interval: tuple[float, float]
    ch_ee_interval: tuple[float, float]

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        data = asdict(self)
        for key in ("ch_interval", "ch_ll_interval", "ch_ee_interval"):
            data[key] = list(data[key])
        return data


def _require_n(n: int) -> None:
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")


def chained_coefficients(n: int) -> dict[tuple[int, int], int]:
    """Sign of each correlation term in the chained statistic."""
    coefficients = dict.fromkeys(chained_index_pairs(n), 1)
    coefficients[(1, 1)] = -1
    return coefficients


def chsh(correlations: CorrelationSet) -> float:
    """⟨A1B1⟩ − ⟨A2B2⟩ + ⟨A2B1⟩ + ⟨A1B2⟩."""
    if correlations.n != 2:
        raise InvalidArgumentError(f"CHSH needs n=2 correlations, got n={correlations.n}")
    c = correlations
    return c[(1, 1)] - c[(2, 2)] + c[(2, 1)] + c[(1, 2)]


def chained_chsh(correlations: CorrelationSet) -> float:
    """⟨A_N B_N⟩ + Σ_k [⟨A_k B_{k−1}⟩ + ⟨A_{k−1} B_k⟩] − ⟨A_1 B_1⟩."""
    return float(
        sum(
            coef * correlations[pair]
            for pair, coef in chained_coefficients(correlations.n).items()
        )
    )


def ch_form(probabilities: ProbabilitySet, variant: int) -> float:
    """CH-form chained statistic of the given variant (1..4)."""
    return float(
        sum(
            coef * probabilities[(k, j, a, b)]
            for k, j, a, b, coef in ch_form_terms(probabilities.n, variant)
        )
    )


def chsh_from_ch(ch_values: Sequence[float]) -> float:
    """Chained statistic from the four CH-form values of one dataset.

    Exact for any distribution normalized per setting pair; no fair-sampling
    assumption is needed on this path.
    """
    if len(ch_values) != 4:
        raise InvalidArgumentError(f"expected 4 CH values, got {len(ch_values)}")
    return float(sum(c * v for c, v in zip(CHSH_FROM_CH_COEFFICIENTS, ch_values, strict=True)))


def correlations_from_probability_set(probabilities: ProbabilitySet) -> CorrelationSet:
    """⟨A_k B_j⟩ = p(++) + p(−−) − p(+−) − p(−+) for every chained pair."""
    values = {
        (k, j): sum(a * b * probabilities[(k, j, a, b)] for a, b in OUTCOME_ORDER)
        for k, j in chained_index_pairs(probabilities.n)
    }
    return CorrelationSet(probabilities.n, values)


def random_probability_set(rng: np.random.Generator, n: int) -> ProbabilitySet:
    """Random joint distribution per chained pair, each normalized."""
    values: dict[tuple[int, int, int, int], float] = {}
    for k, j in chained_index_pairs(n):
        for (a, b), p in zip(OUTCOME_ORDER, rng.dirichlet(np.ones(4)), strict=True):
            values[(k, j, a, b)] = float(p)
    return ProbabilitySet(n, values)


def calibrate_chsh_from_ch(
    n: int, samples: int = 100, seed: int = 0
) -> np.ndarray:
    """Least-squares coefficients c with S_CHSH ≈ Σ c_i · CH_i on random distributions."""
    _require_n(n)
    if samples < 4:
        raise InvalidArgumentError(f"need >= 4 calibration samples, got {samples}")
    rng = np.random.default_rng(seed)
    design = np.empty((samples, 4))
    target = np.empty(samples)
    for row in range(samples):
        probabilities = random_probability_set(rng, n)
        design[row] = [ch_form(probabilities, v) for v in (1, 2, 3, 4)]
        target[row] = chained_chsh(correlations_from_probability_set(probabilities))
    coefficients, residual, *_ = np.linalg.lstsq(design, target, rcond=None)
    _LOGGER.debug("CH→CHSH calibration n=%d: %s (residual %s)", n, coefficients, residual)
    return coefficients


def bounds(n: int) -> BellBounds:
    """Classical, time-bin and trivial bounds of the chained family."""
    _require_n(n)
    ll = (1.0 - n, 0.0)
    ee = (0.5 - n, 0.5)
    return BellBounds(
        n=n,
        classical_chsh=2.0 * n - 2,
        timebin_chsh=2.0 * n - 1,
        trivial_ee_chsh=2.0 * n,
        # Time-bin interval is the EE/LL average
        ch_interval=((ll[0] + ee[0]) / 2, (ll[1] + ee[1]) / 2),
        ch_ll_interval=ll,
        ch_ee_interval=ee,
    )


def effective_lhv_bound(n: int, fast_switching: bool) -> float:
    """Local bound that applies to a postselected run.

    Only fast setting changes restrict the hidden variables enough for the
    2N − 1 bound; with static settings nothing below the trivial 2N holds.
    """
    b = bounds(n)
    return b.timebin_chsh if fast_switching else b.trivial_ee_chsh


def verify_classical_bound_by_enumeration(n: int) -> float:
    """Maximum of the chained statistic over all deterministic ±1 strategies."""
    if not 2 <= n <= MAX_ENUMERATION_N:
        raise InvalidArgumentError(f"n must be in [2, {MAX_ENUMERATION_N}], got {n}")
    strategies = np.array(list(itertools.product((1, -1), repeat=n)), dtype=np.int64)
    weights = np.zeros((n, n), dtype=np.int64)
    for (k, j), coef in chained_coefficients(n).items():
        weights[k - 1, j - 1] = coef
    # values[x, y] = Σ_kj W_kj · A_x(k) · B_y(j)
    values = strategies @ weights @ strategies.T
    best = float(values.max())
    _LOGGER.debug("Enumerated %d strategy pairs for n=%d: max %g", values.size, n, best)
    return best


def report(
    statistic: float,
    bound: float,
    std_error: float,
    *,
    classical_bound: float | None = None,
    label: str = "",
    side: str = "upper",
) -> BellReport:
    """Attach the significance of a bound violation to a statistic."""
    if not std_error > 0:
        raise InvalidArgumentError(f"std_error must be > 0, got {std_error}")
    if side not in ("upper", "lower"):
        raise InvalidArgumentError(f"side must be 'upper' or 'lower', got {side!r}")
    excess = statistic - bound if side == "upper" else bound - statistic
    return BellReport(
        statistic=float(statistic),
        lhv_bound=float(bound),
        classical_bound=float(bound if classical_bound is None else classical_bound),
        std_error=float(std_error),
        violation_sigma=float(excess / std_error),
        label=label,
        side=side,
    )
