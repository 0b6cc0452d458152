"""Data model for time-bin Bell experiments."""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import asdict, dataclass, field
from enum import Enum, IntEnum
import math

import numpy as np

from .const import (
    DEFAULT_DARK_COUNT_RATE,
    DEFAULT_DELTA_T,
    DEFAULT_DETECTOR_EFFICIENCY,
    DEFAULT_PAIR_PROB,
    DEFAULT_PHASE_JITTER,
    DEFAULT_REP_RATE,
    DEFAULT_SEED,
    DEFAULT_TDC_BIN,
    DEFAULT_VISIBILITY,
    DEFAULT_WINDOW_HALF_WIDTH,
    MODEL_LHV,
    MODEL_QUANTUM,
    TWO_PI,
)
from .exceptions import InvalidArgumentError

# Measurement phase in radians, canonical range [0, 2π)
Phase = float

# Joint ±1 outcome pairs (a, b), equal-sign outcomes first:
# index 0 → (+,+), 1 → (−,−), 2 → (+,−), 3 → (−,+)
OUTCOME_ORDER: tuple[tuple[int, int], ...] = ((1, 1), (-1, -1), (1, -1), (-1, 1))


class Slot(Enum):
    """Arrival-time slot at a measurement station."""

    E = "E"  # t0 − ΔT
    M = "M"  # t0, the only slot with two-photon interference
    L = "L"  # t0 + ΔT

    @property
    def index(self) -> int:
        """Position in (E, M, L)."""
        return SLOTS.index(self)

    @property
    def offset(self) -> int:
        """Arrival offset in units of ΔT."""
        return self.index - 1


SLOTS: tuple[Slot, ...] = (Slot.E, Slot.M, Slot.L)


class Channel(IntEnum):
    """Detector channel of a timetag record (one "+"-port detector per side)."""

    ALICE_PLUS = 1
    BOB_PLUS = 2


class BellFunctional(Enum):
    """Bell functional a run plan is built for."""

    CHSH = "chsh"
    CH1 = "ch1"
    CH2 = "ch2"
    CH3 = "ch3"
    CH4 = "ch4"

    @property
    def ch_variant(self) -> int | None:
        """CH-form variant number, or None for the correlation form."""
        if self is BellFunctional.CHSH:
            return None
        return int(self.value[-1])


@dataclass(frozen=True)
class SlotSign:
    """One of the six outcomes {E±, M±, L±} of a single station."""

    slot: Slot
    sign: int

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise InvalidArgumentError(f"sign must be +1 or -1, got {self.sign!r}")

    @property
    def index(self) -> int:
        """Row/column of this outcome in a JointOutcomeTable."""
        return 2 * self.slot.index + (0 if self.sign == 1 else 1)

    @classmethod
    def from_index(cls, index: int) -> SlotSign:
        """Inverse of :attr:`index`."""
        if not 0 <= index < 6:
            raise InvalidArgumentError(f"outcome index out of range: {index}")
        return cls(SLOTS[index // 2], 1 if index % 2 == 0 else -1)

    def __str__(self) -> str:
        return f"{self.slot.value}{'+' if self.sign == 1 else '-'}"


ALL_SLOT_SIGNS: tuple[SlotSign, ...] = tuple(SlotSign.from_index(i) for i in range(6))


@dataclass(frozen=True, eq=False)
class JointOutcomeTable:
    """6×6 table P(a, b) over (slot, sign) outcomes, Alice on rows, Bob on columns."""

    p: np.ndarray
    std_error: np.ndarray | None = None

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.shape != (6, 6):
            raise InvalidArgumentError(f"joint table must be 6x6, got {p.shape}")
        object.__setattr__(self, "p", p)
        if self.std_error is not None:
            object.__setattr__(self, "std_error", np.asarray(self.std_error, float))

    def __getitem__(self, key: tuple[SlotSign, SlotSign]) -> float:
        alice, bob = key
        return float(self.p[alice.index, bob.index])

    def total(self) -> float:
        """Sum of all entries."""
        return float(self.p.sum())

    def alice_slot_marginals(self) -> np.ndarray:
        """P(slot) on Alice's side, ordered (E, M, L)."""
        return self.p.sum(axis=1).reshape(3, 2).sum(axis=1)

    def bob_slot_marginals(self) -> np.ndarray:
        """P(slot) on Bob's side, ordered (E, M, L)."""
        return self.p.sum(axis=0).reshape(3, 2).sum(axis=1)

    def mm_block(self) -> np.ndarray:
        """The 2×2 M,M block, rows Alice (+, −), columns Bob (+, −)."""
        return self.p[2:4, 2:4].copy()

    def cross_el(self) -> float:
        """Total weight of E-L and L-E cells."""
        return float(self.p[0:2, 4:6].sum() + self.p[4:6, 0:2].sum())

    def max_deviation(self, other: JointOutcomeTable) -> float:
        """Largest absolute cell difference to another table."""
        return float(np.max(np.abs(self.p - other.p)))

    def rows(self) -> list[dict[str, float | str]]:
        """Flat rows (alice, bob, probability[, std_error]) for CSV export."""
        out: list[dict[str, float | str]] = []
        for a in ALL_SLOT_SIGNS:
            for b in ALL_SLOT_SIGNS:
                row: dict[str, float | str] = {
                    "alice": str(a),
                    "bob": str(b),
                    "probability": float(self.p[a.index, b.index]),
                }
                if self.std_error is not None:
                    row["std_error"] = float(self.std_error[a.index, b.index])
                out.append(row)
        return out


@dataclass(frozen=True)
class StateModel:
    """Time-bin entangled state with fringe visibility V."""

    visibility: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise InvalidArgumentError(
                f"visibility must be in [0, 1], got {self.visibility}"
            )


@dataclass(frozen=True)
class HiddenVariable:
    """Hidden variable λ = (θ, r_a, r_b, r_c, r_d)."""

    theta: float
    r_a: float
    r_b: float
    r_c: float
    r_d: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta < TWO_PI:
            raise InvalidArgumentError(f"theta must be in [0, 2π), got {self.theta}")
        for name in ("r_a", "r_b", "r_c", "r_d"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise InvalidArgumentError(f"{name} must be in [0, 1), got {value}")


@dataclass(frozen=True)
class ChainedSettings:
    """The N measurement phases per side of a chained Bell run."""

    n: int
    alice_phases: tuple[Phase, ...]
    bob_phases: tuple[Phase, ...]

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidArgumentError(f"n must be >= 2, got {self.n}")
        if len(self.alice_phases) != self.n or len(self.bob_phases) != self.n:
            raise InvalidArgumentError(
                f"expected {self.n} phases per side, got "
                f"{len(self.alice_phases)} (Alice) and {len(self.bob_phases)} (Bob)"
            )
        object.__setattr__(self, "alice_phases", tuple(map(float, self.alice_phases)))
        object.__setattr__(self, "bob_phases", tuple(map(float, self.bob_phases)))

    def alice(self, k: int) -> Phase:
        """Phase of Alice's measurement A_k (1-based)."""
        return self.alice_phases[k - 1]

    def bob(self, j: int) -> Phase:
        """Phase of Bob's measurement B_j (1-based)."""
        return self.bob_phases[j - 1]

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return {
            "n": self.n,
            "alice_phases": list(self.alice_phases),
            "bob_phases": list(self.bob_phases),
        }


@dataclass(frozen=True)
class RunPlanEntry:
    """One measurement run: a phase pair held for `duration` seconds."""

    alice_phase: Phase
    bob_phase: Phase
    duration: float
    label: str

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise InvalidArgumentError(
                f"run duration must be > 0, got {self.duration} ({self.label})"
            )


@dataclass(frozen=True)
class RunPlan:
    """Ordered list of runs, separated by phase stabilization gaps."""

    entries: tuple[RunPlanEntry, ...]
    stabilization_gap: float = 0.0
    settings: ChainedSettings | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RunPlanEntry]:
        return iter(self.entries)

    @property
    def labels(self) -> list[str]:
        """Run labels in plan order."""
        return [entry.label for entry in self.entries]

    def start_times(self) -> list[float]:
        """Start of each run, counting durations and stabilization gaps."""
        starts: list[float] = []
        t = 0.0
        for entry in self.entries:
            starts.append(t)
            t += entry.duration + self.stabilization_gap
        return starts


@dataclass(frozen=True)
class CorrelationSet:
    """Correlations ⟨A_k B_j⟩ for the chained index pairs."""

    n: int
    values: Mapping[tuple[int, int], float]

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidArgumentError(f"n must be >= 2, got {self.n}")
        allowed = set(chained_index_pairs(self.n))
        for pair, value in self.values.items():
            if pair not in allowed:
                raise InvalidArgumentError(f"{pair} is not a chained pair for n={self.n}")
            if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise InvalidArgumentError(f"correlation {pair} out of [-1, 1]: {value}")

    def __getitem__(self, pair: tuple[int, int]) -> float:
        try:
            return self.values[pair]
        except KeyError:
            raise InvalidArgumentError(
                f"missing correlation ⟨A{pair[0]}B{pair[1]}⟩"
            ) from None


@dataclass(frozen=True)
class ProbabilitySet:
    """Joint probabilities p(a_k b_j) keyed by (k, j, a, b), a and b = ±1."""

    n: int
    values: Mapping[tuple[int, int, int, int], float]

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidArgumentError(f"n must be >= 2, got {self.n}")
        for term, value in self.values.items():
            if not -1e-12 <= value <= 1.0 + 1e-12:
                raise InvalidArgumentError(f"probability {term} out of [0, 1]: {value}")

    def __getitem__(self, term: tuple[int, int, int, int]) -> float:
        try:
            return self.values[term]
        except KeyError:
            k, j, a, b = term
            raise InvalidArgumentError(
                f"missing probability p({'' if a == 1 else '~'}a{k} "
                f"{'' if b == 1 else '~'}b{j})"
            ) from None


@dataclass(frozen=True)
class BellReport:
    """A Bell statistic with its bounds, standard error and significance."""

    statistic: float
    lhv_bound: float
    classical_bound: float
    std_error: float
    violation_sigma: float
    label: str = ""
    side: str = "upper"  # "upper": violated above the bound, "lower": below it

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of the simulated pulsed time-bin experiment."""

    rep_rate: float = DEFAULT_REP_RATE
    delta_t: float = DEFAULT_DELTA_T
    tdc_bin: float = DEFAULT_TDC_BIN
    pair_prob_per_pulse: float = DEFAULT_PAIR_PROB
    # (Alice, Bob); a single number applies to both sides
    detector_efficiency: tuple[float, float] = (
        DEFAULT_DETECTOR_EFFICIENCY,
        DEFAULT_DETECTOR_EFFICIENCY,
    )
    dark_count_rate: float = DEFAULT_DARK_COUNT_RATE
    visibility: float = DEFAULT_VISIBILITY
    phase_jitter_rms: float = DEFAULT_PHASE_JITTER
    model: str = MODEL_QUANTUM
    seed: int = DEFAULT_SEED
    # Central slot position t0 within the pulse period; None → half period
    slot_offset: float | None = None
    window_half_width: int = DEFAULT_WINDOW_HALF_WIDTH
    # Selects the analytic LHV bound only; switching itself is not simulated
    fast_switching: bool = False

    def __post_init__(self) -> None:
        eff = self.detector_efficiency
        if isinstance(eff, (int, float)):
            eff = (float(eff), float(eff))
        eff = tuple(float(e) for e in eff)
        object.__setattr__(self, "detector_efficiency", eff)

        problems: list[str] = []
        if not self.rep_rate > 0:
            problems.append("rep_rate must be > 0")
        if not self.delta_t > 0:
            problems.append("delta_t must be > 0")
        if not self.tdc_bin > 0:
            problems.append("tdc_bin must be > 0")
        if not 0.0 <= self.pair_prob_per_pulse <= 1.0:
            problems.append("pair_prob_per_pulse must be in [0, 1]")
        if len(eff) != 2 or not all(0.0 <= e <= 1.0 for e in eff):
            problems.append("detector_efficiency must be in [0, 1] per side")
        if self.dark_count_rate < 0:
            problems.append("dark_count_rate must be >= 0")
        if not 0.0 <= self.visibility <= 1.0:
            problems.append("visibility must be in [0, 1]")
        if self.phase_jitter_rms < 0:
            problems.append("phase_jitter_rms must be >= 0")
        if self.model not in (MODEL_QUANTUM, MODEL_LHV):
            problems.append(f"model must be '{MODEL_QUANTUM}' or '{MODEL_LHV}'")
        if self.seed < 0:
            problems.append("seed must be >= 0")
        if self.window_half_width < 0:
            problems.append("window_half_width must be >= 0")
        if problems:
            raise InvalidArgumentError("; ".join(problems))

        # Peak resolvability
        if not self.delta_t > self.window_width:
            raise InvalidArgumentError(
                f"delta_t ({self.delta_t:g} s) must exceed the coincidence window "
                f"({self.window_width:g} s)"
            )
        if not self.period > 2 * self.delta_t:
            raise InvalidArgumentError(
                f"pulse period ({self.period:g} s) must exceed 2·delta_t "
                f"({2 * self.delta_t:g} s)"
            )
        if self.t0 - self.delta_t < 0 or self.t0 + self.delta_t >= self.period:
            raise InvalidArgumentError(
                f"slot_offset {self.t0:g} s leaves E or L outside the pulse period"
            )

    @property
    def period(self) -> float:
        """Pump pulse period in seconds."""
        return 1.0 / self.rep_rate

    @property
    def t0(self) -> float:
        """Central (M) slot arrival time relative to the pulse."""
        return self.period / 2 if self.slot_offset is None else self.slot_offset

    @property
    def window_width(self) -> float:
        """Full width of the central-slot acceptance in seconds."""
        return (2 * self.window_half_width + 1) * self.tdc_bin

    def pulses_in(self, duration: float) -> int:
        """Number of pump pulses in a run of `duration` seconds."""
        return math.floor(duration * self.rep_rate)

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        data = asdict(self)
        data["detector_efficiency"] = list(self.detector_efficiency)
        return data


@dataclass(frozen=True)
class StreamHeader:
    """Provenance of a timetag stream."""

    config: ExperimentConfig
    label: str
    alice_phase: Phase
    bob_phase: Phase
    duration: float
    run_index: int = 0
    start_time: float = 0.0
    model_id: str = ""
    settings: ChainedSettings | None = None

    def to_dict(self) -> dict:
        """JSON-friendly representation, as stored in file headers."""
        return {
            "config": self.config.to_dict(),
            "label": self.label,
            "alice_phase": self.alice_phase,
            "bob_phase": self.bob_phase,
            "duration": self.duration,
            "run_index": self.run_index,
            "start_time": self.start_time,
            "model_id": self.model_id,
            "settings": None if self.settings is None else self.settings.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class TimetagStream:
    """Header plus tick-sorted (channel, tick) detection records."""

    header: StreamHeader
    channels: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    ticks: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint64))

    def __post_init__(self) -> None:
        channels = np.asarray(self.channels, dtype=np.uint8)
        ticks = np.asarray(self.ticks, dtype=np.uint64)
        if channels.shape != ticks.shape or channels.ndim != 1:
            raise InvalidArgumentError(
                f"channels {channels.shape} and ticks {ticks.shape} do not match"
            )
        if ticks.size > 1 and not bool(np.all(ticks[1:] >= ticks[:-1])):
            raise InvalidArgumentError("timetag records must be sorted by tick")
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "ticks", ticks)

    def __len__(self) -> int:
        return int(self.ticks.size)

    @property
    def label(self) -> str:
        """Run label from the header."""
        return self.header.label

    def channel(self, channel: Channel) -> TimetagStream:
        """Records of a single detector, same header."""
        mask = self.channels == int(channel)
        return TimetagStream(self.header, self.channels[mask], self.ticks[mask])

    def count(self, channel: Channel) -> int:
        """Number of records on one channel."""
        return int(np.count_nonzero(self.channels == int(channel)))


@dataclass(frozen=True)
class CoincidenceWindow:
    """Central-slot acceptance in TDC ticks."""

    center_offset: int = 0
    half_width: int = DEFAULT_WINDOW_HALF_WIDTH

    def __post_init__(self) -> None:
        if self.half_width < 0:
            raise InvalidArgumentError(f"half_width must be >= 0, got {self.half_width}")


@dataclass(frozen=True, eq=False)
class SinglesHistogram:
    """Counts per TDC bin, folded modulo the pump period."""

    channel: Channel
    counts: np.ndarray
    tdc_bin: float
    period: float
    t0: float
    delta_t: float
    window_half_width: int = DEFAULT_WINDOW_HALF_WIDTH

    @property
    def total(self) -> int:
        """Total number of folded records."""
        return int(self.counts.sum())

    def bin_of(self, time_in_period: float) -> int:
        """Histogram bin holding a time offset within the period."""
        return int(math.floor(time_in_period / self.tdc_bin)) % self.counts.size


@dataclass(frozen=True)
class FringePoint:
    """Coincidences recorded at one phase sum α + β."""

    phase_sum: Phase
    coincidences: int
    duration: float

    def __post_init__(self) -> None:
        if self.coincidences < 0:
            raise InvalidArgumentError(f"negative coincidence count at {self.phase_sum}")


@dataclass(frozen=True)
class FringeScan:
    """Coincidence counts as a function of the phase sum."""

    points: tuple[FringePoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(phase_sum, coincidences, duration) as arrays."""
        return (
            np.array([p.phase_sum for p in self.points], dtype=float),
            np.array([p.coincidences for p in self.points], dtype=float),
            np.array([p.duration for p in self.points], dtype=float),
        )


@dataclass(frozen=True)
class ProbabilityEstimate:
    """p̂ = C_target / ΣC over the four phase-shifted runs of one term."""

    value: float
    std_error: float
    raw_counts: tuple[int, int, int, int]
    target: int = 0


def chained_index_pairs(n: int) -> list[tuple[int, int]]:
    """Chained pairs (N,N), (k,k−1), (k−1,k) for k = 2..N, then (1,1)."""
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    pairs = [(n, n)]
    for k in range(2, n + 1):
        pairs.append((k, k - 1))
        pairs.append((k - 1, k))
    pairs.append((1, 1))
    return pairs
