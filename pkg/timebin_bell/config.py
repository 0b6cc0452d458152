"""JSON configuration documents for simulation runs."""

from __future__ import annotations

from dataclasses import dataclass
import json
import logging
from pathlib import Path
from typing import Any

import voluptuous as vol
from voluptuous.humanize import humanize_error

from .const import (
    DEFAULT_DARK_COUNT_RATE,
    DEFAULT_DELTA_T,
    DEFAULT_DETECTOR_EFFICIENCY,
    DEFAULT_PAIR_PROB,
    DEFAULT_PHASE_JITTER,
    DEFAULT_REP_RATE,
    DEFAULT_RUN_DURATION,
    DEFAULT_SEED,
    DEFAULT_STABILIZATION_GAP,
    DEFAULT_TDC_BIN,
    DEFAULT_VISIBILITY,
    DEFAULT_WINDOW_HALF_WIDTH,
    MODEL_LHV,
    MODEL_QUANTUM,
)
from .exceptions import InvalidArgumentError
from .settings import build_run_plan, optimal_chained_settings
from .timebin_data import BellFunctional, ChainedSettings, ExperimentConfig, RunPlan
from .timetag_codec import FORMAT_CSV, FORMAT_TTB1

_LOGGER = logging.getLogger(__name__)

CONF_EXPERIMENT = "experiment"
CONF_SETTINGS = "settings"
CONF_OUTPUT = "output"
CONF_THREADS = "threads"

DEFAULT_OUTPUT_DIRECTORY = "runs"

_POSITIVE = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))
_NON_NEGATIVE = vol.All(vol.Coerce(float), vol.Range(min=0))
_UNIT = vol.All(vol.Coerce(float), vol.Range(min=0, max=1))

EXPERIMENT_SCHEMA = vol.Schema(
    {
        vol.Optional("rep_rate", default=DEFAULT_REP_RATE): _POSITIVE,
        vol.Optional("delta_t", default=DEFAULT_DELTA_T): _POSITIVE,
        vol.Optional("tdc_bin", default=DEFAULT_TDC_BIN): _POSITIVE,
        vol.Optional("pair_prob_per_pulse", default=DEFAULT_PAIR_PROB): _UNIT,
        vol.Optional("detector_efficiency", default=DEFAULT_DETECTOR_EFFICIENCY): vol.Any(
            _UNIT, vol.All([_UNIT], vol.Length(min=2, max=2))
        ),
        vol.Optional("dark_count_rate", default=DEFAULT_DARK_COUNT_RATE): _NON_NEGATIVE,
        vol.Optional("visibility", default=DEFAULT_VISIBILITY): _UNIT,
        vol.Optional("phase_jitter_rms", default=DEFAULT_PHASE_JITTER): _NON_NEGATIVE,
        vol.Optional("model", default=MODEL_QUANTUM): vol.In([MODEL_QUANTUM, MODEL_LHV]),
        vol.Optional("seed", default=DEFAULT_SEED): vol.All(int, vol.Range(min=0)),
        vol.Optional("slot_offset"): vol.Any(None, _POSITIVE),
        vol.Optional("window_half_width", default=DEFAULT_WINDOW_HALF_WIDTH): vol.All(
            int, vol.Range(min=0)
        ),
        vol.Optional("fast_switching", default=False): bool,
    }
)

SETTINGS_SCHEMA = vol.Schema(
    {
        vol.Required("n"): vol.All(int, vol.Range(min=2)),
        vol.Optional("functional", default=BellFunctional.CHSH.value): vol.In(
            [f.value for f in BellFunctional]
        ),
        vol.Optional("run_duration", default=DEFAULT_RUN_DURATION): _POSITIVE,
        vol.Optional("stabilization_gap", default=DEFAULT_STABILIZATION_GAP): _NON_NEGATIVE,
        vol.Inclusive("alice_phases", "explicit phases"): [vol.Coerce(float)],
        vol.Inclusive("bob_phases", "explicit phases"): [vol.Coerce(float)],
    }
)

OUTPUT_SCHEMA = vol.Schema(
    {
        vol.Optional("directory", default=DEFAULT_OUTPUT_DIRECTORY): str,
        vol.Optional("format", default=FORMAT_TTB1): vol.In([FORMAT_TTB1, FORMAT_CSV]),
    }
)

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_EXPERIMENT, default=dict): EXPERIMENT_SCHEMA,
        vol.Required(CONF_SETTINGS): SETTINGS_SCHEMA,
        vol.Optional(CONF_OUTPUT, default=dict): OUTPUT_SCHEMA,
        vol.Optional(CONF_THREADS): vol.All(int, vol.Range(min=1)),
    }
)


@dataclass(frozen=True)
class SimulationConfig:
    """A validated configuration document."""

    experiment: ExperimentConfig
    settings: ChainedSettings
    functional: BellFunctional
    run_duration: float
    stabilization_gap: float
    output_directory: Path
    output_format: str
    threads: int | None = None

    def run_plan(self) -> RunPlan:
        """Run plan described by the settings section."""
        return build_run_plan(
            self.settings, self.functional, self.run_duration, self.stabilization_gap
        )


def validate(schema: vol.Schema, data: Any) -> dict:
    """Apply a schema, converting voluptuous errors to InvalidArgumentError."""
    try:
        return schema(data)
    except vol.Invalid as err:
        raise InvalidArgumentError(humanize_error(data, err)) from err


def parse_experiment_config(data: dict, **overrides: Any) -> ExperimentConfig:
    """ExperimentConfig from an `experiment` section."""
    values = validate(EXPERIMENT_SCHEMA, data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def parse_settings(data: dict) -> ChainedSettings:
    """ChainedSettings from a `settings` section; optimal phases unless given."""
    values = validate(SETTINGS_SCHEMA, data)
    if "alice_phases" not in values:
        return optimal_chained_settings(values["n"])
    return ChainedSettings(
        n=values["n"],
        alice_phases=tuple(values["alice_phases"]),
        bob_phases=tuple(values["bob_phases"]),
    )


def parse_config(data: dict, **experiment_overrides: Any) -> SimulationConfig:
    """SimulationConfig from a whole document."""
    values = validate(CONFIG_SCHEMA, data)
    settings_section = values[CONF_SETTINGS]
    return SimulationConfig(
        experiment=parse_experiment_config(values[CONF_EXPERIMENT], **experiment_overrides),
        settings=parse_settings(settings_section),
        functional=BellFunctional(settings_section["functional"]),
        run_duration=settings_section["run_duration"],
        stabilization_gap=settings_section["stabilization_gap"],
        output_directory=Path(values[CONF_OUTPUT]["directory"]),
        output_format=values[CONF_OUTPUT]["format"],
        threads=values.get(CONF_THREADS),
    )


def load_config(path: Path, **experiment_overrides: Any) -> SimulationConfig:
    """Read and validate a JSON configuration file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise InvalidArgumentError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise InvalidArgumentError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"config {path} must be a JSON object")
    config = parse_config(data, **experiment_overrides)
    _LOGGER.debug("Loaded config %s: n=%d %s", path, config.settings.n, config.functional.value)
    return config
