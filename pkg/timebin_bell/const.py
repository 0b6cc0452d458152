"""Constants for the time-bin Bell simulator."""

import math

TWO_PI = 2 * math.pi

# Source and detection defaults (pulsed Ti:Sa pump, TDC resolution)
DEFAULT_REP_RATE = 76e6  # Hz
DEFAULT_DELTA_T = 2.0e-9  # s, slot separation ΔL/c
DEFAULT_TDC_BIN = 81e-12  # s
DEFAULT_PAIR_PROB = 1e-4
DEFAULT_DETECTOR_EFFICIENCY = 0.5
DEFAULT_DARK_COUNT_RATE = 100.0  # Hz per detector
DEFAULT_VISIBILITY = 0.99
DEFAULT_PHASE_JITTER = 0.0  # rad rms, per run
DEFAULT_SEED = 0

# Coincidence window: ±5 TDC bins around the central slot (±0.405 ns)
DEFAULT_WINDOW_HALF_WIDTH = 5

# Run protocol: 3 s measurement followed by ~1 s of phase stabilization
DEFAULT_RUN_DURATION = 3.0
DEFAULT_STABILIZATION_GAP = 1.0

# Monte Carlo batching. Fixed sizes keep results independent of thread count.
SIMULATOR_BLOCK_PULSES = 1 << 24
LHV_BATCH_SAMPLES = 1 << 20

# Oracle and enumeration limits
MIN_ORACLE_RESOLUTION = 64
DEFAULT_ORACLE_RESOLUTION = 1 << 16
ORACLE_TOLERANCE = 1e-6
MAX_ENUMERATION_N = 6

# TTB1 timetag file layout (little-endian)
TTB1_MAGIC = b"TTB1"
TTB1_RECORD_SIZE = 9  # uint8 channel + uint64 tick

# Model identifiers recorded in stream headers
MODEL_QUANTUM = "quantum"
MODEL_LHV = "lhv"

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION_FAILED = 2
EXIT_DATA_ERROR = 3
