"""Two-photon fringe fit: C(φ) = C0·(1 + V·cos(φ + φ0))."""

from __future__ import annotations

from dataclasses import asdict, dataclass
import logging
import math
import warnings

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .const import TWO_PI
from .exceptions import FitFailureError, InvalidArgumentError
from .settings import normalize_phase
from .timebin_data import FringeScan

_LOGGER = logging.getLogger(__name__)

MIN_FRINGE_POINTS = 4
_CURVE_SAMPLES = 3600


@dataclass(frozen=True)
class FringeFit:
    """Fitted fringe parameters with one-sigma errors."""

    visibility: float
    phase_offset: float
    amplitude: float
    std_errors: dict[str, float]
    contrast: float
    raw_contrast: float
    points: int

    def to_dict(self) -> dict:
        """JSON-friendly representation."""
        return asdict(self)


def _model(phi: np.ndarray, amplitude: float, visibility: float, phase: float) -> np.ndarray:
    return amplitude * (1.0 + visibility * np.cos(phi + phase))


def _harmonic_guess(phi: np.ndarray, counts: np.ndarray, sigma: np.ndarray) -> tuple[float, float, float]:
    """Weighted linear fit C ≈ a + b·cos φ + c·sin φ."""
    design = np.column_stack((np.ones_like(phi), np.cos(phi), np.sin(phi))) / sigma[:, None]
    (a, b, c), *_ = np.linalg.lstsq(design, counts / sigma, rcond=None)
    amplitude = max(float(a), 1e-12)
    visibility = float(np.clip(math.hypot(b, c) / amplitude, 0.0, 1.0))
    return amplitude, visibility, math.atan2(-c, b)


def fit_fringe(scan: FringeScan) -> FringeFit:
    """Poisson-weighted least-squares fit of a fringe scan.

    Counts from runs of different length are scaled to the mean run duration.
    """
    phi, counts, durations = scan.arrays()
    distinct = np.unique(np.round(phi, 12)).size
    if distinct < MIN_FRINGE_POINTS:
        raise InvalidArgumentError(
            f"a fringe fit needs >= {MIN_FRINGE_POINTS} distinct phases, got {distinct}"
        )
    if not np.any(counts > 0):
        raise InvalidArgumentError("fringe scan has no coincidences")

    scale = durations / durations.mean()
    sigma = np.sqrt(np.maximum(counts, 1.0)) / scale
    counts = counts / scale
    p0 = _harmonic_guess(phi, counts, sigma)
    diagnostics = {"initial_guess": list(p0), "points": int(phi.size)}

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", OptimizeWarning)
        try:
            params, covariance = curve_fit(
                _model,
                phi,
                counts,
                p0=p0,
                sigma=sigma,
                absolute_sigma=True,
                bounds=([0.0, 0.0, -np.inf], [np.inf, 1.0, np.inf]),
                maxfev=10_000,
            )
        except (RuntimeError, ValueError) as err:
            diagnostics["message"] = str(err)
            raise FitFailureError(f"fringe fit did not converge: {err}", diagnostics) from err
    for warning in caught:
        _LOGGER.warning("Fringe fit: %s", warning.message)

    amplitude, visibility, phase = (float(x) for x in params)
    errors = np.sqrt(np.abs(np.diag(covariance)))
    curve = _model(np.linspace(0.0, TWO_PI, _CURVE_SAMPLES, endpoint=False), *params)
    raw = (counts.max() - counts.min()) / (counts.max() + counts.min())

    _LOGGER.debug("Fringe fit on %d points: V=%.5f ± %.5f", phi.size, visibility, errors[1])
    return FringeFit(
        visibility=visibility,
        phase_offset=normalize_phase(phase),
        amplitude=amplitude,
        std_errors={
            "amplitude": float(errors[0]),
            "visibility": float(errors[1]),
            "phase_offset": float(errors[2]),
        },
        contrast=float((curve.max() - curve.min()) / (curve.max() + curve.min())),
        raw_contrast=float(raw),
        points=int(phi.size),
    )
