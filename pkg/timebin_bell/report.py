"""Export of analysis results: JSON documents and plot-ready CSV tables.

The summary table has one row per CH form (i, S_LHV,i, S_CH,i, err_S,
violation) followed by the chained CHSH row. Other tables carry the singles
histogram, the Δτ histogram and fringe scans the way a plotting tool expects
them: one header line, one row per point.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
import csv
import io
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import ChFormResult, PipelineResult
from .fringe import FringeFit
from .timebin_data import BellReport, FringeScan, SinglesHistogram

_LOGGER = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("i", "S_LHV", "S", "err_S", "violation_sigma")


def _row(index: str, report: BellReport) -> dict[str, Any]:
    return {
        "i": index,
        "S_LHV": report.lhv_bound,
        "S": report.statistic,
        "err_S": report.std_error,
        "violation_sigma": report.violation_sigma,
    }


def summary_rows(result: PipelineResult | ChFormResult) -> list[dict[str, Any]]:
    """CH rows 1..4 then the CHSH row; a single row for a CH-form plan."""
    if isinstance(result, ChFormResult):
        return [_row(str(result.variant), result.report)]
    rows = [_row(str(i), r) for i, r in enumerate(result.ch_reports, start=1)]
    rows.append(_row("CHSH", result.chsh_report))
    return rows


def correlation_rows(result: PipelineResult) -> list[dict[str, Any]]:
    return [
        {"alice": k, "bob": j, "correlation": value, "std_error": err}
        for (k, j), (value, err) in result.correlations.items()
    ]


def probability_rows(result: ChFormResult) -> list[dict[str, Any]]:
    return [
        {
            "label": label,
            "p": value,
            "std_error": err,
            "mm_counts": result.counts[label],
            "side_counts": result.side_counts[label],
        }
        for label, (value, err) in result.probabilities.items()
    ]


def singles_rows(histogram: SinglesHistogram) -> list[dict[str, Any]]:
    return [
        {"time_ns": (i + 0.5) * histogram.tdc_bin * 1e9, "counts": int(c)}
        for i, c in enumerate(histogram.counts)
    ]


def delay_rows(delays: np.ndarray, counts: np.ndarray, tdc_bin: float) -> list[dict[str, Any]]:
    return [
        {"delta_tau_ticks": int(d), "delta_tau_ns": d * tdc_bin * 1e9, "counts": int(c)}
        for d, c in zip(delays, counts, strict=True)
    ]


def fringe_rows(scan: FringeScan, fit: FringeFit | None = None) -> list[dict[str, Any]]:
    rows = []
    for point in scan.points:
        row: dict[str, Any] = {
            "phase_sum": point.phase_sum,
            "coincidences": point.coincidences,
            "duration": point.duration,
        }
        if fit is not None:
            row["fit"] = fit.amplitude * (
                1 + fit.visibility * np.cos(point.phase_sum + fit.phase_offset)
            )
        rows.append(row)
    return rows


def to_csv(rows: Sequence[Mapping[str, Any]], columns: Iterable[str] | None = None) -> str:
    """Rows as CSV text; columns default to the first row's keys."""
    out = io.StringIO()
    fieldnames = list(columns) if columns is not None else list(rows[0]) if rows else []
    writer = csv.DictWriter(out, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def to_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=False, default=_json_default)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def format_summary(result: PipelineResult | ChFormResult) -> str:
    """Fixed-width text rendering of the summary rows."""
    lines = [f"{'i':>5} {'S_LHV':>8} {'S':>9} {'err_S':>7} {'violation':>10}"]
    for row in summary_rows(result):
        lines.append(
            f"{row['i']:>5} {row['S_LHV']:>8.3f} {row['S']:>9.3f} "
            f"{row['err_S']:>7.3f} {row['violation_sigma']:>9.2f}σ"
        )
    if isinstance(result, PipelineResult):
        lines.append(f"consistency 4·S_CH,1 + 2(N−1) = {result.consistency:.3f}")
    lines.append(f"loophole: {result.loophole_status}")
    if result.seed is not None:
        lines.append(f"seed: {result.seed}")
    return "\n".join(lines)


def write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    _LOGGER.info("Wrote %s", path)


def write_pipeline_outputs(
    result: PipelineResult | ChFormResult, directory: Path
) -> list[Path]:
    """report.json, summary.csv and correlations.csv under `directory`.

    A CH-form result writes probabilities.csv in place of correlations.csv.
    """
    directory = Path(directory)
    outputs = {
        directory / "report.json": to_json(result.to_dict()),
        directory / "summary.csv": to_csv(summary_rows(result), SUMMARY_COLUMNS),
    }
    if isinstance(result, ChFormResult):
        outputs[directory / "probabilities.csv"] = to_csv(probability_rows(result))
    else:
        outputs[directory / "correlations.csv"] = to_csv(correlation_rows(result))
    for path, text in outputs.items():
        write_text(path, text)
    return list(outputs)
