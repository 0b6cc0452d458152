"""Timetag file formats: packed binary TTB1 and plain CSV."""

import csv
import io
import json
import logging
from pathlib import Path

import numpy as np

from .const import TTB1_MAGIC, TTB1_RECORD_SIZE
from .exceptions import InvalidArgumentError, TimetagFormatError
from .timebin_data import (
    ChainedSettings,
    ExperimentConfig,
    StreamHeader,
    TimetagStream,
)

_LOGGER = logging.getLogger(__name__)

# Little-endian packed record: uint8 channel, uint64 tick
RECORD_DTYPE = np.dtype([("channel", "u1"), ("tick", "<u8")])

_HEADER_LENGTH_SIZE = 4
_CSV_HEADER_PREFIX = "# "
_CSV_COLUMNS = ("channel", "tick")

FORMAT_TTB1 = "ttb1"
FORMAT_CSV = "csv"
FILE_SUFFIXES = {FORMAT_TTB1: ".ttb1", FORMAT_CSV: ".csv"}


class TimetagCodec:
    """Encoder/decoder of timetag files.

    TTB1 layout: magic "TTB1", uint32 header length, UTF-8 JSON header, then
    9-byte records {channel: uint8, tick: uint64}, all little-endian.
    CSV layout: "# " + header JSON on the first line, then "channel,tick" rows.
    """

    @staticmethod
    def header_from_dict(data: dict) -> StreamHeader:
        """Rebuild a StreamHeader from its JSON form."""
        try:
            config_data = dict(data["config"])
            config_data["detector_efficiency"] = tuple(config_data["detector_efficiency"])
            config = ExperimentConfig(**config_data)
            settings_data = data.get("settings")
            settings = (
                None
                if settings_data is None
                else ChainedSettings(
                    n=int(settings_data["n"]),
                    alice_phases=tuple(settings_data["alice_phases"]),
                    bob_phases=tuple(settings_data["bob_phases"]),
                )
            )
            return StreamHeader(
                config=config,
                label=str(data["label"]),
                alice_phase=float(data["alice_phase"]),
                bob_phase=float(data["bob_phase"]),
                duration=float(data["duration"]),
                run_index=int(data.get("run_index", 0)),
                start_time=float(data.get("start_time", 0.0)),
                model_id=str(data.get("model_id", "")),
                settings=settings,
            )
        except (KeyError, TypeError, ValueError) as err:
            raise TimetagFormatError(f"invalid stream header: {err}") from err

    @staticmethod
    def _header_json(stream: TimetagStream) -> str:
        return json.dumps(stream.header.to_dict(), sort_keys=True)

    @staticmethod
    def _stream(header: StreamHeader, channels: np.ndarray, ticks: np.ndarray) -> TimetagStream:
        try:
            return TimetagStream(header, channels, ticks)
        except InvalidArgumentError as err:
            raise TimetagFormatError(str(err)) from err

    @staticmethod
    def encode_ttb1(stream: TimetagStream) -> bytes:
        header = TimetagCodec._header_json(stream).encode()
        records = np.empty(len(stream), dtype=RECORD_DTYPE)
        records["channel"] = stream.channels
        records["tick"] = stream.ticks
        return b"".join(
            (
                TTB1_MAGIC,
                len(header).to_bytes(_HEADER_LENGTH_SIZE, "little"),
                header,
                records.tobytes(),
            )
        )

    @staticmethod
    def decode_ttb1(data: bytes) -> TimetagStream:
        if data[: len(TTB1_MAGIC)] != TTB1_MAGIC:
            raise TimetagFormatError(f"bad magic {data[:4]!r}, expected {TTB1_MAGIC!r}")
        offset = len(TTB1_MAGIC)
        if len(data) < offset + _HEADER_LENGTH_SIZE:
            raise TimetagFormatError("truncated header length")
        length = int.from_bytes(data[offset : offset + _HEADER_LENGTH_SIZE], "little")
        offset += _HEADER_LENGTH_SIZE
        if len(data) < offset + length:
            raise TimetagFormatError(
                f"truncated header: need {length} bytes, have {len(data) - offset}"
            )
        try:
            header_data = json.loads(data[offset : offset + length].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise TimetagFormatError(f"header is not valid JSON: {err}") from err
        header = TimetagCodec.header_from_dict(header_data)

        body = data[offset + length :]
        if len(body) % TTB1_RECORD_SIZE:
            raise TimetagFormatError(
                f"record section of {len(body)} bytes is not a multiple of "
                f"{TTB1_RECORD_SIZE}"
            )
        records = np.frombuffer(body, dtype=RECORD_DTYPE)
        _LOGGER.debug("Decoded TTB1 %s: %d records", header.label, records.size)
        return TimetagCodec._stream(
            header, records["channel"].copy(), records["tick"].astype(np.uint64)
        )

    @staticmethod
    def encode_csv(stream: TimetagStream) -> str:
        out = io.StringIO()
        out.write(_CSV_HEADER_PREFIX + TimetagCodec._header_json(stream) + "\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        writer.writerows(zip(stream.channels.tolist(), stream.ticks.tolist(), strict=True))
        return out.getvalue()

    @staticmethod
    def decode_csv(text: str) -> TimetagStream:
        lines = text.splitlines()
        if not lines or not lines[0].startswith(_CSV_HEADER_PREFIX):
            raise TimetagFormatError("CSV timetag file must start with a '# {header}' line")
        try:
            header_data = json.loads(lines[0][len(_CSV_HEADER_PREFIX) :])
        except json.JSONDecodeError as err:
            raise TimetagFormatError(f"header is not valid JSON: {err}") from err
        header = TimetagCodec.header_from_dict(header_data)

        reader = csv.reader(lines[1:])
        columns = next(reader, None)
        if columns is None or tuple(columns) != _CSV_COLUMNS:
            raise TimetagFormatError(f"expected columns {_CSV_COLUMNS}, got {columns}")
        channels: list[int] = []
        ticks: list[int] = []
        for row_number, row in enumerate(reader, start=3):
            try:
                channel, tick = (int(value) for value in row)
            except ValueError as err:
                raise TimetagFormatError(f"line {row_number}: {row!r}") from err
            if not 0 <= channel <= 255 or tick < 0:
                raise TimetagFormatError(f"line {row_number}: value out of range in {row!r}")
            channels.append(channel)
            ticks.append(tick)
        return TimetagCodec._stream(
            header, np.array(channels, np.uint8), np.array(ticks, np.uint64)
        )

    @staticmethod
    def write(stream: TimetagStream, path: Path) -> None:
        """Write a stream; the format follows the file suffix."""
        path = Path(path)
        if path.suffix == FILE_SUFFIXES[FORMAT_CSV]:
            path.write_text(TimetagCodec.encode_csv(stream), encoding="utf-8")
        else:
            path.write_bytes(TimetagCodec.encode_ttb1(stream))
        _LOGGER.debug("Wrote %d records to %s", len(stream), path)

    @staticmethod
    def read(path: Path) -> TimetagStream:
        """Read a stream; the format follows the file suffix."""
        path = Path(path)
        if path.suffix == FILE_SUFFIXES[FORMAT_CSV]:
            return TimetagCodec.decode_csv(path.read_text(encoding="utf-8"))
        return TimetagCodec.decode_ttb1(path.read_bytes())


def stream_filename(stream: TimetagStream, file_format: str = FORMAT_TTB1) -> str:
    """`<run index>_<label><suffix>`, sortable in plan order."""
    if file_format not in FILE_SUFFIXES:
        raise InvalidArgumentError(f"unknown timetag format {file_format!r}")
    label = stream.label or "run"
    return f"{stream.header.run_index:03d}_{label}{FILE_SUFFIXES[file_format]}"
