"""
Report stream writer.

Records go out either as JSON lines or as msgpack frames:
[4 bytes: big-endian length][N bytes: msgpack payload]
"""

import json
import struct
from typing import IO, Any, Iterator

import msgpack
import numpy as np

FORMATS = ("jsonl", "msgpack")


def to_native(value: Any) -> Any:
    """Convert numpy scalars/arrays (also nested) into plain Python values."""
    if isinstance(value, dict):
        return {str(k): to_native(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_native(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_native(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


class ReportWriter:
    """Writes one record per call to a text or binary stream."""

    def __init__(self, stream: IO[Any], format: str = "jsonl"):
        if format not in FORMATS:
            raise ValueError(f"unknown report format {format!r}, expected one of {FORMATS}")
        self.stream = stream
        self.format = format

    def write(self, record: dict[str, Any]) -> None:
        native = to_native(record)
        if self.format == "jsonl":
            self.stream.write(json.dumps(native, sort_keys=True) + "\n")
            return
        payload = msgpack.packb(native, use_bin_type=True)
        self.stream.write(struct.pack(">I", len(payload)) + payload)

    def write_all(self, records: list[dict[str, Any]]) -> None:
        for record in records:
            self.write(record)


def read_frames(stream: IO[bytes]) -> Iterator[dict[str, Any]]:
    """Yield records from a msgpack frame stream until EOF."""
    while True:
        header = stream.read(4)
        if not header:
            return
        if len(header) < 4:
            raise ConnectionError("truncated frame header")
        length = struct.unpack(">I", header)[0]
        payload = stream.read(length)
        if len(payload) < length:
            raise ConnectionError("truncated frame payload")
        yield msgpack.unpackb(payload, raw=False)
