"""Tests for JSON-lines and msgpack report streams."""

import io
import json
import struct

import msgpack
import numpy as np
import pytest

from mpbridge.internal.report import ReportWriter, read_frames, to_native


class TestToNative:
    """Test conversion of numpy values into plain Python."""

    def test_scalars(self):
        assert to_native(np.float64(0.5)) == 0.5
        assert type(to_native(np.int64(3))) is int

    def test_nested(self):
        value = {"word": np.array([0, 1, 1]), "pair": (np.float32(0.25), 2), 3: "x"}
        assert to_native(value) == {"word": [0, 1, 1], "pair": [0.25, 2], "3": "x"}

    def test_matrix(self):
        assert to_native(np.eye(2)) == [[1.0, 0.0], [0.0, 1.0]]


class TestReportWriter:
    """Test both output formats."""

    def test_jsonl(self):
        stream = io.StringIO()
        writer = ReportWriter(stream)
        writer.write_all([{"N": 2, "rate": np.float64(0.5)}, {"N": 3, "rate": 0.25}])
        lines = stream.getvalue().splitlines()
        assert [json.loads(line) for line in lines] == [
            {"N": 2, "rate": 0.5},
            {"N": 3, "rate": 0.25},
        ]

    def test_jsonl_keys_sorted(self):
        stream = io.StringIO()
        ReportWriter(stream).write({"zeta": [0], "eta": [1]})
        assert stream.getvalue() == '{"eta": [1], "zeta": [0]}\n'

    def test_msgpack_frames(self):
        stream = io.BytesIO()
        writer = ReportWriter(stream, format="msgpack")
        writer.write({"sample": 0, "word": np.array([1, 0])})
        writer.write({"sample": 1, "word": [0, 0]})
        stream.seek(0)
        assert list(read_frames(stream)) == [
            {"sample": 0, "word": [1, 0]},
            {"sample": 1, "word": [0, 0]},
        ]

    def test_frame_header_is_length(self):
        stream = io.BytesIO()
        ReportWriter(stream, format="msgpack").write({"N": 4})
        data = stream.getvalue()
        assert struct.unpack(">I", data[:4])[0] == len(data) - 4
        assert msgpack.unpackb(data[4:], raw=False) == {"N": 4}

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            ReportWriter(io.StringIO(), format="csv")


class TestReadFrames:
    """Test truncated streams."""

    def test_empty_stream(self):
        assert list(read_frames(io.BytesIO(b""))) == []

    def test_truncated_header(self):
        with pytest.raises(ConnectionError):
            list(read_frames(io.BytesIO(b"\x00\x00")))

    def test_truncated_payload(self):
        payload = msgpack.packb({"N": 4})
        data = struct.pack(">I", len(payload) + 5) + payload
        with pytest.raises(ConnectionError):
            list(read_frames(io.BytesIO(data)))
