"""Trace and spectrum files.

Binary trace container, all little-endian::

    offset  size  field
    0       4     magic b"BHDT"
    4       4     format version (uint32, currently 1)
    8       8     sample rate, S/s (float64)
    16      8     duration, s (float64)
    24      8     net gain, V/A (float64)
    32      8     dc current, A (float64)
    40      4*N   samples, V (float32), N = round(sample_rate * duration)

CSV traces have a ``time_s,volts`` header and may carry ``# key=value``
comment lines (sample_rate, gain, dc_current, channel_id) before it.
"""

from __future__ import annotations

import io
import math
import struct
from pathlib import Path

import numpy as np

from .frontend import Calibration, TraceRecord

MAGIC = b"BHDT"
VERSION = 1
_HEADER = struct.Struct("<4sI4d")


class TraceFormatError(ValueError):
    """A trace file could not be parsed; ``offset`` is a byte position."""

    def __init__(self, path, offset, message):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = str(path)
        self.offset = offset


def write_binary(trace, path):
    cal = trace.calibration
    header = _HEADER.pack(MAGIC, VERSION, trace.sample_rate, trace.duration, cal.gain,
                          cal.dc_current)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(trace.samples, dtype="<f4").tobytes())


def read_binary(path, channel_id=None, calibration=None):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TraceFormatError(path, len(data), f"truncated header ({len(data)} of {_HEADER.size} bytes)")
    magic, version, rate, duration, gain, dc = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TraceFormatError(path, 0, f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TraceFormatError(path, 4, f"unsupported format version {version}")
    for offset, value in ((8, rate), (16, duration), (24, gain)):
        if not (math.isfinite(value) and value > 0):
            raise TraceFormatError(path, offset, f"header field must be positive, got {value}")
    expected = round(rate * duration)
    payload = len(data) - _HEADER.size
    if payload != 4 * expected:
        end = _HEADER.size + 4 * expected
        kind = "truncated" if payload < 4 * expected else "trailing data in"
        raise TraceFormatError(path, len(data) if payload < 4 * expected else end,
                               f"{kind} payload: {payload} bytes, expected {4 * expected}")
    samples = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    bad = np.nonzero(~np.isfinite(samples))[0]
    if bad.size:
        raise TraceFormatError(path, _HEADER.size + 4 * int(bad[0]), "non-finite sample")
    cal = calibration or Calibration(gain, dc)
    return TraceRecord(rate, duration, samples, channel_id or 1, cal)


def write_csv(trace, path):
    cal = trace.calibration
    t = np.arange(len(trace)) / trace.sample_rate
    with open(path, "w", newline="") as fh:
        fh.write(f"# sample_rate={trace.sample_rate!r}\n")
        fh.write(f"# gain={cal.gain!r}\n")
        fh.write(f"# dc_current={cal.dc_current!r}\n")
        fh.write(f"# channel_id={trace.channel_id}\n")
        fh.write("time_s,volts\n")
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack([t, trace.samples]), fmt="%.9e", delimiter=",")
        fh.write(buf.getvalue())


def read_csv(path, channel_id=None, calibration=None):
    meta = {}
    times, volts = [], []
    offset = 0
    header_seen = False
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.decode("utf-8", errors="replace").strip()
            here = offset
            offset += len(raw)
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line.replace(" ", "").lower() != "time_s,volts":
                    raise TraceFormatError(path, here, f"line {lineno}: expected header 'time_s,volts'")
                header_seen = True
                continue
            parts = line.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                t, v = float(parts[0]), float(parts[1])
            except ValueError:
                raise TraceFormatError(path, here, f"line {lineno}: malformed row {line[:40]!r}") from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise TraceFormatError(path, here, f"line {lineno}: non-finite value")
            times.append(t)
            volts.append(v)
    if len(volts) < 2:
        raise TraceFormatError(path, offset, "fewer than two samples")
    try:
        rate = float(meta["sample_rate"]) if "sample_rate" in meta else None
    except ValueError:
        raise TraceFormatError(path, 0, "bad sample_rate comment") from None
    if rate is None:
        rate = 1.0 / float(np.median(np.diff(times)))
    cal = calibration or Calibration(float(meta.get("gain", 1.0)), float(meta.get("dc_current", 0.0)))
    cid = channel_id if channel_id is not None else int(meta.get("channel_id", 1))
    return TraceRecord(rate, len(volts) / rate, np.asarray(volts), cid, cal)


def read_trace(path, channel_id=None, calibration=None):
    """Read a binary or CSV trace, chosen by content.

    ``channel_id`` overrides the id stored in a CSV header.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_binary(path, channel_id, calibration)
    return read_csv(path, channel_id, calibration)


def write_spectrum_csv(spectrum, path, digits=10):
    with open(path, "w", newline="") as fh:
        fh.write("frequency_hz,psd\n")
        for f, p in zip(spectrum.frequencies, spectrum.psd):
            fh.write(f"{f:.{digits}g},{p:.{digits}g}\n")
