"""candump-compatible text trace I/O: `(seconds.micros) channel ID#DATA`."""

from __future__ import annotations

import re

from .recon import TraceRecord

CHANNEL = "vcan0"

_LINE_RE = re.compile(
    r"^\((?P<sec>\d+)\.(?P<usec>\d{6})\)\s+(?P<chan>\S+)\s+"
    r"(?P<id>[0-9A-Fa-f]{3})#(?P<data>(?:[0-9A-Fa-f]{2})*)\s*$"
)


class TraceFormatError(ValueError):
    pass


def render_record(record):
    sec, usec = divmod(record.time_us, 1_000_000)
    return f"({sec}.{usec:06d}) {CHANNEL} {record.can_id:03X}#{record.data.hex().upper()}"


def render(records):
    return "".join(render_record(r) + "\n" for r in records)


def write_trace(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render(records))


def parse_line(line, location="<trace>"):
    m = _LINE_RE.match(line)
    if not m:
        raise TraceFormatError(f"{location}: malformed trace line: {line.rstrip()!r}")
    can_id = int(m.group("id"), 16)
    if can_id >= 1 << 11:
        raise TraceFormatError(f"{location}: id {m.group('id')} outside 11-bit range")
    data = bytes.fromhex(m.group("data"))
    if len(data) > 8:
        raise TraceFormatError(f"{location}: payload longer than 8 bytes")
    time_us = int(m.group("sec")) * 1_000_000 + int(m.group("usec"))
    return TraceRecord(time_us, can_id, len(data), data)


def parse(text, source="<trace>"):
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        records.append(parse_line(line, f"{source}:{lineno}"))
    return records


def read_trace(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse(fh.read(), source=str(path))
    except OSError as exc:
        raise TraceFormatError(f"{path}: {exc.strerror or exc}") from None
