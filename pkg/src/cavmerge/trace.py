"""Per-tick trace and run summary files.

Trace files are CSV preceded by one version line::

    # cavmerge-trace v1
    t,id,index,lane,x,v,u,x_meas,v_meas,b1,b2,b3,b4,event1,event2,event3,qp_status

Floats are written with ``repr`` so they round-trip exactly; absent barrier
values are empty fields. Summary files are ``key = value`` lines under their own
version line.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Union

TRACE_VERSION = "# cavmerge-trace v1"
SUMMARY_VERSION = "# cavmerge-summary v1"

COLUMNS = ("t", "id", "index", "lane", "x", "v", "u", "x_meas", "v_meas",
           "b1", "b2", "b3", "b4", "event1", "event2", "event3", "qp_status")
_INT_COLS = {"id", "index", "event1", "event2", "event3"}
_STR_COLS = {"lane", "qp_status"}
_LANES = {"main", "merging"}
_STATUSES = {"", "optimal", "infeasible"}


class TraceFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


class Trace:
    """Row store; each row is a tuple in ``COLUMNS`` order."""

    def __init__(self, rows=None):
        self.rows: list[tuple] = list(rows or [])

    def append(self, row: tuple):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        k = COLUMNS.index(name)
        return [r[k] for r in self.rows]

    def records(self) -> Iterable[dict]:
        for r in self.rows:
            yield dict(zip(COLUMNS, r))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(TRACE_VERSION + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write(self, path: Union[str, Path]):
        Path(path).write_text(self.to_csv())


def _parse_field(name: str, raw: str, lineno: int):
    if name in _STR_COLS:
        allowed = _LANES if name == "lane" else _STATUSES
        if raw not in allowed:
            raise TraceFormatError(lineno, f"bad {name} {raw!r}")
        return raw
    if name in _INT_COLS:
        try:
            return int(raw)
        except ValueError:
            raise TraceFormatError(lineno, f"{name} must be an integer, got {raw!r}") from None
    if raw == "":
        if name in ("b1", "b2"):
            return math.nan
        raise TraceFormatError(lineno, f"{name} is empty")
    try:
        return float(raw)
    except ValueError:
        raise TraceFormatError(lineno, f"{name} must be a number, got {raw!r}") from None


def parse_trace(text: str) -> Trace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_VERSION:
        raise TraceFormatError(1, f"expected version line {TRACE_VERSION!r}")
    reader = csv.reader(lines[1:])
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError(2, "missing header") from None
    if tuple(header) != COLUMNS:
        raise TraceFormatError(2, f"unexpected header {header}")
    rows = []
    for k, rec in enumerate(reader, start=3):
        if not rec:
            continue
        if len(rec) != len(COLUMNS):
            raise TraceFormatError(k, f"expected {len(COLUMNS)} fields, got {len(rec)}")
        rows.append(tuple(_parse_field(n, raw, k) for n, raw in zip(COLUMNS, rec)))
    return Trace(rows)


def read_trace(path: Union[str, Path]) -> Trace:
    return parse_trace(Path(path).read_text())


def format_summary(summary: dict) -> str:
    out = [SUMMARY_VERSION]
    for key, val in summary.items():
        if any(c in str(key) for c in "=\n"):
            raise ValueError(f"bad summary key {key!r}")
        out.append(f"{key} = {_fmt(val) if isinstance(val, float) else val}")
    return "\n".join(out) + "\n"


def parse_summary(text: str) -> dict:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SUMMARY_VERSION:
        raise TraceFormatError(1, f"expected version line {SUMMARY_VERSION!r}")
    out = {}
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        key, sep, val = line.partition(" = ")
        if not sep:
            raise TraceFormatError(k, "expected 'key = value'")
        val = val.strip()
        for conv in (int, float):
            try:
                out[key.strip()] = conv(val)
                break
            except ValueError:
                continue
        else:
            out[key.strip()] = {"True": True, "False": False}.get(val, val)
    return out
