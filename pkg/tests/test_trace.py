import math

import pytest

from cavmerge.trace import COLUMNS, TRACE_VERSION, Trace, TraceFormatError, format_summary, parse_summary, parse_trace

ROW = (0.1, 1, 1, "main", 0.5, 0.4, 0.0, 0.5, 0.4, math.nan, 0.25, 0.6, 0.4, 0, 1, 0, "optimal")


def test_round_trip_is_exact():
    tr = Trace([ROW, ROW[:4] + (1 / 3,) + ROW[5:]])
    back = parse_trace(tr.to_csv())
    assert back.to_csv() == tr.to_csv()
    assert back.rows[1][4] == 1 / 3 and math.isnan(back.rows[0][9])


def test_empty_trace():
    assert len(parse_trace(Trace().to_csv())) == 0


def _csv(*lines):
    return "\n".join([TRACE_VERSION, ",".join(COLUMNS), *lines]) + "\n"


@pytest.mark.parametrize("text, lineno", [
    ("nope\n", 1),
    (TRACE_VERSION + "\n", 2),
    (TRACE_VERSION + "\na,b\n", 2),
    (_csv("1,2,3"), 3),
    (_csv(Trace([ROW]).to_csv().splitlines()[2].replace("main", "side")), 3),
    (_csv(Trace([ROW]).to_csv().splitlines()[2], Trace([ROW]).to_csv().splitlines()[2].replace(",1,1,", ",x,1,")), 4),
    (_csv(Trace([ROW]).to_csv().splitlines()[2].replace("0.5,", ",", 1)), 3),
])
def test_parse_errors_report_line(text, lineno):
    with pytest.raises(TraceFormatError) as exc:
        parse_trace(text)
    assert exc.value.lineno == lineno and str(exc.value).startswith(f"line {lineno}:")


def test_summary_round_trip():
    d = {"mode": "event", "seed": 3, "avg": 0.1 + 0.2, "truncated": False, "min_b2": math.inf}
    assert parse_summary(format_summary(d)) == d
    with pytest.raises(ValueError):
        format_summary({"a=b": 1})
    with pytest.raises(TraceFormatError):
        parse_summary("# cavmerge-summary v1\nbroken\n")
