"""Command-line front end.

    cavmerge run --config cfg.yaml --mode both --seeds 0-9 --alpha 0.1,0.25 --out results/
    cavmerge plotdata results/trace_event_a0.25_s0.csv --kind constraints --out fig5.csv
    cavmerge plotdata ev.csv tm.csv --kind margins --out fig6.csv

Exit codes: 0 success, 2 configuration or input error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .config import ScenarioConfig, check_config, load_config, load_scripted
from .model import ConfigError
from .sim import run_scenario
from .trace import TraceFormatError, format_summary, read_trace

log = logging.getLogger("cavmerge")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def parse_seeds(text: str) -> list[int]:
    """'0,3,5-7' -> [0, 3, 5, 6, 7]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else part[1:].split("-", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no seeds given")
    return out


def parse_floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _tag(mode: str, alpha: float, seed: int) -> str:
    return f"{mode}_a{alpha:g}_s{seed}"


def _run_one(job):
    cfg, seed = job
    metrics, trace = run_scenario(cfg, seed)
    return metrics, trace.to_csv()


def comparison_table(results: dict, alphas: Sequence[float]) -> str:
    """Event vs time blocks per alpha, averaged over seeds (counts are summed)."""
    buf = io.StringIO()
    for alpha in alphas:
        ev, tm = results.get(("event", alpha), []), results.get(("time", alpha), [])
        if not ev or not tm:
            continue
        buf.write(f"alpha = {alpha:g}\n")
        buf.write(f"{'Metric':<28}{'Event-triggered':>22}{'Time-driven':>16}\n")

        def mean(ms, key):
            vals = [getattr(m, key) for m in ms if not math.isnan(getattr(m, key))]
            return sum(vals) / len(vals) if vals else math.nan

        for label, key in (("Ave. Travel time (s)", "avg_travel_time"),
                           ("Ave. 1/2 u^2", "avg_half_u2"),
                           ("Ave. Fuel consumption", "avg_fuel")):
            buf.write(f"{label:<28}{mean(ev, key):>22.4f}{mean(tm, key):>16.4f}\n")
        q_ev = sum(m.qp_solve_count for m in ev)
        q_tm = sum(m.qp_solve_count for m in tm)
        pct = 100.0 * q_ev / q_tm if q_tm else math.nan
        buf.write(f"{'Computation load (QPs)':<28}{f'{pct:.0f}% ({q_ev})':>22}{q_tm:>16d}\n")
        i_ev = sum(m.infeasible_count for m in ev)
        i_tm = sum(m.infeasible_count for m in tm)
        buf.write(f"{'Num of infeasible cases':<28}{i_ev:>22d}{i_tm:>16d}\n\n")
    return buf.getvalue()


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        if args.scripted_arrivals:
            cfg = cfg.with_(scripted=load_scripted(args.scripted_arrivals))
        modes = ["event", "time"] if args.mode == "both" else [args.mode]
        alphas = args.alpha or [cfg.controller.alpha]
        jobs, keys = [], []
        for alpha in alphas:
            for mode in modes:
                run_cfg = check_config(cfg.with_(mode=mode).with_controller(alpha=alpha))
                for seed in args.seeds:
                    jobs.append((run_cfg, seed))
                    keys.append((mode, alpha, seed))
    except (ConfigError, OSError) as exc:
        print("config error:", file=sys.stderr)
        for err in getattr(exc, "errors", None) or [str(exc)]:
            print(f"  {err}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                outputs = list(pool.map(_run_one, jobs))
        else:
            outputs = [_run_one(j) for j in jobs]
        stamp = args.fixed_epoch if args.fixed_epoch is not None else time.time()
        results: dict = {}
        for (mode, alpha, seed), (metrics, trace_csv) in zip(keys, outputs):
            tag = _tag(mode, alpha, seed)
            (out / f"trace_{tag}.csv").write_text(trace_csv)
            summary = {"mode": mode, "alpha": alpha, "seed": seed, "generated_at": float(stamp)}
            summary.update(metrics.as_dict())
            (out / f"summary_{tag}.txt").write_text(format_summary(summary))
            results.setdefault((mode, alpha), []).append(metrics)
            log.info("%s: travel %.3f s, QPs %d, infeasible %d", tag, metrics.avg_travel_time,
                     metrics.qp_solve_count, metrics.infeasible_count)
        if args.mode == "both":
            table = comparison_table(results, alphas)
            (out / "comparison.txt").write_text(table)
            print(table, end="")
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.exception("run failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _constraint_series(trace) -> list[tuple]:
    rows = []
    for r in trace.records():
        if math.isnan(r["b1"]) and math.isnan(r["b2"]):
            continue
        rows.append((r["t"], r["id"], r["b1"], r["b2"]))
    return rows


def _fmt(v) -> str:
    return "" if isinstance(v, float) and math.isnan(v) else repr(v) if isinstance(v, float) else str(v)


def cmd_plotdata(args) -> int:
    traces = []
    for path in args.traces:
        try:
            traces.append(read_trace(path))
        except TraceFormatError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as exc:
            print(f"cannot read trace: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.kind == "constraints":
        if len(traces) != 1:
            print("constraints takes exactly one trace", file=sys.stderr)
            return EXIT_CONFIG
        w.writerow(("t", "id", "b1", "b2"))
        for row in _constraint_series(traces[0]):
            w.writerow([_fmt(v) for v in row])
    else:
        if len(traces) != 2:
            print("margins takes two traces: event-mode then time-mode", file=sys.stderr)
            return EXIT_CONFIG
        series = []
        for tr in traces:
            series.append({(round(r["t"] * 1e9), r["id"]): (r["t"], r["b2"])
                           for r in tr.records() if not math.isnan(r["b2"])})
        w.writerow(("t", "id", "b2_event", "b2_time"))
        for key in sorted(set(series[0]) | set(series[1])):
            t = (series[0].get(key) or series[1].get(key))[0]
            b_ev = series[0].get(key, (None, math.nan))[1]
            b_tm = series[1].get(key, (None, math.nan))[1]
            w.writerow([_fmt(t), key[1], _fmt(b_ev), _fmt(b_tm)])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cavmerge", description="CAV merging control simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run scenarios and write traces and summaries")
    r.add_argument("--config", help="YAML scenario config (defaults when omitted)")
    r.add_argument("--mode", choices=("event", "time", "both"), default="event")
    r.add_argument("--seeds", type=parse_seeds, default=[0], help="e.g. 0,1,2 or 0-9")
    r.add_argument("--alpha", type=parse_floats, help="comma-separated time/energy weights")
    r.add_argument("--out", default="results")
    r.add_argument("--scripted-arrivals", help="YAML list of {t, lane, v0[, x0]}")
    r.add_argument("--fixed-epoch", type=float, nargs="?", const=0.0, default=None,
                   help="timestamp written to summaries (default 0) for reproducible output")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("plotdata", help="extract figure data from traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--kind", choices=("constraints", "margins"), default="constraints")
    p.add_argument("--out", help="output CSV (stdout when omitted)")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
