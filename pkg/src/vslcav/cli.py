"""Command line: ``vslcav {list,validate,run,serve,report,reproduce}``.

Exit codes: 0 success, 2 usage, 3 scenario validation, 4 runtime failure,
5 I/O failure (unreadable inputs, busy port, mismatched report inputs).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import threading
import time
from pathlib import Path
from typing import Optional

from vslcav import metrics
from vslcav.feed.client import FaultProfile
from vslcav.feed.http import FeedServer, HttpTransport
from vslcav.feed.service import FeedService
from vslcav.scenario import ScenarioError, bundled_names, load, parse_override
from vslcav.simulation import SimulationDiverged, SimulationTrace, load_trace_csv, run_scenario, write_outputs

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4
EXIT_IO = 5

TABLE1_SEGMENTS = ((59.5, 61.5), (61.5, 63.5), (63.5, 65.5))

log = logging.getLogger("vslcav")

PLOT_STUB = '''"""Plot the columnar outputs of `vslcav report`. Requires matplotlib."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")


def read(name):
    with open(out / name, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) if r[k] not in ("", None) else float("nan") for r in rows] for k in rows[0]}


s = read("speed_vs_mm.csv")
fig, ax = plt.subplots(2, 1, figsize=(9, 7))
ax[0].plot(s["mm"], s["ego_v"], label="ego v")
if "pilot_v" in s:
    ax[0].plot(s["mm"], s["pilot_v"], label="pilot v")
ax[0].plot(s["mm"], s["v_gr"], label="posted v_gr")
ax[0].plot(s["mm"], s["v_des"], label="ramped setpoint")
ax[0].invert_xaxis()
ax[0].set_xlabel("mile marker")
ax[0].set_ylabel("m/s")
ax[0].legend()
c = read("controller_state.csv")
ax[1].plot(c["t"], c["u_nom"], label="u_nom")
ax[1].plot(c["t"], c["u_safe"], label="u_safe")
ax[1].plot(c["t"], c["u_cmd"], label="u_cmd")
ax[1].plot(c["t"], c["safety_active"], label="safety filter active")
ax[1].set_xlabel("t (s)")
ax[1].legend()
fig.tight_layout()
fig.savefig(out / "figures.png", dpi=120)
'''


def _overrides(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        k, v = parse_override(item)
        out[k] = v
    return out


def _load_scenario(args):
    try:
        sc = load(args.scenario, _overrides(args.set))
    except ScenarioError as exc:
        for issue in exc.issues:
            print(f"{exc.source}: {issue}", file=sys.stderr)
        return None, EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_IO
    if args.seed is not None:
        from dataclasses import replace
        sc = replace(sc, seed=args.seed)
    return sc, EXIT_OK


# ---------------------------------------------------------------------------


def cmd_list(args) -> int:
    for name in bundled_names():
        print(name)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc, code = _load_scenario(args)
    if sc is not None:
        print(f"{sc.name}: ok ({len(sc.corridor.gantries)} gantries, {len(sc.schedule)} scheduled updates)")
    return code


def _socket_factory(servers: list):
    def factory(service: FeedService):
        server = FeedServer(service, timer=False).start()
        servers.append(server)
        return HttpTransport(server.url)
    return factory


def run_one(sc, out_dir: Path, transport: str = "in-process") -> tuple[int, Optional[SimulationTrace]]:
    servers: list = []
    started = time.perf_counter()
    try:
        trace = run_scenario(sc, _socket_factory(servers) if transport == "socket" else None)
    except SimulationDiverged as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME, None
    finally:
        for s in servers:
            s.stop()
    elapsed = time.perf_counter() - started
    if elapsed > sc.runtime_budget:
        log.warning("%s took %.1f s, over its %.1f s budget", sc.name, elapsed, sc.runtime_budget)
    events = metrics.trace_rise_fall(trace)
    trace.summary["rise_fall"] = [
        {"kind": e.kind.value, "t_start": e.t_start, "t_end": e.t_end, "delta_v": e.delta_v,
         "duration": e.duration, "complete": e.complete, "reason": e.reason}
        for e in events
    ]
    trace.summary["rise_fall_table"] = metrics.event_table(events)
    if sc.segments:
        mm, v = trace.column("ego_mm"), trace.column("ego_v")
        try:
            ego = metrics.segment_stats(mm, v, sc.segments)
            trace.summary["segments"] = {"ego": [s.as_dict() for s in ego]}
            if sc.pilot is not None:
                pilot = metrics.segment_stats(trace.column("pilot_mm"), trace.column("pilot_v"), sc.segments)
                trace.summary["segments"]["pilot"] = [s.as_dict() for s in pilot]
                trace.summary["segments"]["variance_reduction"] = metrics.variance_reduction(ego, pilot)
        except metrics.UntraversedSegment as exc:
            trace.summary["segments"] = {"error": str(exc)}
    try:
        paths = write_outputs(trace, out_dir)
    except OSError as exc:
        print(f"error writing outputs: {exc}", file=sys.stderr)
        return EXIT_IO, trace
    print(f"{sc.name}: {len(trace)} ticks -> {paths['trace']}")
    return EXIT_OK, trace


def cmd_run(args) -> int:
    sc, code = _load_scenario(args)
    if sc is None:
        return code
    code, _ = run_one(sc, Path(args.out), args.transport)
    return code


def cmd_reproduce(args) -> int:
    """Run every bundled scenario, then the Table-1 style report for the wave comparison."""
    out = Path(args.out)
    for name in bundled_names():
        sc = load(name)
        code, _ = run_one(sc, out / name)
        if code:
            return code
    return _report([out / "table1_wave_comparison" / "trace.csv"], out / "report", TABLE1_SEGMENTS)


def cmd_serve(args) -> int:
    from vslcav.feed.http import update_from_json

    sc, code = _load_scenario(args)
    if sc is None:
        return code
    service = FeedService(sc.corridor.gantries, cadence=args.cadence or sc.feed.cadence, window=sc.feed.window)
    start = time.time()
    if args.preload:
        for u in sc.schedule:
            if u.effective_at <= 0:
                service.mirror_update(update_from_json(
                    {"gantry_id": u.gantry_id, "posted_speed": u.posted_speed}, start + u.effective_at))
    try:
        server = FeedServer(service, args.host, args.port, build_on_start=args.build_now)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_IO
    server.start()
    print(f"serving {server.url} (POST updates to /updates); Ctrl-C to stop", flush=True)
    stop = threading.Event()
    try:
        if args.duration:
            stop.wait(args.duration)
        else:
            while not stop.wait(3600):
                pass
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


class ReportInputError(ValueError):
    pass


def _stats_from_json(path: Path):
    doc = json.loads(path.read_text())
    rows = doc.get("segments")
    if not isinstance(rows, list):
        raise ReportInputError(f"{path}: expected a 'segments' list")
    ego, pilot = [], []
    for r in rows:
        seg = tuple(sorted(float(x) for x in r["mm"]))

        def mk(d):
            std = float(d.get("std", d.get("nmse")))
            mean = None if d.get("mean") is None else float(d["mean"])
            return metrics.SegmentStats(seg, mean, std, float(d.get("nmse", std)), int(d.get("n", 0)))

        ego.append(mk(r["ego"]))
        if r.get("pilot") is not None:
            pilot.append(mk(r["pilot"]))
    return ego, (pilot or None), None


def _covered(trace: SimulationTrace, segments):
    """Default segments the trace fully covers, else its whole traversed range."""
    import numpy as np

    mm = trace.column("ego_mm")
    mm = mm[~np.isnan(mm)]
    if mm.size < 2:
        raise ReportInputError("trace has no ego positions")
    lo, hi = float(mm.min()), float(mm.max())
    kept = tuple(s for s in segments if s[0] >= lo - 1e-9 and s[1] <= hi + 1e-9)
    return kept or ((round(lo, 3) + 0.001, round(hi, 3) - 0.001),)


def _stats_from_trace(path: Path, segments):
    trace = load_trace_csv(path)
    if segments is None:
        segments = _covered(trace, TABLE1_SEGMENTS)
    try:
        ego = metrics.segment_stats(trace.column("ego_mm"), trace.column("ego_v"), segments)
    except metrics.UntraversedSegment as exc:
        raise ReportInputError(f"{path}: {exc}") from exc
    pilot = None
    if "pilot_v" in trace.columns and any(v is not None for v in trace.columns["pilot_v"]):
        pilot = metrics.segment_stats(trace.column("pilot_mm"), trace.column("pilot_v"), segments)
    return ego, pilot, trace


def _write_plot_data(trace: SimulationTrace, out: Path):
    with open(out / "speed_vs_mm.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        has_pilot = "pilot_v" in trace.columns and any(v is not None for v in trace.columns["pilot_v"])
        w.writerow(["t", "mm", "ego_v", "v_gr", "v_des"] + (["pilot_mm", "pilot_v"] if has_pilot else []))
        for i in range(len(trace)):
            c = trace.columns
            row = [c["t"][i], c["ego_mm"][i], c["ego_v"][i], c["v_gr"][i], c["v_des"][i]]
            if has_pilot:
                row += [c["pilot_mm"][i], c["pilot_v"][i]]
            w.writerow(["" if x is None else x for x in row])
    with open(out / "controller_state.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "v", "v_des", "s", "v_l", "u_nom", "u_safe", "u_cmd", "safety_active"])
        c = trace.columns
        for i in range(len(trace)):
            active = c["active"][i]
            flag = 1 if (getattr(active, "value", active) == "SafetyFilter") else 0
            row = [c["t"][i], c["ego_v"][i], c["v_des"][i], c["s"][i], c["v_l"][i],
                   c["u_nom"][i], c["u_safe"][i], c["u_cmd"][i], flag]
            w.writerow(["" if x is None else x for x in row])
    (out / "plot_figures.py").write_text(PLOT_STUB)


def _report(inputs: list[Path], out: Path, segments) -> int:
    try:
        loaded = []
        for p in inputs:
            if p.suffix == ".json":
                loaded.append(_stats_from_json(p))
            else:
                loaded.append(_stats_from_trace(p, segments))
                segments = tuple(st.segment for st in loaded[-1][0])
    except ReportInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError, KeyError) as exc:
        print(f"error reading inputs: {exc}", file=sys.stderr)
        return EXIT_IO

    ego, pilot, trace = loaded[0]
    label = "pilot"
    if len(loaded) > 1:
        pilot = loaded[1][0]
        label = "second input"
    if pilot is not None and [s.segment for s in pilot] != [s.segment for s in ego]:
        print("error: inputs cover different segments", file=sys.stderr)
        return EXIT_IO

    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "comparison": label if pilot is not None else None,
        "segments": [
            {"mm": list(e.segment), "ego": e.as_dict(), "pilot": pilot[i].as_dict() if pilot else None}
            for i, e in enumerate(ego)
        ],
        "variance_reduction": metrics.variance_reduction(ego, pilot) if pilot else None,
    }
    text = [metrics.format_table1(pilot, ego)]
    if pilot:
        text.append("")
        text.append("mm            | std reduction | std/mean reduction | mean diff")
        for r in doc["variance_reduction"]:
            def f(x):
                return "undefined" if x is None else f"{x:.1f}%"
            text.append(f"{r['segment'][0]:g}-{r['segment'][1]:g}".ljust(14)
                        + f"| {f(r['std_reduction_pct']):<13} | {f(r['cv_reduction_pct']):<18} | {f(r['mean_diff_pct'])}")
    if trace is not None:
        events = metrics.trace_rise_fall(trace)
        doc["rise_fall"] = metrics.event_table(events)
        text += ["", metrics.format_event_table(events)]
        _write_plot_data(trace, out)
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    (out / "report.txt").write_text("\n".join(text) + "\n")
    print("\n".join(text))
    return EXIT_OK


def _parse_segments(text: Optional[str]):
    if not text:
        return None
    segs = []
    for part in text.split(","):
        lo, hi = part.split(":")
        segs.append(tuple(sorted((float(lo), float(hi)))))
    return tuple(segs)


def cmd_report(args) -> int:
    try:
        segments = _parse_segments(args.segments)
    except ValueError:
        print(f"error: bad --segments {args.segments!r}", file=sys.stderr)
        return EXIT_USAGE
    return _report([Path(p) for p in args.inputs], Path(args.out), segments)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vslcav", description="Speed-limit-following CAV simulator and VSL feed.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--scenario", required=True, help="scenario YAML path or bundled name (see `list`)")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                        help="dotted override, e.g. ego.controller.k_p=0.6 or feed.fault.latency=0.2")

    sp = sub.add_parser("list", help="list bundled scenarios")
    sp.set_defaults(func=cmd_list)

    sp = sub.add_parser("validate", help="validate a scenario")
    scenario_args(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("run", help="run a scenario; writes trace.csv, summary.json, events.json")
    scenario_args(sp)
    sp.add_argument("--out", default="out", help="output directory (default: out)")
    sp.add_argument("--transport", choices=["in-process", "socket"], default="in-process",
                    help="feed transport; socket runs HTTP on localhost (default: in-process)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("serve", help="run the VSL feed service over HTTP (wall clock)")
    scenario_args(sp)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8024, help="listen port (default: 8024)")
    sp.add_argument("--cadence", type=float, default=None, help="snapshot cadence in s (default: scenario, 15)")
    sp.add_argument("--preload", action="store_true", help="mirror the scenario's pre-start postings")
    sp.add_argument("--build-now", action="store_true", help="build a snapshot immediately on start")
    sp.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("report", help="Table-1 style comparison, rise/fall table and plot data")
    sp.add_argument("inputs", nargs="+", help="trace.csv (ego [+pilot]) or segment-stats .json; a second input is the comparison")
    sp.add_argument("--segments", default=None, help="lo:hi,... mile-marker segments (default: those of 59.5:61.5,61.5:63.5,63.5:65.5 "
                         "the first trace covers, else its whole range)")
    sp.add_argument("--out", default="report", help="output directory (default: report)")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("reproduce", help="run all bundled scenarios and the comparison report")
    sp.add_argument("--out", default="out", help="output directory (default: out)")
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
