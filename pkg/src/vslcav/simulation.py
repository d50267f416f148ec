"""Fixed-step closed-loop run of infrastructure, feed, gps2vsl, setpoint chain, controllers and vehicles.

Everything runs on one simulated clock inside one thread, so a scenario plus
seed fully determines the trace bytes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from vslcav.controllers import Active, control, safe_margin
from vslcav.corridor import METERS_PER_MILE
from vslcav.feed.client import FeedClient, InProcessTransport, Transport
from vslcav.feed.service import FeedService
from vslcav.gps2vsl import Gps2VslState, Mode, lookup_posted_speed, step_gantry_id, vsl_valid
from vslcav.scenario import Scenario
from vslcav.setpoint import MuxInputs, RampState, mux, ramp
from vslcav.vehicles import (
    VehicleState,
    perceive,
    radar_measure,
    step_dynamics,
    step_lead,
    step_pilot,
)

log = logging.getLogger(__name__)

COLUMNS = (
    "t", "ego_x", "ego_mm", "ego_v", "ego_a",
    "gps_mode", "g_r", "v_gr", "vsl_valid", "staleness",
    "engaged", "user_set_point", "mux_source", "mux_selected", "v_des",
    "radar_valid", "s", "v_l", "h", "u_nom", "u_safe", "u_cmd", "active",
    "lead_x", "lead_v", "pilot_x", "pilot_mm", "pilot_v", "pilot_s",
    "lookups", "feed_seq",
)

CATEGORICAL = {"gps_mode", "g_r", "mux_source", "active", "engaged", "vsl_valid", "radar_valid"}


class SimulationDiverged(RuntimeError):
    pass


@dataclass
class SimulationTrace:
    """Column-major trace plus run summary and discrete events."""

    columns: dict[str, list] = field(default_factory=lambda: {c: [] for c in COLUMNS})
    events: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.columns["t"])

    def append(self, row: dict) -> None:
        for c in COLUMNS:
            self.columns[c].append(row.get(c))

    def column(self, name: str) -> np.ndarray:
        values = self.columns[name]
        if name in CATEGORICAL:
            return np.array(["" if v is None else _fmt(v) for v in values], dtype=object)
        return np.array([np.nan if v is None else float(v) for v in values])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        cols = [self.columns[c] for c in COLUMNS]
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "value"):
        return str(v.value)
    return str(v)


def load_trace_csv(path: str | Path) -> SimulationTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        missing = [c for c in ("t", "ego_mm", "ego_v") if c not in header]
        if missing:
            raise ValueError(f"{path}: not a trace file (missing {', '.join(missing)})")
        trace = SimulationTrace(columns={c: [] for c in header})
        for row in reader:
            for c, v in zip(header, row):
                if c in CATEGORICAL:
                    trace.columns[c].append(v if v != "" else None)
                else:
                    trace.columns[c].append(float(v) if v != "" else None)
    return trace


def _mm(x: float, origin_mm: float) -> float:
    return origin_mm - x / METERS_PER_MILE


def run_scenario(
    scenario: Scenario,
    transport_factory: Optional[Callable[[FeedService], Transport]] = None,
) -> SimulationTrace:
    """Simulate ``scenario``.

    ``transport_factory`` wraps the simulated feed service in another
    transport (e.g. HTTP over a local socket); the default calls it in-process.
    """
    sc = scenario
    dt = sc.dt
    n_ticks = int(round(sc.duration / dt))
    geom = sc.corridor
    origin = sc.ego.start_mm
    rng_gps = random.Random(sc.seed * 7919 + 1)
    rng_radar = random.Random(sc.seed * 7919 + 2)

    service = FeedService(geom.gantries, cadence=sc.feed.cadence, window=sc.feed.window)
    transport = transport_factory(service) if transport_factory else InProcessTransport(service)
    client = FeedClient(transport, sc.feed.fault, seed=sc.seed)
    pending = sorted(sc.schedule, key=lambda u: u.effective_at)
    next_update = 0

    ego = VehicleState(0.0, sc.ego.speed)
    lead: Optional[VehicleState] = None
    pilot = None
    if sc.pilot is not None:
        pilot = VehicleState((origin - sc.pilot.start_mm) * METERS_PER_MILE, sc.pilot.speed)

    params = sc.ego.controller
    gps = Gps2VslState()
    ramp_state = RampState(sc.ego.speed, sc.ego.up_rate, sc.ego.down_rate)
    gps_every = max(1, int(round(1.0 / (sc.ego.gps_rate * dt))))
    fix_x = 0.0
    fix_odo = 0.0

    trace = SimulationTrace()
    min_spacing = math.inf
    min_h = math.inf
    min_pilot_spacing = math.inf
    transitions = []
    prev_gr = None
    prev_active = None
    prev_engaged = None

    for k in range(n_ticks + 1):
        t = round(k * dt, 9)

        # infrastructure
        while next_update < len(pending) and pending[next_update].effective_at <= t + 1e-9:
            service.mirror_update(pending[next_update])
            next_update += 1
        if service.tick(t) is not None:
            trace.events.append({"t": t, "event": "snapshot_built"})
        for result in client.poll(t):
            if not hasattr(result, "rows"):
                trace.events.append({"t": t, "event": f"fetch_{result.kind}"})

        # localization: GPS at its own rate, dead reckoning in between
        if k % gps_every == 0:
            fix_x = ego.position + (rng_gps.gauss(0.0, sc.ego.gps_noise) if sc.ego.gps_noise else 0.0)
            fix_odo = ego.position
        est_mm = _mm(fix_x + (ego.position - fix_odo), origin)
        fix = geom.fix_at(est_mm, ego.v, t)

        gps, g_r = step_gantry_id(gps, fix, geom, sc.feed.threshold)
        if g_r != prev_gr:
            transitions.append({"t": t, "from": prev_gr, "to": g_r, "mm": est_mm})
            trace.events.append({"t": t, "event": "gantry", "from": prev_gr, "to": g_r})
            prev_gr = g_r
        if gps.mode is Mode.ACTIVE:
            gps, _ = lookup_posted_speed(gps, client, t, sc.feed.lookup_period)
        valid = vsl_valid(gps, t, sc.feed.staleness_limit)

        engaged = sc.ego.engaged_at(t)
        selected, source = mux(MuxInputs(engaged, valid, sc.ego.user_set_point, gps.v_gr, ego.v))
        if engaged and prev_engaged is False:
            # bumpless transfer: restart the ramp from the speed measured now,
            # not the one it tracked a tick ago
            ramp_state = replace(ramp_state, current_output=ego.v)
        prev_engaged = engaged
        ramp_state, v_des = ramp(ramp_state, selected, dt)

        if lead is None and sc.lead is not None and t + 1e-9 >= sc.lead.appears_at:
            lead = VehicleState(ego.position + sc.ego.radar.vehicle_length + sc.lead.gap,
                                sc.lead.trajectory.speed(t), sc.lead.trajectory.acceleration(t))
        reading = radar_measure(ego, lead, sc.ego.radar, rng_radar)
        cmd = control(ego.v, v_des, reading, params)
        if engaged:
            u = cmd.u_cmd
        else:
            u = min(max(sc.ego.manual.acceleration(ego.v, perceive(ego, lead, sc.ego.radar.vehicle_length)),
                        params.u_min), params.u_max)

        spacing = None
        h = None
        if lead is not None:
            spacing = lead.position - ego.position - sc.ego.radar.vehicle_length
            h = safe_margin(spacing, ego.v, params)
            min_spacing = min(min_spacing, spacing)
            min_h = min(min_h, h)
        pilot_s = None
        if pilot is not None and lead is not None:
            pilot_s = lead.position - pilot.position - sc.ego.radar.vehicle_length
            min_pilot_spacing = min(min_pilot_spacing, pilot_s)
        if cmd.active is not prev_active:
            trace.events.append({"t": t, "event": "controller", "active": cmd.active.value})
            prev_active = cmd.active

        trace.append({
            "t": t, "ego_x": ego.position, "ego_mm": _mm(ego.position, origin), "ego_v": ego.v, "ego_a": ego.a,
            "gps_mode": gps.mode, "g_r": g_r,
            "v_gr": gps.v_gr if gps.mode is Mode.ACTIVE else None,
            "vsl_valid": valid,
            "staleness": gps.staleness(t) if gps.snapshot_generated_at is not None else None,
            "engaged": engaged, "user_set_point": sc.ego.user_set_point,
            "mux_source": source, "mux_selected": selected, "v_des": v_des,
            "radar_valid": reading.valid,
            "s": reading.s if reading.valid else None, "v_l": reading.v_l if reading.valid else None,
            "h": h, "u_nom": cmd.u_nom, "u_safe": cmd.u_safe, "u_cmd": u, "active": cmd.active,
            "lead_x": lead.position if lead else None, "lead_v": lead.v if lead else None,
            "pilot_x": pilot.position if pilot else None,
            "pilot_mm": _mm(pilot.position, origin) if pilot else None,
            "pilot_v": pilot.v if pilot else None, "pilot_s": pilot_s,
            "lookups": gps.lookups, "feed_seq": client.seq,
        })
        if k == n_ticks:
            break

        ego = step_dynamics(ego, u, dt, sc.ego.lag)
        if not (math.isfinite(ego.v) and math.isfinite(ego.position)):
            raise SimulationDiverged(f"ego state diverged at t={t}")
        if pilot is not None:
            pilot = step_pilot(pilot, perceive(pilot, lead, sc.ego.radar.vehicle_length), sc.pilot.model, dt)
        if lead is not None:
            lead = step_lead(lead, sc.lead.trajectory, t, dt)

    trace.summary = {
        "scenario": sc.name,
        "seed": sc.seed,
        "dt": dt,
        "duration": sc.duration,
        "ticks": len(trace),
        "final_ego_mm": _mm(ego.position, origin),
        "min_spacing": None if math.isinf(min_spacing) else min_spacing,
        "min_h": None if math.isinf(min_h) else min_h,
        "min_pilot_spacing": None if math.isinf(min_pilot_spacing) else min_pilot_spacing,
        "collision": (min_spacing <= 0) or (min_pilot_spacing <= 0),
        "gantry_transitions": transitions,
        "lookups": gps.lookups,
        "feed": {
            "snapshots_built": service.build_count,
            "requests": client.requests,
            "received": client.seq,
            "failures": dict(sorted(client.failures.items())),
        },
        "safety_filter_ticks": sum(1 for a in trace.columns["active"] if a is Active.SAFETY_FILTER),
    }
    return trace


def write_outputs(trace: SimulationTrace, out_dir: str | Path) -> dict[str, Path]:
    """Write trace.csv, summary.json and events.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out / "trace.csv", "summary": out / "summary.json", "events": out / "events.json"}
    paths["trace"].write_text(trace.to_csv())
    paths["summary"].write_text(json.dumps(trace.summary, indent=2, sort_keys=True) + "\n")
    paths["events"].write_text(json.dumps(trace.events, indent=1) + "\n")
    return paths
