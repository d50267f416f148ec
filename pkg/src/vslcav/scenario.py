"""Declarative scenario files (YAML): loading, overrides and located validation.

See ``docs/scenario_schema.md`` for the full schema. Every problem found is
reported together with its dotted path and source line.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from vslcav.controllers import ControllerParams
from vslcav.corridor import (
    ConfigurationError,
    CorridorGeometry,
    Gantry,
    build_corridor,
    mph_to_ms,
)
from vslcav.feed.client import FaultProfile
from vslcav.feed.store import GantryUpdate
from vslcav.vehicles import LeadTrajectory, PilotDriverModel, RadarModel, Segment

BUNDLED_PACKAGE = "vslcav.scenarios"


@dataclass(frozen=True)
class Issue:
    path: str
    message: str
    line: Optional[int] = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path or '<root>'}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, issues: list[Issue], source: str = "<scenario>"):
        self.issues = issues
        self.source = source
        super().__init__("\n".join(f"{source}: {i}" for i in issues))


# ---------------------------------------------------------------------------
# configuration objects


@dataclass(frozen=True)
class FeedConfig:
    cadence: float = 15.0
    window: float = 86400.0
    staleness_limit: float = 60.0
    lookup_period: float = 5.0
    threshold: float = 0.15
    fault: FaultProfile = FaultProfile()


@dataclass(frozen=True)
class EgoConfig:
    start_mm: float
    speed: float
    user_set_point: float = mph_to_ms(70.0)
    engagement: tuple[tuple[float, bool], ...] = ((0.0, True),)
    gps_rate: float = 1.0
    gps_noise: float = 0.0
    lag: float = 0.4
    controller: ControllerParams = ControllerParams()
    up_rate: float = 1.5
    down_rate: float = 2.0
    radar: RadarModel = RadarModel()
    manual: PilotDriverModel = PilotDriverModel()

    def engaged_at(self, t: float) -> bool:
        state = True
        for when, engaged in self.engagement:
            if t + 1e-9 >= when:
                state = engaged
        return state


@dataclass(frozen=True)
class LeadConfig:
    trajectory: LeadTrajectory
    gap: float
    appears_at: float = 0.0


@dataclass(frozen=True)
class PilotConfig:
    start_mm: float
    speed: float
    model: PilotDriverModel = PilotDriverModel()


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    dt: float
    seed: int
    corridor: CorridorGeometry
    feed: FeedConfig
    schedule: tuple[GantryUpdate, ...]
    ego: EgoConfig
    lead: Optional[LeadConfig] = None
    pilot: Optional[PilotConfig] = None
    segments: tuple[tuple[float, float], ...] = ()
    runtime_budget: float = 60.0
    description: str = ""
    raw: dict = field(default_factory=dict, compare=False, repr=False)


# ---------------------------------------------------------------------------
# line tracking


def _line_index(text: str) -> dict[tuple, int]:
    """Map each key/index path in the YAML document to its 1-based line."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[tuple, int] = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
                lines[path + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return lines


def _dotted(path: tuple) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Checker:
    def __init__(self, lines: dict[tuple, int]):
        self.lines = lines
        self.issues: list[Issue] = []

    def fail(self, path: tuple, message: str):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        self.issues.append(Issue(_dotted(path), message, line))

    def mapping(self, doc, path, required=True) -> dict:
        if doc is None:
            if required:
                self.fail(path, "required section missing")
            return {}
        if not isinstance(doc, dict):
            self.fail(path, "expected a mapping")
            return {}
        return doc

    def number(self, d: dict, key: str, path: tuple, default=None, *, required=False,
               positive=False, nonneg=False, lo=None, hi=None) -> Optional[float]:
        p = path + (key,)
        if key not in d or d[key] is None:
            if required:
                self.fail(p, "required field missing")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(p, f"expected a number, got {v!r}")
            return default
        v = float(v)
        if positive and not v > 0:
            self.fail(p, "must be positive")
        if nonneg and v < 0:
            self.fail(p, "must be non-negative")
        if lo is not None and v < lo or hi is not None and v > hi:
            self.fail(p, f"must lie in [{lo}, {hi}]")
        return v

    def unknown(self, d: dict, allowed: set, path: tuple):
        for k in d:
            if k not in allowed:
                self.fail(path + (k,), "unknown field")


# ---------------------------------------------------------------------------


def apply_overrides(doc: dict, overrides: dict[str, Any]) -> dict:
    """Return a copy of ``doc`` with dotted-key overrides applied (e.g. ``ego.controller.k_p``)."""
    doc = copy.deepcopy(doc)
    for key, value in overrides.items():
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    return doc


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ValueError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def _controller(c: _Checker, d: dict, path: tuple) -> ControllerParams:
    c.unknown(d, {"k_p", "k_cbf", "t_min", "s_min", "u_min", "u_max"}, path)
    base = ControllerParams()
    vals = {k: c.number(d, k, path, getattr(base, k)) for k in ("k_p", "k_cbf", "t_min", "s_min", "u_min", "u_max")}
    try:
        return ControllerParams(**vals)
    except ValueError as exc:
        c.fail(path, str(exc))
        return base


def _driver(c: _Checker, d: dict, path: tuple, base: PilotDriverModel) -> PilotDriverModel:
    names = ("desired_speed", "time_headway", "min_gap", "max_accel", "comfortable_decel", "exponent", "response_lag")
    c.unknown(d, set(names), path)
    vals = {}
    for k in names:
        vals[k] = c.number(d, k, path, getattr(base, k), nonneg=(k == "response_lag"), positive=(k != "response_lag"))
    return PilotDriverModel(**vals)


def _segments(c: _Checker, items, path: tuple) -> list[Segment]:
    out = []
    if not isinstance(items, list):
        c.fail(path, "expected a list of segments")
        return out
    for i, s in enumerate(items):
        p = path + (i,)
        s = c.mapping(s, p)
        kind = s.get("type")
        if kind == "constant":
            c.unknown(s, {"type", "speed", "duration"}, p)
            out.append(Segment("constant", c.number(s, "duration", p, 1.0, required=True, positive=True),
                               speed=c.number(s, "speed", p, 0.0, required=True, nonneg=True)))
        elif kind == "ramp":
            c.unknown(s, {"type", "to", "rate", "duration"}, p)
            to = c.number(s, "to", p, 0.0, required=True, nonneg=True)
            rate = c.number(s, "rate", p, 1.0, required=True, positive=True)
            out.append(Segment("ramp", c.number(s, "duration", p, 1.0, required=True, positive=True), speed=to, rate=rate))
        elif kind == "wave":
            c.unknown(s, {"type", "mean", "amplitude", "period", "duration"}, p)
            out.append(Segment(
                "wave", c.number(s, "duration", p, 1.0, required=True, positive=True),
                mean=c.number(s, "mean", p, 0.0, required=True, nonneg=True),
                amplitude=c.number(s, "amplitude", p, 0.0, required=True, nonneg=True),
                period=c.number(s, "period", p, 1.0, required=True, positive=True),
            ))
        else:
            c.fail(p + ("type",), f"segment type must be constant, ramp or wave, got {kind!r}")
    return out


def validate(doc: Any, lines: Optional[dict] = None, source: str = "<scenario>") -> Scenario:
    """Turn a parsed document into a :class:`Scenario` or raise :class:`ScenarioError`."""
    c = _Checker(lines or {})
    root = c.mapping(doc, ())
    c.unknown(root, {"name", "description", "duration", "dt", "seed", "corridor", "feed",
                     "vsl_schedule", "ego", "lead", "pilot", "metrics"}, ())
    name = root.get("name")
    if not isinstance(name, str) or not name:
        c.fail(("name",), "required string field missing")
        name = "unnamed"
    duration = c.number(root, "duration", (), 60.0, required=True, positive=True)
    dt = c.number(root, "dt", (), 0.05, positive=True)
    seed = root.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        c.fail(("seed",), "seed must be an integer")
        seed = 0

    # corridor
    cp = ("corridor",)
    cd = c.mapping(root.get("corridor"), cp)
    c.unknown(cd, {"mm_start", "mm_end", "heading_tolerance", "half_width", "gantries", "polygon"}, cp)
    mm_start = c.number(cd, "mm_start", cp, None, required=True)
    mm_end = c.number(cd, "mm_end", cp, None, required=True)
    tol = c.number(cd, "heading_tolerance", cp, 45.0, positive=True, hi=180.0)
    half_width = c.number(cd, "half_width", cp, 150.0, positive=True)
    gantries: list[Gantry] = []
    graw = cd.get("gantries")
    if "gantries" not in cd or graw is None:
        c.fail(cp + ("gantries",), "required field missing")
    elif not isinstance(graw, list) or not graw:
        c.fail(cp + ("gantries",), "expected a non-empty list")
    else:
        for i, g in enumerate(graw):
            gp = cp + ("gantries", i)
            g = c.mapping(g, gp)
            c.unknown(g, {"id", "mile_marker", "default_limit"}, gp)
            mm = c.number(g, "mile_marker", gp, None, required=True)
            limit = c.number(g, "default_limit", gp, 70.0, lo=30.0, hi=70.0)
            gid = g.get("id", f"G{mm}" if mm is not None else None)
            if mm is not None and limit is not None and 30.0 <= limit <= 70.0:
                gantries.append(Gantry(str(gid), mm, limit))
    polygon = cd.get("polygon")
    if polygon is not None:
        if not (isinstance(polygon, list) and all(isinstance(v, list) and len(v) == 2 for v in polygon)):
            c.fail(cp + ("polygon",), "expected a list of [lat, lon] pairs")
            polygon = None
    corridor = None
    if mm_start is not None and mm_end is not None and gantries and not c.issues:
        if not mm_end < mm_start:
            c.fail(cp + ("mm_end",), "mm_end must be below mm_start (travel toward decreasing mile markers)")
        for i, g in enumerate(gantries):
            if not mm_end < g.mile_marker < mm_start:
                c.fail(cp + ("gantries", i, "mile_marker"), "gantry outside [mm_end, mm_start]")
        if not c.issues:
            try:
                corridor = build_corridor(gantries, mm_start, mm_end, tol, polygon=polygon, half_width_m=half_width)
            except ConfigurationError as exc:
                c.fail(cp, str(exc))

    # feed
    fp = ("feed",)
    fd = c.mapping(root.get("feed"), fp, required=False)
    c.unknown(fd, {"cadence", "window", "staleness_limit", "lookup_period", "threshold", "fault"}, fp)
    fault = FaultProfile()
    fdd = c.mapping(fd.get("fault"), fp + ("fault",), required=False)
    c.unknown(fdd, {"latency", "jitter", "loss", "corrupt", "timeout", "outages"}, fp + ("fault",))
    outages = fdd.get("outages", [])
    if not isinstance(outages, list) or not all(
        isinstance(o, list) and len(o) == 2 and all(isinstance(x, (int, float)) for x in o) for o in outages
    ):
        c.fail(fp + ("fault", "outages"), "expected a list of [start, end] pairs")
        outages = []
    try:
        fault = FaultProfile(
            latency=c.number(fdd, "latency", fp + ("fault",), 0.0, nonneg=True),
            jitter=c.number(fdd, "jitter", fp + ("fault",), 0.0, nonneg=True),
            loss=c.number(fdd, "loss", fp + ("fault",), 0.0, lo=0.0, hi=1.0),
            corrupt=c.number(fdd, "corrupt", fp + ("fault",), 0.0, lo=0.0, hi=1.0),
            timeout=c.number(fdd, "timeout", fp + ("fault",), 2.0, positive=True),
            outages=tuple((float(a), float(b)) for a, b in outages),
        )
    except ValueError as exc:
        c.fail(fp + ("fault",), str(exc))
    feed = FeedConfig(
        cadence=c.number(fd, "cadence", fp, 15.0, positive=True),
        window=c.number(fd, "window", fp, 86400.0, positive=True),
        staleness_limit=c.number(fd, "staleness_limit", fp, 60.0, positive=True),
        lookup_period=c.number(fd, "lookup_period", fp, 5.0, positive=True),
        threshold=c.number(fd, "threshold", fp, 0.15, positive=True),
        fault=fault,
    )

    # schedule
    sp = ("vsl_schedule",)
    schedule: list[GantryUpdate] = []
    sraw = root.get("vsl_schedule") or []
    if not isinstance(sraw, list):
        c.fail(sp, "expected a list")
        sraw = []
    known = {g.id: g for g in gantries}
    last_time: dict[str, float] = {}
    for i, u in enumerate(sraw):
        up = sp + (i,)
        u = c.mapping(u, up)
        c.unknown(u, {"gantry", "time", "posted_speed", "triggered"}, up)
        gid = str(u.get("gantry"))
        if gid not in known:
            c.fail(up + ("gantry",), f"unknown gantry {u.get('gantry')!r}")
            continue
        t = c.number(u, "time", up, None, required=True)
        speed = c.number(u, "posted_speed", up, None, required=True, lo=30.0, hi=70.0)
        if t is None or speed is None or not 30.0 <= speed <= 70.0:
            continue
        if speed > known[gid].default_limit:
            c.fail(up + ("posted_speed",), f"exceeds gantry default {known[gid].default_limit} mph")
            continue
        trig = u.get("triggered")
        if trig is not None and trig != (speed < known[gid].default_limit):
            c.fail(up + ("triggered",), "inconsistent with posted speed vs default")
        if gid in last_time and t < last_time[gid]:
            c.fail(up + ("time",), f"out of order for gantry {gid} (previous t={last_time[gid]})")
            continue
        last_time[gid] = t
        schedule.append(GantryUpdate(gid, speed, t, trig))

    # ego
    ep = ("ego",)
    ed = c.mapping(root.get("ego"), ep)
    c.unknown(ed, {"start_mm", "speed", "user_set_point", "engagement", "gps_rate", "gps_noise", "lag",
                   "controller", "ramp", "radar", "manual"}, ep)
    engagement = [(0.0, True)]
    eng = ed.get("engagement", [])
    if not isinstance(eng, list):
        c.fail(ep + ("engagement",), "expected a list of {time, engaged}")
        eng = []
    for i, e in enumerate(eng):
        e = c.mapping(e, ep + ("engagement", i))
        t = c.number(e, "time", ep + ("engagement", i), None, required=True, nonneg=True)
        flag = e.get("engaged")
        if not isinstance(flag, bool):
            c.fail(ep + ("engagement", i, "engaged"), "expected true/false")
            continue
        if t is not None:
            engagement.append((t, flag))
    ramp_d = c.mapping(ed.get("ramp"), ep + ("ramp",), required=False)
    c.unknown(ramp_d, {"up_rate", "down_rate"}, ep + ("ramp",))
    radar_d = c.mapping(ed.get("radar"), ep + ("radar",), required=False)
    c.unknown(radar_d, {"max_range", "sigma_s", "sigma_v", "vehicle_length"}, ep + ("radar",))
    radar = RadarModel(
        max_range=c.number(radar_d, "max_range", ep + ("radar",), 120.0, positive=True),
        vehicle_length=c.number(radar_d, "vehicle_length", ep + ("radar",), 4.6, positive=True),
        sigma_s=c.number(radar_d, "sigma_s", ep + ("radar",), 0.0, nonneg=True),
        sigma_v=c.number(radar_d, "sigma_v", ep + ("radar",), 0.0, nonneg=True),
    )
    user = c.number(ed, "user_set_point", ep, mph_to_ms(70.0), nonneg=True)
    manual = _driver(c, c.mapping(ed.get("manual"), ep + ("manual",), required=False), ep + ("manual",),
                     PilotDriverModel(desired_speed=user or mph_to_ms(70.0)))
    ego = EgoConfig(
        start_mm=c.number(ed, "start_mm", ep, 0.0, required=True),
        speed=c.number(ed, "speed", ep, 0.0, required=True, nonneg=True),
        user_set_point=user,
        engagement=tuple(sorted(engagement, key=lambda e: e[0])),
        gps_rate=c.number(ed, "gps_rate", ep, 1.0, positive=True),
        gps_noise=c.number(ed, "gps_noise", ep, 0.0, nonneg=True),
        lag=c.number(ed, "lag", ep, 0.4, nonneg=True),
        controller=_controller(c, c.mapping(ed.get("controller"), ep + ("controller",), required=False), ep + ("controller",)),
        up_rate=c.number(ramp_d, "up_rate", ep + ("ramp",), 1.5, positive=True),
        down_rate=c.number(ramp_d, "down_rate", ep + ("ramp",), 2.0, positive=True),
        radar=radar,
        manual=manual,
    )

    # lead
    lead = None
    if root.get("lead") is not None:
        lp = ("lead",)
        ld = c.mapping(root.get("lead"), lp)
        c.unknown(ld, {"gap", "appears_at", "initial_speed", "segments", "max_decel"}, lp)
        traj = LeadTrajectory(
            c.number(ld, "initial_speed", lp, 0.0, required=True, nonneg=True),
            _segments(c, ld.get("segments", []), lp + ("segments",)),
        )
        max_decel = c.number(ld, "max_decel", lp, 3.0, positive=True)
        if traj.max_deceleration() > max_decel + 1e-9:
            c.fail(lp + ("segments",), f"lead deceleration {traj.max_deceleration():.3f} exceeds max_decel {max_decel}")
        for i in traj.discontinuities():
            c.fail(lp + ("segments", i), "segment start speed does not continue the previous segment")
        if traj.min_speed() < -1e-9:
            c.fail(lp + ("segments",), "lead speed goes negative")
        lead = LeadConfig(
            traj,
            gap=c.number(ld, "gap", lp, 50.0, required=True, positive=True),
            appears_at=c.number(ld, "appears_at", lp, 0.0, nonneg=True),
        )

    pilot = None
    pd = root.get("pilot")
    if pd is not None:
        pp = ("pilot",)
        pd = c.mapping(pd, pp)
        c.unknown(pd, {"start_mm", "speed", "model"}, pp)
        pilot = PilotConfig(
            start_mm=c.number(pd, "start_mm", pp, ego.start_mm),
            speed=c.number(pd, "speed", pp, ego.speed, nonneg=True),
            model=_driver(c, c.mapping(pd.get("model"), pp + ("model",), required=False), pp + ("model",), PilotDriverModel()),
        )

    mp = ("metrics",)
    md = c.mapping(root.get("metrics"), mp, required=False)
    c.unknown(md, {"segments", "runtime_budget"}, mp)
    segments = []
    for i, seg in enumerate(md.get("segments", []) or []):
        if not (isinstance(seg, list) and len(seg) == 2 and all(isinstance(x, (int, float)) for x in seg)):
            c.fail(mp + ("segments", i), "expected [mm_low, mm_high]")
            continue
        lo, hi = sorted(float(x) for x in seg)
        segments.append((lo, hi))
    budget = c.number(md, "runtime_budget", mp, 60.0, positive=True)

    if c.issues:
        raise ScenarioError(c.issues, source)
    return Scenario(
        name=name, duration=duration, dt=dt, seed=seed, corridor=corridor, feed=feed,
        schedule=tuple(schedule), ego=ego, lead=lead, pilot=pilot, segments=tuple(segments),
        runtime_budget=budget, description=str(root.get("description", "")), raw=root,
    )


def loads(text: str, overrides: Optional[dict] = None, source: str = "<scenario>") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError([Issue("", f"YAML syntax error: {exc}", mark.line + 1 if mark else None)], source) from exc
    if overrides:
        if not isinstance(doc, dict):
            doc = {}
        doc = apply_overrides(doc, overrides)
    return validate(doc, _line_index(text), source)


def bundled_names() -> list[str]:
    files = resources.files(BUNDLED_PACKAGE).iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".yaml"))


def bundled_text(name: str) -> str:
    return resources.files(BUNDLED_PACKAGE).joinpath(f"{name}.yaml").read_text()


def load(path_or_name: str | Path, overrides: Optional[dict] = None) -> Scenario:
    """Load a scenario file, or a bundled scenario by name (e.g. ``fig7_three_cases``)."""
    p = Path(path_or_name)
    if p.is_file():
        return loads(p.read_text(), overrides, str(p))
    if str(path_or_name) in bundled_names():
        return loads(bundled_text(str(path_or_name)), overrides, f"<bundled:{path_or_name}>")
    raise FileNotFoundError(f"no scenario file or bundled scenario named {path_or_name!r}")
