"""Evaluation statistics: setpoint rise/fall events and per-segment speed variability."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from vslcav.corridor import METERS_PER_MILE


class Kind(enum.Enum):
    RISE = "Rise"
    FALL = "Fall"


@dataclass(frozen=True)
class RiseFallEvent:
    kind: Kind
    t_start: float
    t_end: Optional[float]
    delta_v: float
    v_target: float
    complete: bool
    reason: str = ""

    @property
    def duration(self) -> Optional[float]:
        if self.t_end is None:
            return None
        return self.t_end - self.t_start


class UntraversedSegment(ValueError):
    pass


def extract_rise_fall(
    t: Sequence[float],
    v: Sequence[float],
    v_gr: Sequence[float],
    safety_active: Optional[Sequence[bool]] = None,
    min_step: float = 0.5,
    band: float = 0.25,
    hold: float = 1.0,
) -> list[RiseFallEvent]:
    """One event per change in the ingested posted speed of at least ``min_step``.

    ``v_gr`` is NaN where no posted speed is held. An event ends at the first
    time the speed enters ``band`` around the new v_gr and stays there for
    ``hold`` seconds. It is incomplete (no duration) if the safety filter was
    in control during it, or if it is cut short by the next step, loss of the
    posted speed, or the end of the trace.
    """
    t = np.asarray(t, float)
    v = np.asarray(v, float)
    g = np.asarray(v_gr, float)
    sa = np.zeros(len(t), bool) if safety_active is None else np.asarray(safety_active, bool)
    events: list[RiseFallEvent] = []

    starts = []
    ref = None
    for i in range(len(t)):
        if math.isnan(g[i]):
            continue
        if ref is None:
            ref = g[i]
        elif abs(g[i] - ref) >= min_step:
            starts.append((i, g[i] - ref))
            ref = g[i]
    bounds = [s[0] for s in starts] + [len(t)]
    for (i0, dv), i_next in zip(starts, bounds[1:]):
        target = g[i0]
        kind = Kind.RISE if dv > 0 else Kind.FALL
        end = None
        reason = ""
        inside_since = None
        for i in range(i0, i_next):
            if math.isnan(g[i]):
                reason = "posted speed lost"
                break
            if abs(v[i] - g[i]) <= band:
                if inside_since is None:
                    inside_since = i
                if t[i] - t[inside_since] >= hold - 1e-9:
                    end = inside_since
                    break
            else:
                inside_since = None
        if end is None and not reason:
            reason = "cut short by next step" if i_next < len(t) else "trace ended"
        stop = end if end is not None else i_next
        if sa[i0:stop + 1].any():
            reason = "safety filter active"
        complete = end is not None and not reason
        events.append(RiseFallEvent(kind, float(t[i0]), float(t[end]) if end is not None else None,
                                    float(dv), float(target), complete, reason))
    return events


def trace_rise_fall(trace, **kw) -> list[RiseFallEvent]:
    active = trace.column("active") == "SafetyFilter"
    return extract_rise_fall(trace.column("t"), trace.column("ego_v"), trace.column("v_gr"), active, **kw)


def event_table(events: Sequence[RiseFallEvent]) -> dict:
    """Counts and min/max/mean durations of complete events, per kind."""
    out = {}
    for kind in Kind:
        evs = [e for e in events if e.kind is kind]
        done = [e.duration for e in evs if e.complete]
        steps = [abs(e.delta_v) for e in evs]
        out[kind.value] = {
            "count": len(evs),
            "complete": len(done),
            "incomplete": len(evs) - len(done),
            "min": min(done) if done else None,
            "max": max(done) if done else None,
            "mean": float(np.mean(done)) if done else None,
            "delta_v_range": [min(steps), max(steps)] if steps else None,
        }
    return out


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentStats:
    segment: tuple[float, float]  # (mm_low, mm_high)
    mean: Optional[float]  # None only for summary inputs that omit it
    std: float
    nmse: float  # reported as the sample std, the way the field study labels it
    n: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["segment"] = list(self.segment)
        return d


def resample_by_position(mm: Sequence[float], v: Sequence[float], lo: float, hi: float, step_m: float = 1.0):
    """Speed sampled every ``step_m`` meters of road between mile markers lo and hi."""
    mm = np.asarray(mm, float)
    v = np.asarray(v, float)
    ok = ~(np.isnan(mm) | np.isnan(v))
    mm, v = mm[ok], v[ok]
    if mm.size < 2 or mm.min() > lo + 1e-9 or mm.max() < hi - 1e-9:
        raise UntraversedSegment(f"segment mm {lo}-{hi} not fully traversed")
    dist = (mm[0] - mm) * METERS_PER_MILE
    # distance is non-decreasing; keep the first sample at each position
    keep = np.concatenate(([True], np.diff(dist) > 0))
    dist, v = dist[keep], v[keep]
    a = (mm[0] - hi) * METERS_PER_MILE
    b = (mm[0] - lo) * METERS_PER_MILE
    n = max(2, int(round((b - a) / step_m)) + 1)
    grid = np.linspace(a, b, n)
    return np.interp(grid, dist, v)


def segment_stats(mm, v, segments: Sequence[tuple[float, float]], step_m: float = 1.0) -> list[SegmentStats]:
    out = []
    for seg in segments:
        lo, hi = sorted(seg)
        samples = resample_by_position(mm, v, lo, hi, step_m)
        std = float(np.std(samples, ddof=1))
        out.append(SegmentStats((lo, hi), float(np.mean(samples)), std, std, int(samples.size)))
    return out


def variance_reduction(ego: Sequence[SegmentStats], pilot: Sequence[SegmentStats]) -> list[dict]:
    """Percent reduction of ego std relative to pilot std, raw and relative to mean speed.

    A zero pilot std leaves the reduction undefined (None).
    """
    if [e.segment for e in ego] != [p.segment for p in pilot]:
        raise ValueError("ego and pilot statistics cover different segments")
    rows = []
    for e, p in zip(ego, pilot):
        raw = None if p.std == 0 else 100.0 * (1.0 - e.std / p.std)
        cv = None
        means = e.mean is not None and p.mean is not None
        if p.std != 0 and means and e.mean != 0 and p.mean != 0:
            cv = 100.0 * (1.0 - (e.std / e.mean) / (p.std / p.mean))
        rows.append({
            "segment": list(e.segment),
            "std_reduction_pct": raw,
            "cv_reduction_pct": cv,
            "mean_diff_pct": 100.0 * (e.mean / p.mean - 1.0) if means and p.mean != 0 else None,
        })
    return rows


def format_table1(pilot: Optional[Sequence[SegmentStats]], ego: Sequence[SegmentStats]) -> str:
    """Per-segment (NMSE/Mean) pairs; the pilot column reads 'absent' without a comparison."""
    def pair(st: SegmentStats) -> str:
        mean = "n/a" if st.mean is None else f"{st.mean:.3f}"
        return f"({st.nmse:.3f}/{mean})"

    lines = ["mm            | Pilot (NMSE/Mean) | Ego (NMSE/Mean)", "-" * 53]
    for i, e in enumerate(ego):
        seg = f"{e.segment[0]:g}-{e.segment[1]:g}"
        p = pair(pilot[i]) if pilot else "absent"
        lines.append(f"{seg:<13} | {p:<17} | {pair(e)}")
    return "\n".join(lines)


def format_event_table(events: Sequence[RiseFallEvent]) -> str:
    table = event_table(events)
    lines = ["kind | events | complete | min (s) | max (s) | mean (s) | |dv| range (m/s)"]
    for kind, row in table.items():
        def f(x):
            return "-" if x is None else f"{x:.2f}"
        rng = "-" if row["delta_v_range"] is None else f"{row['delta_v_range'][0]:.2f}-{row['delta_v_range'][1]:.2f}"
        lines.append(f"{kind} | {row['count']} | {row['complete']} | {f(row['min'])} | {f(row['max'])} | {f(row['mean'])} | {rng}")
    return "\n".join(lines)
