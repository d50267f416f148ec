"""GPS fix -> relevant gantry -> posted speed.

Gantry identification is an Idle/Active set-and-hold machine: a gantry becomes
the relevant one when the vehicle comes within ``threshold`` miles of it and
stays relevant until the next gantry's threshold is crossed or the vehicle
leaves the corridor. Posted speed is looked up when the relevant gantry
changes and otherwise every ``lookup_period`` seconds.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Optional, Protocol

from vslcav.corridor import (
    CorridorGeometry,
    GpsFix,
    gantry_ahead_of,
    heading_matches,
    mph_to_ms,
    point_in_corridor,
)
from vslcav.feed.snapshot import VslSnapshot

log = logging.getLogger(__name__)

THRESHOLD_MILES = 0.15
LOOKUP_PERIOD = 5.0
_EPS = 1e-9


class Mode(enum.Enum):
    IDLE = "Idle"
    ACTIVE = "Active"


class SnapshotSource(Protocol):
    latest: Optional[VslSnapshot]
    seq: int

    def request(self, now: float) -> None: ...


@dataclass(frozen=True)
class Gps2VslState:
    mode: Mode = Mode.IDLE
    relevant_gantry: Optional[str] = None
    v_gr: Optional[float] = None  # m/s
    last_lookup_at: Optional[float] = None
    last_fix_at: Optional[float] = None
    gantry_changed: bool = False
    ahead_id: Optional[str] = None
    ahead_distance: Optional[float] = None
    applied_seq: int = -1
    snapshot_generated_at: Optional[float] = None
    lookups: int = 0

    def staleness(self, now: float) -> float:
        if self.snapshot_generated_at is None:
            return float("inf")
        return now - self.snapshot_generated_at


def step_gantry_id(
    state: Gps2VslState,
    fix: GpsFix,
    geom: CorridorGeometry,
    threshold: float = THRESHOLD_MILES,
) -> tuple[Gps2VslState, Optional[str]]:
    """Advance the identification machine by one fix; returns (state, relevant gantry id)."""
    if not fix.is_valid() or (state.last_fix_at is not None and fix.timestamp < state.last_fix_at):
        log.warning("skipping invalid fix %r", fix)
        return state, state.relevant_gantry

    if not (point_in_corridor(fix, geom) and heading_matches(fix, geom)):
        if state.mode is Mode.ACTIVE:
            log.info("t=%.2f leaving corridor, gantry %s released", fix.timestamp, state.relevant_gantry)
        return Gps2VslState(last_fix_at=fix.timestamp, lookups=state.lookups), None

    mm = geom.mapping.mile_marker(fix.lat, fix.lon)
    ahead = gantry_ahead_of(mm, geom.gantries)
    candidate = None
    if ahead is not None and ahead.distance <= threshold + _EPS:
        candidate = ahead.gantry.id
    elif (
        state.ahead_id is not None
        and (ahead is None or ahead.gantry.id != state.ahead_id)
        and state.ahead_id != state.relevant_gantry
    ):
        # the whole approach zone fell between two fixes: the distance went
        # from above the threshold straight past the gantry
        candidate = state.ahead_id

    relevant = state.relevant_gantry
    changed = state.gantry_changed
    if candidate is not None and candidate != relevant:
        log.info("t=%.2f relevant gantry %s -> %s", fix.timestamp, relevant, candidate)
        relevant, changed = candidate, True

    new = replace(
        state,
        mode=Mode.ACTIVE if relevant is not None else Mode.IDLE,
        relevant_gantry=relevant,
        gantry_changed=changed,
        last_fix_at=fix.timestamp,
        ahead_id=ahead.gantry.id if ahead else None,
        ahead_distance=ahead.distance if ahead else None,
    )
    return new, relevant


def lookup_posted_speed(
    state: Gps2VslState,
    source: SnapshotSource,
    now: float,
    period: float = LOOKUP_PERIOD,
) -> tuple[Gps2VslState, Optional[float]]:
    """Request a fresh snapshot when due and refresh v_gr from the newest one held.

    A request is due when the relevant gantry just changed or ``period``
    seconds have passed since the last request. The source may answer later
    (or never); until it does, the cached v_gr is returned unchanged.
    """
    if state.mode is not Mode.ACTIVE:
        raise ValueError("posted-speed lookup requires an Active state")
    due = state.gantry_changed or state.last_lookup_at is None or now - state.last_lookup_at >= period - _EPS
    if due:
        source.request(now)
        state = replace(state, last_lookup_at=now, lookups=state.lookups + 1)

    snap = source.latest
    if snap is not None and (state.gantry_changed or source.seq != state.applied_seq):
        try:
            row = snap.row(state.relevant_gantry)
        except KeyError:
            log.warning("gantry %s missing from snapshot", state.relevant_gantry)
        else:
            state = replace(
                state,
                v_gr=mph_to_ms(row.posted_speed),
                applied_seq=source.seq,
                snapshot_generated_at=snap.generated_at,
            )
    return replace(state, gantry_changed=False), state.v_gr


def vsl_valid(state: Gps2VslState, now: float, staleness_limit: float = 60.0) -> bool:
    return (
        state.mode is Mode.ACTIVE
        and state.v_gr is not None
        and state.staleness(now) < staleness_limit
    )
