"""Mirror of gantry posting changes, as recorded from the operations center."""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass
from typing import Iterable, Optional

from vslcav.corridor import Gantry


class UpdateRejected(ValueError):
    """Base class for updates the store refuses to record."""


class OutOfOrderUpdate(UpdateRejected):
    pass


class UnknownGantry(UpdateRejected):
    pass


class InvalidUpdate(UpdateRejected):
    pass


@dataclass(frozen=True)
class GantryUpdate:
    gantry_id: str
    posted_speed: float  # mph
    effective_at: float
    triggered: Optional[bool] = None  # derived from the gantry default when None

    def __post_init__(self):
        if not 30.0 <= self.posted_speed <= 70.0:
            raise InvalidUpdate(f"posted_speed {self.posted_speed} mph outside [30, 70]")


class UpdateStore:
    """Per-gantry append-only update log.

    Updates must arrive in non-decreasing ``effective_at`` order per gantry;
    out-of-order updates are rejected rather than reordered. Writes are
    serialized by a lock so the store can back a threaded server.
    """

    def __init__(self, gantries: Iterable[Gantry]):
        self.gantries = {g.id: g for g in gantries}
        self._times: dict[str, list[float]] = {gid: [] for gid in self.gantries}
        self._updates: dict[str, list[GantryUpdate]] = {gid: [] for gid in self.gantries}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return sum(len(v) for v in self._updates.values())

    def latest_time(self, gantry_id: str) -> Optional[float]:
        times = self._times.get(gantry_id)
        return times[-1] if times else None

    def mirror_update(self, u: GantryUpdate) -> GantryUpdate:
        """Record ``u`` and return it with ``triggered`` resolved."""
        gantry = self.gantries.get(u.gantry_id)
        if gantry is None:
            raise UnknownGantry(f"unknown gantry {u.gantry_id!r}")
        if u.posted_speed > gantry.default_limit:
            raise InvalidUpdate(
                f"{u.gantry_id}: posted {u.posted_speed} mph exceeds default {gantry.default_limit} mph"
            )
        triggered = u.posted_speed < gantry.default_limit
        if u.triggered is not None and u.triggered != triggered:
            raise InvalidUpdate(
                f"{u.gantry_id}: triggered={u.triggered} inconsistent with posted "
                f"{u.posted_speed} mph vs default {gantry.default_limit} mph"
            )
        u = GantryUpdate(u.gantry_id, u.posted_speed, u.effective_at, triggered)
        with self._lock:
            times = self._times[u.gantry_id]
            if times and u.effective_at < times[-1]:
                raise OutOfOrderUpdate(
                    f"{u.gantry_id}: update at t={u.effective_at} precedes latest t={times[-1]}"
                )
            times.append(u.effective_at)
            self._updates[u.gantry_id].append(u)
        return u

    def latest_in_window(self, gantry_id: str, start: float, end: float) -> Optional[GantryUpdate]:
        """Most recent update with ``start < effective_at <= end``."""
        with self._lock:
            times = self._times[gantry_id]
            i = bisect.bisect_right(times, end)
            if i == 0 or times[i - 1] <= start:
                return None
            return self._updates[gantry_id][i - 1]

    def updates(self, gantry_id: str) -> list[GantryUpdate]:
        with self._lock:
            return list(self._updates[gantry_id])
