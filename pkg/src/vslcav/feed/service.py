"""Server side of the feed: mirrors updates, rebuilds on a cadence, serves the cached payload."""

from __future__ import annotations

import logging
import math
import threading
from typing import Optional, Sequence

from vslcav.corridor import Gantry
from vslcav.feed.snapshot import (
    DEFAULT_CADENCE,
    DEFAULT_WINDOW,
    VslSnapshot,
    build_snapshot,
    serialize,
)
from vslcav.feed.store import GantryUpdate, UpdateStore

log = logging.getLogger(__name__)


class ServiceUnavailable(RuntimeError):
    """No snapshot has been built yet."""


class FeedService:
    """Holds the update store and the most recent snapshot with its serialization.

    ``tick(now)`` is driven by a clock (simulated or wall) and rebuilds only on
    cadence boundaries. Requests never trigger a rebuild. The cached
    (snapshot, payload) pair is swapped as one tuple so readers never see a mix.
    """

    def __init__(
        self,
        gantries: Sequence[Gantry],
        cadence: float = DEFAULT_CADENCE,
        window: float = DEFAULT_WINDOW,
        store: Optional[UpdateStore] = None,
    ):
        if cadence <= 0 or window <= 0:
            raise ValueError("cadence and window must be positive")
        self.gantries = tuple(gantries)
        self.cadence = cadence
        self.window = window
        self.store = store if store is not None else UpdateStore(self.gantries)
        self._cached: Optional[tuple[VslSnapshot, bytes]] = None
        self._next_build: Optional[float] = None
        self._build_lock = threading.Lock()
        self.build_count = 0
        self.request_count = 0

    def mirror_update(self, u: GantryUpdate) -> GantryUpdate:
        return self.store.mirror_update(u)

    def build(self, now: float) -> VslSnapshot:
        with self._build_lock:
            snap = build_snapshot(self.store, self.gantries, now, self.window)
            self._cached = (snap, serialize(snap))
            self.build_count += 1
        log.debug("snapshot built at %.3f", now)
        return snap

    def aligned(self, now: float) -> float:
        """Latest cadence boundary at or before ``now``."""
        return math.floor(now / self.cadence + 1e-9) * self.cadence

    def tick(self, now: float) -> Optional[VslSnapshot]:
        """Build if a cadence boundary has been reached since the last build."""
        if self._next_build is not None and now < self._next_build - 1e-9:
            return None
        at = self.aligned(now)
        self._next_build = at + self.cadence
        return self.build(at)

    @property
    def snapshot(self) -> Optional[VslSnapshot]:
        cached = self._cached
        return cached[0] if cached else None

    def serve_snapshot(self) -> bytes:
        cached = self._cached
        if cached is None:
            raise ServiceUnavailable("no snapshot built yet")
        self.request_count += 1
        return cached[1]
