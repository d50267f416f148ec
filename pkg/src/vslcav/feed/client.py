"""Vehicle-side polling client with injectable latency, loss and corruption."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Protocol, Union

from vslcav.feed.service import FeedService, ServiceUnavailable
from vslcav.feed.snapshot import SnapshotFormatError, VslSnapshot, parse


class FeedFailure(Exception):
    kind = "failure"


class FeedTimeout(FeedFailure):
    kind = "timeout"


class FeedParseError(FeedFailure):
    kind = "parse_error"


class FeedUnavailable(FeedFailure):
    kind = "unavailable"


class Transport(Protocol):
    def get(self) -> bytes:
        """Return the raw snapshot payload or raise FeedFailure."""


class InProcessTransport:
    def __init__(self, service: FeedService):
        self.service = service

    def get(self) -> bytes:
        try:
            return self.service.serve_snapshot()
        except ServiceUnavailable as exc:
            raise FeedUnavailable(str(exc)) from exc


@dataclass(frozen=True)
class FaultProfile:
    """Stand-in for the cellular link.

    latency is fixed; jitter adds uniform [0, jitter] on top. outages are
    (start, end) windows in simulated seconds during which every request is lost.
    """

    latency: float = 0.0
    jitter: float = 0.0
    loss: float = 0.0
    corrupt: float = 0.0
    timeout: float = 2.0
    outages: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.latency < 0 or self.jitter < 0 or self.timeout <= 0:
            raise ValueError("latency/jitter must be >= 0 and timeout > 0")
        for p in (self.loss, self.corrupt):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")

    def in_outage(self, t: float) -> bool:
        return any(a <= t < b for a, b in self.outages)


Result = Union[VslSnapshot, FeedFailure]


def _corrupt(payload: bytes) -> bytes:
    return payload[: len(payload) // 2]


def _attempt(transport: Transport, profile: FaultProfile, rng: random.Random, now: float) -> tuple[float, Result]:
    """One request: returns (delay until the outcome is known, outcome).

    Random draws happen in a fixed order so a seeded rng reproduces exactly.
    """
    lost = rng.random() < profile.loss
    corrupted = rng.random() < profile.corrupt
    delay = profile.latency + (rng.uniform(0.0, profile.jitter) if profile.jitter else 0.0)
    if lost or profile.in_outage(now) or delay > profile.timeout:
        return profile.timeout, FeedTimeout(f"no response within {profile.timeout} s")
    try:
        payload = transport.get()
    except FeedFailure as exc:
        return delay, exc
    if corrupted:
        payload = _corrupt(payload)
    try:
        return delay, parse(payload)
    except SnapshotFormatError as exc:
        return delay, FeedParseError(str(exc))


def fetch_snapshot(
    transport: Transport,
    profile: FaultProfile = FaultProfile(),
    rng: Optional[random.Random] = None,
    now: float = 0.0,
) -> VslSnapshot:
    """Blocking fetch; raises a FeedFailure subclass instead of returning partial data."""
    _, result = _attempt(transport, profile, rng or random.Random(0), now)
    if isinstance(result, FeedFailure):
        raise result
    return result


@dataclass
class _Pending:
    due: float
    result: Result


@dataclass
class FeedClient:
    """Asynchronous client driven by a simulated clock.

    ``request(now)`` issues a fetch whose outcome lands at ``now + delay``;
    ``poll(now)`` delivers everything due. ``latest`` always holds the newest
    successfully parsed snapshot and ``seq`` counts deliveries of one.
    """

    transport: Transport
    profile: FaultProfile = FaultProfile()
    seed: int = 0
    latest: Optional[VslSnapshot] = None
    seq: int = 0
    last_received_at: Optional[float] = None
    requests: int = 0
    failures: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    _pending: list = field(default_factory=list)

    def __post_init__(self):
        self._rng = random.Random(self.seed)

    def request(self, now: float) -> None:
        self.requests += 1
        delay, result = _attempt(self.transport, self.profile, self._rng, now)
        self._pending.append(_Pending(now + delay, result))
        self.poll(now)

    def poll(self, now: float) -> list[Result]:
        due = [p for p in self._pending if p.due <= now + 1e-9]
        if not due:
            return []
        self._pending = [p for p in self._pending if p.due > now + 1e-9]
        for p in due:
            if isinstance(p.result, FeedFailure):
                self.failures[p.result.kind] = self.failures.get(p.result.kind, 0) + 1
                self.events.append((now, p.result.kind))
            else:
                if self.latest is None or p.result.generated_at >= self.latest.generated_at:
                    self.latest = p.result
                self.seq += 1
                self.last_received_at = now
                self.events.append((now, "snapshot"))
        return [p.result for p in due]

    @property
    def in_flight(self) -> int:
        return len(self._pending)
