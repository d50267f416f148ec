"""Variable-speed-limit data feed: update mirror, snapshot service, polling client."""

from vslcav.feed.client import (
    FaultProfile,
    FeedClient,
    FeedFailure,
    FeedParseError,
    FeedTimeout,
    FeedUnavailable,
    InProcessTransport,
    fetch_snapshot,
)
from vslcav.feed.service import FeedService, ServiceUnavailable
from vslcav.feed.snapshot import VslRow, VslSnapshot, build_snapshot, parse, serialize
from vslcav.feed.store import (
    GantryUpdate,
    InvalidUpdate,
    OutOfOrderUpdate,
    UnknownGantry,
    UpdateRejected,
    UpdateStore,
)

__all__ = [
    "FaultProfile", "FeedClient", "FeedFailure", "FeedParseError", "FeedTimeout",
    "FeedUnavailable", "InProcessTransport", "fetch_snapshot", "FeedService",
    "ServiceUnavailable", "VslRow", "VslSnapshot", "build_snapshot", "parse",
    "serialize", "GantryUpdate", "InvalidUpdate", "OutOfOrderUpdate", "UnknownGantry",
    "UpdateRejected", "UpdateStore",
]
