"""Periodic snapshot join of gantry defaults and recent updates, and its wire format."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Sequence

from vslcav.corridor import Gantry
from vslcav.feed.store import UpdateStore

DEFAULT_WINDOW = 86400.0
DEFAULT_CADENCE = 15.0

_ROW_FIELDS = (
    ("gantry_id", str),
    ("mile_marker", (int, float)),
    ("default_speed", (int, float)),
    ("triggered", bool),
    ("posted_speed", (int, float)),
    ("last_update", (int, float, type(None))),
    ("generated_at", (int, float)),
)


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class VslRow:
    gantry_id: str
    mile_marker: float
    default_speed: float
    triggered: bool
    posted_speed: float
    last_update: float | None  # None when the row carries the default


@dataclass(frozen=True)
class VslSnapshot:
    rows: tuple[VslRow, ...]
    generated_at: float

    def row(self, gantry_id: str) -> VslRow:
        for r in self.rows:
            if r.gantry_id == gantry_id:
                return r
        raise KeyError(gantry_id)


def build_snapshot(
    store: UpdateStore,
    gantries: Sequence[Gantry],
    now: float,
    window: float = DEFAULT_WINDOW,
) -> VslSnapshot:
    """Join each gantry's default with its latest update in ``(now - window, now]``."""
    if window <= 0:
        raise ValueError("window must be positive")
    rows = []
    for g in gantries:
        u = store.latest_in_window(g.id, now - window, now)
        if u is None:
            rows.append(VslRow(g.id, g.mile_marker, g.default_limit, False, g.default_limit, None))
        else:
            rows.append(VslRow(g.id, g.mile_marker, g.default_limit, bool(u.triggered), u.posted_speed, u.effective_at))
    return VslSnapshot(tuple(rows), now)


def serialize(snapshot: VslSnapshot) -> bytes:
    """One JSON record per gantry; every record repeats ``generated_at``."""
    records = [dict(asdict(r), generated_at=snapshot.generated_at) for r in snapshot.rows]
    doc = {"generated_at": snapshot.generated_at, "rows": records}
    return json.dumps(doc, indent=2).encode("utf-8")


def parse(payload: bytes) -> VslSnapshot:
    """Inverse of :func:`serialize`; raises :class:`SnapshotFormatError` on anything malformed."""
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"undecodable snapshot: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("rows"), list):
        raise SnapshotFormatError("snapshot must be an object with a 'rows' list")
    generated_at = doc.get("generated_at")
    if isinstance(generated_at, bool) or not isinstance(generated_at, (int, float)):
        raise SnapshotFormatError("missing or non-numeric generated_at")
    rows = []
    for i, rec in enumerate(doc["rows"]):
        if not isinstance(rec, dict):
            raise SnapshotFormatError(f"row {i} is not an object")
        for name, kind in _ROW_FIELDS:
            if name not in rec:
                raise SnapshotFormatError(f"row {i} missing {name!r}")
            value = rec[name]
            if kind is not bool and isinstance(value, bool):
                raise SnapshotFormatError(f"row {i} field {name!r} has wrong type")
            if not isinstance(value, kind):
                raise SnapshotFormatError(f"row {i} field {name!r} has wrong type")
        if rec["generated_at"] != generated_at:
            raise SnapshotFormatError(f"row {i} generated_at disagrees with snapshot")
        rows.append(VslRow(
            rec["gantry_id"], rec["mile_marker"], rec["default_speed"],
            rec["triggered"], rec["posted_speed"], rec["last_update"],
        ))
    return VslSnapshot(tuple(rows), generated_at)
