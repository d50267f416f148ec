import json
import random
import threading

import pytest

from vslcav.corridor import Gantry, gantry_chain
from vslcav.feed import (
    FaultProfile,
    FeedClient,
    FeedParseError,
    FeedService,
    FeedTimeout,
    FeedUnavailable,
    GantryUpdate,
    InProcessTransport,
    InvalidUpdate,
    OutOfOrderUpdate,
    ServiceUnavailable,
    UnknownGantry,
    UpdateStore,
    build_snapshot,
    fetch_snapshot,
    parse,
    serialize,
)
from vslcav.feed.http import FeedServer, HttpTransport, post_update

DAY = 86400.0


def oracle(updates, gantries, now, window):
    """Brute force: scan every update of every gantry."""
    out = {}
    for g in gantries:
        best = None
        for u in updates:
            if u.gantry_id == g.id and now - window < u.effective_at <= now:
                if best is None or u.effective_at >= best.effective_at:
                    best = u
        out[g.id] = (best.posted_speed, True if best.posted_speed < g.default_limit else False) if best else (g.default_limit, False)
    return out


def rows(snap):
    return {r.gantry_id: (r.posted_speed, r.triggered) for r in snap.rows}


def test_mirror_examples():
    store = UpdateStore([Gantry("G", 60.0)])
    store.mirror_update(GantryUpdate("G", 40, 100.0))
    with pytest.raises(OutOfOrderUpdate):
        store.mirror_update(GantryUpdate("G", 40, 90.0))
    with pytest.raises(UnknownGantry):
        store.mirror_update(GantryUpdate("H", 40, 200.0))
    with pytest.raises(InvalidUpdate):
        store.mirror_update(GantryUpdate("G", 70, 200.0, triggered=True))
    with pytest.raises(InvalidUpdate):
        GantryUpdate("G", 25, 200.0)
    assert len(store) == 1


def test_1440_updates_replay():
    g = Gantry("G", 60.0)
    store = UpdateStore([g])
    rng = random.Random(1)
    latest = None
    for k in range(1440):
        u = store.mirror_update(GantryUpdate("G", rng.choice([30, 35, 40, 45, 50, 55, 60, 65, 70]), k * 60.0))
        latest = u
    assert len(store.updates("G")) == 1440
    snap = build_snapshot(store, [g], 1439 * 60.0)
    assert snap.rows[0].posted_speed == latest.posted_speed
    assert snap.rows[0].last_update == latest.effective_at


def test_build_examples():
    gs = [Gantry("A", 60.0), Gantry("B", 59.5)]
    store = UpdateStore(gs)
    empty = build_snapshot(store, gs, 10_000.0)
    assert all(r.posted_speed == 70 and not r.triggered for r in empty.rows)
    store.mirror_update(GantryUpdate("A", 30, 10_000.0 - 3600))
    store.mirror_update(GantryUpdate("B", 40, 10_000.0 - 25 * 3600))
    snap = build_snapshot(store, gs, 10_000.0)
    assert snap.row("A").posted_speed == 30 and snap.row("A").triggered
    assert snap.row("B").posted_speed == 70 and not snap.row("B").triggered


def test_window_boundary_exact():
    g = Gantry("A", 60.0)
    store = UpdateStore([g])
    store.mirror_update(GantryUpdate("A", 40, 1000.0))
    assert build_snapshot(store, [g], 1000.0 + DAY - 1e-6).row("A").posted_speed == 40
    assert build_snapshot(store, [g], 1000.0 + DAY).row("A").posted_speed == 70
    assert build_snapshot(store, [g], 1000.0).row("A").posted_speed == 40
    assert build_snapshot(store, [g], 999.999).row("A").posted_speed == 70


def test_build_is_idempotent():
    gs = gantry_chain(60.0, 4)
    store = UpdateStore(gs)
    store.mirror_update(GantryUpdate(gs[1].id, 45, 5.0))
    assert build_snapshot(store, gs, 50.0) == build_snapshot(store, gs, 50.0)


def test_randomized_against_oracle_small():
    rng = random.Random(9)
    gs = gantry_chain(60.0, 5)
    for _ in range(200):
        store = UpdateStore(gs)
        updates = []
        t = {g.id: -2 * DAY for g in gs}
        for _ in range(rng.randrange(0, 30)):
            g = rng.choice(gs)
            t[g.id] += rng.choice([0.0, rng.uniform(0, 20_000)])
            updates.append(store.mirror_update(GantryUpdate(g.id, rng.choice(range(30, 75, 5)), t[g.id])))
        now = rng.uniform(-DAY, DAY)
        assert rows(build_snapshot(store, gs, now, DAY)) == oracle(updates, gs, now, DAY)


def test_serialize_round_trip_and_size():
    gs = gantry_chain(66.0, 56)
    store = UpdateStore(gs)
    for i, g in enumerate(gs[::3]):
        store.mirror_update(GantryUpdate(g.id, 30 + 5 * (i % 8), 1000.0 + i))
    snap = build_snapshot(store, gs, 1_700_000_000.0)
    payload = serialize(snap)
    assert parse(payload) == snap
    assert 5_000 <= len(payload) <= 50_000
    doc = json.loads(payload)
    assert set(doc["rows"][0]) == {"gantry_id", "mile_marker", "default_speed", "triggered",
                                   "posted_speed", "last_update", "generated_at"}


@pytest.mark.parametrize("bad", [b"", b"{", b"[]", b'{"generated_at": 1, "rows": [{}]}',
                                 b'{"generated_at": true, "rows": []}'])
def test_parse_rejects_malformed(bad):
    with pytest.raises(ValueError):
        parse(bad)


def test_service_cache_semantics():
    gs = gantry_chain(60.0, 3)
    svc = FeedService(gs)
    with pytest.raises(ServiceUnavailable):
        svc.serve_snapshot()
    assert svc.tick(7.0).generated_at == 0.0
    first = svc.serve_snapshot()
    svc.mirror_update(GantryUpdate(gs[0].id, 40, 8.0))
    assert svc.tick(14.9) is None
    assert svc.serve_snapshot() is first
    assert svc.serve_snapshot() == first
    snap = svc.tick(15.0)
    assert snap.generated_at == 15.0 and snap.row(gs[0].id).posted_speed == 40
    assert json.loads(svc.serve_snapshot())["generated_at"] == 15.0
    assert svc.build_count == 2


def test_concurrent_readers_never_see_a_mix():
    gs = gantry_chain(60.0, 20)
    svc = FeedService(gs, cadence=1.0)
    svc.tick(0.0)
    stop = threading.Event()
    bad = []

    def reader():
        while not stop.is_set():
            snap = parse(svc.serve_snapshot())
            if len({r.posted_speed for r in snap.rows}) != 1:
                bad.append(snap)

    threads = [threading.Thread(target=reader) for _ in range(4)]
    for t in threads:
        t.start()
    for k in range(1, 200):
        for g in gs:
            svc.mirror_update(GantryUpdate(g.id, 30 + 5 * (k % 9), float(k) - 0.5))
        svc.tick(float(k))
    stop.set()
    for t in threads:
        t.join()
    assert not bad


def _service():
    gs = gantry_chain(60.0, 3)
    svc = FeedService(gs)
    svc.mirror_update(GantryUpdate(gs[1].id, 35, -10.0))
    svc.tick(0.0)
    return svc


def test_fetch_profiles():
    svc = _service()
    tr = InProcessTransport(svc)
    assert serialize(fetch_snapshot(tr)) == svc.serve_snapshot()
    with pytest.raises(FeedTimeout):
        fetch_snapshot(tr, FaultProfile(loss=1.0))
    with pytest.raises(FeedParseError):
        fetch_snapshot(tr, FaultProfile(corrupt=1.0))
    with pytest.raises(FeedUnavailable):
        fetch_snapshot(InProcessTransport(FeedService(gantry_chain(60.0, 2))))


def test_full_loss_leaves_client_state_alone():
    client = FeedClient(InProcessTransport(_service()), FaultProfile(loss=1.0))
    for k in range(100):
        client.request(k * 0.5)
        client.poll(k * 0.5)
    assert client.latest is None and client.seq == 0
    assert client.failures["timeout"] > 0


def test_200ms_latency_is_four_ticks():
    client = FeedClient(InProcessTransport(_service()), FaultProfile(latency=0.2))
    dt = 0.05
    arrived = None
    for k in range(20):
        t = round(k * dt, 9)
        if k == 3:
            client.request(t)
        if client.poll(t) and arrived is None:
            arrived = k
    assert arrived == 3 + 4


def test_staleness_bound_under_latency():
    gs = gantry_chain(60.0, 3)
    svc = FeedService(gs)
    profile = FaultProfile(latency=0.3, jitter=0.4)
    client = FeedClient(InProcessTransport(svc), profile, seed=4)
    dt = 0.05
    for k in range(int(300 / dt)):
        t = round(k * dt, 9)
        svc.tick(t)
        client.poll(t)
        if k % 100 == 0:
            client.request(t)
        if client.last_received_at is not None:
            lat = profile.latency + profile.jitter
            assert client.latest.generated_at >= client.last_received_at - (lat + 15.0) - 1e-9


def test_http_transport_and_update_endpoint():
    gs = gantry_chain(60.0, 3)
    svc = FeedService(gs)
    with FeedServer(svc, timer=False) as server:
        tr = HttpTransport(server.url)
        with pytest.raises(FeedUnavailable):
            tr.get()
        code, body = post_update(server.url, {"gantry_id": gs[0].id, "posted_speed": 40, "effective_at": 10.0})
        assert code == 200 and body["triggered"] is True
        assert post_update(server.url, {"gantry_id": gs[0].id, "posted_speed": 45, "effective_at": 5.0})[0] == 409
        assert post_update(server.url, {"gantry_id": "nope", "posted_speed": 45})[0] == 404
        assert post_update(server.url, {"gantry_id": gs[0].id})[0] == 400
        svc.tick(15.0)
        a, b = tr.get(), tr.get()
        assert a == b == svc.serve_snapshot()
        assert parse(a).row(gs[0].id).posted_speed == 40
