"""Socket transport: a small threaded HTTP front end for :class:`FeedService`.

``GET /vsl`` returns the cached snapshot (503 before the first build).
``POST /updates`` accepts one JSON GantryUpdate; 409 for out-of-order,
404 for an unknown gantry, 400 for anything else malformed.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from vslcav.feed.client import FeedParseError, FeedTimeout, FeedUnavailable
from vslcav.feed.service import FeedService, ServiceUnavailable
from vslcav.feed.store import GantryUpdate, InvalidUpdate, OutOfOrderUpdate, UnknownGantry

log = logging.getLogger(__name__)

SNAPSHOT_PATH = "/vsl"
UPDATE_PATH = "/updates"


def update_from_json(doc: dict, now: float) -> GantryUpdate:
    if not isinstance(doc, dict):
        raise InvalidUpdate("update must be a JSON object")
    try:
        gantry_id = str(doc["gantry_id"])
        posted = float(doc["posted_speed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidUpdate(f"bad update: {exc}") from exc
    effective_at = float(doc.get("effective_at", now))
    triggered = doc.get("triggered")
    if triggered is not None and not isinstance(triggered, bool):
        raise InvalidUpdate("triggered must be a boolean")
    return GantryUpdate(gantry_id, posted, effective_at, triggered)


def _make_handler(service: FeedService, clock: Callable[[], float]):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, code: int, body: bytes, ctype: str = "application/json"):
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code: int, message: str):
            self._send(code, json.dumps({"error": message}).encode())

        def do_GET(self):
            if self.path != SNAPSHOT_PATH:
                return self._error(404, "not found")
            try:
                self._send(200, service.serve_snapshot())
            except ServiceUnavailable as exc:
                self._error(503, str(exc))

        def do_POST(self):
            if self.path != UPDATE_PATH:
                return self._error(404, "not found")
            length = int(self.headers.get("Content-Length") or 0)
            try:
                doc = json.loads(self.rfile.read(length) or b"null")
                u = service.mirror_update(update_from_json(doc, clock()))
            except OutOfOrderUpdate as exc:
                return self._error(409, str(exc))
            except UnknownGantry as exc:
                return self._error(404, str(exc))
            except (InvalidUpdate, json.JSONDecodeError) as exc:
                return self._error(400, str(exc))
            self._send(200, json.dumps({
                "gantry_id": u.gantry_id, "posted_speed": u.posted_speed,
                "effective_at": u.effective_at, "triggered": u.triggered,
            }).encode())

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

    return Handler


class FeedServer:
    """Runs the HTTP front end plus a wall-clock (or injected clock) snapshot timer."""

    def __init__(
        self,
        service: FeedService,
        host: str = "127.0.0.1",
        port: int = 0,
        clock: Callable[[], float] = time.time,
        build_on_start: bool = False,
        timer: bool = True,
    ):
        self.service = service
        self.clock = clock
        self.httpd = ThreadingHTTPServer((host, port), _make_handler(service, clock))
        self.httpd.daemon_threads = True
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._build_on_start = build_on_start
        self._timer_enabled = timer

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}{SNAPSHOT_PATH}"

    def _timer(self):
        while not self._stop.is_set():
            self.service.tick(self.clock())
            now = self.clock()
            wait = self.service.aligned(now) + self.service.cadence - now
            self._stop.wait(max(wait, 0.01))

    def start(self) -> "FeedServer":
        if self._build_on_start:
            self.service.build(self.clock())
        targets = [self.httpd.serve_forever] + ([self._timer] if self._timer_enabled else [])
        for target in targets:
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self):
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        for t in self._threads:
            t.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class HttpTransport:
    def __init__(self, url: str, timeout: float = 2.0):
        self.url = url
        self.timeout = timeout

    def get(self) -> bytes:
        try:
            with urllib.request.urlopen(self.url, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code == 503:
                raise FeedUnavailable("service has no snapshot yet") from exc
            raise FeedParseError(f"HTTP {exc.code}") from exc
        except (TimeoutError, urllib.error.URLError, OSError) as exc:
            raise FeedTimeout(str(exc)) from exc


def post_update(base_url: str, update: dict, timeout: float = 2.0) -> tuple[int, dict]:
    """POST one update; returns (status code, decoded body)."""
    url = base_url.rsplit(SNAPSHOT_PATH, 1)[0] + UPDATE_PATH
    req = urllib.request.Request(url, data=json.dumps(update).encode(), method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read() or b"{}")


def serve(service: FeedService, host: str, port: int, stop: Optional[threading.Event] = None) -> None:
    """Blocking helper used by the CLI."""
    server = FeedServer(service, host, port).start()
    log.info("serving %s", server.url)
    try:
        (stop or threading.Event()).wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
