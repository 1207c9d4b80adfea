"""Loopback-only service exposing recipes and live transcripts to the UI.

All messages are JSON with a schema_version field.  Endpoints:

    GET  /catalog            recipe names, input schemas, descriptions
    POST /invoke             {"recipe": name, "inputs": {...}} -> result summary
    GET  /events?since=N     server-sent event stream of session events
    POST /input              {"text": line} -> forwarded to the interactive bridge
    GET  /workdir?dir=PATH   {"package_count": n, "suggested_screen": ...}

Invocations on one session are queued; event subscribers are read-only
fan-out and may reconnect from any sequence number.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import BadDir, BindFailed, UnknownRecipe
from .kit import Kit

SCHEMA_VERSION = 1


@dataclass
class SessionEvent:
    seq: int
    kind: str      # command | output | prompt | log | status
    payload: str
    origin: str


class EventLog:
    """Append-only event stream with monotonic sequence numbers."""

    def __init__(self):
        self._events: list[SessionEvent] = []
        self._cond = threading.Condition()

    def append(self, kind: str, payload: str, origin: str = "kit") -> SessionEvent:
        with self._cond:
            event = SessionEvent(len(self._events) + 1, kind, payload, origin)
            self._events.append(event)
            self._cond.notify_all()
            return event

    def sink(self, kind: str, payload: str, origin: str) -> None:
        self.append(kind, payload, origin)

    def snapshot(self, since: int = 0) -> list[SessionEvent]:
        with self._cond:
            return [e for e in self._events if e.seq > since]

    def wait_for(self, since: int, timeout: float = 1.0) -> list[SessionEvent]:
        with self._cond:
            fresh = [e for e in self._events if e.seq > since]
            if fresh:
                return fresh
            self._cond.wait(timeout)
            return [e for e in self._events if e.seq > since]


def workdir_summary(directory: str | Path) -> dict:
    """Empty directories suggest the create screen, others the work screen."""
    directory = Path(directory)
    if not directory.is_dir():
        raise BadDir(f"not a directory: {directory}")
    packages = sorted(
        child.name for child in directory.iterdir()
        if (child / "buildconfig.txt").is_file())
    return {
        "schema_version": SCHEMA_VERSION,
        "package_count": len(packages),
        "packages": packages,
        "suggested_screen": "work" if packages else "create",
    }


class KitService:
    """Binds a Kit to a loopback HTTP endpoint."""

    def __init__(self, kit: Kit, port: int = 0):
        self.kit = kit
        self.events = EventLog()
        self.bridge = None            # set by the CLI when a bridge is live
        self._invoke_lock = threading.Lock()
        handler = _make_handler(self)
        try:
            self._server = ThreadingHTTPServer(("127.0.0.1", port), handler)
        except OSError as exc:
            raise BindFailed(f"cannot bind loopback port {port}: {exc}") from exc
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "KitService":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    # endpoint bodies --------------------------------------------------------

    def catalog(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "recipes": [
                {"name": name, "inputs": inputs, "description": description}
                for name, inputs, description in self.kit.recipes.list_recipes()
            ],
        }

    def invoke(self, name: str, inputs: dict) -> dict:
        with self._invoke_lock:   # one active recipe per session
            result = self.kit.run_recipe(name, inputs, sink=self.events.sink)
        return {
            "schema_version": SCHEMA_VERSION,
            "recipe": name,
            "success": result.success,
            "steps_run": result.steps_run(),
            "artifacts": sorted(result.artifacts),
            "error": str(result.error) if result.error else None,
        }

    def submit_input(self, text: str) -> dict:
        if self.bridge is None:
            return {"schema_version": SCHEMA_VERSION, "accepted": False,
                    "error": "no interactive bridge active"}
        delta = self.bridge.send_line(text)
        self.events.append("output", delta, "bridge")
        return {"schema_version": SCHEMA_VERSION, "accepted": True, "output": delta}


def _make_handler(service: KitService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # quiet by default
            pass

        def _json(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/catalog":
                self._json(200, service.catalog())
            elif url.path == "/workdir":
                params = parse_qs(url.query)
                target = params.get("dir", [str(service.kit.base_dir)])[0]
                try:
                    self._json(200, workdir_summary(target))
                except BadDir as exc:
                    self._json(400, {"schema_version": SCHEMA_VERSION,
                                     "error": str(exc)})
            elif url.path == "/events":
                self._stream_events(url)
            else:
                self._json(404, {"schema_version": SCHEMA_VERSION,
                                 "error": "not found"})

        def _stream_events(self, url) -> None:
            params = parse_qs(url.query)
            since = int(params.get("since", ["0"])[0])
            limit = params.get("limit", [None])[0]
            limit = int(limit) if limit is not None else None
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            sent = 0
            try:
                while True:
                    events = service.events.wait_for(since, timeout=0.5)
                    for event in events:
                        body = dict(asdict(event), schema_version=SCHEMA_VERSION)
                        frame = (f"id: {event.seq}\n"
                                 f"data: {json.dumps(body)}\n\n")
                        self.wfile.write(frame.encode())
                        since = event.seq
                        sent += 1
                        if limit is not None and sent >= limit:
                            return
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return

        def do_POST(self):
            url = urlparse(self.path)
            length = int(self.headers.get("Content-Length", "0"))
            try:
                body = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                self._json(400, {"schema_version": SCHEMA_VERSION,
                                 "error": "bad json"})
                return
            if url.path == "/invoke":
                try:
                    self._json(200, service.invoke(body.get("recipe", ""),
                                                   body.get("inputs", {})))
                except UnknownRecipe as exc:
                    self._json(404, {"schema_version": SCHEMA_VERSION,
                                     "error": str(exc)})
                except Exception as exc:  # surfaced to the client, not fatal
                    self._json(500, {"schema_version": SCHEMA_VERSION,
                                     "error": str(exc)})
            elif url.path == "/input":
                self._json(200, service.submit_input(body.get("text", "")))
            else:
                self._json(404, {"schema_version": SCHEMA_VERSION,
                                 "error": "not found"})

    return Handler


def serve(kit: Kit, port: int = 0) -> KitService:
    return KitService(kit, port=port).start()
