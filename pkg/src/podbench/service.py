"""HTTP front end for the listening test.

Endpoints (all JSON unless noted):

* ``GET /api/session?part=1|2&seed=N[&participant=label]`` -> session descriptor
* ``GET /api/audio/{excerpt_id}/{stimulus_id}`` -> WAV bytes (``mix`` plays the mixture)
* ``POST /api/ratings`` <- ``{session_id, excerpt_id, ratings: [{stimulus_id, metric, value}]}``
* ``GET /api/results`` -> mean opinion scores

Static files (the rating UI) are served from an optional directory for any
other path.  The process keeps only sessions in memory; ratings and config
live on disk, so restarts lose nothing but unfinished sessions.
"""

from __future__ import annotations

import json
import mimetypes
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .listening import (
    MIXTURE_STIMULUS_ID,
    ConfigError,
    RatingStore,
    RatingValidationError,
    Session,
    TestConfig,
    UnknownSessionError,
    compute_mos,
    create_session,
    record_ratings,
)

__all__ = ["ListeningTestService", "serve"]


class ListeningTestService:
    """Session registry plus request handlers, independent of the HTTP layer."""

    def __init__(self, config: TestConfig, store: RatingStore, static_dir=None):
        self.config = config
        self.store = store
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self._sessions: dict[str, Session] = {}
        self._audio: dict[tuple[str, str], Path] = {}
        self._lock = threading.Lock()
        for excerpt in config.excerpts:
            self._audio[(excerpt.excerpt_id, MIXTURE_STIMULUS_ID)] = config.root / excerpt.mixture

    def open_session(self, part: int, seed: int, participant: str = "anon") -> Session:
        session = create_session(self.config, part, seed, participant)
        with self._lock:
            self._sessions[session.session_id] = session
            for task in session.tasks:
                excerpt = self.config.excerpt(task.excerpt_id)
                for stimulus_id, condition in task.stimuli:
                    self._audio[(task.excerpt_id, stimulus_id)] = (
                        self.config.root / excerpt.estimates[condition]
                    )
        return session

    def session(self, session_id: str) -> Session:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSessionError(f"unknown session {session_id!r}") from None

    def audio_path(self, excerpt_id: str, stimulus_id: str) -> Path:
        with self._lock:
            try:
                return self._audio[(excerpt_id, stimulus_id)]
            except KeyError:
                raise KeyError(f"no stimulus {stimulus_id!r} for excerpt {excerpt_id!r}") from None

    def submit_ratings(self, payload: dict) -> int:
        session = self.session(str(payload.get("session_id")))
        excerpt_id = str(payload.get("excerpt_id"))
        ratings = payload.get("ratings")
        if not isinstance(ratings, list):
            raise RatingValidationError("ratings must be a list")
        return record_ratings(self.store, session, excerpt_id, ratings, self.config)

    def results(self) -> dict:
        summary = compute_mos(self.store, self.config)
        return json.loads(summary.to_json())


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> ListeningTestService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default; tests parse stdout
        pass

    def _send_json(self, doc, status: int = 200) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str, offenders=None) -> None:
        doc = {"error": message}
        if offenders:
            doc["offenders"] = list(offenders)
        self._send_json(doc, status)

    def do_GET(self) -> None:
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path == "/api/session":
                self._handle_session(parse_qs(url.query))
            elif len(parts) == 4 and parts[:2] == ["api", "audio"]:
                self._handle_audio(parts[2], parts[3])
            elif url.path == "/api/results":
                self._send_json(self.service.results())
            elif parts[:1] == ["api"]:
                self._send_error_json(404, f"no such endpoint: {url.path}")
            else:
                self._handle_static(url.path)
        except BrokenPipeError:
            pass

    def do_POST(self) -> None:
        url = urlparse(self.path)
        if url.path != "/api/ratings":
            self._send_error_json(404, f"no such endpoint: {url.path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            self._send_error_json(400, "request body is not valid JSON")
            return
        try:
            stored = self.service.submit_ratings(payload)
        except UnknownSessionError as exc:
            self._send_error_json(404, str(exc))
        except RatingValidationError as exc:
            self._send_error_json(422, str(exc), exc.offenders)
        else:
            self._send_json({"stored": stored})

    def _handle_session(self, query: dict) -> None:
        try:
            part = int(query.get("part", ["1"])[0])
            seed = int(query.get("seed", [str(int(time.time() * 1000) & 0xFFFFFFFF)])[0])
        except ValueError:
            self._send_error_json(400, "part and seed must be integers")
            return
        participant = query.get("participant", ["anon"])[0]
        try:
            session = self.service.open_session(part, seed, participant)
        except ConfigError as exc:
            self._send_error_json(400, str(exc))
            return
        self._send_json(session.descriptor())

    def _handle_audio(self, excerpt_id: str, stimulus_id: str) -> None:
        try:
            path = self.service.audio_path(excerpt_id, stimulus_id)
        except KeyError as exc:
            self._send_error_json(404, str(exc))
            return
        if not path.exists():
            self._send_error_json(404, f"audio file missing: {path.name}")
            return
        body = path.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", "audio/wav")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _handle_static(self, url_path: str) -> None:
        root = self.service.static_dir
        if root is None:
            self._send_error_json(404, "no static directory configured")
            return
        rel = url_path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            self._send_error_json(404, f"not found: {url_path}")
            return
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def serve(
    config: TestConfig,
    store: RatingStore,
    host: str = "127.0.0.1",
    port: int = 0,
    static_dir=None,
) -> ThreadingHTTPServer:
    """Create a ready-to-run threading HTTP server (call ``serve_forever``)."""
    server = ThreadingHTTPServer((host, port), _Handler)
    server.service = ListeningTestService(config, store, static_dir)  # type: ignore[attr-defined]
    return server
