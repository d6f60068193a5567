"""Batch HTTP service: trace documents in, vitals reports out.

Endpoints::

    POST /v1/vitals    body: trace CSV          -> 200 VitalsReport JSON
    POST /v1/identify  body: {"probe": [...]}   -> 200 IdentityMatch JSON
    GET  /healthz                               -> 200 "ok"

Domain errors answer 422 with ``{"error": <name>}``; unreadable bodies 400.
Each request is handled on its own thread. The only shared state is the
gallery, loaded once at startup and never written.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping

from .errors import TraceFormatError, VitalsError
from .identity import EmbeddingGallery, identify, load_gallery
from .pos import PosConfig
from .trace import parse_trace, prepare_series
from .vitals import VitalsReport, canonical_json, compute_vitals

log = logging.getLogger(__name__)

GALLERY_ENV = "VITALS_GALLERY"
MAX_BODY_BYTES = 64 * 1024 * 1024


@dataclass
class ServiceConfig:
    pos: PosConfig = field(default_factory=PosConfig)
    fs: float | None = None
    weights: Mapping[str, float] | None = None
    gallery_path: str | None = None


def analyze_document(document: str, pos: PosConfig | None = None, fs: float | None = None,
                     weights: Mapping[str, float] | None = None) -> VitalsReport:
    """Trace CSV text to report. Shared by the CLI and the service."""
    series = prepare_series(parse_trace(document), fs, weights)
    return compute_vitals(series, pos or PosConfig())


def report_body(report: VitalsReport) -> bytes:
    return (report.to_json() + "\n").encode("utf-8")


class _BadRequest(Exception):
    pass


class VitalsHandler(BaseHTTPRequestHandler):
    server_version = "rppg-vitals/0.1"
    protocol_version = "HTTP/1.1"

    # set on the subclass built by make_server
    config: ServiceConfig
    gallery: EmbeddingGallery | None

    def log_message(self, fmt, *args):
        log.info("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes, ctype: str = "application/json"):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, name: str, detail: str = ""):
        payload = {"error": name}
        if detail:
            payload["detail"] = detail
        self._send(status, (canonical_json(payload) + "\n").encode())

    def _body(self) -> bytes:
        try:
            n = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            raise _BadRequest("bad Content-Length") from None
        if n < 0 or n > MAX_BODY_BYTES:
            raise _BadRequest("body size out of range")
        return self.rfile.read(n)

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, b"ok", "text/plain; charset=utf-8")
        else:
            self._send_error_json(404, "NotFound")

    def do_POST(self):
        routes = {"/v1/vitals": self._vitals, "/v1/identify": self._identify}
        handler = routes.get(self.path)
        if handler is None:
            self._send_error_json(404, "NotFound")
            return
        try:
            status, body = handler(self._body())
        except _BadRequest as e:
            self._send_error_json(400, "BadRequest", str(e))
        except TraceFormatError as e:
            self._send_error_json(400, e.name, str(e))
        except VitalsError as e:
            self._send_error_json(422, e.name, str(e))
        except Exception:
            log.exception("unhandled error on %s", self.path)
            self._send_error_json(500, "InternalError")
        else:
            self._send(status, body)

    def _vitals(self, raw: bytes):
        ctype = self.headers.get("Content-Type", "text/csv").split(";")[0].strip().lower()
        if ctype not in ("text/csv", "text/plain"):
            raise _BadRequest(f"unsupported content type {ctype!r}")
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise _BadRequest("body is not UTF-8") from None
        cfg = self.config
        return 200, report_body(analyze_document(text, cfg.pos, cfg.fs, cfg.weights))

    def _identify(self, raw: bytes):
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise _BadRequest("body is not JSON") from None
        probe = obj.get("probe") if isinstance(obj, dict) else obj
        if not isinstance(probe, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in probe
        ):
            raise _BadRequest("expected {\"probe\": [numbers]}")
        gallery = self.gallery if self.gallery is not None else EmbeddingGallery(dim=max(len(probe), 1))
        match = identify(gallery, probe)
        return 200, (canonical_json(match.to_dict()) + "\n").encode()


def make_server(bind_address: tuple[str, int], config: ServiceConfig | None = None) -> ThreadingHTTPServer:
    config = config or ServiceConfig()
    path = config.gallery_path or os.environ.get(GALLERY_ENV)
    gallery = load_gallery(path) if path else None
    handler = type("BoundVitalsHandler", (VitalsHandler,), {"config": config, "gallery": gallery})
    server = ThreadingHTTPServer(bind_address, handler)
    server.daemon_threads = True
    return server


def serve_batch(bind_address: tuple[str, int], config: ServiceConfig | None = None) -> None:
    server = make_server(bind_address, config)
    host, port = server.server_address[:2]
    log.info("serving on http://%s:%d", host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
