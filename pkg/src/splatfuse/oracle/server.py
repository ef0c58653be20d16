"""A small HTTP server exposing any local oracle over the wire protocol.

Endpoints: ``GET /v1/health`` returns ``{"protocol": ..., "oracle": ...}``;
``POST /v1/restore`` takes a request body and answers with a response body.
Malformed requests get a 400 with a plain-text diagnostic.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..errors import BindFailed
from .base import Oracle
from .wire import PROTOCOL, WireError, decode_request, encode_response

log = logging.getLogger(__name__)
MAX_BODY = 512 * 1024 * 1024


def parse_bind(bind):
    """``"host:port"`` or ``(host, port)`` -> (host, port)."""
    if isinstance(bind, str):
        host, _, port = bind.rpartition(":")
        return host or "127.0.0.1", int(port)
    return bind[0], int(bind[1])


def _handler(oracle: Oracle, lock: threading.Lock):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, code, body: bytes, ctype):
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code, msg):
            self._send(code, (msg + "\n").encode(), "text/plain; charset=utf-8")

        def do_GET(self):
            if self.path.rstrip("/") == "/v1/health":
                body = json.dumps({"status": "ok", "protocol": PROTOCOL, "oracle": oracle.name})
                self._send(200, body.encode(), "application/json")
            else:
                self._error(404, f"no such endpoint {self.path}")

        def do_POST(self):
            if self.path.rstrip("/") != "/v1/restore":
                self._error(404, f"no such endpoint {self.path}")
                return
            try:
                length = int(self.headers.get("Content-Length", ""))
            except ValueError:
                self._error(411, "Content-Length required")
                return
            if length < 0 or length > MAX_BODY:
                self._error(413, "request body too large")
                return
            body = self.rfile.read(length)
            try:
                req = decode_request(body, self.headers.get("Content-Type", ""))
            except (WireError, ValueError) as exc:
                self._error(400, f"malformed request: {exc}")
                return
            try:
                with lock:
                    resp = oracle.restore(req)
                out, ctype = encode_response(resp)
            except Exception as exc:  # the backing oracle failed; report, keep serving
                log.exception("oracle failed")
                self._error(500, f"oracle failure: {exc}")
                return
            self._send(200, out, ctype)

    return Handler


def serve_mock(bind, oracle: Oracle, background=False):
    """Start serving ``oracle``.

    Args:
        bind: ``"host:port"`` or a tuple; port 0 picks a free port.
        background: run in a daemon thread and return the server immediately
            (use ``server.server_address`` for the port and
            ``server.shutdown()`` to stop); otherwise block forever.

    Raises:
        BindFailed: the address cannot be bound.
    """
    host, port = parse_bind(bind)
    try:
        server = ThreadingHTTPServer((host, port), _handler(oracle, threading.Lock()))
    except OSError as exc:
        raise BindFailed(exc.errno, f"cannot bind {host}:{port}: {exc.strerror}") from None
    server.daemon_threads = True
    if background:
        threading.Thread(target=server.serve_forever, daemon=True).start()
        return server
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return server
