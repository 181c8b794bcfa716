"""HTTP server behind the annotate subcommand.

Serves the annotation API consumed by the browser UI: image list,
per-image records, label updates, raw image bytes, and the static UI
bundle. Label writes funnel through a single lock and persist through
the session's write-through path, so a crash loses at most the request
in flight.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .dataset import AnnotationSession, set_label
from .errors import InvalidParam

log = logging.getLogger("pitchlines.server")

_STATIC_DIR = Path(__file__).parent / "static"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ppm": "image/x-portable-pixmap",
}

_PLACEHOLDER_PAGE = b"""<!doctype html>
<html><head><meta charset="utf-8"><title>pitchlines</title></head>
<body>
<h1>pitchlines annotation server</h1>
<p>The UI bundle is not installed. The API is live:</p>
<ul>
<li>GET /api/images</li>
<li>GET /api/records?image=&lt;path&gt;</li>
<li>POST /api/label {"index": int, "label": string}</li>
<li>GET /api/image/&lt;path&gt;</li>
</ul>
</body></html>
"""


class AnnotationServer(ThreadingHTTPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, session: AnnotationSession, images_dir: Path, static_dir=None):
        super().__init__(address, _Handler)
        self.session = session
        self.images_dir = Path(images_dir)
        self.static_dir = Path(static_dir) if static_dir is not None else _STATIC_DIR
        self.label_lock = threading.Lock()


def make_server(
    session: AnnotationSession,
    images_dir: Path,
    port: int,
    host: str = "127.0.0.1",
    static_dir=None,
) -> AnnotationServer:
    """Bind an annotation server; port 0 picks a free port."""
    return AnnotationServer((host, port), session, images_dir, static_dir)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: AnnotationServer

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, code: int, body: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _json(self, code: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self._send(code, body, "application/json; charset=utf-8")

    def do_GET(self):
        url = urllib.parse.urlsplit(self.path)
        route = urllib.parse.unquote(url.path)
        if route == "/api/images":
            self._json(200, self.server.session.image_list())
        elif route == "/api/records":
            self._records(urllib.parse.parse_qs(url.query))
        elif route.startswith("/api/image/"):
            self._image(route[len("/api/image/"):])
        elif route.startswith("/api/"):
            self._json(404, {"error": f"unknown API path {route}"})
        else:
            self._static(route)

    def _records(self, query) -> None:
        wanted = query.get("image", [None])[0]
        rows = []
        for index, record in enumerate(self.server.session.records):
            if wanted is not None and record.image != wanted:
                continue
            row = {"index": index}
            row.update(record.to_dict())
            rows.append(row)
        self._json(200, rows)

    def _image(self, rel: str) -> None:
        base = self.server.images_dir.resolve()
        target = (base / rel).resolve()
        # refuse anything that escapes the session's image directory
        if base not in target.parents and target != base:
            self._json(404, {"error": "image path outside session directory"})
            return
        if not target.is_file():
            self._json(404, {"error": f"no such image: {rel}"})
            return
        content_type = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send(200, target.read_bytes(), content_type)

    def _static(self, route: str) -> None:
        if route in ("/", "/index.html"):
            index = self.server.static_dir / "index.html"
            if index.is_file():
                self._send(200, index.read_bytes(), _CONTENT_TYPES[".html"])
            else:
                self._send(200, _PLACEHOLDER_PAGE, _CONTENT_TYPES[".html"])
            return
        name = route.lstrip("/")
        base = self.server.static_dir.resolve()
        target = (base / name).resolve()
        if base not in target.parents or not target.is_file():
            self._json(404, {"error": f"not found: {route}"})
            return
        content_type = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send(200, target.read_bytes(), content_type)

    def do_POST(self):
        route = urllib.parse.urlsplit(self.path).path
        if route != "/api/label":
            self._json(404, {"error": f"unknown API path {route}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            data = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._json(400, {"error": "body must be a JSON object"})
            return
        if not isinstance(data, dict) or set(data) != {"index", "label"}:
            self._json(400, {"error": 'body must be exactly {"index": int, "label": string}'})
            return
        index, label = data["index"], data["label"]
        if not isinstance(index, int) or isinstance(index, bool) or not isinstance(label, str):
            self._json(400, {"error": "index must be an integer and label a string"})
            return
        with self.server.label_lock:
            try:
                set_label(self.server.session, index, label)
            except (InvalidParam, IndexError) as e:
                self._json(400, {"error": str(e)})
                return
            record = self.server.session.records[index]
            row = {"index": index}
            row.update(record.to_dict())
        self._json(200, row)
