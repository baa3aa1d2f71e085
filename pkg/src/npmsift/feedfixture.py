"""In-process change-feed fixture server.

Speaks enough of the `_changes` protocol for the mirror follower:
`since`, `limit`, `include_docs`, `descending` query parameters, plus
tarball downloads at the URLs its documents advertise. Used by tests
and demos; any feed-compatible server works the same way.
"""
from __future__ import annotations

import io
import json
import tarfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit


def build_tarball(files: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w:gz") as tf:
        for name, data in sorted(files.items()):
            info = tarfile.TarInfo("package/" + name)
            info.size = len(data)
            info.mtime = 0
            tf.addfile(info, io.BytesIO(data))
    return buf.getvalue()


class FixtureFeed:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.events: list[dict] = []
        self.tarballs: dict[str, bytes] = {}
        self.seq = 0
        self.lock = threading.Lock()
        feed = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                parsed = urlsplit(self.path)
                if parsed.path == "/_changes":
                    self._changes(parse_qs(parsed.query))
                elif parsed.path.startswith("/tarballs/"):
                    self._tarball(parsed.path[len("/tarballs/"):])
                else:
                    self.send_error(404)

            def _changes(self, query):
                since = int(query.get("since", ["0"])[0])
                limit = int(query.get("limit", ["100"])[0])
                include_docs = query.get("include_docs",
                                         ["false"])[0] == "true"
                descending = query.get("descending",
                                       ["false"])[0] == "true"
                with feed.lock:
                    rows = [e for e in feed.events if e["seq"] > since]
                rows.sort(key=lambda e: e["seq"], reverse=descending)
                rows = rows[:limit]
                results = []
                for event in rows:
                    row = {"seq": event["seq"], "id": event["id"],
                           "changes": [{"rev": event["rev"]}]}
                    if event.get("deleted"):
                        row["deleted"] = True
                    if include_docs and event.get("doc") is not None:
                        row["doc"] = event["doc"]
                    results.append(row)
                body = json.dumps({
                    "results": results,
                    "last_seq": rows[-1]["seq"] if rows else since,
                }).encode()
                self._reply(body, "application/json")

            def _tarball(self, name):
                with feed.lock:
                    data = feed.tarballs.get(name)
                if data is None:
                    self.send_error(404)
                    return
                self._reply(data, "application/octet-stream")

            def _reply(self, body: bytes, ctype: str):
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever,
                                       daemon=True)

    # -- lifecycle ---------------------------------------------------------
    def start(self) -> "FixtureFeed":
        self.thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    # -- content -------------------------------------------------------------
    def publish(self, name: str, version: str,
                files: dict[str, bytes] | None = None,
                tarball: bytes | None = None,
                serve_tarball: bool = True) -> int:
        if tarball is None:
            content = dict(files or {})
            content.setdefault("package.json", json.dumps(
                {"name": name, "version": version}).encode())
            tarball = build_tarball(content)
        blob_name = f"{name}-{version}.tgz"
        with self.lock:
            self.seq += 1
            if serve_tarball:
                self.tarballs[blob_name] = tarball
            self.events.append({
                "seq": self.seq, "id": name, "rev": f"{self.seq}-pub",
                "doc": {
                    "name": name,
                    "dist-tags": {"latest": version},
                    "versions": {version: {"dist": {
                        "tarball": f"{self.base_url}/tarballs/{blob_name}"
                    }}},
                },
            })
            return self.seq

    def delete(self, name: str) -> int:
        with self.lock:
            self.seq += 1
            self.events.append({"seq": self.seq, "id": name,
                                "rev": f"{self.seq}-del", "deleted": True})
            return self.seq

    def publish_malformed(self) -> int:
        with self.lock:
            self.seq += 1
            self.events.append({"seq": self.seq, "id": "",
                                "rev": "bad"})
            return self.seq
