"""Registry mirror: change-feed follower and retention store.

The store is append-only in spirit: tarball blobs are content-addressed
by SHA-256 and never removed; deletions only flag entries. The cursor
is persisted atomically (write-then-rename) after each durably recorded
batch, so a crash never skips events.

One writer (the follower) mutates the store; readers can serve tarballs
concurrently.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import requests

TOMBSTONE_VERSION = "*"


class MirrorError(Exception):
    pass


@dataclass
class ChangeEvent:
    sequence_id: int
    package_name: str
    revision: str
    deleted: bool
    document: dict | None = None


@dataclass
class CacheEntry:
    package_name: str
    version: str
    tarball_digest: str | None
    officially_deleted: bool = False
    first_seen: str = ""
    deleted_seen: str | None = None
    missing_tarball: bool = False
    conflict_digests: list[str] = field(default_factory=list)

    def key(self) -> str:
        return f"{self.package_name}@{self.version}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class MirrorStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.blob_dir = self.root / "blobs"
        self.quarantine_dir = self.root / "quarantine"
        self.index_path = self.root / "index.json"
        self.cursor_path = self.root / "cursor"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self.quarantine_dir.mkdir(parents=True, exist_ok=True)
        self.entries: dict[str, CacheEntry] = {}
        self._load()

    # -- persistence -------------------------------------------------------
    def _load(self) -> None:
        if self.index_path.exists():
            data = json.loads(self.index_path.read_text(encoding="utf-8"))
            for key, raw in data.items():
                self.entries[key] = CacheEntry(**raw)

    def save(self) -> None:
        payload = {key: vars(entry) for key, entry in
                   sorted(self.entries.items())}
        _atomic_write(self.index_path,
                      json.dumps(payload, indent=1).encode())

    def load_cursor(self) -> int:
        if self.cursor_path.exists():
            return int(self.cursor_path.read_text().strip() or 0)
        return 0

    def save_cursor(self, cursor: int) -> None:
        _atomic_write(self.cursor_path, str(cursor).encode())

    # -- blobs --------------------------------------------------------------
    def blob_path(self, digest: str) -> Path:
        return self.blob_dir / f"{digest}.tgz"

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.blob_path(digest)
        if not path.exists():
            _atomic_write(path, data)
        return digest

    # -- entries ---------------------------------------------------------------
    def upsert_publish(self, name: str, version: str,
                       tarball: bytes | None) -> CacheEntry:
        key = f"{name}@{version}"
        entry = self.entries.get(key)
        if tarball is None:
            if entry is None:
                entry = CacheEntry(name, version, None, first_seen=_now(),
                                   missing_tarball=True)
                self.entries[key] = entry
            else:
                entry.missing_tarball = entry.tarball_digest is None
            return entry
        digest = self.put_blob(tarball)
        if entry is None:
            entry = CacheEntry(name, version, digest, first_seen=_now())
            self.entries[key] = entry
        elif entry.tarball_digest is None:
            entry.tarball_digest = digest
            entry.missing_tarball = False
        elif entry.tarball_digest != digest:
            # republished with different bytes: keep both blobs, flag
            if digest not in entry.conflict_digests:
                entry.conflict_digests.append(digest)
        return entry

    def mark_deleted(self, name: str,
                     version: str | None = None) -> list[CacheEntry]:
        """Flag matching entries; bytes stay on disk. A never-seen
        package gets a tombstone-only entry."""
        marked = []
        for entry in self.entries.values():
            if entry.package_name != name:
                continue
            if version is not None and entry.version != version:
                continue
            if not entry.officially_deleted:
                entry.officially_deleted = True
                entry.deleted_seen = _now()
            marked.append(entry)
        if not marked:
            tombstone = CacheEntry(name, version or TOMBSTONE_VERSION, None,
                                   officially_deleted=True,
                                   first_seen=_now(), deleted_seen=_now(),
                                   missing_tarball=True)
            self.entries[tombstone.key()] = tombstone
            marked.append(tombstone)
        return marked

    def get_tarball(self, name: str, version: str) -> bytes:
        entry = self.entries.get(f"{name}@{version}")
        if entry is None or entry.tarball_digest is None:
            raise KeyError(f"{name}@{version}")
        return self.blob_path(entry.tarball_digest).read_bytes()

    def archive_for(self, name: str):
        """Newest stored version of a package as a PackageArchive, for
        the reconstructor's external-dependency resolution."""
        from .archive import load_archive
        candidates = [e for e in self.entries.values()
                      if e.package_name == name
                      and e.tarball_digest is not None]
        if not candidates:
            return None
        entry = sorted(candidates, key=lambda e: e.version)[-1]
        return load_archive(self.blob_path(entry.tarball_digest)
                            .read_bytes())


# -- feed client -----------------------------------------------------------------

def follow_changes(base_url: str, cursor: int, batch_limit: int = 100,
                   session: requests.Session | None = None,
                   retries: int = 3, backoff: float = 0.2,
                   quarantine=None) -> list[ChangeEvent]:
    """Fetch events with sequence_id > cursor, ascending. Network
    failures retry with exponential backoff and leave the cursor
    untouched; malformed events are quarantined and skipped."""
    session = session or requests.Session()
    url = (f"{base_url.rstrip('/')}/_changes?since={cursor}"
           f"&limit={batch_limit}&include_docs=true&descending=false")
    last_error: Exception | None = None
    for attempt in range(retries):
        try:
            response = session.get(url, timeout=30)
            response.raise_for_status()
            payload = response.json()
            break
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
            time.sleep(backoff * (2 ** attempt))
    else:
        raise MirrorError(f"feed unreachable after {retries} tries: "
                          f"{last_error}")
    events: list[ChangeEvent] = []
    for raw in payload.get("results", []):
        try:
            revision = ""
            if raw.get("changes"):
                revision = raw["changes"][0].get("rev", "")
            event = ChangeEvent(
                sequence_id=int(raw["seq"]),
                package_name=str(raw["id"]),
                revision=revision,
                deleted=bool(raw.get("deleted", False)),
                document=raw.get("doc"),
            )
            if not event.package_name:
                raise ValueError("empty package name")
        except (KeyError, TypeError, ValueError):
            if quarantine is not None:
                quarantine(raw)
            continue
        if event.sequence_id > cursor:
            events.append(event)
    events.sort(key=lambda e: e.sequence_id)
    return events


def sync_package(store: MirrorStore, event: ChangeEvent,
                 session: requests.Session | None = None) -> list[CacheEntry]:
    """Apply one change event to the store; idempotent."""
    session = session or requests.Session()
    if event.deleted:
        return store.mark_deleted(event.package_name)
    doc = event.document or {}
    versions = doc.get("versions") or {}
    entries = []
    for version, meta in versions.items():
        key = f"{event.package_name}@{version}"
        existing = store.entries.get(key)
        if existing is not None and existing.tarball_digest is not None:
            entries.append(existing)
            continue
        tarball_url = ((meta or {}).get("dist") or {}).get("tarball")
        tarball = None
        if tarball_url:
            try:
                response = session.get(tarball_url, timeout=60)
                if response.status_code == 404:
                    tarball = None
                else:
                    response.raise_for_status()
                    tarball = response.content
            except requests.RequestException:
                tarball = None
        entries.append(store.upsert_publish(event.package_name, version,
                                            tarball))
    if not versions:
        entries.append(store.upsert_publish(event.package_name,
                                            str(doc.get("dist-tags", {})
                                                .get("latest", "0.0.0")),
                                            None))
    return entries


def sync_loop(base_url: str, store: MirrorStore, cursor: int | None = None,
              batch_limit: int = 100, max_batches: int | None = None,
              session: requests.Session | None = None) -> int:
    """Follow the feed from the persisted (or given) cursor until it is
    drained; the cursor advances only after a batch is durably stored."""
    session = session or requests.Session()
    current = store.load_cursor() if cursor is None else cursor

    def quarantine(raw) -> None:
        name = f"seq-{raw.get('seq', 'unknown')}-{int(time.time()*1000)}"
        _atomic_write(store.quarantine_dir / f"{name}.json",
                      json.dumps(raw).encode())

    batches = 0
    while max_batches is None or batches < max_batches:
        events = follow_changes(base_url, current, batch_limit,
                                session=session, quarantine=quarantine)
        if not events:
            break
        for event in events:
            sync_package(store, event, session=session)
        store.save()
        current = events[-1].sequence_id
        store.save_cursor(current)
        batches += 1
    return current


# -- tarball server ---------------------------------------------------------------

def make_server(store: MirrorStore, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """HTTP server for GET /:name/:version.tgz (deleted entries
    included)."""

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            parts = self.path.strip("/").split("/")
            if len(parts) != 2 or not parts[1].endswith(".tgz"):
                self.send_error(404)
                return
            name, version = parts[0], parts[1][:-len(".tgz")]
            try:
                data = store.get_tarball(name, version)
            except KeyError:
                self.send_error(404)
                return
            self.send_response(200)
            self.send_header("Content-Type", "application/octet-stream")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


def serve_tarballs(store: MirrorStore, host: str = "127.0.0.1",
                   port: int = 0) -> tuple[ThreadingHTTPServer,
                                           threading.Thread]:
    server = make_server(store, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
