"""Embedded persistence for the teleophthalmology service.

Two storage contracts back the service: a transactional record store
(accounts, sessions, predictions, appointments, the notification outbox, and
the activity log) and a content-addressed blob store with a metadata table
for uploaded images.  Both are served by one SQLite file plus a blob
directory, so the whole service runs without external servers; swapping in
client/server databases only means re-implementing this module's surface.

Connections are short-lived (one per operation) with WAL journaling, so
concurrent request handlers serialize on writes without blocking reads.
"""

from __future__ import annotations

import hashlib
import sqlite3
from pathlib import Path

__all__ = ["RecordStore", "BlobStore"]

_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    email TEXT NOT NULL UNIQUE,
    full_name TEXT NOT NULL,
    role TEXT NOT NULL CHECK (role IN ('user', 'doctor', 'superadmin')),
    password_digest TEXT NOT NULL,
    age INTEGER,
    location TEXT,
    telephone TEXT,
    doctor_status TEXT NOT NULL DEFAULT 'n/a',
    removed INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tokens (
    token TEXT PRIMARY KEY,
    user_id INTEGER NOT NULL REFERENCES users(id),
    role TEXT NOT NULL,
    expires_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS predictions (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id INTEGER NOT NULL REFERENCES users(id),
    first_eye INTEGER NOT NULL,
    second_eye INTEGER NOT NULL,
    ts TEXT NOT NULL,
    left_image_ref TEXT NOT NULL,
    right_image_ref TEXT NOT NULL,
    model_id TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS appointments (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id INTEGER NOT NULL REFERENCES users(id),
    doctor_id INTEGER NOT NULL REFERENCES users(id),
    scheduled_at TEXT NOT NULL,
    status TEXT NOT NULL CHECK (status IN ('Booked', 'Cancelled')),
    cancelled_by TEXT
);
CREATE TABLE IF NOT EXISTS notifications (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    recipient TEXT NOT NULL,
    kind TEXT NOT NULL,
    body TEXT NOT NULL,
    created_at TEXT NOT NULL,
    delivery_state TEXT NOT NULL DEFAULT 'Spooled'
);
CREATE TABLE IF NOT EXISTS activity (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    ts TEXT NOT NULL,
    actor_id INTEGER,
    kind TEXT NOT NULL,
    details TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS blobs (
    ref TEXT PRIMARY KEY,
    size INTEGER NOT NULL,
    content_type TEXT,
    created_at TEXT NOT NULL
);
"""


class RecordStore:
    """Transactional record store over a single SQLite database file."""

    def __init__(self, db_path: str | Path):
        self.db_path = str(db_path)
        with self.connect() as conn:
            conn.executescript(_SCHEMA)

    def connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path, timeout=30.0)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA foreign_keys=ON")
        return conn


class BlobStore:
    """Content-addressed image payloads plus a metadata row per blob."""

    def __init__(self, records: RecordStore, root: str | Path):
        self.records = records
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, payload: bytes, content_type: str, created_at: str) -> str:
        ref = hashlib.sha256(payload).hexdigest()
        path = self.root / ref
        if not path.exists():
            path.write_bytes(payload)
        with self.records.connect() as conn:
            conn.execute(
                "INSERT OR IGNORE INTO blobs (ref, size, content_type, created_at)"
                " VALUES (?, ?, ?, ?)",
                (ref, len(payload), content_type, created_at),
            )
        return ref

    def get(self, ref: str) -> bytes:
        path = self.root / ref
        if not path.is_file():
            raise FileNotFoundError(f"blob {ref} missing")
        return path.read_bytes()

    def exists(self, ref: str) -> bool:
        return (self.root / ref).is_file()
