"""Domain logic for the screening service: accounts and roles, bearer
sessions, paired-eye prediction, history, appointments with an email outbox,
report generation, and super-admin controls.

Three roles exist.  Users screen their own eyes and manage their own
records; doctors see only patients they hold an appointment with and must be
approved by the super admin before they can even log in; the super admin
oversees everything.  Every state change lands in the activity log.

The wall clock is injectable so tests can freeze it; all timestamps are UTC
rendered as "YYYY-MM-DD HH:MM:SS".
"""

from __future__ import annotations

import hashlib
import json
import re
import secrets
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Callable

from ..dataset import Severity
from ..imaging import ImagingError, PreprocessConfig, decode_image, preprocess
from ..quant import QuantizedModel, qforward
from .pdfgen import render_text_pdf
from .store import BlobStore, RecordStore

__all__ = ["ServiceCore", "ServiceError", "TS_FORMAT"]

TS_FORMAT = "%Y-%m-%d %H:%M:%S"

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_PBKDF2_ITERS = 60_000
_TOKEN_TTL = timedelta(hours=24)
_MIN_IMAGE_DIM = 64


class ServiceError(Exception):
    """Domain error carrying the wire code and HTTP status."""

    def __init__(self, code: str, message: str, http_status: int, field: str | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.http_status = http_status
        self.field = field


def _err(code: str, message: str, status: int, field: str | None = None) -> ServiceError:
    return ServiceError(code, message, status, field)


def _hash_password(password: str, salt: bytes | None = None) -> str:
    salt = salt if salt is not None else secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode(), salt, _PBKDF2_ITERS)
    return f"pbkdf2_sha256${_PBKDF2_ITERS}${salt.hex()}${digest.hex()}"


def _verify_password(password: str, stored: str) -> bool:
    try:
        alg, iters, salt_hex, hash_hex = stored.split("$")
        if alg != "pbkdf2_sha256":
            return False
        digest = hashlib.pbkdf2_hmac(
            "sha256", password.encode(), bytes.fromhex(salt_hex), int(iters)
        )
        return secrets.compare_digest(digest.hex(), hash_hex)
    except (ValueError, TypeError):
        return False


@dataclass(frozen=True)
class Session:
    user_id: int
    role: str
    email: str
    full_name: str


def _parse_date(text: str | None, field: str) -> date | None:
    if text is None or text == "":
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise _err("invalid_range", f"{field} must be YYYY-MM-DD", 400, field) from None


class ServiceCore:
    def __init__(
        self,
        data_dir: str | Path,
        model: QuantizedModel | None = None,
        clock: Callable[[], datetime] | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.records = RecordStore(self.data_dir / "records.sqlite3")
        self.blobs = BlobStore(self.records, self.data_dir / "blobs")
        self.model = model
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.preprocess_cfg: PreprocessConfig | None = None

    # -- time helpers -----------------------------------------------------
    def _now(self) -> datetime:
        now = self.clock()
        if now.tzinfo is None:
            now = now.replace(tzinfo=timezone.utc)
        return now.astimezone(timezone.utc).replace(microsecond=0)

    def _now_str(self) -> str:
        return self._now().strftime(TS_FORMAT)

    # -- accounts ----------------------------------------------------------
    def register(
        self,
        full_name: str,
        email: str,
        password: str,
        role: str = "user",
        age: int | None = None,
        location: str | None = None,
        telephone: str | None = None,
    ) -> dict:
        if role not in ("user", "doctor"):
            raise _err("invalid_field", "role must be user or doctor", 400, "role")
        if not full_name or not full_name.strip():
            raise _err("invalid_field", "full_name is required", 400, "full_name")
        if not _EMAIL_RE.match(email or ""):
            raise _err("invalid_field", "email address is not valid", 400, "email")
        if len(password or "") < 8:
            raise _err("weak_password", "password must be at least 8 characters", 400)
        if age is not None and not (0 < int(age) < 150):
            raise _err("invalid_field", "age must be a positive number", 400, "age")

        status = "PendingApproval" if role == "doctor" else "n/a"
        with self.records.connect() as conn:
            row = conn.execute(
                "SELECT id FROM users WHERE email = ?", (email,)
            ).fetchone()
            if row is not None:
                raise _err("email_taken", "an account with this email already exists", 409)
            cur = conn.execute(
                "INSERT INTO users (email, full_name, role, password_digest, age,"
                " location, telephone, doctor_status, created_at)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    email,
                    full_name.strip(),
                    role,
                    _hash_password(password),
                    age,
                    location,
                    telephone,
                    status,
                    self._now_str(),
                ),
            )
            user_id = cur.lastrowid
            conn.execute(
                "INSERT INTO activity (ts, actor_id, kind, details) VALUES (?, ?, ?, ?)",
                (self._now_str(), user_id, "register", json.dumps({"role": role})),
            )
        return {"id": user_id, "email": email, "role": role, "doctor_status": status}

    def create_superadmin(self, full_name: str, email: str, password: str) -> dict:
        """Bootstrap path (CLI/config); not reachable over the HTTP API."""
        if not _EMAIL_RE.match(email or ""):
            raise _err("invalid_field", "email address is not valid", 400, "email")
        if len(password or "") < 8:
            raise _err("weak_password", "password must be at least 8 characters", 400)
        with self.records.connect() as conn:
            row = conn.execute("SELECT id FROM users WHERE email = ?", (email,)).fetchone()
            if row is not None:
                raise _err("email_taken", "an account with this email already exists", 409)
            cur = conn.execute(
                "INSERT INTO users (email, full_name, role, password_digest,"
                " doctor_status, created_at) VALUES (?, ?, 'superadmin', ?, 'n/a', ?)",
                (email, full_name, _hash_password(password), self._now_str()),
            )
            return {"id": cur.lastrowid, "email": email, "role": "superadmin"}

    def login(self, email: str, password: str) -> dict:
        with self.records.connect() as conn:
            row = conn.execute(
                "SELECT * FROM users WHERE email = ? AND removed = 0", (email,)
            ).fetchone()
            # uniform failure for unknown email vs wrong password
            if row is None or not _verify_password(password, row["password_digest"]):
                raise _err("bad_credentials", "email or password is incorrect", 401)
            if row["role"] == "doctor" and row["doctor_status"] != "Approved":
                raise _err(
                    "doctor_not_approved",
                    "doctor account is awaiting super-admin approval",
                    403,
                )
            token = secrets.token_hex(32)
            expires = (self._now() + _TOKEN_TTL).strftime(TS_FORMAT)
            conn.execute(
                "INSERT INTO tokens (token, user_id, role, expires_at) VALUES (?, ?, ?, ?)",
                (token, row["id"], row["role"], expires),
            )
        return {"token": token, "role": row["role"], "full_name": row["full_name"]}

    def authenticate(self, token: str | None) -> Session:
        if not token:
            raise _err("unauthorized", "authentication required", 401)
        with self.records.connect() as conn:
            row = conn.execute(
                "SELECT t.user_id, t.role, t.expires_at, u.email, u.full_name, u.removed"
                " FROM tokens t JOIN users u ON u.id = t.user_id WHERE t.token = ?",
                (token,),
            ).fetchone()
            if row is None or row["removed"]:
                raise _err("unauthorized", "invalid or revoked token", 401)
            if row["expires_at"] < self._now_str():
                raise _err("token_expired", "session has expired", 401)
        return Session(row["user_id"], row["role"], row["email"], row["full_name"])

    def _require_role(self, session: Session, *roles: str) -> None:
        if session.role not in roles:
            raise _err("forbidden", f"requires role in {roles}", 403)

    # -- prediction --------------------------------------------------------
    def _run_eye(self, payload: bytes, which: str) -> tuple[Severity, bytes]:
        if not payload:
            raise _err("bad_image", f"{which} image is empty", 400, which)
        try:
            raster = decode_image(payload)
        except ImagingError as exc:
            raise _err("bad_image", f"{which} image: {exc}", 400, which) from exc
        if raster.width < _MIN_IMAGE_DIM or raster.height < _MIN_IMAGE_DIM:
            raise _err(
                "bad_image",
                f"{which} image must be at least {_MIN_IMAGE_DIM}x{_MIN_IMAGE_DIM}",
                400,
                which,
            )
        cfg = self.preprocess_cfg
        if cfg is None:
            _, h, w = self.model.config.input_shape
            cfg = PreprocessConfig(target_width=w, target_height=h)
        plane = preprocess(raster, cfg)
        _, severity = qforward(self.model, plane)
        return severity, payload

    def predict_pair(self, token: str, left_image: bytes, right_image: bytes) -> dict:
        session = self.authenticate(token)
        self._require_role(session, "user")
        if self.model is None:
            raise _err("model_unavailable", "no model is loaded", 503)
        # validate and classify both eyes before anything is persisted
        first_eye, _ = self._run_eye(left_image, "left_eye")
        second_eye, _ = self._run_eye(right_image, "right_eye")

        now = self._now_str()
        left_ref = self.blobs.put(left_image, "image", now)
        right_ref = self.blobs.put(right_image, "image", now)
        with self.records.connect() as conn:
            cur = conn.execute(
                "INSERT INTO predictions (user_id, first_eye, second_eye, ts,"
                " left_image_ref, right_image_ref, model_id) VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    session.user_id,
                    int(first_eye),
                    int(second_eye),
                    now,
                    left_ref,
                    right_ref,
                    self.model.model_id,
                ),
            )
            pred_id = cur.lastrowid
            conn.execute(
                "INSERT INTO activity (ts, actor_id, kind, details) VALUES (?, ?, ?, ?)",
                (
                    now,
                    session.user_id,
                    "prediction",
                    json.dumps({"prediction_id": pred_id}),
                ),
            )
        return self._prediction_dict(pred_id)

    def _prediction_dict(self, pred_id: int) -> dict:
        with self.records.connect() as conn:
            row = conn.execute("SELECT * FROM predictions WHERE id = ?", (pred_id,)).fetchone()
        return self._prediction_row_dict(row)

    @staticmethod
    def _prediction_row_dict(row) -> dict:
        return {
            "id": row["id"],
            "user_id": row["user_id"],
            "first_eye": Severity(row["first_eye"]).display,
            "second_eye": Severity(row["second_eye"]).display,
            "timestamp": row["ts"],
            "left_image_ref": row["left_image_ref"],
            "right_image_ref": row["right_image_ref"],
            "model_id": row["model_id"],
        }

    # -- history and reports -------------------------------------------------
    def _check_record_access(self, session: Session, owner_id: int) -> None:
        if session.role == "superadmin":
            return
        with self.records.connect() as conn:
            owner = conn.execute(
                "SELECT removed FROM users WHERE id = ?", (owner_id,)
            ).fetchone()
        # soft-deleted accounts are invisible outside the admin view
        if owner is None or owner["removed"]:
            raise _err("not_found", "no such user", 404)
        if session.user_id == owner_id:
            return
        if session.role == "doctor":
            with self.records.connect() as conn:
                row = conn.execute(
                    "SELECT 1 FROM appointments WHERE doctor_id = ? AND user_id = ?",
                    (session.user_id, owner_id),
                ).fetchone()
            if row is not None:
                return
            raise _err("forbidden", "no appointment links you to this patient", 403)
        raise _err("forbidden", "you may only view your own records", 403)

    def history(
        self,
        token: str,
        start: str | None = None,
        end: str | None = None,
        user_id: int | None = None,
    ) -> list[dict]:
        session = self.authenticate(token)
        target = user_id if user_id is not None else session.user_id
        self._check_record_access(session, target)
        start_d = _parse_date(start, "start")
        end_d = _parse_date(end, "end")
        if start_d and end_d and start_d > end_d:
            raise _err("invalid_range", "start date is after end date", 400)
        with self.records.connect() as conn:
            rows = conn.execute(
                "SELECT * FROM predictions WHERE user_id = ? ORDER BY ts DESC, id DESC",
                (target,),
            ).fetchall()
        out = []
        for row in rows:
            day = date.fromisoformat(row["ts"][:10])
            if start_d and day < start_d:
                continue
            if end_d and day > end_d:
                continue
            out.append(self._prediction_row_dict(row))
        return out

    def generate_report(
        self,
        token: str,
        user_id: int,
        start: str | None = None,
        end: str | None = None,
    ) -> tuple[bytes, dict]:
        """Returns (pdf_bytes, json_twin); identical inputs produce identical
        bytes (the clock only matters through the stored records)."""
        records = self.history(token, start, end, user_id=user_id)
        with self.records.connect() as conn:
            user = conn.execute("SELECT * FROM users WHERE id = ?", (user_id,)).fetchone()
        if user is None:
            raise _err("not_found", "no such user", 404)

        doc = {
            "title": "Diabetic Retinopathy Report",
            "patient": {
                "name": user["full_name"],
                "age": user["age"],
                "email": user["email"],
                "location": user["location"],
                "telephone": user["telephone"],
            },
            "start_date": start,
            "end_date": end,
            "records": [
                {
                    "first_eye": r["first_eye"],
                    "second_eye": r["second_eye"],
                    "timestamp": r["timestamp"],
                }
                for r in records
            ],
        }
        lines = [
            "Diabetic Retinopathy Report",
            f"Name: {user['full_name']}",
            f"Age: {user['age'] if user['age'] is not None else '-'}",
            f"Email: {user['email']}",
            f"Location: {user['location'] or '-'}",
            f"Telephone: {user['telephone'] or '-'}",
            "",
            f"Prediction Results ({start or 'any'} to {end or 'any'}):",
        ]
        if not records:
            lines.append("  (no records in range)")
        for r in records:
            lines.append(f"  First Eye: {r['first_eye']}")
            lines.append(f"  Second Eye: {r['second_eye']}")
            lines.append(f"  -> Timestamp: {r['timestamp']}")
        return render_text_pdf(lines), doc

    # -- appointments --------------------------------------------------------
    def list_doctors(self, token: str) -> list[dict]:
        self.authenticate(token)
        with self.records.connect() as conn:
            rows = conn.execute(
                "SELECT id, full_name, email FROM users WHERE role = 'doctor'"
                " AND doctor_status = 'Approved' AND removed = 0 ORDER BY id"
            ).fetchall()
        return [dict(r) for r in rows]

    def book_appointment(self, token: str, doctor_id: int, scheduled_at: str) -> dict:
        session = self.authenticate(token)
        self._require_role(session, "user")
        try:
            when = datetime.strptime(scheduled_at, TS_FORMAT).replace(tzinfo=timezone.utc)
        except ValueError:
            raise _err(
                "invalid_field", f"scheduled_at must be '{TS_FORMAT}'", 400, "scheduled_at"
            ) from None
        if when <= self._now():
            raise _err("past_date", "appointments must be scheduled in the future", 400)
        with self.records.connect() as conn:
            doctor = conn.execute(
                "SELECT * FROM users WHERE id = ? AND role = 'doctor' AND removed = 0",
                (doctor_id,),
            ).fetchone()
            if doctor is None:
                raise _err("doctor_not_found", "no such doctor", 404)
            if doctor["doctor_status"] != "Approved":
                raise _err("doctor_not_approved", "doctor is not approved", 403)
            now = self._now_str()
            cur = conn.execute(
                "INSERT INTO appointments (user_id, doctor_id, scheduled_at, status)"
                " VALUES (?, ?, ?, 'Booked')",
                (session.user_id, doctor_id, when.strftime(TS_FORMAT)),
            )
            appt_id = cur.lastrowid
            body = (
                f"Your appointment with {doctor['full_name']} on"
                f" {when.strftime(TS_FORMAT)} is confirmed (booking #{appt_id})."
            )
            conn.execute(
                "INSERT INTO notifications (recipient, kind, body, created_at)"
                " VALUES (?, 'BookingConfirmation', ?, ?)",
                (session.email, body, now),
            )
            conn.execute(
                "INSERT INTO activity (ts, actor_id, kind, details) VALUES (?, ?, ?, ?)",
                (now, session.user_id, "appointment_booked", json.dumps({"id": appt_id})),
            )
        return self._appointment_dict(appt_id)

    def _appointment_dict(self, appt_id: int) -> dict:
        with self.records.connect() as conn:
            row = conn.execute("SELECT * FROM appointments WHERE id = ?", (appt_id,)).fetchone()
        return {
            "id": row["id"],
            "user_id": row["user_id"],
            "doctor_id": row["doctor_id"],
            "scheduled_at": row["scheduled_at"],
            "status": row["status"],
            "cancelled_by": row["cancelled_by"],
        }

    def list_appointments(self, token: str) -> list[dict]:
        session = self.authenticate(token)
        clauses = {"user": "user_id = ?", "doctor": "doctor_id = ?"}
        with self.records.connect() as conn:
            if session.role == "superadmin":
                rows = conn.execute("SELECT id FROM appointments ORDER BY id").fetchall()
            else:
                rows = conn.execute(
                    f"SELECT id FROM appointments WHERE {clauses[session.role]} ORDER BY id",
                    (session.user_id,),
                ).fetchall()
        return [self._appointment_dict(r["id"]) for r in rows]

    def cancel_appointment(self, token: str, appointment_id: int) -> dict:
        session = self.authenticate(token)
        with self.records.connect() as conn:
            row = conn.execute(
                "SELECT * FROM appointments WHERE id = ?", (appointment_id,)
            ).fetchone()
            if row is None:
                raise _err("not_found", "no such appointment", 404)
            allowed = (
                session.role == "superadmin"
                or (session.role == "user" and row["user_id"] == session.user_id)
                or (session.role == "doctor" and row["doctor_id"] == session.user_id)
            )
            if not allowed:
                raise _err("forbidden", "not your appointment", 403)
            if row["status"] == "Cancelled":
                raise _err("already_cancelled", "appointment is already cancelled", 409)

            cancelled_by = {"user": "User", "doctor": "Doctor", "superadmin": "SuperAdmin"}[
                session.role
            ]
            now = self._now_str()
            conn.execute(
                "UPDATE appointments SET status = 'Cancelled', cancelled_by = ? WHERE id = ?",
                (cancelled_by, appointment_id),
            )
            patient = conn.execute(
                "SELECT email FROM users WHERE id = ?", (row["user_id"],)
            ).fetchone()
            body = (
                f"Your appointment #{appointment_id} on {row['scheduled_at']}"
                f" was cancelled by {cancelled_by}."
            )
            conn.execute(
                "INSERT INTO notifications (recipient, kind, body, created_at)"
                " VALUES (?, 'CancellationNotice', ?, ?)",
                (patient["email"], body, now),
            )
            if cancelled_by == "SuperAdmin":
                doctor = conn.execute(
                    "SELECT email FROM users WHERE id = ?", (row["doctor_id"],)
                ).fetchone()
                conn.execute(
                    "INSERT INTO notifications (recipient, kind, body, created_at)"
                    " VALUES (?, 'CancellationNotice', ?, ?)",
                    (
                        doctor["email"],
                        f"Appointment #{appointment_id} on {row['scheduled_at']}"
                        " was cancelled by the administrator.",
                        now,
                    ),
                )
            conn.execute(
                "INSERT INTO activity (ts, actor_id, kind, details) VALUES (?, ?, ?, ?)",
                (
                    now,
                    session.user_id,
                    "appointment_cancelled",
                    json.dumps({"id": appointment_id, "by": cancelled_by}),
                ),
            )
        return self._appointment_dict(appointment_id)

    # -- admin ---------------------------------------------------------------
    def list_users(self, token: str) -> list[dict]:
        session = self.authenticate(token)
        self._require_role(session, "superadmin")
        with self.records.connect() as conn:
            rows = conn.execute(
                "SELECT id, email, full_name, role, doctor_status, removed FROM users"
                " ORDER BY id"
            ).fetchall()
        return [dict(r) for r in rows]

    def approve_doctor(self, token: str, doctor_id: int) -> dict:
        session = self.authenticate(token)
        self._require_role(session, "superadmin")
        with self.records.connect() as conn:
            row = conn.execute(
                "SELECT * FROM users WHERE id = ? AND role = 'doctor' AND removed = 0",
                (doctor_id,),
            ).fetchone()
            if row is None:
                raise _err("not_found", "no such doctor", 404)
            if row["doctor_status"] == "Approved":
                raise _err("already_approved", "doctor is already approved", 409)
            conn.execute(
                "UPDATE users SET doctor_status = 'Approved' WHERE id = ?", (doctor_id,)
            )
            conn.execute(
                "INSERT INTO activity (ts, actor_id, kind, details) VALUES (?, ?, ?, ?)",
                (
                    self._now_str(),
                    session.user_id,
                    "doctor_approved",
                    json.dumps({"doctor_id": doctor_id}),
                ),
            )
        return {"id": doctor_id, "doctor_status": "Approved"}

    def remove_user(self, token: str, user_id: int) -> dict:
        session = self.authenticate(token)
        self._require_role(session, "superadmin")
        with self.records.connect() as conn:
            row = conn.execute(
                "SELECT * FROM users WHERE id = ? AND removed = 0", (user_id,)
            ).fetchone()
            if row is None:
                raise _err("not_found", "no such user", 404)
            conn.execute("UPDATE users SET removed = 1 WHERE id = ?", (user_id,))
            conn.execute("DELETE FROM tokens WHERE user_id = ?", (user_id,))
            conn.execute(
                "INSERT INTO activity (ts, actor_id, kind, details) VALUES (?, ?, ?, ?)",
                (
                    self._now_str(),
                    session.user_id,
                    "user_removed",
                    json.dumps({"user_id": user_id}),
                ),
            )
        return {"id": user_id, "removed": True}

    def list_activity(self, token: str) -> list[dict]:
        session = self.authenticate(token)
        self._require_role(session, "superadmin")
        with self.records.connect() as conn:
            rows = conn.execute(
                "SELECT id, ts, actor_id, kind, details FROM activity ORDER BY id"
            ).fetchall()
        return [dict(r) for r in rows]

    # -- outbox ----------------------------------------------------------------
    def spooled_notifications(self, kind: str | None = None) -> list[dict]:
        with self.records.connect() as conn:
            if kind:
                rows = conn.execute(
                    "SELECT * FROM notifications WHERE kind = ? ORDER BY id", (kind,)
                ).fetchall()
            else:
                rows = conn.execute("SELECT * FROM notifications ORDER BY id").fetchall()
        return [dict(r) for r in rows]

    def drain_outbox(self, transport: Callable[[str, str, str], None]) -> int:
        """Hand spooled notifications to a transport callable
        (recipient, subject, body); marks Sent/Failed.  Returns sent count."""
        sent = 0
        with self.records.connect() as conn:
            rows = conn.execute(
                "SELECT * FROM notifications WHERE delivery_state = 'Spooled' ORDER BY id"
            ).fetchall()
        for row in rows:
            subject = {
                "BookingConfirmation": "Appointment confirmation",
                "CancellationNotice": "Appointment cancellation",
            }.get(row["kind"], row["kind"])
            try:
                transport(row["recipient"], subject, row["body"])
                state = "Sent"
                sent += 1
            except Exception:
                state = "Failed"
            with self.records.connect() as conn:
                conn.execute(
                    "UPDATE notifications SET delivery_state = ? WHERE id = ?",
                    (state, row["id"]),
                )
        return sent
