"""HTTP surface for the screening service, all under /api/v1.

Handlers are synchronous and run in the framework's thread pool, so a slow
prediction never blocks acceptance of other requests; the store serializes
writes internally.

Error contract: domain failures map to JSON {code, message[, field]} with
statuses 400/401/403/404/409 (503 when no model is loaded).  Missing or bad
tokens give 401; an authenticated caller hitting a road it lacks gives 403.
"""

from __future__ import annotations

from fastapi import Depends, FastAPI, File, Header, Query, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .core import ServiceCore, ServiceError

__all__ = ["create_app"]


class RegisterBody(BaseModel):
    full_name: str
    email: str
    password: str
    role: str = "user"
    age: int | None = None
    location: str | None = None
    telephone: str | None = None


class LoginBody(BaseModel):
    email: str
    password: str


class AppointmentBody(BaseModel):
    doctor_id: int
    scheduled_at: str


def _bearer(authorization: str | None) -> str | None:
    if authorization and authorization.startswith("Bearer "):
        return authorization[len("Bearer ") :]
    return None


def create_app(core: ServiceCore) -> FastAPI:
    app = FastAPI(title="drscreen service", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    def service_error(_: Request, exc: ServiceError):
        body = {"code": exc.code, "message": exc.message}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=exc.http_status, content=body)

    def token_from(authorization: str | None = Header(default=None)) -> str | None:
        return _bearer(authorization)

    @app.post("/api/v1/auth/register", status_code=201)
    def register(body: RegisterBody):
        return core.register(
            body.full_name,
            body.email,
            body.password,
            body.role,
            body.age,
            body.location,
            body.telephone,
        )

    @app.post("/api/v1/auth/login")
    def login(body: LoginBody):
        return core.login(body.email, body.password)

    @app.post("/api/v1/predictions", status_code=201)
    def predict(
        left_eye: UploadFile | None = File(default=None),
        right_eye: UploadFile | None = File(default=None),
        token: str | None = Depends(token_from),
    ):
        # authenticate before complaining about missing slots
        core.authenticate(token)
        for slot, upload in (("left_eye", left_eye), ("right_eye", right_eye)):
            if upload is None:
                raise ServiceError("bad_image", f"{slot} file is missing", 400, slot)
        return core.predict_pair(token, left_eye.file.read(), right_eye.file.read())

    @app.get("/api/v1/predictions")
    def history(
        start: str | None = Query(default=None),
        end: str | None = Query(default=None),
        user_id: int | None = Query(default=None),
        token: str | None = Depends(token_from),
    ):
        return core.history(token, start, end, user_id=user_id)

    @app.get("/api/v1/doctors")
    def doctors(token: str | None = Depends(token_from)):
        return core.list_doctors(token)

    @app.post("/api/v1/appointments", status_code=201)
    def book(body: AppointmentBody, token: str | None = Depends(token_from)):
        return core.book_appointment(token, body.doctor_id, body.scheduled_at)

    @app.get("/api/v1/appointments")
    def appointments(token: str | None = Depends(token_from)):
        return core.list_appointments(token)

    @app.delete("/api/v1/appointments/{appointment_id}")
    def cancel(appointment_id: int, token: str | None = Depends(token_from)):
        return core.cancel_appointment(token, appointment_id)

    @app.get("/api/v1/reports/{user_id}")
    def report(
        user_id: int,
        start: str | None = Query(default=None),
        end: str | None = Query(default=None),
        format: str = Query(default="pdf"),
        token: str | None = Depends(token_from),
    ):
        pdf, doc = core.generate_report(token, user_id, start, end)
        if format == "json":
            return JSONResponse(content=doc)
        return Response(content=pdf, media_type="application/pdf")

    @app.post("/api/v1/admin/doctors/{doctor_id}/approve")
    def approve(doctor_id: int, token: str | None = Depends(token_from)):
        return core.approve_doctor(token, doctor_id)

    @app.get("/api/v1/admin/users")
    def users(token: str | None = Depends(token_from)):
        return core.list_users(token)

    @app.delete("/api/v1/admin/users/{user_id}")
    def remove(user_id: int, token: str | None = Depends(token_from)):
        return core.remove_user(token, user_id)

    @app.get("/api/v1/admin/activity")
    def activity(token: str | None = Depends(token_from)):
        return core.list_activity(token)

    return app
