"""End-to-end walkthrough of the teleophthalmology service, in process.

Trains and quantizes a model, boots the service against a scratch data
directory, then plays through the patient journey: register, log in, upload
an eye pair, read history, book and cancel an appointment, download the PDF
report.  Finishes with the doctor-approval and oversight flows.
"""

import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from drscreen.imaging import PlaneTensor, denormalize, encode_ppm
from drscreen.nn import TrainConfig, micro_config, train
from drscreen.quant import quantize_model
from drscreen.service import ServiceCore, create_app
from drscreen.synthetic import generate_arrays

x, y = generate_arrays(200, 32, seed=7)
config = micro_config()
_, params = train(config, TrainConfig(epochs=10, seed=3), x[:150], y[:150], x[150:], y[150:])
qmodel = quantize_model(config, params, [x[:64]])

workdir = Path(tempfile.mkdtemp(prefix="drscreen-demo-"))
core = ServiceCore(workdir, model=qmodel)
core.create_superadmin("Admin", "admin@example.org", "super-secret-9")
client = TestClient(create_app(core))
print(f"service data directory: {workdir}")


def eye(idx):
    big, _ = generate_arrays(idx + 1, 96, seed=42)
    return encode_ppm(denormalize(PlaneTensor(np.ascontiguousarray(big[idx].transpose(1, 2, 0)))))


client.post(
    "/api/v1/auth/register",
    json={
        "full_name": "Akosua Mensah",
        "email": "akosua@example.org",
        "password": "sunflower-42",
        "age": 35,
        "location": "Ghana",
        "telephone": "0247592931",
    },
)
token = client.post(
    "/api/v1/auth/login", json={"email": "akosua@example.org", "password": "sunflower-42"}
).json()["token"]
hdr = {"Authorization": f"Bearer {token}"}
print("patient registered and logged in")

pred = client.post(
    "/api/v1/predictions",
    files={"left_eye": ("left.ppm", eye(0)), "right_eye": ("right.ppm", eye(1))},
    headers=hdr,
).json()
print(f"prediction: first eye {pred['first_eye']}, second eye {pred['second_eye']}"
      f" at {pred['timestamp']}")

admin = client.post(
    "/api/v1/auth/login", json={"email": "admin@example.org", "password": "super-secret-9"}
).json()["token"]
ahdr = {"Authorization": f"Bearer {admin}"}

doc = client.post(
    "/api/v1/auth/register",
    json={
        "full_name": "Dr. Abuka Yaw",
        "email": "abuka@example.org",
        "password": "ret-ina-2030",
        "role": "doctor",
    },
).json()
client.post(f"/api/v1/admin/doctors/{doc['id']}/approve", headers=ahdr)
print("doctor registered and approved by the super admin")

appt = client.post(
    "/api/v1/appointments",
    json={"doctor_id": doc["id"], "scheduled_at": "2031-01-15 12:00:00"},
    headers=hdr,
).json()
print(f"appointment #{appt['id']} booked for {appt['scheduled_at']}")

client.delete(f"/api/v1/appointments/{appt['id']}", headers=hdr)
outbox = core.spooled_notifications()
print(f"outbox: {[(n['kind'], n['recipient']) for n in outbox]}")

report = client.get(f"/api/v1/reports/{pred['user_id']}", headers=hdr)
pdf_path = workdir / "report.pdf"
pdf_path.write_bytes(report.content)
print(f"PDF report ({len(report.content)} bytes) saved to {pdf_path}")

activity = client.get("/api/v1/admin/activity", headers=ahdr).json()
print("admin activity log kinds:", [a["kind"] for a in activity])
