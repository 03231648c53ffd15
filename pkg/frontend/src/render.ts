// Pure view builders: data in, HTML string out. Keeping these free of DOM
// and network access is what lets the UI contract be unit-tested.

import type { Appointment, DoctorSummary, PredictionRecord, AccountSummary } from "./api.js";
import { severityClass } from "./severity.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function grade(label: string): string {
  return `<span class="${severityClass(label)}">${escapeHtml(label)}</span>`;
}

/** Result card shown after Check completes; labels come from the service
 * response untouched. */
export function renderPrediction(record: PredictionRecord): string {
  return [
    '<div class="prediction-card">',
    `  <p>First Eye: ${grade(record.first_eye)}</p>`,
    `  <p>Second Eye: ${grade(record.second_eye)}</p>`,
    `  <p class="timestamp">Timestamp: ${escapeHtml(record.timestamp)}</p>`,
    "</div>",
  ].join("\n");
}

export function renderHistory(records: PredictionRecord[]): string {
  if (records.length === 0) {
    return '<p class="empty">No prediction records in this range.</p>';
  }
  const rows = records
    .map(
      (r) =>
        `<tr><td>${grade(r.first_eye)}</td><td>${grade(r.second_eye)}</td>` +
        `<td>${escapeHtml(r.timestamp)}</td></tr>`,
    )
    .join("");
  return (
    '<table class="history"><thead><tr>' +
    "<th>First Eye</th><th>Second Eye</th><th>Timestamp</th>" +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

/** Appointment table; doctors and admins get View/Download/Cancel actions,
 * patients get Cancel on their still-booked rows. */
export function renderAppointments(
  appointments: Appointment[],
  viewerRole: "user" | "doctor" | "superadmin",
): string {
  if (appointments.length === 0) {
    return '<p class="empty">No appointments.</p>';
  }
  const rows = appointments
    .map((a) => {
      const actions: string[] = [];
      if (viewerRole !== "user") {
        actions.push(`<button data-action="view" data-id="${a.id}">View Details</button>`);
        actions.push(
          `<button data-action="download" data-id="${a.id}" data-user="${a.user_id}">Download Report</button>`,
        );
      }
      if (a.status === "Booked") {
        actions.push(`<button data-action="cancel" data-id="${a.id}">Cancel</button>`);
      }
      return (
        `<tr><td>${a.id}</td><td>${escapeHtml(a.scheduled_at)}</td>` +
        `<td class="status-${a.status.toLowerCase()}">${a.status}</td>` +
        `<td>${actions.join(" ")}</td></tr>`
      );
    })
    .join("");
  return (
    '<table class="appointments"><thead><tr>' +
    "<th>ID</th><th>Appointment Date</th><th>Status</th><th>Actions</th>" +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderDoctorOptions(doctors: DoctorSummary[]): string {
  return doctors
    .map((d) => `<option value="${d.id}">${escapeHtml(d.full_name)}</option>`)
    .join("");
}

export function renderAdminUsers(users: AccountSummary[]): string {
  const rows = users
    .map((u) => {
      const actions: string[] = [];
      if (u.role === "doctor" && u.doctor_status === "PendingApproval") {
        actions.push(`<button data-action="approve" data-id="${u.id}">Approve</button>`);
      }
      if (!u.removed && u.role !== "superadmin") {
        actions.push(`<button data-action="remove" data-id="${u.id}">Remove</button>`);
      }
      const state = u.removed ? "removed" : u.doctor_status ?? "";
      return (
        `<tr><td>${u.id}</td><td>${escapeHtml(u.full_name ?? "")}</td>` +
        `<td>${escapeHtml(u.email)}</td><td>${escapeHtml(u.role)}</td>` +
        `<td>${escapeHtml(state)}</td><td>${actions.join(" ")}</td></tr>`
      );
    })
    .join("");
  return (
    '<table class="admin-users"><thead><tr>' +
    "<th>ID</th><th>Name</th><th>Email</th><th>Role</th><th>Status</th><th>Actions</th>" +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderActivity(
  entries: Array<{ id: number; ts: string; kind: string; details: string }>,
): string {
  if (entries.length === 0) return '<p class="empty">No activity yet.</p>';
  const rows = entries
    .map(
      (e) =>
        `<tr><td>${escapeHtml(e.ts)}</td><td>${escapeHtml(e.kind)}</td>` +
        `<td>${escapeHtml(e.details)}</td></tr>`,
    )
    .join("");
  return (
    '<table class="activity"><thead><tr><th>Time</th><th>Event</th><th>Details</th>' +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderErrorBanner(message: string): string {
  return `<div class="error-banner" role="alert">${escapeHtml(message)}</div>`;
}
