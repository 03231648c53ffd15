// Browser bootstrap: a small hash router plus form wiring over the pure
// modules. Everything testable lives in those modules; this file only
// touches the DOM.

import { ApiClient, ApiError, type EyeUpload } from "./api.js";
import { getConfig } from "./config.js";
import { userMessage } from "./errors.js";
import {
  renderAppointments,
  renderActivity,
  renderAdminUsers,
  renderDoctorOptions,
  renderErrorBanner,
  renderHistory,
  renderPrediction,
} from "./render.js";
import { guardRoute, homeRoute, type RouteName, ROUTE_NAMES } from "./routes.js";
import { SessionManager, type Role } from "./session.js";
import { checkUploadSlots, validateDateRange, type UploadSlots } from "./validation.js";

const sessions = new SessionManager();
const api = new ApiClient(getConfig().apiBaseUrl, {
  onUnauthorized: () => {
    sessions.clear();
    navigate("login");
  },
});

function el<T extends HTMLElement>(selector: string): T {
  const node = document.querySelector(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node as T;
}

function navigate(route: RouteName): void {
  window.location.hash = `#/${route}`;
}

function currentRoute(): RouteName {
  const raw = window.location.hash.replace(/^#\//, "") as RouteName;
  return (ROUTE_NAMES as readonly string[]).includes(raw) ? raw : homeRoute(sessions.current());
}

function showError(err: unknown): void {
  const banner = el<HTMLDivElement>("#messages");
  if (err instanceof ApiError) {
    banner.innerHTML = renderErrorBanner(userMessage(err.code, err.message, err.field));
  } else {
    banner.innerHTML = renderErrorBanner(String(err));
  }
}

function clearMessages(): void {
  el<HTMLDivElement>("#messages").innerHTML = "";
}

async function renderRoute(): Promise<void> {
  const session = sessions.current();
  api.setToken(session?.token ?? null);
  const route = guardRoute(currentRoute(), session);
  if (route !== currentRoute()) {
    navigate(route);
    return;
  }
  clearMessages();
  const view = el<HTMLDivElement>("#view");
  switch (route) {
    case "login":
      view.innerHTML = loginView();
      wireLogin();
      break;
    case "register":
      view.innerHTML = registerView();
      wireRegister();
      break;
    case "dashboard":
      view.innerHTML = dashboardView(session!.displayName);
      wireDashboard();
      break;
    case "history":
      view.innerHTML = historyView();
      await wireHistory();
      break;
    case "appointments":
      view.innerHTML = appointmentsView();
      await wireAppointments();
      break;
    case "report":
      view.innerHTML = reportView();
      wireReport();
      break;
    case "doctor":
      view.innerHTML = doctorView(session!.displayName);
      await wireDoctorDashboard();
      break;
    case "admin":
      view.innerHTML = adminView();
      await wireAdmin();
      break;
  }
}

// -- views -------------------------------------------------------------------

function loginView(): string {
  return `
    <h2>Log in</h2>
    <form id="login-form">
      <label>Email <input name="email" type="email" required></label>
      <label>Password <input name="password" type="password" required></label>
      <button type="submit">Login</button>
    </form>
    <p>No account? <a href="#/register">Register</a></p>`;
}

function registerView(): string {
  return `
    <h2>Register</h2>
    <form id="register-form">
      <label>Full name <input name="full_name" required></label>
      <label>Email <input name="email" type="email" required></label>
      <label>Password <input name="password" type="password" required></label>
      <label>Age <input name="age" type="number" min="1"></label>
      <label>Location <input name="location"></label>
      <label>Telephone <input name="telephone"></label>
      <label>Role
        <select name="role">
          <option value="user">Patient</option>
          <option value="doctor">Doctor (requires approval)</option>
        </select>
      </label>
      <button type="submit">Register</button>
    </form>
    <p>Have an account? <a href="#/login">Log in</a></p>`;
}

function dashboardView(name: string): string {
  return `
    <h2>Welcome, ${name}</h2>
    <section class="upload">
      <h3>Upload fundus images</h3>
      <label>Left eye <input id="left-eye" type="file" accept=".png,.jpg,.jpeg,.ppm"></label>
      <label>Right eye <input id="right-eye" type="file" accept=".png,.jpg,.jpeg,.ppm"></label>
      <p id="slot-message" class="inline-message"></p>
      <button id="check" disabled>Check</button>
      <div id="prediction-result"></div>
    </section>
    <nav>
      <a href="#/history">History</a> | <a href="#/appointments">Appointments</a> |
      <a href="#/report">Report</a>
    </nav>`;
}

function historyView(): string {
  return `
    <h2>Prediction history</h2>
    <form id="filter-form">
      <label>Start Date <input name="start" type="date"></label>
      <label>End Date <input name="end" type="date"></label>
      <button type="submit">Filter Results</button>
      <p id="filter-message" class="inline-message"></p>
    </form>
    <div id="history-rows"></div>
    <nav><a href="#/dashboard">Back</a></nav>`;
}

function appointmentsView(): string {
  return `
    <h2>Appointments</h2>
    <form id="book-form">
      <label>Doctor <select id="doctor-select"></select></label>
      <label>Date and time <input name="when" placeholder="YYYY-MM-DD HH:MM:SS" required></label>
      <button type="submit">Book</button>
    </form>
    <div id="appointment-rows"></div>
    <nav><a href="#/dashboard">Back</a></nav>`;
}

function reportView(): string {
  return `
    <h2>Diabetic Retinopathy Report</h2>
    <form id="report-form">
      <label>Start Date <input name="start" type="date"></label>
      <label>End Date <input name="end" type="date"></label>
      <button type="submit">Download PDF</button>
      <p id="report-message" class="inline-message"></p>
    </form>
    <nav><a href="#/dashboard">Back</a></nav>`;
}

function doctorView(name: string): string {
  return `
    <h2>Appointments for ${name}</h2>
    <div id="appointment-rows"></div>
    <div id="patient-history"></div>`;
}

function adminView(): string {
  return `
    <h2>Super Admin</h2>
    <section><h3>Users and doctors</h3><div id="admin-users"></div></section>
    <section><h3>Activity</h3><div id="admin-activity"></div></section>`;
}

// -- wiring -----------------------------------------------------------------

function formValues(form: HTMLFormElement): Record<string, string> {
  const data = new FormData(form);
  const out: Record<string, string> = {};
  data.forEach((value, key) => {
    if (typeof value === "string") out[key] = value;
  });
  return out;
}

function wireLogin(): void {
  el<HTMLFormElement>("#login-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    const values = formValues(event.target as HTMLFormElement);
    try {
      const result = await api.login(values.email, values.password);
      sessions.save({
        token: result.token,
        role: result.role as Role,
        displayName: result.full_name,
      });
      navigate(homeRoute(sessions.current()));
    } catch (err) {
      showError(err);
    }
  });
}

function wireRegister(): void {
  el<HTMLFormElement>("#register-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    const values = formValues(event.target as HTMLFormElement);
    try {
      await api.register({
        full_name: values.full_name,
        email: values.email,
        password: values.password,
        role: (values.role as "user" | "doctor") || "user",
        age: values.age ? Number(values.age) : undefined,
        location: values.location || undefined,
        telephone: values.telephone || undefined,
      });
      navigate("login");
    } catch (err) {
      showError(err);
    }
  });
}

function slotFrom(input: HTMLInputElement) {
  const file = input.files?.[0];
  return file ? { name: file.name, size: file.size, type: file.type } : undefined;
}

function wireDashboard(): void {
  const left = el<HTMLInputElement>("#left-eye");
  const right = el<HTMLInputElement>("#right-eye");
  const check = el<HTMLButtonElement>("#check");
  const message = el<HTMLParagraphElement>("#slot-message");

  const refresh = () => {
    const slots: UploadSlots = { left: slotFrom(left), right: slotFrom(right) };
    const outcome = checkUploadSlots(slots);
    check.disabled = !outcome.canSubmit || api.predictionPending;
    message.textContent = outcome.canSubmit ? "" : `${outcome.message} (${outcome.slot})`;
  };
  left.addEventListener("change", refresh);
  right.addEventListener("change", refresh);
  refresh();

  check.addEventListener("click", async () => {
    const leftFile = left.files?.[0];
    const rightFile = right.files?.[0];
    if (!leftFile || !rightFile) return;
    const uploads: [EyeUpload, EyeUpload] = [
      { name: leftFile.name, data: leftFile },
      { name: rightFile.name, data: rightFile },
    ];
    check.disabled = true; // one in-flight prediction at a time
    try {
      const record = await api.predictPair(uploads[0], uploads[1]);
      el<HTMLDivElement>("#prediction-result").innerHTML = renderPrediction(record);
    } catch (err) {
      showError(err);
    } finally {
      refresh();
    }
  });
}

async function wireHistory(): Promise<void> {
  const rows = el<HTMLDivElement>("#history-rows");
  const message = el<HTMLParagraphElement>("#filter-message");

  const load = async (start?: string, end?: string) => {
    const verdict = validateDateRange({ start, end });
    if (!verdict.valid) {
      message.textContent = verdict.error; // no request leaves the browser
      return;
    }
    message.textContent = "";
    try {
      rows.innerHTML = renderHistory(await api.history({ start, end }));
    } catch (err) {
      showError(err);
    }
  };

  el<HTMLFormElement>("#filter-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const values = formValues(event.target as HTMLFormElement);
    void load(values.start || undefined, values.end || undefined);
  });
  await load();
}

async function wireAppointments(): Promise<void> {
  const select = el<HTMLSelectElement>("#doctor-select");
  const rows = el<HTMLDivElement>("#appointment-rows");

  const reload = async () => {
    rows.innerHTML = renderAppointments(await api.appointments(), "user");
    rows.querySelectorAll("button[data-action='cancel']").forEach((button) => {
      button.addEventListener("click", async () => {
        try {
          await api.cancelAppointment(Number((button as HTMLElement).dataset.id));
          await reload();
        } catch (err) {
          showError(err);
        }
      });
    });
  };

  try {
    select.innerHTML = renderDoctorOptions(await api.doctors());
    await reload();
  } catch (err) {
    showError(err);
  }

  el<HTMLFormElement>("#book-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    const values = formValues(event.target as HTMLFormElement);
    try {
      await api.bookAppointment(Number(select.value), values.when);
      await reload();
    } catch (err) {
      showError(err);
    }
  });
}

function wireReport(): void {
  el<HTMLFormElement>("#report-form").addEventListener("submit", async (event) => {
    event.preventDefault();
    const values = formValues(event.target as HTMLFormElement);
    const verdict = validateDateRange({
      start: values.start || undefined,
      end: values.end || undefined,
    });
    const message = el<HTMLParagraphElement>("#report-message");
    if (!verdict.valid) {
      message.textContent = verdict.error;
      return;
    }
    message.textContent = "";
    try {
      const me = await api.history();
      const userId = me.length > 0 ? me[0].user_id : undefined;
      if (userId === undefined) {
        message.textContent = "No records yet; the report would be empty.";
        return;
      }
      const bytes = await api.reportPdf(userId, {
        start: values.start || undefined,
        end: values.end || undefined,
      });
      const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "application/pdf" });
      const link = document.createElement("a");
      link.href = URL.createObjectURL(blob);
      link.download = "dr-report.pdf";
      link.click();
      URL.revokeObjectURL(link.href);
    } catch (err) {
      showError(err);
    }
  });
}

async function wireDoctorDashboard(): Promise<void> {
  const rows = el<HTMLDivElement>("#appointment-rows");
  const historyPane = el<HTMLDivElement>("#patient-history");
  try {
    const appointments = await api.appointments();
    rows.innerHTML = renderAppointments(appointments, "doctor");
    rows.querySelectorAll("button[data-action]").forEach((node) => {
      const button = node as HTMLElement;
      const id = Number(button.dataset.id);
      const appointment = appointments.find((a) => a.id === id);
      button.addEventListener("click", async () => {
        try {
          if (button.dataset.action === "cancel") {
            await api.cancelAppointment(id);
            await wireDoctorDashboard();
          } else if (button.dataset.action === "download" && appointment) {
            const bytes = await api.reportPdf(appointment.user_id);
            const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "application/pdf" });
            const link = document.createElement("a");
            link.href = URL.createObjectURL(blob);
            link.download = `patient-${appointment.user_id}-report.pdf`;
            link.click();
            URL.revokeObjectURL(link.href);
          } else if (button.dataset.action === "view" && appointment) {
            historyPane.innerHTML = renderHistory(
              await api.history({}, appointment.user_id),
            );
          }
        } catch (err) {
          showError(err);
        }
      });
    });
  } catch (err) {
    showError(err);
  }
}

async function wireAdmin(): Promise<void> {
  const usersPane = el<HTMLDivElement>("#admin-users");
  const activityPane = el<HTMLDivElement>("#admin-activity");

  const reload = async () => {
    usersPane.innerHTML = renderAdminUsers(await api.adminUsers());
    usersPane.querySelectorAll("button[data-action]").forEach((node) => {
      const button = node as HTMLElement;
      const id = Number(button.dataset.id);
      button.addEventListener("click", async () => {
        try {
          if (button.dataset.action === "approve") await api.approveDoctor(id);
          if (button.dataset.action === "remove") await api.removeUser(id);
          await reload();
        } catch (err) {
          showError(err);
        }
      });
    });
    activityPane.innerHTML = renderActivity(await api.adminActivity());
  };
  try {
    await reload();
  } catch (err) {
    showError(err);
  }
}

// -- boot ---------------------------------------------------------------------

export function boot(): void {
  el<HTMLButtonElement>("#logout").addEventListener("click", () => {
    sessions.clear();
    navigate("login");
  });
  window.addEventListener("hashchange", () => void renderRoute());
  void renderRoute();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
