// Typed client over the screening service's HTTP+JSON interface. All state
// shown in the UI comes from here; nothing is predicted client-side.

export interface PredictionRecord {
  id: number;
  user_id: number;
  first_eye: string;
  second_eye: string;
  timestamp: string;
  left_image_ref: string;
  right_image_ref: string;
  model_id: string;
}

export interface Appointment {
  id: number;
  user_id: number;
  doctor_id: number;
  scheduled_at: string;
  status: "Booked" | "Cancelled";
  cancelled_by: string | null;
}

export interface DoctorSummary {
  id: number;
  full_name: string;
  email: string;
}

export interface AccountSummary {
  id: number;
  email: string;
  full_name?: string;
  role: string;
  doctor_status?: string;
  removed?: number;
}

export interface RegisterInput {
  full_name: string;
  email: string;
  password: string;
  role?: "user" | "doctor";
  age?: number;
  location?: string;
  telephone?: string;
}

export interface DateRange {
  start?: string;
  end?: string;
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly field?: string;

  constructor(code: string, message: string, status: number, field?: string) {
    super(message);
    this.code = code;
    this.status = status;
    this.field = field;
  }
}

export interface EyeUpload {
  name: string;
  data: Blob;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private baseUrl: string;
  private fetchImpl: FetchLike;
  private token: string | null = null;
  private onUnauthorized: (() => void) | null;
  private predictionInFlight = false;

  constructor(
    baseUrl: string,
    options: { fetchImpl?: FetchLike; onUnauthorized?: () => void } = {},
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
    this.onUnauthorized = options.onUnauthorized ?? null;
  }

  setToken(token: string | null): void {
    this.token = token;
  }

  /** True while an upload/check round trip is pending (one at a time). */
  get predictionPending(): boolean {
    return this.predictionInFlight;
  }

  private headers(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  private async handle(response: Response): Promise<Response> {
    if (response.ok) return response;
    let code = "http_error";
    let message = `HTTP ${response.status}`;
    let field: string | undefined;
    try {
      const body = (await response.json()) as { code?: string; message?: string; field?: string };
      code = body.code ?? code;
      message = body.message ?? message;
      field = body.field;
    } catch {
      // non-JSON error body; keep the generic message
    }
    if (response.status === 401 && this.onUnauthorized) {
      this.onUnauthorized();
    }
    throw new ApiError(code, message, response.status, field);
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, { headers: this.headers() });
    return (await this.handle(response)).json() as Promise<T>;
  }

  private async sendJson<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: { ...this.headers(), "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    return (await this.handle(response)).json() as Promise<T>;
  }

  // -- auth ----------------------------------------------------------------
  register(input: RegisterInput): Promise<AccountSummary> {
    return this.sendJson("POST", "/auth/register", input);
  }

  async login(email: string, password: string): Promise<{ token: string; role: string; full_name: string }> {
    const result = await this.sendJson<{ token: string; role: string; full_name: string }>(
      "POST",
      "/auth/login",
      { email, password },
    );
    this.token = result.token;
    return result;
  }

  // -- screening -------------------------------------------------------------
  async predictPair(left: EyeUpload, right: EyeUpload): Promise<PredictionRecord> {
    if (this.predictionInFlight) {
      throw new ApiError("busy", "a prediction is already running", 0);
    }
    this.predictionInFlight = true;
    try {
      const form = new FormData();
      form.append("left_eye", left.data, left.name);
      form.append("right_eye", right.data, right.name);
      const response = await this.fetchImpl(this.baseUrl + "/predictions", {
        method: "POST",
        headers: this.headers(),
        body: form,
      });
      return (await this.handle(response)).json() as Promise<PredictionRecord>;
    } finally {
      this.predictionInFlight = false;
    }
  }

  history(range: DateRange = {}, userId?: number): Promise<PredictionRecord[]> {
    const params = new URLSearchParams();
    if (range.start) params.set("start", range.start);
    if (range.end) params.set("end", range.end);
    if (userId !== undefined) params.set("user_id", String(userId));
    const query = params.toString();
    return this.getJson(`/predictions${query ? "?" + query : ""}`);
  }

  // -- appointments ------------------------------------------------------------
  doctors(): Promise<DoctorSummary[]> {
    return this.getJson("/doctors");
  }

  bookAppointment(doctorId: number, scheduledAt: string): Promise<Appointment> {
    return this.sendJson("POST", "/appointments", {
      doctor_id: doctorId,
      scheduled_at: scheduledAt,
    });
  }

  appointments(): Promise<Appointment[]> {
    return this.getJson("/appointments");
  }

  cancelAppointment(id: number): Promise<Appointment> {
    return this.sendJson("DELETE", `/appointments/${id}`);
  }

  // -- reports ----------------------------------------------------------------
  async reportPdf(userId: number, range: DateRange = {}): Promise<Uint8Array> {
    const params = new URLSearchParams();
    if (range.start) params.set("start", range.start);
    if (range.end) params.set("end", range.end);
    const query = params.toString();
    const response = await this.fetchImpl(
      `${this.baseUrl}/reports/${userId}${query ? "?" + query : ""}`,
      { headers: { ...this.headers(), Accept: "application/pdf" } },
    );
    await this.handle(response);
    // the service's bytes are saved as-is; no re-encoding
    return new Uint8Array(await response.arrayBuffer());
  }

  reportJson(userId: number, range: DateRange = {}): Promise<unknown> {
    const params = new URLSearchParams({ format: "json" });
    if (range.start) params.set("start", range.start);
    if (range.end) params.set("end", range.end);
    return this.getJson(`/reports/${userId}?${params.toString()}`);
  }

  // -- admin ---------------------------------------------------------------------
  adminUsers(): Promise<AccountSummary[]> {
    return this.getJson("/admin/users");
  }

  approveDoctor(id: number): Promise<{ id: number; doctor_status: string }> {
    return this.sendJson("POST", `/admin/doctors/${id}/approve`);
  }

  removeUser(id: number): Promise<{ id: number; removed: boolean }> {
    return this.sendJson("DELETE", `/admin/users/${id}`);
  }

  adminActivity(): Promise<Array<{ id: number; ts: string; kind: string; details: string }>> {
    return this.getJson("/admin/activity");
  }
}
