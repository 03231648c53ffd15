import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, type PredictionRecord } from "../src/api.js";
import { renderPrediction } from "../src/render.js";

// canned service response, shaped exactly like the live /predictions reply
const PREDICTION_FIXTURE: PredictionRecord = {
  id: 7,
  user_id: 2,
  first_eye: "Moderate",
  second_eye: "Proliferate_DR",
  timestamp: "2030-06-15 10:00:00",
  left_image_ref: "1f0e8a33",
  right_image_ref: "9c4b77d1",
  model_id: "9019f7b3433363cc4a7e619d01a9d1a77fddbcefaba81b9389cab407d304664f",
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function eye(name: string): { name: string; data: Blob } {
  return { name, data: new Blob([`fake bytes for ${name}`]) };
}

describe("predictPair", () => {
  it("round-trips the fixture: rendered labels match the response verbatim", async () => {
    const fetchMock = vi.fn(async (url: string, init?: RequestInit) => {
      expect(url).toBe("http://svc/api/v1/predictions");
      expect(init?.method).toBe("POST");
      expect((init?.headers as Record<string, string>).Authorization).toBe("Bearer tok123");
      expect(init?.body).toBeInstanceOf(FormData);
      const form = init?.body as FormData;
      expect(form.get("left_eye")).toBeTruthy();
      expect(form.get("right_eye")).toBeTruthy();
      return jsonResponse(PREDICTION_FIXTURE, 201);
    });
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });
    client.setToken("tok123");

    const record = await client.predictPair(eye("l.ppm"), eye("r.ppm"));
    expect(record.first_eye).toBe("Moderate");
    expect(record.second_eye).toBe("Proliferate_DR");

    const html = renderPrediction(record);
    expect(html).toContain("Moderate");
    expect(html).toContain("Proliferate_DR");
    expect(html).toContain("2030-06-15 10:00:00");
    expect(html).toContain("severity-high"); // Proliferate_DR gets the treatment
  });

  it("allows only one in-flight prediction", async () => {
    let release: (value: Response) => void = () => {};
    const gate = new Promise<Response>((resolve) => {
      release = resolve;
    });
    const fetchMock = vi.fn(() => gate);
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });

    const first = client.predictPair(eye("l.ppm"), eye("r.ppm"));
    expect(client.predictionPending).toBe(true);
    await expect(client.predictPair(eye("l.ppm"), eye("r.ppm"))).rejects.toMatchObject({
      code: "busy",
    });
    release(jsonResponse(PREDICTION_FIXTURE, 201));
    await first;
    expect(client.predictionPending).toBe(false);
    expect(fetchMock).toHaveBeenCalledTimes(1);
  });
});

describe("history", () => {
  it("sends the date filter as query parameters", async () => {
    const fetchMock = vi.fn(async (url: string) => {
      expect(url).toBe("http://svc/api/v1/predictions?start=2030-06-01&end=2030-06-30");
      return jsonResponse([PREDICTION_FIXTURE]);
    });
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });
    const rows = await client.history({ start: "2030-06-01", end: "2030-06-30" });
    expect(rows).toHaveLength(1);
    expect(rows[0].first_eye).toBe("Moderate");
  });

  it("passes user_id for doctor views", async () => {
    const fetchMock = vi.fn(async (url: string) => {
      expect(url).toContain("user_id=5");
      return jsonResponse([]);
    });
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });
    await client.history({}, 5);
    expect(fetchMock).toHaveBeenCalledOnce();
  });
});

describe("error handling", () => {
  it("maps service errors to ApiError with code and field", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ code: "bad_image", message: "left_eye image: truncated", field: "left_eye" }, 400),
    );
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });
    const failure = client.predictPair(eye("l.ppm"), eye("r.ppm"));
    await expect(failure).rejects.toBeInstanceOf(ApiError);
    await expect(
      client.predictPair(eye("l.ppm"), eye("r.ppm")),
    ).rejects.toMatchObject({ code: "bad_image", status: 400, field: "left_eye" });
  });

  it("fires onUnauthorized for 401 responses", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ code: "token_expired", message: "session has expired" }, 401),
    );
    const onUnauthorized = vi.fn();
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock, onUnauthorized });
    await expect(client.history()).rejects.toMatchObject({ code: "token_expired" });
    expect(onUnauthorized).toHaveBeenCalledOnce();
  });

  it("does not fire onUnauthorized for other failures", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ code: "forbidden", message: "nope" }, 403),
    );
    const onUnauthorized = vi.fn();
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock, onUnauthorized });
    await expect(client.history()).rejects.toMatchObject({ code: "forbidden" });
    expect(onUnauthorized).not.toHaveBeenCalled();
  });
});

describe("report download", () => {
  it("returns the PDF bytes unmodified", async () => {
    const original = new Uint8Array([0x25, 0x50, 0x44, 0x46, 0x2d, 0x31, 0x2e, 0x34, 0x00, 0x7f]);
    const fetchMock = vi.fn(async (url: string) => {
      expect(url).toBe("http://svc/api/v1/reports/2?start=2030-06-01");
      return new Response(original.slice().buffer, {
        status: 200,
        headers: { "Content-Type": "application/pdf" },
      });
    });
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });
    const bytes = await client.reportPdf(2, { start: "2030-06-01" });
    expect(Array.from(bytes)).toEqual(Array.from(original));
  });

  it("requests the JSON twin with format=json", async () => {
    const fetchMock = vi.fn(async (url: string) => {
      expect(url).toContain("format=json");
      return jsonResponse({ title: "Diabetic Retinopathy Report", records: [] });
    });
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });
    const doc = (await client.reportJson(2)) as { title: string };
    expect(doc.title).toBe("Diabetic Retinopathy Report");
  });
});

describe("login", () => {
  it("stores the bearer token for later calls", async () => {
    const calls: Array<Record<string, string>> = [];
    const fetchMock = vi.fn(async (url: string, init?: RequestInit) => {
      calls.push((init?.headers as Record<string, string>) ?? {});
      if (url.endsWith("/auth/login")) {
        return jsonResponse({ token: "fresh-token", role: "user", full_name: "Pat" });
      }
      return jsonResponse([]);
    });
    const client = new ApiClient("http://svc/api/v1", { fetchImpl: fetchMock });
    await client.login("pat@example.org", "hunter2-alpha");
    await client.history();
    expect(calls[1].Authorization).toBe("Bearer fresh-token");
  });
});
