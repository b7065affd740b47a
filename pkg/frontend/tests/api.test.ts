import { afterEach, expect, test, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function mockFetch(body: unknown, status = 200) {
  const mock = vi.fn().mockImplementation(async () => jsonResponse(body, status));
  vi.stubGlobal("fetch", mock);
  return mock;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

test("searchQuestions omits q when the query is empty", async () => {
  const mock = mockFetch({ questions: [], total: 0 });
  const client = new ApiClient();

  await client.searchQuestions("emissions", "");
  expect(mock).toHaveBeenCalledWith(
    "/api/domains/emissions/questions?limit=50&offset=0",
    { signal: undefined },
  );

  await client.searchQuestions("emissions", "carbon by year", 10, 20);
  expect(mock).toHaveBeenLastCalledWith(
    "/api/domains/emissions/questions?limit=10&offset=20&q=carbon+by+year",
    { signal: undefined },
  );
});

test("path segments are percent-encoded", async () => {
  const mock = mockFetch({
    question_id: "a/b",
    template_id: "t",
    text: "",
    plan_text: "",
    sql_text: "",
    parameters: [],
  });
  const client = new ApiClient();

  await client.getQuestion("my domain", "a/b");
  expect(mock).toHaveBeenCalledWith("/api/domains/my%20domain/questions/a%2Fb", undefined);
});

test("executePlan posts the plan text as JSON", async () => {
  const mock = mockFetch({
    columns: [],
    rows: [],
    truncated: false,
    sql_text: "SELECT 1",
    parameters: [],
  });
  const client = new ApiClient("http://svc");

  await client.executePlan("legal", "|1| retrieve_entity(Case)");
  expect(mock).toHaveBeenCalledWith("http://svc/api/domains/legal/plans/execute", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ plan_text: "|1| retrieve_entity(Case)" }),
  });
});

test("executeQuestion posts without a body", async () => {
  const mock = mockFetch({ columns: [], rows: [], truncated: false });
  const client = new ApiClient();

  await client.executeQuestion("legal", "abc123");
  expect(mock).toHaveBeenCalledWith("/api/domains/legal/questions/abc123/execute", {
    method: "POST",
  });
});

test("object detail becomes an ApiError carrying the diagnostic", async () => {
  mockFetch(
    {
      detail: {
        kind: "check",
        message: "step |1|: unknown entity 'X'",
        step_id: 1,
      },
    },
    400,
  );
  const client = new ApiClient();

  const err = await client.listDomains().catch((e: unknown) => e);
  expect(err).toBeInstanceOf(ApiError);
  const apiError = err as ApiError;
  expect(apiError.status).toBe(400);
  expect(apiError.message).toBe("step |1|: unknown entity 'X'");
  expect(apiError.diagnostic).toEqual({
    kind: "check",
    message: "step |1|: unknown entity 'X'",
    step_id: 1,
  });
});

test("string detail becomes the error message with no diagnostic", async () => {
  mockFetch({ detail: "unknown domain 'nope'" }, 404);
  const client = new ApiClient();

  const err = await client.listDomains().catch((e: unknown) => e);
  expect(err).toBeInstanceOf(ApiError);
  const apiError = err as ApiError;
  expect(apiError.status).toBe(404);
  expect(apiError.message).toBe("unknown domain 'nope'");
  expect(apiError.diagnostic).toBeNull();
});

test("non-JSON error bodies fall back to the status line", async () => {
  vi.stubGlobal(
    "fetch",
    vi.fn().mockResolvedValue(new Response("boom", { status: 502 })),
  );
  const client = new ApiClient();

  const err = await client.listDomains().catch((e: unknown) => e);
  expect(err).toBeInstanceOf(ApiError);
  const apiError = err as ApiError;
  expect(apiError.status).toBe(502);
  expect(apiError.message).toBe("request failed (502)");
  expect(apiError.diagnostic).toBeNull();
});
