// Typed client for the question service. Every call goes through request(),
// which unwraps FastAPI's {"detail": ...} envelope into ApiError.

export interface DomainSummary {
  id: string;
  name: string;
  description: string;
  entity_count: number;
  question_count: number;
}

export interface QuestionSummary {
  question_id: string;
  text: string;
  template_id: string;
}

export interface QuestionPage {
  questions: QuestionSummary[];
  total: number;
}

export interface QuestionDetail {
  question_id: string;
  template_id: string;
  text: string;
  plan_text: string;
  sql_text: string;
  parameters: unknown[];
}

export interface ResultColumn {
  label: string;
  types: string[];
  units: string | null;
}

export interface ResultTable {
  columns: ResultColumn[];
  rows: unknown[][];
  truncated: boolean;
}

export interface PlanRun extends ResultTable {
  sql_text: string;
  parameters: unknown[];
}

// Structured plan diagnostic carried by 400 responses; kind is "syntax"
// (with line/column), "check", or "compile" (with step_id).
export interface Diagnostic {
  kind: string;
  message: string;
  line?: number;
  column?: number;
  step_id?: number;
}

export class ApiError extends Error {
  readonly status: number;
  readonly diagnostic: Diagnostic | null;

  constructor(status: number, message: string, diagnostic: Diagnostic | null = null) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.diagnostic = diagnostic;
  }
}

function toDiagnostic(detail: unknown): Diagnostic | null {
  if (typeof detail === "object" && detail !== null && "kind" in detail) {
    return detail as Diagnostic;
  }
  return null;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      let detail: unknown = null;
      try {
        detail = (await response.json()).detail;
      } catch {
        // Non-JSON error body; fall through to the status line.
      }
      const diagnostic = toDiagnostic(detail);
      const message =
        diagnostic?.message ??
        (typeof detail === "string" ? detail : `request failed (${response.status})`);
      throw new ApiError(response.status, message, diagnostic);
    }
    return (await response.json()) as T;
  }

  listDomains(): Promise<DomainSummary[]> {
    return this.request("/api/domains");
  }

  searchQuestions(
    domain: string,
    query: string,
    limit = 50,
    offset = 0,
    signal?: AbortSignal,
  ): Promise<QuestionPage> {
    const params = new URLSearchParams({ limit: String(limit), offset: String(offset) });
    if (query) {
      params.set("q", query);
    }
    const id = encodeURIComponent(domain);
    return this.request(`/api/domains/${id}/questions?${params}`, { signal });
  }

  getQuestion(domain: string, questionId: string): Promise<QuestionDetail> {
    const id = encodeURIComponent(domain);
    const qid = encodeURIComponent(questionId);
    return this.request(`/api/domains/${id}/questions/${qid}`);
  }

  executeQuestion(domain: string, questionId: string): Promise<ResultTable> {
    const id = encodeURIComponent(domain);
    const qid = encodeURIComponent(questionId);
    return this.request(`/api/domains/${id}/questions/${qid}/execute`, { method: "POST" });
  }

  executePlan(domain: string, planText: string): Promise<PlanRun> {
    const id = encodeURIComponent(domain);
    return this.request(`/api/domains/${id}/plans/execute`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ plan_text: planText }),
    });
  }
}
