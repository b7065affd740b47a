// DOM wiring: domain picker, debounced question search, detail panes, and
// the ad-hoc plan editor. All service traffic goes through ApiClient.

import { ApiClient, ApiError } from "./api.js";
import type { PlanRun, QuestionPage, ResultTable } from "./api.js";
import { debounce } from "./debounce.js";
import {
  cellText,
  columnHeader,
  diagnosticText,
  parameterText,
  planSteps,
} from "./format.js";
import { readState, writeState } from "./urlstate.js";

const SEARCH_DELAY_MS = 250;
const PAGE_SIZE = 50;

function must<T extends HTMLElement>(doc: Document, id: string): T {
  const el = doc.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

export function startApp(doc: Document, client: ApiClient, win: Window = window): void {
  const domainSelect = must<HTMLSelectElement>(doc, "domain-select");
  const searchInput = must<HTMLInputElement>(doc, "search-input");
  const searchSummary = must<HTMLElement>(doc, "search-summary");
  const questionList = must<HTMLUListElement>(doc, "question-list");
  const banner = must<HTMLElement>(doc, "banner");
  const detail = must<HTMLElement>(doc, "detail");
  const detailText = must<HTMLElement>(doc, "detail-text");
  const detailTemplate = must<HTMLElement>(doc, "detail-template");
  const planPane = must<HTMLOListElement>(doc, "plan-steps");
  const sqlPane = must<HTMLElement>(doc, "sql-text");
  const sqlParams = must<HTMLElement>(doc, "sql-params");
  const executeButton = must<HTMLButtonElement>(doc, "execute-button");
  const resultPane = must<HTMLElement>(doc, "result");
  const planInput = must<HTMLTextAreaElement>(doc, "plan-input");
  const runPlanButton = must<HTMLButtonElement>(doc, "run-plan-button");

  let domain = "";
  let query = "";
  let selectedQuestion: string | null = null;
  let searchAbort: AbortController | null = null;
  let searchSeq = 0;
  // At most one execution request may be in flight, across both buttons.
  let executing = false;

  function showBanner(message: string): void {
    banner.textContent = message;
    banner.hidden = false;
  }

  function clearBanner(): void {
    banner.textContent = "";
    banner.hidden = true;
  }

  function failure(err: unknown, fallback: string): string {
    if (err instanceof ApiError) {
      return diagnosticText(err.diagnostic, err.message);
    }
    return fallback;
  }

  function syncUrl(): void {
    const next = writeState({ domain, q: query }, win.location.search);
    win.history.replaceState(null, "", `${win.location.pathname}${next}`);
  }

  function renderTable(result: ResultTable): void {
    resultPane.textContent = "";
    const meta = doc.createElement("div");
    meta.className = "result-meta";
    const count = doc.createElement("span");
    count.textContent = `${result.rows.length} row${result.rows.length === 1 ? "" : "s"}`;
    meta.appendChild(count);
    if (result.truncated) {
      const badge = doc.createElement("span");
      badge.className = "badge";
      badge.textContent = "truncated";
      meta.appendChild(badge);
    }
    resultPane.appendChild(meta);

    const table = doc.createElement("table");
    const thead = doc.createElement("thead");
    const headRow = doc.createElement("tr");
    for (const column of result.columns) {
      const th = doc.createElement("th");
      th.textContent = columnHeader(column);
      th.title = column.types.join(", ");
      headRow.appendChild(th);
    }
    thead.appendChild(headRow);
    table.appendChild(thead);

    const tbody = doc.createElement("tbody");
    for (const row of result.rows) {
      const tr = doc.createElement("tr");
      for (const value of row) {
        const td = doc.createElement("td");
        td.textContent = cellText(value);
        tr.appendChild(td);
      }
      tbody.appendChild(tr);
    }
    table.appendChild(tbody);
    resultPane.appendChild(table);
  }

  function renderPlan(planText: string): void {
    planPane.textContent = "";
    for (const step of planSteps(planText)) {
      const li = doc.createElement("li");
      const id = doc.createElement("span");
      id.className = "step-id";
      id.textContent = step.id;
      const body = doc.createElement("code");
      body.textContent = step.body;
      li.appendChild(id);
      li.appendChild(body);
      planPane.appendChild(li);
    }
  }

  function renderSql(sql: string, parameters: unknown[]): void {
    sqlPane.textContent = sql;
    sqlParams.textContent = parameterText(parameters);
  }

  function renderQuestionList(page: QuestionPage): void {
    questionList.textContent = "";
    searchSummary.textContent = query
      ? `${page.total} match${page.total === 1 ? "" : "es"}`
      : `${page.total} questions`;
    for (const question of page.questions) {
      const li = doc.createElement("li");
      const button = doc.createElement("button");
      button.type = "button";
      button.textContent = question.text;
      button.addEventListener("click", () => {
        void openQuestion(question.question_id);
      });
      li.appendChild(button);
      questionList.appendChild(li);
    }
    if (page.questions.length === 0) {
      const li = doc.createElement("li");
      li.className = "empty";
      li.textContent = "no questions match";
      questionList.appendChild(li);
    }
  }

  async function runSearch(): Promise<void> {
    if (!domain) {
      return;
    }
    searchAbort?.abort();
    const controller = new AbortController();
    searchAbort = controller;
    const seq = ++searchSeq;
    try {
      const page = await client.searchQuestions(
        domain,
        query,
        PAGE_SIZE,
        0,
        controller.signal,
      );
      if (seq !== searchSeq) {
        return;
      }
      clearBanner();
      renderQuestionList(page);
    } catch (err) {
      if (seq !== searchSeq || (err instanceof DOMException && err.name === "AbortError")) {
        return;
      }
      showBanner(failure(err, "search failed; is the service running?"));
    }
  }

  const debouncedSearch = debounce(() => {
    void runSearch();
  }, SEARCH_DELAY_MS);

  async function openQuestion(questionId: string): Promise<void> {
    try {
      const question = await client.getQuestion(domain, questionId);
      selectedQuestion = questionId;
      clearBanner();
      detail.hidden = false;
      detailText.textContent = question.text;
      detailTemplate.textContent = question.template_id;
      renderPlan(question.plan_text);
      renderSql(question.sql_text, question.parameters);
      resultPane.textContent = "";
      executeButton.disabled = executing;
    } catch (err) {
      showBanner(failure(err, "could not load the question"));
    }
  }

  function setExecuting(value: boolean): void {
    executing = value;
    executeButton.disabled = value || selectedQuestion === null;
    runPlanButton.disabled = value;
  }

  async function runExecution(run: () => Promise<ResultTable>, fallback: string): Promise<void> {
    if (executing) {
      return;
    }
    setExecuting(true);
    try {
      const result = await run();
      clearBanner();
      renderTable(result);
    } catch (err) {
      showBanner(failure(err, fallback));
    } finally {
      setExecuting(false);
    }
  }

  executeButton.addEventListener("click", () => {
    const questionId = selectedQuestion;
    if (questionId === null) {
      return;
    }
    void runExecution(
      () => client.executeQuestion(domain, questionId),
      "execution failed",
    );
  });

  runPlanButton.addEventListener("click", () => {
    const planText = planInput.value.trim();
    if (!planText) {
      showBanner("enter a plan first");
      return;
    }
    void runExecution(async () => {
      const run: PlanRun = await client.executePlan(domain, planText);
      selectedQuestion = null;
      detail.hidden = false;
      detailText.textContent = "Your plan";
      detailTemplate.textContent = "ad hoc";
      renderPlan(planText);
      renderSql(run.sql_text, run.parameters);
      return run;
    }, "execution failed");
  });

  function resetForDomain(): void {
    selectedQuestion = null;
    detail.hidden = true;
    resultPane.textContent = "";
    questionList.textContent = "";
  }

  domainSelect.addEventListener("change", () => {
    domain = domainSelect.value;
    syncUrl();
    resetForDomain();
    void runSearch();
  });

  searchInput.addEventListener("input", () => {
    query = searchInput.value.trim();
    syncUrl();
    debouncedSearch();
  });

  async function boot(): Promise<void> {
    const initial = readState(win.location.search);
    let domains;
    try {
      domains = await client.listDomains();
    } catch (err) {
      showBanner(failure(err, "could not reach the service"));
      return;
    }
    for (const entry of domains) {
      const option = doc.createElement("option");
      option.value = entry.id;
      option.textContent = `${entry.name} (${entry.question_count})`;
      option.title = entry.description;
      domainSelect.appendChild(option);
    }
    if (domains.length === 0) {
      showBanner("the service exposes no domains");
      return;
    }
    const known = domains.some((entry) => entry.id === initial.domain);
    domain = known ? initial.domain : domains[0].id;
    domainSelect.value = domain;
    query = initial.q;
    searchInput.value = query;
    syncUrl();
    await runSearch();
  }

  void boot();
}
