// Pure presentation helpers shared by the table and plan panes.

import type { Diagnostic, ResultColumn } from "./api.js";

// "average_amount" -> "Average Amount"
export function titleCase(label: string): string {
  return label
    .split(/[_\s]+/)
    .filter((part) => part.length > 0)
    .map((part) => part.charAt(0).toUpperCase() + part.slice(1))
    .join(" ");
}

// Column header text: title-cased label, units appended in parentheses.
export function columnHeader(column: ResultColumn): string {
  const title = titleCase(column.label);
  return column.units ? `${title} (${column.units})` : title;
}

// Cell text mirrors the CLI's table rendering: null, true, false, plain str.
export function cellText(value: unknown): string {
  if (value === null || value === undefined) {
    return "null";
  }
  if (typeof value === "boolean") {
    return value ? "true" : "false";
  }
  return String(value);
}

export interface PlanStep {
  id: string;
  body: string;
}

// Split "|1| op(...)" lines into step id / body pairs for the plan pane.
export function planSteps(planText: string): PlanStep[] {
  const steps: PlanStep[] = [];
  for (const raw of planText.split("\n")) {
    const line = raw.trim();
    if (!line) {
      continue;
    }
    const match = /^(\|\d+\|)\s*(.*)$/.exec(line);
    if (match) {
      steps.push({ id: match[1], body: match[2] });
    } else {
      steps.push({ id: "", body: line });
    }
  }
  return steps;
}

// One-line banner text for a failed request. Diagnostic messages already
// carry their own position prefix ("line 1, column 20: ...", "step |3|: ..."),
// so only the kind is prepended here.
export function diagnosticText(diagnostic: Diagnostic | null, fallback: string): string {
  if (!diagnostic) {
    return fallback;
  }
  return `${diagnostic.kind} error: ${diagnostic.message}`;
}

// SQL pane footer: positional parameters in bind order.
export function parameterText(parameters: unknown[]): string {
  if (parameters.length === 0) {
    return "no parameters";
  }
  return `parameters: ${JSON.stringify(parameters)}`;
}
