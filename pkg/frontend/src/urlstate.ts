// The selected domain and search text live in the URL query string so views
// can be shared and reloaded.

export interface ViewState {
  domain: string;
  q: string;
}

export function readState(search: string): ViewState {
  const params = new URLSearchParams(search);
  return {
    domain: params.get("domain") ?? "",
    q: params.get("q") ?? "",
  };
}

export function writeState(state: ViewState, search: string): string {
  const params = new URLSearchParams(search);
  if (state.domain) {
    params.set("domain", state.domain);
  } else {
    params.delete("domain");
  }
  if (state.q) {
    params.set("q", state.q);
  } else {
    params.delete("q");
  }
  const text = params.toString();
  return text ? `?${text}` : "";
}
