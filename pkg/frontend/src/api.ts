import type {
  Gesture,
  MutationResponse,
  ScriptResponse,
  ServiceError,
  SheetWindow,
  SqlResponse,
  SuggestionsResponse,
} from "./types.js";

export interface Transport {
  request(method: string, path: string, body?: unknown): Promise<unknown>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: ServiceError | { detail?: ServiceError },
  ) {
    super(`HTTP ${status}: ${JSON.stringify(payload)}`);
  }

  get code(): string {
    const p = this.payload as { code?: string; detail?: { code?: string } };
    return p.code ?? p.detail?.code ?? "UNKNOWN";
  }
}

/** fetch-backed transport for the browser. */
export class HttpTransport implements Transport {
  constructor(private readonly base: string = "") {}

  async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const response = await fetch(this.base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, payload);
    }
    return payload;
  }
}

/** Typed facade over the notebook routes. One argument per path piece;
 * no client-side state beyond the transport. */
export class ApiClient {
  constructor(private readonly transport: Transport) {}

  createNotebook(fixtures: Record<string, string>): Promise<{ notebook_id: string }> {
    return this.transport.request("POST", "/notebooks", { fixtures }) as Promise<{
      notebook_id: string;
    }>;
  }

  addPage(notebookId: string, name: string, source: string): Promise<ScriptResponse> {
    return this.transport.request("POST", `/notebooks/${notebookId}/pages`, {
      name,
      source,
    }) as Promise<ScriptResponse>;
  }

  getScript(notebookId: string, page: string): Promise<ScriptResponse> {
    return this.transport.request(
      "GET",
      `/notebooks/${notebookId}/pages/${page}/script`,
    ) as Promise<ScriptResponse>;
  }

  postStatement(notebookId: string, page: string, text: string): Promise<MutationResponse> {
    return this.transport.request(
      "POST",
      `/notebooks/${notebookId}/pages/${page}/statements`,
      { text },
    ) as Promise<MutationResponse>;
  }

  postGesture(notebookId: string, page: string, gesture: Gesture): Promise<MutationResponse> {
    return this.transport.request(
      "POST",
      `/notebooks/${notebookId}/pages/${page}/gestures`,
      gesture,
    ) as Promise<MutationResponse>;
  }

  getWindow(
    notebookId: string,
    page: string,
    range?: { cols?: string; rows?: string },
  ): Promise<SheetWindow> {
    const params = new URLSearchParams();
    if (range?.cols) params.set("cols", range.cols);
    if (range?.rows) params.set("rows", range.rows);
    const query = params.toString();
    return this.transport.request(
      "GET",
      `/notebooks/${notebookId}/pages/${page}/window${query ? "?" + query : ""}`,
    ) as Promise<SheetWindow>;
  }

  getSql(notebookId: string, page: string): Promise<SqlResponse> {
    return this.transport.request(
      "GET",
      `/notebooks/${notebookId}/pages/${page}/sql`,
    ) as Promise<SqlResponse>;
  }

  getSuggestions(notebookId: string, page: string): Promise<SuggestionsResponse> {
    return this.transport.request(
      "GET",
      `/notebooks/${notebookId}/pages/${page}/suggestions`,
    ) as Promise<SuggestionsResponse>;
  }

  acceptSuggestion(notebookId: string, page: string, id: string): Promise<ScriptResponse> {
    return this.transport.request(
      "POST",
      `/notebooks/${notebookId}/pages/${page}/suggestions`,
      { id },
    ) as Promise<ScriptResponse>;
  }

  createBranch(
    notebookId: string,
    name: string,
    page: string,
    statementIndex: number,
  ): Promise<{ branches: string[] }> {
    return this.transport.request("POST", `/notebooks/${notebookId}/branches`, {
      name,
      page,
      statement_index: statementIndex,
    }) as Promise<{ branches: string[] }>;
  }
}
