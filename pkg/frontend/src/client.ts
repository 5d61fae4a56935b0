/** Transport: submit queries, consume the event stream, request stops.
 *
 * The stream endpoint replays the full per-session log on every connect, so
 * a reconnect simply refolds the view from scratch - the fold is pure.
 */

import { SessionView, emptyView, foldLine, isTerminal } from "./view.js";

export interface QueryPayload {
  series?: number[];
  series_index?: number;
  k?: number;
  distance?: string;
  policy?: string;
  theta?: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface SessionHandle {
  sessionId: string;
  view: () => SessionView;
  done: Promise<SessionView>;
  stop: () => Promise<boolean>;
}

export interface ConnectOptions {
  fetchImpl?: FetchLike;
  onUpdate?: (view: SessionView) => void;
  maxReconnects?: number;
}

export async function submitQuery(serviceUrl: string, payload: QueryPayload,
                                  fetchImpl: FetchLike = fetch): Promise<string> {
  const response = await fetchImpl(`${serviceUrl}/v1/queries`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(payload),
  });
  if (!response.ok) {
    throw new Error(`submit failed: ${response.status} ${await response.text()}`);
  }
  const doc = (await response.json()) as { session: string };
  return doc.session;
}

async function consumeStream(serviceUrl: string, sessionId: string,
                             onLine: (line: string) => void,
                             fetchImpl: FetchLike): Promise<void> {
  const response = await fetchImpl(`${serviceUrl}/v1/queries/${sessionId}/events`);
  if (!response.ok || response.body === null) {
    throw new Error(`stream failed: ${response.status}`);
  }
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) {
      break;
    }
    buffer += decoder.decode(value, { stream: true });
    let idx;
    while ((idx = buffer.indexOf("\n")) >= 0) {
      onLine(buffer.slice(0, idx));
      buffer = buffer.slice(idx + 1);
    }
  }
  if (buffer.trim() !== "") {
    onLine(buffer);
  }
}

/** Attach to a session: live view updates plus a debounced stop control. */
export function connectSession(serviceUrl: string, sessionId: string,
                               options: ConnectOptions = {}): SessionHandle {
  const fetchImpl = options.fetchImpl ?? fetch;
  const maxReconnects = options.maxReconnects ?? 3;
  let view = emptyView();
  let stopIssued = false;

  const done = (async () => {
    for (let attempt = 0; ; attempt++) {
      view = emptyView(); // idempotent replay: the log starts from the top
      try {
        await consumeStream(serviceUrl, sessionId, (line) => {
          view = foldLine(view, line);
          options.onUpdate?.(view);
        }, fetchImpl);
      } catch (err) {
        if (attempt >= maxReconnects) {
          throw err;
        }
        continue;
      }
      if (isTerminal(view) || attempt >= maxReconnects) {
        return view;
      }
    }
  })();

  const stop = async (): Promise<boolean> => {
    if (stopIssued || isTerminal(view)) {
      return false; // debounced: at most one stop request per session
    }
    stopIssued = true;
    const response = await fetchImpl(`${serviceUrl}/v1/queries/${sessionId}/stop`, {
      method: "POST",
    });
    return response.ok;
  };

  return { sessionId, view: () => view, done, stop };
}

export async function connectAndRender(
  serviceUrl: string, payload: QueryPayload,
  options: ConnectOptions = {}): Promise<SessionHandle> {
  const sessionId = await submitQuery(serviceUrl, payload,
                                      options.fetchImpl ?? fetch);
  return connectSession(serviceUrl, sessionId, options);
}
