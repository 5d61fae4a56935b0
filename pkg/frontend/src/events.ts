/** Wire format of one server event (one JSON object per `data:` line). */

export type SessionState =
  | "running"
  | "finished"
  | "stopped_by_policy"
  | "stopped_by_user"
  | "failed";

export interface QueryEvent {
  session: string;
  leaves_visited: number;
  bsf_ids: number[];
  bsf_distances: (number | null)[];
  state: SessionState;
  point_estimate?: number;
  lower_bound?: number;
  upper_bound?: number;
  error_upper_bound?: number;
  p_exact?: number;
  tau_leaves?: number;
  class?: number;
  p_class?: number;
  error?: string;
}

const STATES: ReadonlySet<string> = new Set([
  "running",
  "finished",
  "stopped_by_policy",
  "stopped_by_user",
  "failed",
]);

/** Parse one `data: {...}` line; null means the line is not an event or is malformed. */
export function parseEventLine(line: string): QueryEvent | null {
  if (!line.startsWith("data: ")) {
    return null;
  }
  let doc: unknown;
  try {
    doc = JSON.parse(line.slice("data: ".length));
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) {
    return null;
  }
  const event = doc as Record<string, unknown>;
  if (
    typeof event.session !== "string" ||
    typeof event.leaves_visited !== "number" ||
    !Array.isArray(event.bsf_distances) ||
    !STATES.has(String(event.state))
  ) {
    return null;
  }
  return event as unknown as QueryEvent;
}
