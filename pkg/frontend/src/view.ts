/** Session view model: a pure fold over the received event stream.
 *
 * Replaying the same event log always reproduces the identical view, and
 * every number displayed comes from a server event - the console computes
 * no statistics of its own.
 */

import { QueryEvent, SessionState, parseEventLine } from "./events.js";

export interface ChartPoint {
  leaves: number;
  bsf: number | null;
  lower: number | null;
  point: number | null;
}

export interface SessionView {
  sessionId: string | null;
  points: ChartPoint[];
  gauge: number | null; // last reported p_exact, in [0, 1]
  tauLeaves: number | null;
  state: SessionState;
  eventCount: number;
  warningCount: number; // malformed lines skipped
  currentClass: number | null;
  pClass: number | null;
  answerIds: number[];
  answerDistances: (number | null)[];
  error: string | null;
}

export function emptyView(): SessionView {
  return {
    sessionId: null,
    points: [],
    gauge: null,
    tauLeaves: null,
    state: "running",
    eventCount: 0,
    warningCount: 0,
    currentClass: null,
    pClass: null,
    answerIds: [],
    answerDistances: [],
    error: null,
  };
}

export function foldEvent(view: SessionView, event: QueryEvent): SessionView {
  const last = event.bsf_distances[event.bsf_distances.length - 1] ?? null;
  const next: SessionView = {
    ...view,
    sessionId: event.session,
    eventCount: view.eventCount + 1,
    state: event.state,
    answerIds: event.bsf_ids ?? view.answerIds,
    answerDistances: event.bsf_distances,
    error: event.error ?? view.error,
  };
  // the x-axis must stay strictly increasing; a terminal event replaying the
  // final leaf count updates state without appending a duplicate point
  const prev = view.points[view.points.length - 1];
  if (prev === undefined || event.leaves_visited > prev.leaves) {
    next.points = [
      ...view.points,
      {
        leaves: event.leaves_visited,
        bsf: last,
        lower: event.lower_bound ?? null,
        point: event.point_estimate ?? null,
      },
    ];
  }
  if (event.p_exact !== undefined) {
    next.gauge = clamp01(event.p_exact);
  }
  if (event.tau_leaves !== undefined) {
    next.tauLeaves = event.tau_leaves;
  }
  if (event.class !== undefined) {
    next.currentClass = event.class;
  }
  if (event.p_class !== undefined) {
    next.pClass = clamp01(event.p_class);
  }
  return next;
}

export function foldLine(view: SessionView, line: string): SessionView {
  const trimmed = line.trim();
  if (trimmed === "") {
    return view;
  }
  const event = parseEventLine(trimmed);
  if (event === null) {
    return { ...view, warningCount: view.warningCount + 1 };
  }
  return foldEvent(view, event);
}

export function replayLog(lines: string[]): SessionView {
  return lines.reduce(foldLine, emptyView());
}

export function isTerminal(view: SessionView): boolean {
  return view.state !== "running";
}

function clamp01(x: number): number {
  return Math.min(1, Math.max(0, x));
}
