// View state and its transitions, kept free of DOM and network so the
// behavior is unit-testable. The app layer feeds it payloads and renders
// whatever it holds.

import type { MissionStatus, PlannerEntry, QueryResult, SliceLayer, SlicePayload } from "./api.js";

export interface QueryHistoryEntry {
  term: string;
  result: QueryResult;
}

export interface GoalWatch {
  term: string;
  sinceTick: number;
}

export interface ViewState {
  selectedZ: number;
  layer: SliceLayer;
  mission: MissionStatus | null;
  slice: SlicePayload | null;
  queryHistory: QueryHistoryEntry[];
  queryError: string | null;
  connected: boolean;
  // set after a query is posted; cleared once the planner log shows a plan
  // for that query, which is the confirmation the goal actually changed
  goalWatch: GoalWatch | null;
  goalNotice: string | null;
}

export function initialState(): ViewState {
  return {
    selectedZ: 1.0,
    layer: "occupancy",
    mission: null,
    slice: null,
    queryHistory: [],
    queryError: null,
    connected: false,
    goalWatch: null,
    goalNotice: null,
  };
}

export function applyStatus(state: ViewState, status: MissionStatus): void {
  state.mission = status;
  state.connected = true;
}

export function applySlice(state: ViewState, slice: SlicePayload): void {
  state.slice = slice;
  state.connected = true;
}

// A failed poll keeps the last snapshot on screen and only flips the banner.
export function noteDisconnect(state: ViewState): void {
  state.connected = false;
}

export function applyQuerySuccess(state: ViewState, result: QueryResult): void {
  state.queryHistory.push({ term: result.term, result });
  state.queryError = null;
  state.goalWatch = { term: result.term, sinceTick: state.mission ? state.mission.tick : -1 };
  state.goalNotice = null;
}

// Unknown terms (and other rejections) surface inline and leave no history.
export function applyQueryFailure(state: ViewState, message: string): void {
  state.queryError = message;
}

export function applyPlannerLog(state: ViewState, entries: PlannerEntry[]): void {
  const watch = state.goalWatch;
  if (watch === null) {
    return;
  }
  for (const entry of entries) {
    if (entry.tick > watch.sinceTick && entry.query === watch.term && entry.goal !== null) {
      state.goalNotice = `planner goal updated for "${watch.term}" at tick ${entry.tick}`;
      state.goalWatch = null;
      return;
    }
  }
}

export function lastQuery(state: ViewState): QueryHistoryEntry | null {
  const n = state.queryHistory.length;
  return n > 0 ? state.queryHistory[n - 1]! : null;
}
