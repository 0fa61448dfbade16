// View state and its transitions, kept free of DOM and network so the
// behavior is unit-testable. The app layer feeds it payloads and renders
// whatever it holds.
export function initialState() {
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
export function applyStatus(state, status) {
    state.mission = status;
    state.connected = true;
}
export function applySlice(state, slice) {
    state.slice = slice;
    state.connected = true;
}
// A failed poll keeps the last snapshot on screen and only flips the banner.
export function noteDisconnect(state) {
    state.connected = false;
}
export function applyQuerySuccess(state, result) {
    state.queryHistory.push({ term: result.term, result });
    state.queryError = null;
    state.goalWatch = { term: result.term, sinceTick: state.mission ? state.mission.tick : -1 };
    state.goalNotice = null;
}
// Unknown terms (and other rejections) surface inline and leave no history.
export function applyQueryFailure(state, message) {
    state.queryError = message;
}
export function applyPlannerLog(state, entries) {
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
export function lastQuery(state) {
    const n = state.queryHistory.length;
    return n > 0 ? state.queryHistory[n - 1] : null;
}
