// Console wiring: DOM events in, service payloads out to the view state,
// view state onto the page. Polling runs at 2.5 Hz while connected.
import { ApiError, SeekmapClient } from "./api.js";
import { applyPlannerLog, applyQueryFailure, applyQuerySuccess, applySlice, applyStatus, initialState, lastQuery, noteDisconnect, } from "./state.js";
import { sliceToImage, worldToCell } from "./render.js";
export const POLL_INTERVAL_MS = 400;
const CELL_PX = 6;
function el(root, id) {
    const node = root.querySelector(`#${id}`);
    if (node === null) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function formatCentroid(centroid) {
    if (centroid === null) {
        return "-";
    }
    return `(${centroid.map((v) => v.toFixed(2)).join(", ")})`;
}
export class ConsoleApp {
    state;
    client = null;
    fetchFn;
    timer = null;
    polling = false;
    addrInput;
    banner;
    statusLine;
    canvas;
    zSlider;
    zLabel;
    layerSelect;
    queryInput;
    queryError;
    results;
    history;
    goalNotice;
    constructor(root, fetchFn) {
        this.state = initialState();
        this.fetchFn = fetchFn;
        this.addrInput = el(root, "addr");
        this.banner = el(root, "banner");
        this.statusLine = el(root, "status-line");
        this.canvas = el(root, "slice-canvas");
        this.zSlider = el(root, "z-slider");
        this.zLabel = el(root, "z-label");
        this.layerSelect = el(root, "layer-select");
        this.queryInput = el(root, "query-input");
        this.queryError = el(root, "query-error");
        this.results = el(root, "query-results");
        this.history = el(root, "query-history");
        this.goalNotice = el(root, "goal-notice");
        el(root, "connect-btn").addEventListener("click", () => this.connect());
        el(root, "start-btn").addEventListener("click", () => this.command("start"));
        el(root, "pause-btn").addEventListener("click", () => this.command("pause"));
        el(root, "resume-btn").addEventListener("click", () => this.command("resume"));
        el(root, "query-btn").addEventListener("click", () => void this.submitQuery());
        this.queryInput.addEventListener("keydown", (ev) => {
            if (ev.key === "Enter") {
                void this.submitQuery();
            }
        });
        this.zSlider.addEventListener("input", () => {
            this.state.selectedZ = Number(this.zSlider.value);
            this.zLabel.textContent = `z = ${this.state.selectedZ.toFixed(2)} m`;
        });
        this.layerSelect.addEventListener("change", () => {
            this.state.layer = this.layerSelect.value === "activation" ? "activation" : "occupancy";
        });
    }
    connect() {
        this.client = new SeekmapClient(this.addrInput.value, this.fetchFn);
        if (this.timer !== null) {
            clearInterval(this.timer);
        }
        this.timer = setInterval(() => void this.poll(), POLL_INTERVAL_MS);
        void this.poll();
    }
    stop() {
        if (this.timer !== null) {
            clearInterval(this.timer);
            this.timer = null;
        }
    }
    async command(kind) {
        if (this.client === null) {
            return;
        }
        try {
            await this.client[kind]();
        }
        catch (err) {
            this.showBanner(err instanceof ApiError ? `${kind} refused (${err.status})` : "service unreachable");
            return;
        }
        await this.poll();
    }
    async submitQuery() {
        const term = this.queryInput.value.trim();
        if (this.client === null || term === "") {
            return;
        }
        try {
            applyQuerySuccess(this.state, await this.client.query(term));
        }
        catch (err) {
            if (err instanceof ApiError && err.payload.error === "unknown_term") {
                applyQueryFailure(this.state, `unknown term "${term}"`);
            }
            else if (err instanceof ApiError) {
                applyQueryFailure(this.state, `query refused (${err.payload.error ?? err.status})`);
            }
            else {
                applyQueryFailure(this.state, "service unreachable");
            }
        }
        this.renderQueryPanel();
    }
    // One refresh cycle: status, slice, and (while a goal watch is pending)
    // the planner log tail. Failures keep the last snapshot and show a banner.
    async poll() {
        if (this.client === null || this.polling) {
            return;
        }
        this.polling = true;
        try {
            applyStatus(this.state, await this.client.status());
            applySlice(this.state, await this.client.slice(this.state.selectedZ, this.state.layer));
            const watch = this.state.goalWatch;
            if (watch !== null) {
                applyPlannerLog(this.state, await this.client.plannerLog(watch.sinceTick));
            }
        }
        catch {
            noteDisconnect(this.state);
        }
        finally {
            this.polling = false;
        }
        this.render();
    }
    render() {
        const s = this.state;
        this.banner.hidden = s.connected;
        if (!s.connected) {
            this.showBanner("service unreachable, showing last snapshot");
        }
        if (s.mission !== null) {
            const m = s.mission;
            this.statusLine.textContent =
                `${m.state} | tick ${m.tick} | coverage ${(m.coverage * 100).toFixed(1)}%` +
                    ` | snapshot v${m.snapshot_version}` +
                    (m.current_query !== null ? ` | query "${m.current_query}"` : "");
        }
        this.goalNotice.textContent = s.goalNotice ?? "";
        if (s.slice !== null) {
            this.drawSlice(s.slice, s.mission);
        }
        this.renderQueryPanel();
    }
    drawSlice(slice, mission) {
        const ctx = this.canvas.getContext("2d");
        if (ctx === null) {
            return;
        }
        this.canvas.width = Math.max(1, slice.width * CELL_PX);
        this.canvas.height = Math.max(1, slice.height * CELL_PX);
        ctx.imageSmoothingEnabled = false;
        if (slice.width === 0 || slice.height === 0) {
            ctx.fillStyle = "rgb(42, 46, 53)";
            ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
        }
        else {
            const img = sliceToImage(slice);
            const bitmap = new ImageData(img.data, img.width, img.height);
            const off = document.createElement("canvas");
            off.width = img.width;
            off.height = img.height;
            off.getContext("2d")?.putImageData(bitmap, 0, 0);
            ctx.drawImage(off, 0, 0, this.canvas.width, this.canvas.height);
        }
        if (mission !== null) {
            if (mission.position !== null) {
                this.drawMarker(ctx, slice, mission.position, "#3fa7ff");
            }
            if (mission.goal !== null) {
                this.drawMarker(ctx, slice, mission.goal.position, "#ff5c5c");
            }
        }
    }
    drawMarker(ctx, slice, pos, color) {
        const cell = worldToCell(slice, pos[0] ?? 0, pos[1] ?? 0);
        if (cell === null) {
            return;
        }
        ctx.fillStyle = color;
        ctx.beginPath();
        ctx.arc(cell.cx * CELL_PX, cell.cy * CELL_PX, CELL_PX * 0.8, 0, 2 * Math.PI);
        ctx.fill();
    }
    renderQueryPanel() {
        this.queryError.textContent = this.state.queryError ?? "";
        const last = lastQuery(this.state);
        this.results.innerHTML = "";
        if (last !== null) {
            for (const row of last.result.top_segments) {
                const li = document.createElement("li");
                li.textContent =
                    `segment ${row.id}  sim ${row.similarity.toFixed(3)}` +
                        `  centroid ${formatCentroid(row.centroid)}  voxels ${row.voxel_count}`;
                this.results.appendChild(li);
            }
            if (last.result.top_segments.length === 0) {
                const li = document.createElement("li");
                li.textContent = "no segments yet";
                this.results.appendChild(li);
            }
        }
        this.history.innerHTML = "";
        for (const entry of this.state.queryHistory) {
            const li = document.createElement("li");
            const best = entry.result.top_segments[0];
            li.textContent = best !== undefined
                ? `${entry.term} -> segment ${best.id} (sim ${best.similarity.toFixed(3)})`
                : `${entry.term} -> no match yet`;
            this.history.appendChild(li);
        }
    }
    showBanner(message) {
        this.banner.hidden = false;
        this.banner.textContent = message;
    }
}
