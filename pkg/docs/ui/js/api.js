// Thin typed client over the mission control HTTP API. The console never
// recomputes similarities or map state; every number it shows comes straight
// out of these payloads.
export class ApiError extends Error {
    status;
    payload;
    constructor(status, payload) {
        super(`HTTP ${status}: ${payload.error ?? "request failed"}`);
        this.status = status;
        this.payload = payload;
    }
}
function normalizeBase(addr) {
    const trimmed = addr.trim().replace(/\/+$/, "");
    if (trimmed === "") {
        return "";
    }
    return /^https?:\/\//.test(trimmed) ? trimmed : `http://${trimmed}`;
}
export class SeekmapClient {
    base;
    fetchFn;
    constructor(addr, fetchFn) {
        this.base = normalizeBase(addr);
        this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
    }
    async request(method, path, body) {
        const init = { method };
        if (body !== undefined) {
            init.body = JSON.stringify(body);
            init.headers = { "Content-Type": "application/json" };
        }
        const resp = await this.fetchFn(this.base + path, init);
        if (!resp.ok) {
            let payload = {};
            try {
                payload = await resp.json();
            }
            catch {
                // non-JSON error body; keep the bare status
            }
            throw new ApiError(resp.status, payload);
        }
        return resp;
    }
    async getJson(path) {
        return (await this.request("GET", path)).json();
    }
    status() {
        return this.getJson("/mission/status");
    }
    slice(z, layer) {
        return this.getJson(`/map/slice?z=${encodeURIComponent(z)}&layer=${layer}`);
    }
    segments() {
        return this.getJson("/map/segments");
    }
    async query(term) {
        return (await this.request("POST", "/query", { term })).json();
    }
    async start() {
        await this.request("POST", "/mission/start");
    }
    async pause() {
        await this.request("POST", "/mission/pause");
    }
    async resume() {
        await this.request("POST", "/mission/resume");
    }
    async plannerLog(since) {
        const resp = await this.request("GET", `/planner/log?since=${since}`);
        const text = await resp.text();
        return text
            .split("\n")
            .filter((line) => line.trim() !== "")
            .map((line) => JSON.parse(line));
    }
}
