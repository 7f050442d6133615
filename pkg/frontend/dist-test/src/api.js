/**
 * Service client with latest-wins sequencing: rapid slider drags may
 * resolve out of order, and only the payload of the most recent request is
 * ever surfaced — earlier responses come back marked stale.
 */
export class ApiClient {
    baseUrl;
    fetchFn;
    explainSeq = 0;
    rdSeq = 0;
    constructor(baseUrl, fetchFn = fetch.bind(globalThis)) {
        this.baseUrl = baseUrl;
        this.fetchFn = fetchFn;
    }
    async classes() {
        const res = await this.fetchFn(`${this.baseUrl}/api/classes`);
        if (!res.ok)
            throw new Error(`classes: HTTP ${res.status}`);
        return (await res.json());
    }
    async samples(cls) {
        const query = cls === undefined ? "" : `?class=${encodeURIComponent(String(cls))}`;
        const res = await this.fetchFn(`${this.baseUrl}/api/samples${query}`);
        if (!res.ok)
            throw new Error(`samples: HTTP ${res.status}`);
        return await res.json();
    }
    imageUrl(sampleId) {
        return `${this.baseUrl}/api/image/${encodeURIComponent(sampleId)}`;
    }
    async post(path, body, seq, current) {
        let res;
        try {
            res = await this.fetchFn(`${this.baseUrl}${path}`, {
                method: "POST",
                headers: { "content-type": "application/json" },
                body: JSON.stringify(body),
            });
        }
        catch (err) {
            if (seq !== current())
                return { kind: "stale" };
            return { kind: "error", status: 0, detail: String(err) };
        }
        if (seq !== current())
            return { kind: "stale" };
        if (!res.ok) {
            let detail = `HTTP ${res.status}`;
            try {
                const doc = await res.json();
                if (doc && typeof doc.detail === "string")
                    detail = doc.detail;
            }
            catch {
                // keep the status text
            }
            return { kind: "error", status: res.status, detail };
        }
        return { kind: "ok", payload: (await res.json()) };
    }
    explain(req) {
        const seq = ++this.explainSeq;
        return this.post("/api/explain", req, seq, () => this.explainSeq);
    }
    relativeDrop(req) {
        const seq = ++this.rdSeq;
        const { output, ...rest } = req;
        return this.post("/api/relative_drop", rest, seq, () => this.rdSeq);
    }
}
