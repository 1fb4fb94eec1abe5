export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
        this.name = "ApiError";
    }
}
async function parseJson(response) {
    const text = await response.text();
    try {
        return text ? JSON.parse(text) : null;
    }
    catch {
        throw new ApiError(response.status, "response was not JSON");
    }
}
async function request(url, init) {
    let response;
    try {
        response = await fetch(url, init);
    }
    catch (err) {
        throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const body = await parseJson(response);
    if (!response.ok) {
        const message = body && typeof body === "object" && "error" in body
            ? String(body.error)
            : `HTTP ${response.status}`;
        throw new ApiError(response.status, message);
    }
    return body;
}
/** Thin typed client over the /api routes. */
export class ApiClient {
    constructor(baseUrl = "") {
        this.baseUrl = baseUrl;
    }
    getModel() {
        return request(`${this.baseUrl}/api/model`);
    }
    createSession(policy) {
        return request(`${this.baseUrl}/api/sessions`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ policy }),
        });
    }
    submitAnswer(sessionId, outcomeId, value) {
        return request(`${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/answers`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ outcome_id: outcomeId, value }),
        });
    }
    getPredictions(sessionId) {
        return request(`${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/predictions`);
    }
    getSession(sessionId) {
        return request(`${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}`);
    }
}
