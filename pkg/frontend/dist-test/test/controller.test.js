import assert from "node:assert/strict";
import { test } from "node:test";
import { ApiError } from "../src/api.js";
import { SessionController } from "../src/controller.js";
const MODEL = {
    model_id: "m",
    domain: { variables: [{ name: "A", levels: ["a1", "a2"] }] },
    n_outcomes: 2,
    outcome_keys: ["A=a1", "A=a2"],
    types: [{ structure: { clusters: [["A"]] }, basis_size: 2 }],
    type_probs: [1.0],
};
function question(id) {
    return { outcome_id: id, description: MODEL.outcome_keys[id], score: 0.5 };
}
class StubApi {
    constructor() {
        this.answers = [];
        this.predictions = [
            { outcome_id: 1, mean: 0.25, stddev: 0.125 },
        ];
        this.script = [];
        this.failNext = null;
    }
    async getModel() {
        return MODEL;
    }
    async createSession() {
        return { session_id: "s1", question: question(0) };
    }
    async submitAnswer(_sid, outcomeId, value) {
        if (this.failNext) {
            const err = this.failNext;
            this.failNext = null;
            throw err;
        }
        this.answers.push({ outcomeId, value });
        const next = this.script.shift();
        if (!next)
            throw new Error("script exhausted");
        return next;
    }
    async getPredictions() {
        return this.predictions;
    }
}
function answerStep(next, stop = false) {
    return {
        type_weights: [1.0],
        next_question: next,
        outlier: { score: 0.12, flagged: false },
        stop_suggested: stop,
    };
}
test("start loads the model and first question", async () => {
    const api = new StubApi();
    const controller = new SessionController(api);
    await controller.start();
    assert.equal(controller.state.phase, "active");
    assert.equal(controller.state.sessionId, "s1");
    assert.deepEqual(controller.state.question, question(0));
    assert.equal(controller.state.expectedQuestions, 2);
    // predictions arrive with the initial refresh, verbatim
    assert.deepEqual(controller.state.predictions, api.predictions);
});
test("submit advances the question and stores payload values verbatim", async () => {
    const api = new StubApi();
    api.script = [answerStep(question(1))];
    const controller = new SessionController(api);
    await controller.start();
    await controller.submit(0.7);
    assert.deepEqual(api.answers, [{ outcomeId: 0, value: 0.7 }]);
    assert.equal(controller.state.phase, "active");
    assert.deepEqual(controller.state.question, question(1));
    assert.deepEqual(controller.state.answered, [{ outcomeId: 0, value: 0.7 }]);
    assert.equal(controller.state.outlier?.score, 0.12);
});
test("null next question completes the session", async () => {
    const api = new StubApi();
    api.script = [answerStep(null, true)];
    const controller = new SessionController(api);
    await controller.start();
    await controller.submit(0.4);
    assert.equal(controller.state.phase, "completed");
    assert.equal(controller.state.stopSuggested, true);
    assert.equal(controller.state.question, null);
});
test("409 shows an inline notice without failing the session", async () => {
    const api = new StubApi();
    api.script = [answerStep(question(1))];
    const controller = new SessionController(api);
    await controller.start();
    api.failNext = new ApiError(409, "outcome 0 already answered");
    await controller.submit(0.5);
    assert.equal(controller.state.phase, "active");
    assert.match(controller.state.errorMessage ?? "", /already answered/);
    await controller.submit(0.5); // retry succeeds
    assert.deepEqual(controller.state.question, question(1));
});
test("unreachable service fails with a retryable error state", async () => {
    const api = new StubApi();
    api.getModel = async () => {
        throw new ApiError(0, "service unreachable: refused");
    };
    const controller = new SessionController(api);
    await controller.start();
    assert.equal(controller.state.phase, "failed");
    assert.match(controller.state.errorMessage ?? "", /unreachable/);
});
test("policy toggle only applies before the session starts", async () => {
    const api = new StubApi();
    const controller = new SessionController(api);
    controller.setPolicy("variance");
    assert.equal(controller.state.policy, "variance");
    await controller.start();
    controller.setPolicy("rref");
    assert.equal(controller.state.policy, "variance");
});
test("redundant check picks the lowest-stddev prediction", async () => {
    const api = new StubApi();
    api.script = [answerStep(null, true), answerStep(null, true)];
    api.predictions = [
        { outcome_id: 1, mean: 0.2, stddev: 0.4 },
        { outcome_id: 2, mean: 0.6, stddev: 0.05 },
    ];
    const controller = new SessionController(api);
    await controller.start();
    await controller.submit(0.9);
    assert.equal(controller.state.phase, "completed");
    controller.startRedundantCheck();
    assert.equal(controller.state.redundantCheck?.prediction.outcome_id, 2);
    await controller.answerOutcome(2, 0.55);
    assert.equal(controller.state.redundantCheck?.answer, 0.55);
    assert.deepEqual(api.answers.at(-1), { outcomeId: 2, value: 0.55 });
});
