import { clamp01, formatBand, formatPercent, formatValue, outcomeParts } from "./format.js";
/** Renders the whole console into one root element and wires events back to
 * the controller.  Pure view: state in, DOM out. */
export class ConsoleView {
    constructor(root, controller) {
        this.root = root;
        this.controller = controller;
        this.pendingValue = null;
        this.sortKey = "stddev";
        controller.onChange(() => this.render());
        this.render();
    }
    render() {
        const state = this.controller.state;
        this.root.replaceChildren();
        this.root.append(this.header(state));
        switch (state.phase) {
            case "idle":
                this.root.append(this.startScreen(state, "Start a session"));
                break;
            case "starting":
                this.root.append(el("p", "status", "Contacting the service…"));
                break;
            case "failed":
                this.root.append(this.errorScreen(state));
                break;
            case "active":
                this.root.append(this.banners(state), this.questionCard(state), this.posteriorPanel(state));
                break;
            case "completed":
                this.root.append(this.banners(state), this.completionScreen(state), this.posteriorPanel(state));
                break;
        }
    }
    header(state) {
        const header = el("header", "header");
        header.append(el("h1", "", "Utility elicitation"));
        if (state.model) {
            const vars = state.model.domain.variables.map((v) => v.name).join(", ");
            header.append(el("p", "model-line", `${state.model.model_id} · attributes ${vars} · ${state.model.n_outcomes} outcomes`));
        }
        return header;
    }
    startScreen(state, label) {
        const panel = el("section", "start card");
        const policyRow = el("div", "policy-row");
        policyRow.append(el("span", "", "Question policy:"));
        for (const policy of ["rref", "variance"]) {
            const button = el("button", state.policy === policy ? "toggle active" : "toggle", policy);
            button.addEventListener("click", () => {
                this.controller.setPolicy(policy);
            });
            policyRow.append(button);
        }
        const start = el("button", "primary", label);
        start.addEventListener("click", () => {
            void this.controller.start();
        });
        panel.append(policyRow, start);
        return panel;
    }
    errorScreen(state) {
        const panel = el("section", "error card");
        panel.append(el("p", "error-text", state.errorMessage ?? "Something went wrong."));
        const retry = el("button", "primary", "Retry");
        retry.addEventListener("click", () => {
            void this.controller.start();
        });
        panel.append(retry);
        return panel;
    }
    banners(state) {
        const wrap = el("div", "banners");
        if (state.errorMessage) {
            wrap.append(el("div", "banner notice", state.errorMessage));
        }
        if (state.outlier?.flagged) {
            wrap.append(el("div", "banner warning", `Atypical answers (outlier score ${formatValue(state.outlier.score, 2)}). ` +
                "Consider re-checking earlier answers."));
        }
        if (state.stopSuggested && state.phase === "active") {
            wrap.append(el("div", "banner info", "The model is confident enough to stop; remaining questions are optional."));
        }
        return wrap;
    }
    questionCard(state) {
        const card = el("section", "question card");
        const q = state.question;
        if (!q)
            return card;
        card.append(el("p", "progress", `Question ${state.answered.length + 1} · answered ${state.answered.length} / about ${state.expectedQuestions}`));
        const chips = el("div", "chips");
        for (const [name, level] of outcomeParts(q.description)) {
            const chip = el("span", "chip");
            chip.append(el("b", "", name), el("span", "", level ? ` = ${level}` : ""));
            chips.append(chip);
        }
        card.append(el("p", "prompt", "How desirable is this outcome, from 0 (worst) to 1 (best)?"), chips);
        const controls = el("div", "value-controls");
        const slider = document.createElement("input");
        slider.type = "range";
        slider.min = "0";
        slider.max = "1";
        slider.step = "0.01";
        const number = document.createElement("input");
        number.type = "number";
        number.min = "0";
        number.max = "1";
        number.step = "0.01";
        number.placeholder = "0.00–1.00";
        const submit = el("button", "primary", "Submit answer");
        submit.disabled = this.pendingValue === null || state.busy;
        if (this.pendingValue !== null) {
            slider.value = String(this.pendingValue);
            number.value = String(this.pendingValue);
        }
        else {
            slider.value = "0.5";
            number.value = "";
        }
        const setValue = (raw) => {
            const v = clamp01(Number(raw));
            this.pendingValue = v;
            slider.value = String(v);
            number.value = String(v);
            submit.disabled = state.busy;
        };
        slider.addEventListener("input", () => setValue(slider.value));
        number.addEventListener("input", () => {
            if (number.value !== "")
                setValue(number.value);
        });
        submit.addEventListener("click", () => {
            if (this.pendingValue === null)
                return;
            const v = this.pendingValue;
            this.pendingValue = null;
            void this.controller.submit(v);
        });
        controls.append(slider, number, submit);
        card.append(controls);
        return card;
    }
    completionScreen(state) {
        const panel = el("section", "completion card");
        panel.append(el("h2", "", "Elicitation complete"));
        panel.append(el("p", "", `Answered ${state.answered.length} questions; the model now predicts every remaining outcome below.`));
        const check = state.redundantCheck;
        if (check && check.answer !== null) {
            panel.append(el("div", "banner info", `Check answered ${formatValue(check.answer)} vs predicted ${formatBand(check.prediction.mean, check.prediction.stddev)}.`));
        }
        if (check && check.answer === null) {
            panel.append(this.redundantCard(check.prediction, state));
        }
        else if (state.predictions.length > 0) {
            const offer = el("button", "secondary", "Answer a redundant check question");
            offer.addEventListener("click", () => this.controller.startRedundantCheck());
            panel.append(offer);
        }
        const again = el("button", "secondary", "Start another session");
        again.addEventListener("click", () => {
            void this.controller.start();
        });
        panel.append(again);
        return panel;
    }
    redundantCard(prediction, state) {
        const card = el("div", "redundant card-inner");
        const key = state.model?.outcome_keys[prediction.outcome_id] ?? String(prediction.outcome_id);
        card.append(el("p", "", "Redundant check: rate this outcome once more."));
        const chips = el("div", "chips");
        for (const [name, level] of outcomeParts(key)) {
            const chip = el("span", "chip");
            chip.append(el("b", "", name), el("span", "", ` = ${level}`));
            chips.append(chip);
        }
        card.append(chips);
        const number = document.createElement("input");
        number.type = "number";
        number.min = "0";
        number.max = "1";
        number.step = "0.01";
        const submit = el("button", "primary", "Submit check");
        submit.addEventListener("click", () => {
            if (number.value === "")
                return;
            void this.controller.answerOutcome(prediction.outcome_id, clamp01(Number(number.value)));
        });
        const skip = el("button", "secondary", "Skip");
        skip.addEventListener("click", () => this.controller.dismissRedundantCheck());
        card.append(number, submit, skip);
        return card;
    }
    posteriorPanel(state) {
        const panel = el("section", "posterior card");
        panel.append(el("h2", "", "Model view"));
        if (state.typeWeights.length > 0) {
            const bars = el("div", "type-bars");
            state.typeWeights.forEach((w, i) => {
                const row = el("div", "type-bar-row");
                row.append(el("span", "type-label", `type ${i}`));
                const track = el("div", "bar-track");
                const fill = el("div", "bar-fill");
                fill.style.width = `${clamp01(w) * 100}%`;
                track.append(fill);
                row.append(track, el("span", "type-pct", formatPercent(w)));
                bars.append(row);
            });
            panel.append(el("h3", "", "Type weights"), bars);
        }
        if (state.predictions.length > 0) {
            panel.append(el("h3", "", "Predicted utilities (unanswered outcomes)"));
            panel.append(this.predictionsTable(state));
        }
        return panel;
    }
    predictionsTable(state) {
        const table = document.createElement("table");
        table.className = "predictions";
        const head = document.createElement("tr");
        for (const [label, key] of [["outcome", "outcome_id"], ["mean ± stddev", "stddev"]]) {
            const th = document.createElement("th");
            th.textContent = label + (this.sortKey === key ? " ▾" : "");
            th.addEventListener("click", () => {
                this.sortKey = key;
                this.render();
            });
            head.append(th);
        }
        table.append(head);
        const rows = [...state.predictions].sort((a, b) => this.sortKey === "stddev" ? b.stddev - a.stddev : a.outcome_id - b.outcome_id);
        for (const p of rows) {
            const tr = document.createElement("tr");
            const key = state.model?.outcome_keys[p.outcome_id] ?? String(p.outcome_id);
            tr.append(el("td", "outcome-key", key));
            const cell = el("td", "band");
            const band = el("div", "band-wrap");
            const fill = el("div", "band-fill");
            const lo = clamp01(p.mean - p.stddev);
            const hi = clamp01(p.mean + p.stddev);
            fill.style.left = `${lo * 100}%`;
            fill.style.width = `${Math.max(hi - lo, 0.005) * 100}%`;
            const dot = el("div", "band-dot");
            dot.style.left = `${clamp01(p.mean) * 100}%`;
            band.append(fill, dot);
            cell.append(band, el("span", "band-text", formatBand(p.mean, p.stddev)));
            tr.append(cell);
            table.append(tr);
        }
        return table;
    }
}
function el(tag, className = "", text = "") {
    const node = document.createElement(tag);
    if (className)
        node.className = className;
    if (text)
        node.textContent = text;
    return node;
}
