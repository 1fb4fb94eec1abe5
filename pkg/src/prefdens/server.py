"""HTTP session API over the elicitation engine, plus static console files.

The service owns no statistics: every response value comes from calling the
elicitation module on the stored session, so replaying a session's answer
log through the library reproduces the API's outputs exactly.  Sessions
live in memory behind per-session locks (single writer per session id) with
an optional append-only JSON-lines journal for crash recovery.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from prefdens.elicit import (
    RepeatedOutcomeError,
    Session,
    next_question,
    outlier_score,
    predict,
    start_session,
    stop_check,
    update_posterior,
)
from prefdens.em import MixtureModel

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>prefdens</title></head>
<body><h1>prefdens elicitation service</h1>
<p>No console build was found. The JSON API lives under <code>/api</code>.</p>
</body></html>
"""


class BadRequest(ValueError):
    """Malformed request body; maps to HTTP 422."""


@dataclass
class ApiSession:
    session_id: str
    session: Session
    created_at: float
    lock: threading.Lock


class ElicitationServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, model: MixtureModel, model_id: str = "model",
                 static_dir=None, journal_path=None, calibration_sims: int = 1000):
        super().__init__(address, ApiHandler)
        self.model = model
        self.model_id = model_id
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self.calibration_sims = calibration_sims
        self.sessions: dict[str, ApiSession] = {}
        self.store_lock = threading.Lock()
        self.journal_path = Path(journal_path) if journal_path else None
        self.journal_lock = threading.Lock()
        if self.journal_path and self.journal_path.exists():
            self._replay_journal()

    # -- session bookkeeping -------------------------------------------------

    def create_session(self, policy: str, session_id: str | None = None) -> ApiSession:
        sid = session_id or uuid.uuid4().hex
        api = ApiSession(sid, start_session(self.model, policy), time.time(), threading.Lock())
        with self.store_lock:
            self.sessions[sid] = api
        return api

    def get_session(self, sid: str) -> ApiSession | None:
        with self.store_lock:
            return self.sessions.get(sid)

    def journal(self, event: dict) -> None:
        if not self.journal_path:
            return
        with self.journal_lock:
            with self.journal_path.open("a") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _replay_journal(self) -> None:
        for line in self.journal_path.read_text().splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            if event["event"] == "create":
                self.create_session(event["policy"], session_id=event["session_id"])
            elif event["event"] == "answer":
                api = self.sessions.get(event["session_id"])
                if api is not None:
                    api.session = update_posterior(
                        api.session, int(event["outcome_id"]), float(event["value"])
                    )

    # -- payload builders ----------------------------------------------------

    def question_payload(self, session: Session):
        q = next_question(session)
        if q is None:
            return None
        return {
            "outcome_id": q.outcome_index,
            "description": q.description,
            "score": q.score,
        }

    def outlier_payload(self, session: Session):
        if not session.answered:
            return None
        score, flagged = outlier_score(session, n_sims=self.calibration_sims)
        return {"score": score, "flagged": flagged}

    def session_summary(self, api: ApiSession) -> dict:
        session = api.session
        expected = self.model.types[session.most_probable_type].m
        return {
            "session_id": api.session_id,
            "model_id": self.model_id,
            "created_at": api.created_at,
            "policy": session.policy,
            "answers": [
                {"outcome_id": o, "value": v} for o, v in session.answered
            ],
            "type_weights": session.type_weights.tolist(),
            "expected_questions": expected,
            "stop_suggested": stop_check(session),
            "outlier": self.outlier_payload(session),
            "next_question": self.question_payload(session),
        }

    def model_summary(self) -> dict:
        return {
            "model_id": self.model_id,
            "domain": self.model.domain.to_json_dict(),
            "n_outcomes": self.model.domain.n_outcomes,
            "outcome_keys": self.model.domain.outcome_keys(),
            "types": [
                {"structure": t.structure.to_json_dict(), "basis_size": t.m}
                for t in self.model.types
            ],
            "type_probs": self.model.theta.tolist(),
        }


class ApiHandler(BaseHTTPRequestHandler):
    server: ElicitationServer

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- plumbing -------------------------------------------------------------

    def send_json(self, obj, status: int = 200) -> None:
        body = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def send_error_json(self, status: int, message: str) -> None:
        self.send_json({"error": message}, status=status)

    def read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise BadRequest("empty request body")
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BadRequest(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise BadRequest("request body must be a JSON object")
        return data

    # -- routing --------------------------------------------------------------

    def do_POST(self) -> None:
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        try:
            if parts == ["api", "sessions"]:
                self.handle_create()
            elif len(parts) == 4 and parts[:2] == ["api", "sessions"] and parts[3] == "answers":
                self.handle_answer(parts[2])
            else:
                self.send_error_json(404, "no such route")
        except BadRequest as exc:
            self.send_error_json(422, str(exc))

    def do_GET(self) -> None:
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts[:1] == ["api"]:
            if parts == ["api", "model"]:
                self.send_json(self.server.model_summary())
            elif len(parts) == 3 and parts[1] == "sessions":
                api = self.server.get_session(parts[2])
                if api is None:
                    self.send_error_json(404, "unknown session")
                    return
                with api.lock:
                    self.send_json(self.server.session_summary(api))
            elif len(parts) == 4 and parts[1] == "sessions" and parts[3] == "predictions":
                api = self.server.get_session(parts[2])
                if api is None:
                    self.send_error_json(404, "unknown session")
                    return
                with api.lock:
                    preds = predict(api.session)
                self.send_json(
                    [
                        {"outcome_id": p.outcome_index, "mean": p.mean, "stddev": p.stddev}
                        for p in preds
                    ]
                )
            else:
                self.send_error_json(404, "no such route")
            return
        self.serve_static(self.path.split("?")[0])

    # -- handlers ---------------------------------------------------------

    def handle_create(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        policy = "rref"
        if raw:
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise BadRequest(f"invalid JSON: {exc}") from exc
            if not isinstance(data, dict):
                raise BadRequest("request body must be a JSON object")
            policy = data.get("policy", "rref")
        if policy not in ("rref", "variance"):
            raise BadRequest(f"unknown policy {policy!r}")
        api = self.server.create_session(policy)
        self.server.journal(
            {"event": "create", "session_id": api.session_id, "policy": policy}
        )
        with api.lock:
            self.send_json(
                {
                    "session_id": api.session_id,
                    "question": self.server.question_payload(api.session),
                },
                status=200,
            )

    def handle_answer(self, sid: str) -> None:
        api = self.server.get_session(sid)
        if api is None:
            self.send_error_json(404, "unknown session")
            return
        data = self.read_body()
        if "outcome_id" not in data or "value" not in data:
            raise BadRequest("body needs outcome_id and value")
        try:
            outcome = int(data["outcome_id"])
            value = float(data["value"])
        except (TypeError, ValueError) as exc:
            raise BadRequest(f"bad outcome_id or value: {exc}") from exc
        if not 0 <= outcome < self.server.model.domain.n_outcomes:
            raise BadRequest(f"outcome_id {outcome} out of range")
        with api.lock:
            try:
                api.session = update_posterior(api.session, outcome, value)
            except RepeatedOutcomeError as exc:
                self.send_error_json(409, str(exc))
                return
            self.server.journal(
                {
                    "event": "answer",
                    "session_id": sid,
                    "outcome_id": outcome,
                    "value": value,
                }
            )
            session = api.session
            self.send_json(
                {
                    "type_weights": session.type_weights.tolist(),
                    "next_question": self.server.question_payload(session),
                    "outlier": self.server.outlier_payload(session),
                    "stop_suggested": stop_check(session),
                }
            )

    def serve_static(self, path: str) -> None:
        if self.server.static_dir is None:
            if path in ("/", "/index.html"):
                body = PLACEHOLDER_PAGE.encode()
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
            else:
                self.send_error_json(404, "not found")
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.server.static_dir / rel).resolve()
        if not str(target).startswith(str(self.server.static_dir)) or not target.is_file():
            self.send_error_json(404, "not found")
            return
        body = target.read_bytes()
        self.send_response(200)
        self.send_header(
            "Content-Type", CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        )
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    model: MixtureModel,
    host: str = "127.0.0.1",
    port: int = 8330,
    model_id: str = "model",
    static_dir=None,
    journal_path=None,
    calibration_sims: int = 1000,
) -> ElicitationServer:
    return ElicitationServer(
        (host, port), model, model_id=model_id, static_dir=static_dir,
        journal_path=journal_path, calibration_sims=calibration_sims,
    )
