"""HTTP dialogue-session service and the session engine behind it.

``LiveSession`` is plain Python so the terminal chat loop and the HTTP API
share one code path; the FastAPI app is a thin JSON wrapper around a registry
of sessions. State lives in memory, with optional append-only transcripts.

No ``from __future__ import annotations`` here: the request models are
defined inside :func:`create_app`, and FastAPI cannot resolve them from
string annotations (it would fall back to treating the body as a query
parameter).
"""

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from .agents import VARIANTS, DialogueAgent, build_agent, canonical_variant
from .kb import KbTable, load_kb
from .policy import Action, greedy_inform
from .simulator import RewardConfig, UserGoal, UserSimulator, load_templates
from .text import tokenize

MAX_UTTERANCE_BYTES = 2048
DISTRACTORS_PER_SLOT = 2


class SessionDone(Exception):
    """Raised when input arrives for a session that can no longer act."""


@dataclass
class ServiceSettings:
    """Server-level configuration shared by every session."""

    kb: KbTable
    checkpoints: dict[str, str] = field(default_factory=dict)
    transcript_dir: str | None = None
    idle_timeout: float = 900.0
    seed: int = 0
    top_r: int = 5
    max_turns: int = RewardConfig().max_turns


def build_target_card(kb: KbTable, goal: UserGoal,
                      rng: np.random.Generator,
                      distractors: int = DISTRACTORS_PER_SLOT) -> dict:
    """The entity a human evaluator should look for, with decoy slot values.

    Every slot the goal knows lists the true value among ``distractors``
    others drawn from the same column's vocabulary, shuffled, so the human
    answers with realistic uncertainty about which value is right.
    """
    slots: dict[str, list[str]] = {}
    for j, vid in sorted(goal.known_values.items()):
        true_value = kb.vocabs[j][vid]
        pool = [v for k, v in enumerate(kb.vocabs[j]) if k != vid]
        picked = [true_value]
        if pool:
            take = min(distractors, len(pool))
            idx = rng.choice(len(pool), size=take, replace=False)
            picked.extend(pool[int(k)] for k in idx)
        rng.shuffle(picked)
        slots[kb.slots[j]] = picked
    return {"entity": kb.entity_names[goal.target], "slots": slots}


class LiveSession:
    """One live conversation: an agent, its state, and a transcript."""

    def __init__(self, session_id: str, agent: DialogueAgent, kb: KbTable,
                 seed: int, max_turns: int = 10, eval_mode: bool = False,
                 templates: dict | None = None):
        self.id = session_id
        self.agent = agent
        self.kb = kb
        self.max_turns = max_turns
        self.eval_mode = eval_mode
        self.status = "open"
        self.turn = 0
        self.transcript: list[dict] = []
        self.lock = threading.Lock()
        self.last_active = time.monotonic()
        self.rng = np.random.default_rng([seed, 0])
        self._nlg_rng = np.random.default_rng([seed, 1])
        self._nlg = UserSimulator(kb, templates=templates)
        self.goal: UserGoal | None = None
        self.target_card: dict | None = None

        agent.reset()
        if eval_mode:
            self.goal = self._nlg.sample_goal(self.rng)
            self.target_card = build_target_card(kb, self.goal, self.rng)
            if hasattr(agent, "set_exact_beliefs"):
                agent.set_exact_beliefs(self.goal.known_values)

    def log(self, event: str, **payload) -> dict:
        record = {"ts": time.time(), "session": self.id, "event": event,
                  **payload}
        self.transcript.append(record)
        return record

    def greeting(self) -> str:
        text = self._nlg._pick("agent", "greet", self._nlg_rng)
        self.log("start", agent=getattr(self.agent, "variant", "agent"),
                 text=text, eval_mode=self.eval_mode,
                 target_card=self.target_card)
        return text

    def step(self, text: str) -> dict:
        """Feed one user utterance and produce the agent's next move."""
        if self.status != "open":
            raise SessionDone(f"session is {self.status}")
        self.turn += 1
        self.log("user", turn=self.turn, text=text)
        tokens = tuple(tokenize(text))
        self.agent.observe(tokens)
        outcome = self.agent.act("eval", self.rng)
        action = outcome.action
        forced = False
        if action.kind != "inform" and self.turn >= self.max_turns:
            probs = self.agent.posterior_probs
            if probs is None:
                probs = np.full(self.kb.n_rows, 1.0 / self.kb.n_rows)
            action = Action.inform(greedy_inform(probs, self.agent.top_r))
            forced = True

        reply: dict = {"turn": self.turn, "done": False, "rendered_text": "",
                       "agent_act": {"kind": action.kind}}
        if action.kind == "request":
            reply["agent_act"]["slot"] = self.kb.slots[int(action.slot)]
        else:
            results = list(action.results or ())
            reply["agent_act"]["results"] = results
            reply["results"] = [self.kb.entity_names[i] for i in results]
            reply["done"] = True
            if forced:
                reply["agent_act"]["forced_by_horizon"] = True
            if self.goal is not None:
                rank = (results.index(self.goal.target) + 1
                        if self.goal.target in results else None)
                reply["target_rank"] = rank
            self.status = "informed"
        reply["rendered_text"] = self._nlg.render_agent_action(
            action, self._nlg_rng)
        self.log("agent", turn=self.turn, **{
            k: v for k, v in reply.items() if k != "turn"})
        return reply

    def feedback(self, payload: dict) -> dict:
        return self.log("feedback", **payload)

    def summary(self) -> dict:
        return {
            "session_id": self.id,
            "agent": getattr(self.agent, "variant", "agent"),
            "status": self.status,
            "turn": self.turn,
            "eval_mode": self.eval_mode,
            "target_card": self.target_card,
            "transcript": list(self.transcript),
        }


class SessionRegistry:
    """Holds live sessions, expiring the idle ones lazily."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.sessions: dict[str, LiveSession] = {}
        self.lock = threading.Lock()
        self._counter = 0
        self._kb_cache: dict[str, KbTable] = {}
        self._templates = load_templates()

    def _expire_idle(self) -> None:
        now = time.monotonic()
        for session in self.sessions.values():
            if (session.status == "open"
                    and now - session.last_active > self.settings.idle_timeout):
                session.status = "expired"
                session.log("expired")

    def resolve_kb(self, ref: str | None) -> KbTable:
        if ref is None:
            return self.settings.kb
        if ref not in self._kb_cache:
            self._kb_cache[ref] = load_kb(ref)
        return self._kb_cache[ref]

    def create(self, variant: str, kb_ref: str | None, eval_mode: bool,
               seed: int | None) -> LiveSession:
        variant = canonical_variant(variant)
        kb = self.resolve_kb(kb_ref)
        checkpoint = self.settings.checkpoints.get(variant)
        agent = build_agent(variant, kb, checkpoint=checkpoint,
                            top_r=self.settings.top_r,
                            templates=self._templates)
        with self.lock:
            self._expire_idle()
            self._counter += 1
            if seed is None:
                seed = self.settings.seed * 100003 + self._counter
            session = LiveSession(
                uuid.uuid4().hex[:12], agent, kb, seed,
                max_turns=self.settings.max_turns, eval_mode=eval_mode,
                templates=self._templates)
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> LiveSession:
        with self.lock:
            self._expire_idle()
            session = self.sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def persist(self, session: LiveSession, records: list[dict]) -> None:
        if not self.settings.transcript_dir:
            return
        os.makedirs(self.settings.transcript_dir, exist_ok=True)
        path = os.path.join(self.settings.transcript_dir,
                            f"{session.id}.jsonl")
        with open(path, "a", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")


def create_app(settings: ServiceSettings):
    """Build the FastAPI app over a fresh session registry."""
    from fastapi import FastAPI, HTTPException
    from pydantic import BaseModel

    class CreateSessionBody(BaseModel):
        agent: str = "rule-soft"
        kb: str | None = None
        eval_mode: bool = False
        seed: int | None = None

    class UtteranceBody(BaseModel):
        text: str

    class FeedbackBody(BaseModel):
        success: bool | None = None
        rank: int | None = None
        comment: str | None = None

    app = FastAPI(title="kbdial dialogue service")
    # The web chat client may be served from a different origin (its page is
    # a static file); the API carries no credentials, so a blanket allowance
    # is safe.
    from fastapi.middleware.cors import CORSMiddleware
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    registry = SessionRegistry(settings)
    app.state.registry = registry

    def fetch(session_id: str) -> LiveSession:
        try:
            return registry.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"no session {session_id!r}")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/agents")
    def agents():
        return {"agents": [
            {"name": name,
             "checkpoint": settings.checkpoints.get(name),
             "trained": kind == "rule" or kind == "max"
                        or name in settings.checkpoints}
            for name, (kind, _) in VARIANTS.items()],
            "kb": {"rows": settings.kb.n_rows, "slots": list(settings.kb.slots)}}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            session = registry.create(body.agent, body.kb, body.eval_mode,
                                      body.seed)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with session.lock:
            greeting = session.greeting()
            registry.persist(session, session.transcript)
            out = {"session_id": session.id,
                   "agent": getattr(session.agent, "variant", "agent"),
                   "greeting": greeting}
            if session.target_card is not None:
                out["target_card"] = session.target_card
        return out

    @app.post("/sessions/{session_id}/utterance")
    def utterance(session_id: str, body: UtteranceBody):
        if len(body.text.encode("utf-8")) > MAX_UTTERANCE_BYTES:
            raise HTTPException(status_code=400, detail="utterance too long")
        session = fetch(session_id)
        with session.lock:
            mark = len(session.transcript)
            try:
                reply = session.step(body.text)
            except SessionDone as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            session.last_active = time.monotonic()
            registry.persist(session, session.transcript[mark:])
        return reply

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = fetch(session_id)
        with session.lock:
            return session.summary()

    @app.post("/sessions/{session_id}/feedback")
    def feedback(session_id: str, body: FeedbackBody):
        session = fetch(session_id)
        with session.lock:
            record = session.feedback(
                {k: v for k, v in body.model_dump().items() if v is not None})
            session.last_active = time.monotonic()
            registry.persist(session, [record])
        return {"ok": True}

    return app
