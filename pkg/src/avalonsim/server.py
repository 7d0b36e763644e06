"""Real-time game service: humans join seats over WebSockets, agents fill
the rest.

The session core is a synchronous, deterministic state machine (drivable
directly from tests with a manual clock); the FastAPI layer only moves JSON
frames between that core and the sockets.  The server is authoritative:
clients get per-seat projections and may only act when asked.

Eager annotations on purpose: FastAPI resolves the WebSocket handler's
parameter types at runtime, and those names are local to build_app.
"""

import asyncio
import itertools
import json
import random
import re
import secrets
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from .agents import Agent, BeliefAgent, RandomAgent, ScriptedEvilAgent, make_view
from .factor_model import conditional_provider, load_weights, uniform_model
from .game import (
    DEFAULT_PLAYER_NAMES,
    N_PLAYERS,
    GameState,
    Outcome,
    PartyVote,
    Phase,
    Propose,
    QuestVote,
    Role,
    RulesError,
    Say,
    apply_event,
    new_game,
    winner,
)

WIRE_SCHEMA_VERSION = 1

# Client-visible message types, both directions.
WIRE_TYPES = (
    "join",
    "state",
    "chat",
    "your_turn",
    "propose",
    "party_vote_request",
    "party_ballot",
    "quest_vote_request",
    "quest_ballot",
    "result",
    "error",
)

TYPING_DELAY_RANGE = (5.0, 7.0)
_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> List[str]:
    parts = [p.strip() for p in _SENTENCE_RE.split(text.strip()) if p.strip()]
    return parts or [text.strip() or "..."]


class SessionError(ValueError):
    pass


@dataclass
class SeatConfig:
    kind: str  # "human" | "agent"
    policy: str = "random"  # agent only: "grail" | "random" | "scripted_evil"
    params: dict = field(default_factory=dict)


@dataclass
class SessionConfig:
    seats: List[SeatConfig]
    seed: int = 0
    names: Sequence[str] = DEFAULT_PLAYER_NAMES
    roles: Optional[Dict[int, Role]] = None
    test_mode: bool = False
    time_scale: float = 1.0
    ballot_timeout: Optional[float] = 60.0
    model_weights: Optional[str] = None

    @staticmethod
    def from_dict(raw: dict) -> "SessionConfig":
        seats_raw = raw.get("seats")
        if not isinstance(seats_raw, list):
            raise SessionError("config must list seats")
        seats = []
        for entry in seats_raw:
            if isinstance(entry, str):
                entry = {"kind": entry}
            kind = entry.get("kind")
            if kind not in ("human", "agent"):
                raise SessionError(f"unknown seat kind: {kind!r}")
            seats.append(
                SeatConfig(
                    kind=kind,
                    policy=entry.get("policy", "random"),
                    params=dict(entry.get("params", {})),
                )
            )
        roles = None
        if raw.get("roles"):
            roles = {int(k): Role(v) for k, v in raw["roles"].items()}
        return SessionConfig(
            seats=seats,
            seed=int(raw.get("seed", 0)),
            names=tuple(raw.get("names", DEFAULT_PLAYER_NAMES)),
            roles=roles,
            test_mode=bool(raw.get("test_mode", False)),
            time_scale=float(raw.get("time_scale", 1.0)),
            ballot_timeout=raw.get("ballot_timeout", 60.0),
            model_weights=raw.get("model_weights"),
        )


@dataclass
class ScheduledFragment:
    deliver_at: float  # session clock seconds
    seat: int
    text: str
    delay: float  # the unscaled draw from [5, 7]


def _build_agent(seat: int, cfg: SeatConfig, seed: int, model_weights: Optional[str]) -> Agent:
    if cfg.policy == "grail":
        model = load_weights(model_weights) if model_weights else uniform_model()
        return BeliefAgent(seat, conditional_provider(model), seed=seed)
    if cfg.policy == "random":
        return RandomAgent(seat, seed=seed, **cfg.params)
    if cfg.policy == "scripted_evil":
        return ScriptedEvilAgent(seat, seed=seed, **cfg.params)
    raise SessionError(f"unknown agent policy: {cfg.policy!r}")


class Session:
    """One live game.  All mutation happens through advance(),
    handle_client_event(), poll_timeouts(), and flush_chat(); every outbound
    frame is appended to a per-seat outbox with gap-free sequence numbers."""

    def __init__(self, config: SessionConfig, session_id: Optional[str] = None) -> None:
        if len(config.seats) != N_PLAYERS:
            raise SessionError(f"exactly {N_PLAYERS} seats required, got {len(config.seats)}")
        self.id = session_id or secrets.token_hex(8)
        self.config = config
        self.state: GameState = new_game(config.seed, config.roles)
        self.agents: Dict[int, Agent] = {}
        self.join_tokens: Dict[int, str] = {}
        self.human_seats: List[int] = []
        rng = random.Random(config.seed)
        for seat, seat_cfg in enumerate(config.seats, start=1):
            if seat_cfg.kind == "human":
                self.human_seats.append(seat)
                self.join_tokens[seat] = f"seat{seat}-{secrets.token_hex(6)}"
            else:
                self.agents[seat] = _build_agent(
                    seat, seat_cfg, rng.getrandbits(32), config.model_weights
                )
        self.delay_rng = random.Random(config.seed ^ 0x7A11)
        self.outbox: Dict[int, List[dict]] = {s: [] for s in range(1, N_PLAYERS + 1)}
        self.last_acked: Dict[int, int] = {s: 0 for s in range(1, N_PLAYERS + 1)}
        self.events: List[dict] = []  # replayable engine + service log
        self.delay_log: List[dict] = []
        self.finished = False
        self._start = time.monotonic()
        self._test_clock = 0.0
        self._chat_queue: List[ScheduledFragment] = []
        self._pending_say: Optional[Tuple[int, str]] = None
        self._party_ballots: Dict[int, bool] = {}
        self._quest_ballots: Dict[int, bool] = {}
        self._requested: set = set()
        self._deadlines: Dict[int, Tuple[str, float]] = {}
        self._broadcast_state()  # clients render from a snapshot before any event
        self.advance()

    # ------------------------------------------------------------------
    # clock

    def now(self) -> float:
        if self.config.test_mode:
            return self._test_clock
        return time.monotonic() - self._start

    def advance_clock(self, dt: float) -> None:
        if not self.config.test_mode:
            raise SessionError("manual clock only available in test mode")
        self._test_clock += dt

    # ------------------------------------------------------------------
    # outbound

    def _send(self, seat: int, type_: str, payload: dict) -> None:
        box = self.outbox[seat]
        box.append({"type": type_, "seq": len(box) + 1, "payload": payload})

    def _broadcast_state(self) -> None:
        for seat in range(1, N_PLAYERS + 1):
            self._send(seat, "state", self.project_state(seat))

    def _broadcast_chat(self, seat: int, text: str) -> None:
        for target in range(1, N_PLAYERS + 1):
            self._send(target, "chat", {"seat": seat, "name": self.config.names[seat - 1], "text": text})

    def project_state(self, seat: int) -> dict:
        """Seat-local view; Evil identities appear only for Evil seats."""
        state = self.state
        coins = []
        for q in state.quests:
            if q.outcome is Outcome.SUCCESS:
                coins.append("blue")
            elif q.outcome is Outcome.FAIL:
                coins.append("red")
            else:
                coins.append(None)
        speaker = state.current_speaker() if state.phase is Phase.DISCUSSION else None
        payload: dict = {
            "schema_version": WIRE_SCHEMA_VERSION,
            "phase": state.phase.value,
            "round": state.quest_index,
            "party_size": state.party_size() if state.phase is not Phase.FINISHED else None,
            "leader": state.leader,
            "active_speaker": speaker,
            "proposed_party": list(state.pending_party) if state.pending_party else None,
            "rejection_tracker": state.consecutive_rejections,
            "quest_coins": coins,
            "seats": [
                {"seat": p, "name": self.config.names[p - 1]}
                for p in range(1, N_PLAYERS + 1)
            ],
            "your_seat": seat,
            "your_role": state.role_of(seat).value,
            "winner": side.value if (side := winner(state)) else None,
        }
        if state.role_of(seat) is Role.EVIL:
            payload["evil_ids"] = sorted(state.evil_players())
        return payload

    # ------------------------------------------------------------------
    # engine plumbing

    def _apply(self, event: Any, actor: Optional[int]) -> None:
        self.state = apply_event(self.state, event)
        self.events.append(
            {
                "kind": "engine",
                "at": self.now(),
                "actor": actor,
                "event": _event_to_dict(event),
            }
        )
        self._broadcast_state()

    def _request_once(self, seat: int, type_: str, payload: dict, kind: str) -> None:
        # chat length distinguishes the leader's opening slot from the close
        # slot, which otherwise share quest, proposal count, and phase
        key = (
            type_,
            seat,
            self.state.quest_index,
            len(self.state.proposals),
            self.state.phase.value,
            len(self.state.chat),
        )
        if key in self._requested:
            return
        self._requested.add(key)
        self._send(seat, type_, payload)
        if self.config.ballot_timeout is not None:
            self._deadlines[seat] = (kind, self.now() + float(self.config.ballot_timeout))

    # ------------------------------------------------------------------
    # chat relay

    def relay_agent_message(self, seat: int, text: str) -> List[ScheduledFragment]:
        """Split at sentence boundaries and schedule each fragment after an
        independent 5-7 s delay, delivered in order."""
        fragments = split_sentences(text)
        at = self.now()
        scheduled = []
        delays = []
        for fragment in fragments:
            delay = self.delay_rng.uniform(*TYPING_DELAY_RANGE)
            delays.append(delay)
            at = at + delay * self.config.time_scale
            scheduled.append(ScheduledFragment(deliver_at=at, seat=seat, text=fragment, delay=delay))
        self._chat_queue.extend(scheduled)
        self.delay_log.append({"seat": seat, "fragments": len(fragments), "delays": delays})
        self._pending_say = (seat, text)
        return scheduled

    def flush_chat(self, now: Optional[float] = None) -> int:
        """Deliver every due fragment; once a message's last fragment is out,
        commit the full Say to the engine."""
        now = self.now() if now is None else now
        delivered = 0
        while self._chat_queue and self._chat_queue[0].deliver_at <= now:
            fragment = self._chat_queue.pop(0)
            self._broadcast_chat(fragment.seat, fragment.text)
            delivered += 1
        if not self._chat_queue and self._pending_say is not None:
            seat, text = self._pending_say
            self._pending_say = None
            self._apply(Say(speaker=seat, text=text), seat)
        return delivered

    # ------------------------------------------------------------------
    # main state machine

    def advance(self) -> None:
        guard = 0
        while not self.finished:
            guard += 1
            if guard > 10000:
                raise SessionError("session failed to settle")
            if self._pending_say is not None:
                self.flush_chat()
                if self._pending_say is not None:
                    return  # waiting on the typing schedule
            state = self.state
            if state.phase is Phase.FINISHED:
                self.finished = True
                side = winner(state)
                for seat in range(1, N_PLAYERS + 1):
                    self._send(seat, "result", {"winner": side.value if side else None})
                self.events.append({"kind": "finished", "at": self.now(), "winner": side.value if side else None})
                return
            if state.phase is Phase.PROPOSAL:
                if not self._step_proposal():
                    return
            elif state.phase is Phase.DISCUSSION:
                if not self._step_discussion():
                    return
            elif state.phase is Phase.PARTY_VOTE:
                if not self._step_party_vote():
                    return
            elif state.phase is Phase.QUEST_VOTE:
                if not self._step_quest_vote():
                    return

    def _step_proposal(self) -> bool:
        leader = self.state.leader
        agent = self.agents.get(leader)
        if agent is None:
            self._request_once(
                leader,
                "propose",
                {"party_size": self.state.party_size(), "round": self.state.quest_index},
                "propose",
            )
            return False
        decision = agent.decide(make_view(self.state, leader))
        self._apply(Propose(party=decision.party), leader)
        return True

    def _step_discussion(self) -> bool:
        speaker = self.state.current_speaker()
        agent = self.agents.get(speaker)
        if agent is None:
            self._request_once(speaker, "your_turn", {"kind": "speak"}, "say")
            return False
        decision = agent.on_turn_to_speak(make_view(self.state, speaker))
        if decision.kind == "propose":
            self._apply(Propose(party=decision.party), speaker)
            return True
        self.relay_agent_message(speaker, decision.text or "...")
        self.flush_chat()
        return self._pending_say is None

    def _step_party_vote(self) -> bool:
        party = list(self.state.pending_party or ())
        for seat in range(1, N_PLAYERS + 1):
            if seat in self._party_ballots:
                continue
            agent = self.agents.get(seat)
            if agent is None:
                self._request_once(seat, "party_vote_request", {"party": party}, "party_ballot")
                continue
            self._party_ballots[seat] = bool(agent.decide(make_view(self.state, seat)).approve)
        if len(self._party_ballots) < N_PLAYERS:
            return False
        ballots = tuple(sorted(self._party_ballots.items()))
        self._party_ballots = {}
        self._apply(PartyVote(ballots=ballots), None)
        return True

    def _step_quest_vote(self) -> bool:
        party = sorted(self.state.pending_party or ())
        for seat in party:
            if seat in self._quest_ballots:
                continue
            agent = self.agents.get(seat)
            if agent is None:
                self._request_once(seat, "quest_vote_request", {"party": party}, "quest_ballot")
                continue
            self._quest_ballots[seat] = bool(agent.decide(make_view(self.state, seat)).success)
        if len(self._quest_ballots) < len(party):
            return False
        ballots = tuple(sorted(self._quest_ballots.items()))
        self._quest_ballots = {}
        self._apply(QuestVote(ballots=ballots), None)
        return True

    # ------------------------------------------------------------------
    # inbound

    def seat_for_token(self, token: str) -> Optional[int]:
        for seat, expected in self.join_tokens.items():
            if secrets.compare_digest(expected, token):
                return seat
        return None

    def handle_client_event(self, seat: int, message: dict) -> None:
        """Apply one client frame; out-of-turn or malformed input earns a
        typed error on that seat's stream and changes nothing."""
        self.events.append({"kind": "client", "at": self.now(), "seat": seat, "message": message})
        if not isinstance(message, dict):
            self._send(seat, "error", {"code": "malformed", "detail": "frame must be an object"})
            return
        type_ = message.get("type")
        try:
            if type_ == "ack":
                self.last_acked[seat] = max(self.last_acked[seat], int(message.get("seq", 0)))
                return
            if type_ == "propose":
                self._client_propose(seat, message)
            elif type_ == "chat":
                self._client_chat(seat, message)
            elif type_ == "party_ballot":
                self._client_party_ballot(seat, message)
            elif type_ == "quest_ballot":
                self._client_quest_ballot(seat, message)
            else:
                raise RulesError(f"unsupported message type: {type_!r}")
        except RulesError as exc:
            self._send(seat, "error", {"code": "not_your_turn", "detail": str(exc)})
            return
        except (TypeError, ValueError) as exc:
            self._send(seat, "error", {"code": "malformed", "detail": str(exc)})
            return
        self._deadlines.pop(seat, None)
        self.advance()

    def _client_propose(self, seat: int, message: dict) -> None:
        if seat != self.state.leader:
            raise RulesError("only the leader proposes")
        party = message.get("party")
        if not isinstance(party, list):
            raise RulesError("propose requires a party list")
        self._apply(Propose(party=tuple(int(p) for p in party)), seat)

    def _client_chat(self, seat: int, message: dict) -> None:
        if self.state.phase is not Phase.DISCUSSION or self.state.current_speaker() != seat:
            raise RulesError("not your turn to speak")
        text = str(message.get("text", ""))
        self._broadcast_chat(seat, text)
        self._apply(Say(speaker=seat, text=text), seat)

    def _client_party_ballot(self, seat: int, message: dict) -> None:
        if self.state.phase is not Phase.PARTY_VOTE:
            raise RulesError("no party vote in progress")
        if seat in self._party_ballots:
            raise RulesError("ballot already cast")
        self._party_ballots[seat] = bool(message.get("approve"))
        self._send(seat, "party_ballot", {"accepted": True})

    def _client_quest_ballot(self, seat: int, message: dict) -> None:
        party = set(self.state.pending_party or ())
        if self.state.phase is not Phase.QUEST_VOTE or seat not in party:
            raise RulesError("no quest ballot expected from this seat")
        if seat in self._quest_ballots:
            raise RulesError("ballot already cast")
        self._quest_ballots[seat] = bool(message.get("success"))
        self._send(seat, "quest_ballot", {"accepted": True})

    # ------------------------------------------------------------------
    # timeouts

    def poll_timeouts(self, now: Optional[float] = None) -> int:
        """Auto-ballot seats that blew their deadline (approve / success /
        random party / silence) and flag each one in the log."""
        now = self.now() if now is None else now
        fired = 0
        for seat, (kind, deadline) in list(self._deadlines.items()):
            if now < deadline:
                continue
            del self._deadlines[seat]
            fired += 1
            self.events.append({"kind": "timeout", "at": now, "seat": seat, "action": kind, "flagged": True})
            try:
                if kind == "party_ballot":
                    self._party_ballots[seat] = True
                elif kind == "quest_ballot":
                    self._quest_ballots[seat] = True
                elif kind == "propose":
                    rng = random.Random((self.config.seed, seat, len(self.events)).__hash__())
                    party = tuple(sorted(rng.sample(range(1, N_PLAYERS + 1), self.state.party_size())))
                    self._apply(Propose(party=party), seat)
                elif kind == "say":
                    self._apply(Say(speaker=seat, text=""), seat)
            except RulesError:
                continue  # the slot vanished (e.g. a revision reset the round)
        if fired:
            self.advance()
        return fired


def _event_to_dict(event: Any) -> dict:
    if isinstance(event, Propose):
        return {"type": "propose", "party": list(event.party)}
    if isinstance(event, Say):
        return {"type": "say", "speaker": event.speaker, "text": event.text}
    if isinstance(event, PartyVote):
        return {"type": "party_vote", "ballots": [[p, a] for p, a in event.ballots]}
    if isinstance(event, QuestVote):
        return {"type": "quest_vote", "ballots": [[p, s] for p, s in event.ballots]}
    raise TypeError(f"unknown event: {event!r}")


def _event_from_dict(raw: dict) -> Any:
    type_ = raw["type"]
    if type_ == "propose":
        return Propose(party=tuple(raw["party"]))
    if type_ == "say":
        return Say(speaker=raw["speaker"], text=raw["text"])
    if type_ == "party_vote":
        return PartyVote(ballots=tuple((p, bool(a)) for p, a in raw["ballots"]))
    if type_ == "quest_vote":
        return QuestVote(ballots=tuple((p, bool(s)) for p, s in raw["ballots"]))
    raise ValueError(f"unknown event type: {type_!r}")


def replay_session(events: Sequence[dict], seed: int, roles: Optional[Dict[int, Role]] = None) -> GameState:
    """Fold a session's logged engine events through a fresh game; the result
    must match the live session's outcome exactly."""
    state = new_game(seed, roles)
    for entry in events:
        if entry.get("kind") != "engine":
            continue
        state = apply_event(state, _event_from_dict(entry["event"]))
    return state


def create_session(config: SessionConfig | dict, session_id: Optional[str] = None) -> Session:
    if isinstance(config, dict):
        config = SessionConfig.from_dict(config)
    return Session(config, session_id=session_id)


# ---------------------------------------------------------------------------
# transport


def build_app(frontend_dir: Optional[str] = None):
    """FastAPI app exposing session creation, the WebSocket wire protocol,
    and (when built) the static browser client."""
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.responses import JSONResponse

    app = FastAPI(title="avalonsim play server")
    sessions: Dict[str, Session] = {}
    notifiers: Dict[str, List[asyncio.Event]] = {}
    app.state.sessions = sessions

    def poke(session_id: str) -> None:
        for event in notifiers.get(session_id, []):
            event.set()

    @app.post("/sessions")
    async def create(config: dict):
        try:
            session = create_session(config)
        except SessionError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        sessions[session.id] = session
        notifiers[session.id] = []
        if not session.config.test_mode and not session.finished:
            asyncio.create_task(_drive(session, session.id))
        return {
            "session_id": session.id,
            "schema_version": WIRE_SCHEMA_VERSION,
            "join_tokens": {str(seat): token for seat, token in session.join_tokens.items()},
            "finished": session.finished,
        }

    @app.get("/sessions/{session_id}")
    async def info(session_id: str):
        session = sessions.get(session_id)
        if session is None:
            return JSONResponse({"error": "no such session"}, status_code=404)
        return {
            "session_id": session.id,
            "finished": session.finished,
            "phase": session.state.phase.value,
            "events": len(session.events),
        }

    async def _drive(session: Session, session_id: str) -> None:
        while not session.finished:
            session.flush_chat()
            session.poll_timeouts()
            session.advance()
            poke(session_id)
            await asyncio.sleep(0.05)
        poke(session_id)

    @app.websocket("/ws/{session_id}/{token}")
    async def ws(websocket: WebSocket, session_id: str, token: str):
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        seat = session.seat_for_token(token)
        if seat is None:
            await websocket.close(code=4403)
            return
        await websocket.accept()
        first = await websocket.receive_json()
        last_seq = 0
        if first.get("type") == "join":
            last_seq = int(first.get("last_seq", 0))
        session.events.append({"kind": "join", "at": session.now(), "seat": seat})
        await websocket.send_json(
            {
                "type": "join",
                "seq": 0,
                "payload": {
                    "seat": seat,
                    "schema_version": WIRE_SCHEMA_VERSION,
                    "names": list(session.config.names),
                },
            }
        )
        notify = asyncio.Event()
        notifiers.setdefault(session_id, []).append(notify)
        sent = last_seq

        async def flush_outbox() -> None:
            nonlocal sent
            box = session.outbox[seat]
            while sent < len(box):
                await websocket.send_json(box[sent])
                sent += 1

        try:
            await flush_outbox()
            while True:
                receive = asyncio.create_task(websocket.receive_json())
                wakeup = asyncio.create_task(notify.wait())
                done, pending = await asyncio.wait(
                    {receive, wakeup}, return_when=asyncio.FIRST_COMPLETED
                )
                for task in pending:
                    task.cancel()
                if wakeup in done:
                    notify.clear()
                    await flush_outbox()
                if receive in done:
                    message = receive.result()
                    session.handle_client_event(seat, message)
                    poke(session_id)
                    await flush_outbox()
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            if notify in notifiers.get(session_id, []):
                notifiers[session_id].remove(notify)

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="client")

    return app
