"""Language-neutral agent bridge: newline-delimited JSON over stdio or TCP.

One connection carries one session and one live game at a time. The client
speaks first:

    hello -> configure -> (reset -> {observation -> action -> step_result}*
                                  -> episode_end)* -> bye

Every message is one JSON object per line: {"type", "session", "seq",
"payload"}. Client seq values must strictly increase; an action must
reference the latest observation's seq. Malformed input gets an error reply
(codes BAD_JSON, BAD_STATE, BAD_INDEX, BAD_CONFIG) and the session survives.
Observations never carry the hidden correct index.
"""

from __future__ import annotations

import json
import socketserver
import sys
import uuid
from pathlib import Path
from typing import Optional

from . import engine as enginemod
from .corpus import HintStore, Scenario, builtin_hints, builtin_scenario
from .engine import ENGINE_VERSION, EpisodeLog, GameConfig, Session
from .errors import (ConfigError, MismatchError, OutOfRange, SamplingError,
                     Terminated, VersionMismatch)
from .graph import ScenarioGraph

BAD_JSON = "BAD_JSON"
BAD_STATE = "BAD_STATE"
BAD_INDEX = "BAD_INDEX"
BAD_CONFIG = "BAD_CONFIG"


class ProtocolSession:
    """Single-session protocol state machine, transport-agnostic.

    ``handle_line`` maps one raw input line to a list of reply messages;
    it never raises on bad input.
    """

    def __init__(self, g: ScenarioGraph, s: Scenario, hints: Optional[HintStore],
                 session_id: Optional[str] = None):
        self.graph, self.scenario, self.hints = g, s, hints
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.seq = 0
        self.last_client_seq: Optional[int] = None
        self.stage = "await_hello"
        self.config: Optional[GameConfig] = None
        self.session: Optional[Session] = None
        self.last_obs_seq: Optional[int] = None
        self.closed = False

    def _msg(self, type_: str, payload: dict) -> dict:
        self.seq += 1
        return {"type": type_, "session": self.session_id, "seq": self.seq,
                "payload": payload}

    def _error(self, code: str, detail: str) -> dict:
        return self._msg("error", {"code": code, "detail": detail})

    def _observation_msg(self) -> dict:
        msg = self._msg("observation", self.session.observation.public_dict())
        self.last_obs_seq = msg["seq"]
        return msg

    def handle_line(self, line: str) -> list[dict]:
        if self.closed:
            return []
        line = line.strip()
        if not line:
            return []
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            return [self._error(BAD_JSON, f"not valid JSON: {exc}")]
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return [self._error(BAD_JSON, "message must be an object with a type")]

        seq = msg.get("seq")
        if not isinstance(seq, int):
            return [self._error(BAD_JSON, "message needs an integer seq")]
        if self.last_client_seq is not None and seq <= self.last_client_seq:
            return [self._error(BAD_STATE, f"seq {seq} does not increase")]
        self.last_client_seq = seq

        payload = msg.get("payload") or {}
        if not isinstance(payload, dict):
            return [self._error(BAD_JSON, "payload must be an object")]
        handler = getattr(self, f"_on_{msg['type']}", None)
        if handler is None:
            return [self._error(BAD_STATE, f"unknown message type {msg['type']!r}")]
        return handler(payload)

    def _on_hello(self, payload: dict) -> list[dict]:
        if self.stage != "await_hello":
            return [self._error(BAD_STATE, "hello already received")]
        self.stage = "await_configure"
        return [self._msg("hello", {
            "engine_version": ENGINE_VERSION,
            "scenario_title": self.scenario.title,
            "hints_available": self.hints is not None,
        })]

    def _on_configure(self, payload: dict) -> list[dict]:
        if self.stage == "await_hello":
            return [self._error(BAD_STATE, "configure before hello")]
        if self.stage == "in_episode":
            return [self._error(BAD_STATE, "configure during an episode")]
        try:
            cfg = GameConfig.from_dict(payload)
            cfg.validate()
            # dry run: surfaces handicap/sampling problems immediately
            enginemod.new_game(self.graph, self.scenario, self.hints, cfg)
        except (ConfigError, SamplingError, TypeError, ValueError) as exc:
            return [self._error(BAD_CONFIG, str(exc))]
        self.config = cfg
        self.stage = "configured"
        return [self._msg("configure", cfg.to_dict())]

    def _on_reset(self, payload: dict) -> list[dict]:
        if self.config is None:
            return [self._error(BAD_STATE, "reset before configure")]
        seed = payload.get("seed", self.config.seed)
        if not isinstance(seed, int):
            return [self._error(BAD_CONFIG, "seed must be an integer")]
        cfg = GameConfig(**{**self.config.to_dict(), "seed": seed})
        try:
            self.session = Session(self.graph, self.scenario, self.hints, cfg)
        except (ConfigError, SamplingError) as exc:
            return [self._error(BAD_CONFIG, str(exc))]
        self.stage = "in_episode"
        return [self._observation_msg()]

    def _on_action(self, payload: dict) -> list[dict]:
        if self.stage != "in_episode" or self.session is None or self.session.done:
            return [self._error(BAD_STATE, "no episode in progress")]
        if payload.get("observation_seq") != self.last_obs_seq:
            # stale or missing reference: repeat the current observation
            return [self._error(BAD_STATE, "action references a stale observation"),
                    self._observation_msg()]
        index = payload.get("index")
        if not isinstance(index, int) or isinstance(index, bool):
            return [self._error(BAD_INDEX, "index must be an integer")]
        try:
            result = self.session.step(index)
        except OutOfRange as exc:
            return [self._error(BAD_INDEX, str(exc))]
        except Terminated as exc:
            return [self._error(BAD_STATE, str(exc))]
        out = [self._msg("step_result", {
            "reward": result.reward, "done": result.done, "reason": result.reason,
        })]
        if result.done:
            self.stage = "configured"
            out.append(self._msg("episode_end", {
                "score": self.session.score,
                "steps": self.session.state.step_index,
                "reason": result.reason,
            }))
        else:
            out.append(self._observation_msg())
        return out

    def _on_bye(self, payload: dict) -> list[dict]:
        self.closed = True
        return [self._msg("bye", {})]


def serve_stream(g, s, hints, reader, writer) -> None:
    """Run one protocol session over text streams until bye or EOF."""
    session = ProtocolSession(g, s, hints)
    for line in reader:
        for reply in session.handle_line(line):
            writer.write(json.dumps(reply, ensure_ascii=False) + "\n")
        writer.flush()
        if session.closed:
            break


def serve(g: ScenarioGraph, s: Scenario, hints: Optional[HintStore],
          bind: str = "stdio") -> None:
    """Serve games over stdio (``bind='stdio'``) or TCP (``bind='tcp:HOST:PORT'``).

    TCP mode hosts one session per connection over the shared immutable
    graph assets and runs until interrupted.
    """
    if bind == "stdio":
        serve_stream(g, s, hints, sys.stdin, sys.stdout)
        return
    if bind.startswith("tcp:"):
        _, host, port = bind.split(":", 2)

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                reader = (raw.decode("utf-8") for raw in self.rfile)
                session = ProtocolSession(g, s, hints)
                for line in reader:
                    for reply in session.handle_line(line):
                        self.wfile.write((json.dumps(reply, ensure_ascii=False) + "\n")
                                         .encode("utf-8"))
                    if session.closed:
                        break

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        with Server((host, int(port)), Handler) as server:
            server.serve_forever()
        return
    raise ConfigError(f"unknown bind {bind!r}; use 'stdio' or 'tcp:HOST:PORT'")


def replay(log_path: str | Path, scenario: Optional[Scenario] = None,
           hints: Optional[HintStore] = None) -> str:
    """Re-run a transcript from its logged seed/config/actions and verify the
    regenerated transcript is byte-identical. Returns "OK" on success."""
    original_text = Path(log_path).read_text(encoding="utf-8")
    log = EpisodeLog.parse(original_text, source=str(log_path))

    if log.version != ENGINE_VERSION:
        raise VersionMismatch(f"transcript from engine {log.version}, "
                              f"this engine is {ENGINE_VERSION}")
    if scenario is None:
        scenario = builtin_scenario()
    if enginemod.scenario_digest(scenario) != log.scenario_sha256:
        raise ConfigError("transcript was recorded against a different scenario")
    if hints is None and log.hints_sha256 is not None:
        hints = builtin_hints()
    if enginemod.hints_digest(hints) != log.hints_sha256:
        raise ConfigError("transcript was recorded against different hints")

    from . import graph as graphmod

    g = graphmod.expand(graphmod.build_compact(scenario), scenario)
    cfg = GameConfig.from_dict(log.config)
    state, _ = enginemod.new_game(g, scenario, hints, cfg)
    for rec in log.steps:
        if state.done:
            raise MismatchError(rec.t, "transcript continues past termination")
        enginemod.step(state, rec.action, g, scenario, hints, cfg)
    regenerated = enginemod.transcript(state).to_jsonl()
    if regenerated != original_text:
        old_lines = original_text.splitlines()
        new_lines = regenerated.splitlines()
        for i, (a, b) in enumerate(zip(old_lines, new_lines)):
            if a != b:
                raise MismatchError(max(0, i - 1))  # line 0 is the header
        raise MismatchError(min(len(old_lines), len(new_lines)) - 1,
                            "transcripts differ in length")
    return "OK"
