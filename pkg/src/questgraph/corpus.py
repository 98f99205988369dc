"""Scenario data model and ingestion.

A scenario bundles the raw material of one daily-activity game: the event
sequence descriptions (ESDs) written by different annotators, the clusters
that align semantically equivalent events across ESDs, and the negative
sampling distance used by the game engine. Cluster ``sequences`` make the
grouping of multi-step alternatives explicit: each cluster carries one or
more ordered sub-step lists, and each sub-step carries one or more surface
texts (one per contributing ESD).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import CoverageError, ParseError, RepeatError, ValidationError

# ESDs shorter than this collapse the graph into near-direct goal paths and
# are rejected outright.
MIN_ESD_EVENTS = 2


@dataclass(frozen=True)
class EventDescription:
    esd_id: str
    position: int  # 0-based ordinal within its ESD
    text: str


@dataclass(frozen=True)
class ESD:
    id: str
    events: tuple[EventDescription, ...]


@dataclass(frozen=True)
class EventCluster:
    id: str
    label: str
    members: frozenset[tuple[str, int]]  # (esd_id, position)
    # sequences[j][k] = surface-text variants of sub-step k in alternative j
    sequences: tuple[tuple[tuple[str, ...], ...], ...]


@dataclass(frozen=True)
class Scenario:
    title: str
    esds: tuple[ESD, ...]
    clusters: tuple[EventCluster, ...]
    neg_distance: int

    def esd(self, esd_id: str) -> ESD:
        for e in self.esds:
            if e.id == esd_id:
                return e
        raise KeyError(esd_id)

    def cluster(self, cluster_id: str) -> EventCluster:
        for c in self.clusters:
            if c.id == cluster_id:
                return c
        raise KeyError(cluster_id)


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    code: str
    message: str
    location: str


@dataclass(frozen=True)
class HintStore:
    hints: dict[str, tuple[str, ...]]  # node id -> hint texts

    def for_node(self, node_id: str) -> tuple[str, ...]:
        return self.hints[node_id]

    def covers(self, node_ids) -> bool:
        return all(n in self.hints for n in node_ids)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ParseError(msg)


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from parsed JSON. Checks shape only, not invariants."""
    _require(isinstance(data, dict), "top level must be an object")
    for key in ("title", "neg_distance", "esds", "clusters"):
        _require(key in data, f"missing key {key!r}")
    _require(isinstance(data["title"], str), "title must be a string")
    _require(isinstance(data["neg_distance"], int) and not isinstance(data["neg_distance"], bool),
             "neg_distance must be an integer")

    esds = []
    seen_esd_ids: set[str] = set()
    for i, raw in enumerate(data["esds"]):
        _require(isinstance(raw, dict) and "id" in raw and "events" in raw,
                 f"esds[{i}] must be an object with id and events")
        esd_id = raw["id"]
        _require(isinstance(esd_id, str) and esd_id, f"esds[{i}].id must be a non-empty string")
        _require(esd_id not in seen_esd_ids, f"duplicate ESD id {esd_id!r}")
        seen_esd_ids.add(esd_id)
        _require(isinstance(raw["events"], list), f"esds[{i}].events must be a list")
        events = tuple(
            EventDescription(esd_id=esd_id, position=pos, text=str(text).strip())
            for pos, text in enumerate(raw["events"])
        )
        esds.append(ESD(id=esd_id, events=events))

    clusters = []
    seen_cluster_ids: set[str] = set()
    for i, raw in enumerate(data["clusters"]):
        _require(isinstance(raw, dict), f"clusters[{i}] must be an object")
        for key in ("id", "label", "members", "sequences"):
            _require(key in raw, f"clusters[{i}] missing key {key!r}")
        cid = raw["id"]
        _require(isinstance(cid, str) and cid, f"clusters[{i}].id must be a non-empty string")
        _require(cid not in seen_cluster_ids, f"duplicate cluster id {cid!r}")
        seen_cluster_ids.add(cid)
        members = set()
        for j, m in enumerate(raw["members"]):
            _require(isinstance(m, dict) and "esd" in m and "pos" in m,
                     f"clusters[{i}].members[{j}] must have esd and pos")
            _require(isinstance(m["pos"], int) and not isinstance(m["pos"], bool),
                     f"clusters[{i}].members[{j}].pos must be an integer")
            member = (str(m["esd"]), m["pos"])
            _require(member not in members, f"clusters[{i}] repeats member {member}")
            members.add(member)
        sequences = []
        for j, seq in enumerate(raw["sequences"]):
            _require(isinstance(seq, list), f"clusters[{i}].sequences[{j}] must be a list")
            steps = []
            for k, step in enumerate(seq):
                _require(isinstance(step, list),
                         f"clusters[{i}].sequences[{j}][{k}] must be a list of texts")
                steps.append(tuple(str(t).strip() for t in step))
            sequences.append(tuple(steps))
        clusters.append(EventCluster(id=cid, label=str(raw["label"]).strip(),
                                     members=frozenset(members), sequences=tuple(sequences)))

    return Scenario(title=data["title"].strip(), esds=tuple(esds),
                    clusters=tuple(clusters), neg_distance=data["neg_distance"])


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of :func:`scenario_from_dict`; sorted members for stable output."""
    return {
        "title": s.title,
        "neg_distance": s.neg_distance,
        "esds": [{"id": e.id, "events": [ev.text for ev in e.events]} for e in s.esds],
        "clusters": [
            {
                "id": c.id,
                "label": c.label,
                "members": [{"esd": esd, "pos": pos} for esd, pos in sorted(c.members)],
                "sequences": [[list(step) for step in seq] for seq in c.sequences],
            }
            for c in s.clusters
        ],
    }


def validate_scenario(s: Scenario) -> list[Finding]:
    """Mechanical validation: invariant breaches and suspicious-but-legal data.

    Error findings are exactly the conditions under which ``load_scenario``
    rejects a file. No editorial judgment is applied.
    """
    findings: list[Finding] = []

    def error(code: str, message: str, location: str) -> None:
        findings.append(Finding("error", code, message, location))

    def warn(code: str, message: str, location: str) -> None:
        findings.append(Finding("warning", code, message, location))

    if s.neg_distance < 1:
        error("bad-neg-distance", f"neg_distance must be >= 1, got {s.neg_distance}", "scenario")
    if not s.title:
        error("empty-title", "scenario title is empty", "scenario")

    all_events: dict[tuple[str, int], str] = {}
    for esd in s.esds:
        loc = f"esd {esd.id}"
        if len(esd.events) < MIN_ESD_EVENTS:
            error("too-short-esd", f"has {len(esd.events)} event(s), need >= {MIN_ESD_EVENTS}", loc)
        for i, ev in enumerate(esd.events):
            if ev.position != i:
                error("bad-position", f"event {i} carries position {ev.position}", loc)
            if not ev.text.strip():
                error("empty-event-text", f"event {ev.position} has empty text", loc)
            all_events[(esd.id, ev.position)] = ev.text

    membership_count: dict[tuple[str, int], int] = {key: 0 for key in all_events}
    text_owner: dict[str, str] = {}
    for c in s.clusters:
        loc = f"cluster {c.id}"
        if not c.members:
            error("empty-cluster", "cluster has no members", loc)
        for member in c.members:
            if member not in all_events:
                error("dangling-member", f"member {member} does not exist", loc)
            else:
                membership_count[member] += 1
        if not c.sequences:
            error("no-sequences", "cluster has no action sequences", loc)
        for j, seq in enumerate(c.sequences):
            if len(seq) < 1:
                error("empty-sequence", f"sequence {j} has no sub-steps", loc)
            for k, step in enumerate(seq):
                if len(step) < 1:
                    error("empty-substep", f"sequence {j} sub-step {k} has no texts", loc)
                for text in step:
                    if not text.strip():
                        error("empty-action-text", f"sequence {j} sub-step {k} has empty text", loc)
                        continue
                    key = " ".join(text.split()).lower()
                    owner = text_owner.setdefault(key, c.id)
                    if owner != c.id:
                        warn("text-collision",
                             f"action text {text!r} also appears in cluster {owner}", loc)

    for member, count in membership_count.items():
        if count == 0:
            error("uncovered-event", f"event {member} belongs to no cluster", f"esd {member[0]}")
        elif count > 1:
            error("duplicate-membership", f"event {member} belongs to {count} clusters",
                  f"esd {member[0]}")

    return findings


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file; raises on any error finding."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    scenario = scenario_from_dict(data)
    findings = [f for f in validate_scenario(scenario) if f.severity == "error"]
    if findings:
        first = findings[0]
        raise ValidationError(f"{first.message} (+{len(findings) - 1} more)" if len(findings) > 1
                              else first.message, location=first.location)
    return scenario


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n", encoding="utf-8")


def parse_hints(text: str, s: Scenario, source: str = "<hints>") -> HintStore:
    """Parse hint JSONL and check it against the scenario's game graph.

    The store must cover every node the game can occupy (all nodes except the
    END sentinel), and no hint may repeat an action text of its node verbatim
    (trimmed, case-insensitive).
    """
    from . import graph  # deferred: graph imports corpus types

    g = graph.expand(graph.build_compact(s), s)
    required = set(g.positions())  # every node the game can occupy

    hints: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{source}:{lineno}: not valid JSON: {exc}") from exc
        _require(isinstance(entry, dict) and "node" in entry and "hints" in entry,
                 f"{source}:{lineno}: each line needs node and hints")
        node = entry["node"]
        if node not in g.nodes:
            raise ParseError(f"{source}:{lineno}: unknown node id {node!r}")
        if node in hints:
            raise ParseError(f"{source}:{lineno}: duplicate entry for node {node!r}")
        texts = tuple(str(h).strip() for h in entry["hints"])
        if not texts or any(not t for t in texts):
            raise ParseError(f"{source}:{lineno}: hints must be non-empty strings")
        actions = {t.strip().lower() for t in g.action_texts.get(node, ())}
        for h in texts:
            if h.strip().lower() in actions:
                raise RepeatError(f"{source}:{lineno}: hint {h!r} repeats an action of {node}")
        hints[node] = texts

    missing = sorted(required - set(hints))
    if missing:
        raise CoverageError(missing)
    return HintStore(hints=hints)


def load_hints(path: str | Path, s: Scenario) -> HintStore:
    """Load a hint JSONL file; see :func:`parse_hints` for the rules."""
    return parse_hints(Path(path).read_text(encoding="utf-8"), s, source=str(path))


def builtin_scenario() -> Scenario:
    """The bundled synthetic scenario used by desk-scale tests and demos."""
    data = resources.files("questgraph.data").joinpath("get_medicine.json").read_text("utf-8")
    return scenario_from_dict(json.loads(data))


def builtin_hints() -> HintStore:
    """Hint store matching :func:`builtin_scenario`."""
    data = resources.files("questgraph.data").joinpath("get_medicine_hints.jsonl").read_text("utf-8")
    return parse_hints(data, builtin_scenario(), source="get_medicine_hints.jsonl")
