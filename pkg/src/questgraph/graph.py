"""Two-level DAG representation of script knowledge.

The compact graph has one node per event cluster, with an edge p -> q
whenever some ESD contains an event of p immediately followed by an event
of q. Expanding it splits every cluster into an entry node and an exit
node joined by one chain of step nodes per alternative action sequence;
the expanded scenario graph is what the game engine walks.

Node id formats: ``START``, ``END``, ``entry:<cluster>``, ``exit:<cluster>``,
``step:<cluster>:<seq>:<idx>``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

from .corpus import Scenario
from .errors import CycleError, UnknownNode, ValidationError

START = "START"
END = "END"


def entry_node(cluster_id: str) -> str:
    return f"entry:{cluster_id}"


def exit_node(cluster_id: str) -> str:
    return f"exit:{cluster_id}"


def step_node(cluster_id: str, seq: int, idx: int) -> str:
    return f"step:{cluster_id}:{seq}:{idx}"


def is_step(node_id: str) -> bool:
    return node_id.startswith("step:")


def is_sentinel(node_id: str) -> bool:
    return node_id in (START, END)


class _BaseGraph:
    """Immutable directed graph with sorted adjacency and BFS distances."""

    def __init__(self, nodes: tuple[str, ...], edges: frozenset[tuple[str, str]]):
        self.nodes = nodes
        self.edges = edges
        succ: dict[str, list[str]] = {n: [] for n in nodes}
        pred: dict[str, list[str]] = {n: [] for n in nodes}
        for u, v in sorted(edges):
            succ[u].append(v)
            pred[v].append(u)
        self.successors = {n: tuple(vs) for n, vs in succ.items()}
        self.predecessors = {n: tuple(vs) for n, vs in pred.items()}
        self._dist_cache: dict[str, dict[str, int]] = {}

    def undirected_distances(self, source: str) -> dict[str, int]:
        """BFS hop counts from ``source`` ignoring edge direction (cached)."""
        if source not in self.successors:
            raise UnknownNode(source)
        cached = self._dist_cache.get(source)
        if cached is not None:
            return cached
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.successors[u] + self.predecessors[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        self._dist_cache[source] = dist
        return dist


class CompactGraph(_BaseGraph):
    def __init__(self, nodes, edges, node_order: dict[str, int]):
        super().__init__(nodes, edges)
        self.node_order = node_order

    @property
    def cluster_ids(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if not is_sentinel(n))


class ScenarioGraph(_BaseGraph):
    def __init__(self, nodes, edges, action_texts: dict[str, tuple[str, ...]],
                 compact_origin: dict[str, str]):
        super().__init__(nodes, edges)
        self.action_texts = action_texts
        self.compact_origin = compact_origin
        self._choice_succ: dict[str, tuple[str, ...]] | None = None
        self._positions: tuple[str, ...] | None = None

    @property
    def step_nodes(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if is_step(n))

    def choice_successors(self, node: str) -> tuple[str, ...]:
        """Next step nodes reachable from ``node`` through entry/exit nodes
        only. An empty result on a step node marks it as quest-completing."""
        if self._choice_succ is None:
            table: dict[str, tuple[str, ...]] = {}
            for n in self.nodes:
                found: list[str] = []
                stack = list(self.successors[n])
                seen = set(stack)
                while stack:
                    nxt = stack.pop()
                    if is_step(nxt):
                        found.append(nxt)
                    elif nxt != END:
                        for v in self.successors[nxt]:
                            if v not in seen:
                                seen.add(v)
                                stack.append(v)
                table[n] = tuple(sorted(found))
            self._choice_succ = table
        return self._choice_succ[node]

    @property
    def terminal_steps(self) -> frozenset[str]:
        return frozenset(n for n in self.step_nodes if not self.choice_successors(n))

    def positions(self) -> tuple[str, ...]:
        """Nodes a game can occupy: START, steps reached by correct moves,
        and everything reachable from those by backward hops. Terminal
        cluster entries/exits and END are never occupied."""
        if self._positions is None:
            occupied: set[str] = set()
            frontier = [START]
            terminal = self.terminal_steps
            while frontier:
                node = frontier.pop()
                if node in occupied:
                    continue
                occupied.add(node)
                if node not in terminal:  # the game ends on terminal steps
                    for nxt in self.choice_successors(node):
                        if nxt not in occupied:
                            frontier.append(nxt)
                    for prev in self.predecessors[node]:
                        if prev not in occupied:
                            frontier.append(prev)
            self._positions = tuple(sorted(occupied))
        return self._positions

    def decision_positions(self) -> tuple[str, ...]:
        """Positions at which choices are sampled (non-terminal positions)."""
        terminal = self.terminal_steps
        return tuple(n for n in self.positions() if n not in terminal)


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    avg_degree: float
    total_paths: int


def _find_cycle(succ: dict[str, tuple[str, ...]], nodes) -> list[str]:
    """Return one directed cycle (used only after Kahn's algorithm failed)."""
    state: dict[str, int] = {}  # 0 unseen, 1 on stack, 2 done
    parent: dict[str, str] = {}

    for root in nodes:
        if state.get(root):
            continue
        stack = [(root, iter(succ[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if state.get(nxt, 0) == 1:
                    cycle = [nxt, node]
                    cur = node
                    while cur != nxt:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle[:-1]
                if state.get(nxt, 0) == 0:
                    state[nxt] = 1
                    parent[nxt] = node
                    stack.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                stack.pop()
    return []


def _topological_order(nodes, succ, pred) -> dict[str, int]:
    indeg = {n: len(pred[n]) for n in nodes}
    queue = deque(sorted(n for n in nodes if indeg[n] == 0))
    order: dict[str, int] = {}
    while queue:
        u = queue.popleft()
        order[u] = len(order)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if len(order) != len(nodes):
        raise CycleError(_find_cycle(succ, nodes))
    return order


def build_compact(s: Scenario) -> CompactGraph:
    """Derive the cluster-level DAG from the aligned ESDs.

    Consecutive events that fall into the same cluster contribute no edge;
    they are the multi-step sequences that the expansion turns into chains.
    A cycle between distinct clusters means the alignment is inconsistent
    and is rejected.
    """
    member_of: dict[tuple[str, int], str] = {}
    for c in s.clusters:
        for m in c.members:
            member_of[m] = c.id

    edges: set[tuple[str, str]] = set()
    used: set[str] = set()
    for esd in s.esds:
        trail = []
        for ev in esd.events:
            cid = member_of.get((esd.id, ev.position))
            if cid is None:
                raise ValidationError(f"event {(esd.id, ev.position)} belongs to no cluster",
                                      location=f"esd {esd.id}")
            if not trail or trail[-1] != cid:
                trail.append(cid)
        for p, q in zip(trail, trail[1:]):
            edges.add((p, q))
        edges.add((START, trail[0]))
        edges.add((trail[-1], END))
        used.update(trail)

    unused = sorted(set(c.id for c in s.clusters) - used)
    if unused:
        raise ValidationError(f"clusters never visited by any ESD: {unused}",
                              location=f"cluster {unused[0]}")

    nodes = tuple(sorted(c.id for c in s.clusters)) + (START, END)
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    pred: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in edges:
        succ[u].append(v)
        pred[v].append(u)
    order = _topological_order(nodes, {n: tuple(vs) for n, vs in succ.items()},
                               {n: tuple(vs) for n, vs in pred.items()})
    return CompactGraph(nodes=nodes, edges=frozenset(edges), node_order=order)


def expand(cg: CompactGraph, s: Scenario) -> ScenarioGraph:
    """Split every cluster into entry/exit nodes with parallel step chains.

    The split is uniform: a single length-1 sequence still becomes
    entry -> step -> exit, so the node count obeys the closed form
    2 * |clusters| + sum(sequence lengths) + 2.
    """
    nodes: list[str] = [START, END]
    edges: set[tuple[str, str]] = set()
    action_texts: dict[str, tuple[str, ...]] = {}
    origin: dict[str, str] = {START: START, END: END}

    for cid in sorted(cg.cluster_ids):
        cluster = s.cluster(cid)
        ent, ext = entry_node(cid), exit_node(cid)
        nodes += [ent, ext]
        origin[ent] = origin[ext] = cid
        for j, seq in enumerate(cluster.sequences):
            prev = ent
            for k, step in enumerate(seq):
                node = step_node(cid, j, k)
                nodes.append(node)
                origin[node] = cid
                seen: list[str] = []
                for text in step:
                    if text not in seen:
                        seen.append(text)
                action_texts[node] = tuple(seen)
                edges.add((prev, node))
                prev = node
            edges.add((prev, ext))

    for u, v in cg.edges:
        if u == START:
            edges.add((START, entry_node(v)))
        elif v == END:
            edges.add((exit_node(u), END))
        else:
            edges.add((exit_node(u), entry_node(v)))

    return ScenarioGraph(nodes=tuple(sorted(nodes)), edges=frozenset(edges),
                         action_texts=action_texts, compact_origin=origin)


def _compact_path_count(cg: CompactGraph, s: Scenario) -> int:
    """Sum over compact START->END paths of the product of per-node splits."""
    splits = {c.id: max(len(c.sequences), 1) for c in s.clusters}
    total = 0
    stack: list[tuple[str, int]] = [(START, 1)]
    while stack:
        node, prod = stack.pop()
        if node == END:
            total += prod
            continue
        for nxt in cg.successors[node]:
            stack.append((nxt, prod * splits.get(nxt, 1)))
    return total


def _dag_path_count(g: _BaseGraph) -> int:
    """Dynamic-programming count of START->END routes in the expanded DAG."""
    order = _topological_order(g.nodes, g.successors, g.predecessors)
    ways = {n: 0 for n in g.nodes}
    ways[START] = 1
    for node in sorted(g.nodes, key=order.__getitem__):
        for nxt in g.successors[node]:
            ways[nxt] += ways[node]
    return ways[END]


def count_paths(g: CompactGraph | ScenarioGraph, s: Scenario) -> int:
    """Total number of distinct START->END routes through the scenario graph.

    For a compact graph this enumerates compact paths depth-first and sums
    the per-path products of sequence counts; for a scenario graph it counts
    routes by dynamic programming. Both views agree for any valid scenario.
    """
    if isinstance(g, CompactGraph):
        return _compact_path_count(g, s)
    return _dag_path_count(g)


def hop_distance(g: _BaseGraph, a: str, b: str) -> int | float:
    """Undirected shortest-path hop count; ``math.inf`` when disconnected."""
    if a not in g.successors:
        raise UnknownNode(a)
    if b not in g.successors:
        raise UnknownNode(b)
    return g.undirected_distances(a).get(b, math.inf)


def stats(g: ScenarioGraph, s: Scenario) -> GraphStats:
    """Node count, mean total degree (sentinels excluded), and path total."""
    inner = [n for n in g.nodes if not is_sentinel(n)]
    degree = {n: 0 for n in g.nodes}
    for u, v in g.edges:
        degree[u] += 1
        degree[v] += 1
    avg = sum(degree[n] for n in inner) / len(inner) if inner else 0.0
    return GraphStats(node_count=len(inner), avg_degree=avg, total_paths=count_paths(g, s))


def export_dot(g: CompactGraph | ScenarioGraph) -> str:
    """Graphviz DOT text with deterministic ordering (sorted ids)."""
    lines = ["digraph G {", "  rankdir=LR;"]
    texts = getattr(g, "action_texts", {})
    for node in sorted(g.nodes):
        attrs = []
        if is_sentinel(node):
            attrs.append("shape=doublecircle")
        elif node.startswith(("entry:", "exit:")):
            attrs.append("shape=point")
        if node in texts and texts[node]:
            label = texts[node][0].replace('"', r'\"')
            attrs.append(f'label="{label}"')
        lines.append(f'  "{node}"' + (f" [{', '.join(attrs)}]" if attrs else "") + ";")
    for u, v in sorted(g.edges):
        lines.append(f'  "{u}" -> "{v}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dict(g: CompactGraph | ScenarioGraph) -> dict:
    out = {
        "kind": "compact" if isinstance(g, CompactGraph) else "scenario",
        "nodes": sorted(g.nodes),
        "edges": sorted([u, v] for u, v in g.edges),
    }
    if isinstance(g, ScenarioGraph):
        out["action_texts"] = {n: list(g.action_texts[n]) for n in sorted(g.action_texts)}
        out["compact_origin"] = {n: g.compact_origin[n] for n in sorted(g.compact_origin)}
    return out


def export_json(g: CompactGraph | ScenarioGraph) -> str:
    """Deterministic JSON dump (nodes, edges, action texts) for external tools."""
    return json.dumps(graph_to_dict(g), indent=2, sort_keys=True) + "\n"
