"""Road-network substrate shared by both topologies and the simulation engine.

A :class:`RoadNetwork` is a directed multigraph of :class:`Edge` objects joined at
:class:`Node` objects. Lanes are an attribute of an edge; which lanes of an edge
may continue onto a given successor is recorded in ``lane_rules``. Signal
programs and zipper-merge structures are stored as immutable specs; the engine
instantiates their runtime state.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

NODE_KINDS = ("junction", "curve", "merge-head", "merge-tail", "diverge", "terminus")
EDGE_KINDS = ("straight", "arc", "zipper-merge", "turn-pocket")

# routing weights are integer microseconds so that tied costs compare exactly
_COST_SCALE = 1_000_000


class NoRouteError(LookupError):
    """Raised when a destination cannot be reached from an origin."""


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    kind: str = "junction"

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Edge:
    id: str
    from_node: str
    to_node: str
    length: float
    lane_count: int
    speed_limit: float
    geometry: tuple[tuple[float, float], ...]
    kind: str = "straight"
    radius: float | None = None
    merge_zone: str | None = None
    spawnable: bool = False

    @staticmethod
    def polyline_length(points: Sequence[tuple[float, float]]) -> float:
        return sum(math.dist(points[i], points[i + 1]) for i in range(len(points) - 1))


@dataclass(frozen=True)
class Phase:
    """One green interval plus its yellow/all-red clearance."""

    name: str
    green: float
    yellow: float = 3.0
    all_red: float = 1.0

    @property
    def duration(self) -> float:
        return self.green + self.yellow + self.all_red


@dataclass(frozen=True)
class SignalProgram:
    """Static description of a signalized junction.

    ``links`` maps each permitted movement ``(in_edge, out_edge)`` to the index of
    the phase that serves it.
    """

    id: str
    junction: str
    phases: tuple[Phase, ...]
    links: tuple[tuple[str, str, int], ...]
    mode: str = "static"
    time_loss_threshold: float = 1.0
    max_green: float = 45.0

    @property
    def cycle(self) -> float:
        return sum(p.duration for p in self.phases)


@dataclass(frozen=True)
class MergeZoneSpec:
    """A crossover zipper: two entry roads share one merge edge, then split."""

    id: str
    merge_edge: str
    entries: tuple[str, str]
    exits: tuple[str, str]


@dataclass(frozen=True)
class Route:
    edges: tuple[str, ...]
    total_length: float

    @property
    def origin(self) -> str:
        return self.edges[0]

    @property
    def destination(self) -> str:
        return self.edges[-1]

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class ODPair:
    origin: str
    destination: str
    weight: float = 1.0

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError(f"OD pair origin equals destination: {self.origin!r}")
        if self.weight < 0:
            raise ValueError(f"negative OD weight {self.weight}")


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


@dataclass(frozen=True)
class RoadNetwork:
    """Immutable road graph. Treat every container as read-only after build."""

    nodes: dict[str, Node]
    edges: dict[str, Edge]
    connections: dict[str, tuple[str, ...]] = field(default_factory=dict)
    lane_rules: dict[tuple[str, str], tuple[int, ...]] = field(default_factory=dict)
    controllers: tuple[SignalProgram, ...] = ()
    merge_zones: tuple[MergeZoneSpec, ...] = ()
    anchors: dict[str, tuple[str, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def successors(self, edge_id: str) -> tuple[str, ...]:
        """Edges a vehicle may enter after ``edge_id``.

        Explicit ``connections`` win; otherwise every edge leaving the downstream
        node is a successor.
        """
        if edge_id in self.connections:
            return self.connections[edge_id]
        to = self.edges[edge_id].to_node
        return tuple(e.id for e in self.edges.values() if e.from_node == to)

    def allowed_lanes(self, edge_id: str, next_edge: str | None) -> tuple[int, ...]:
        if next_edge is not None:
            rule = self.lane_rules.get((edge_id, next_edge))
            if rule is not None:
                return rule
        return tuple(range(self.edges[edge_id].lane_count))

    @property
    def spawn_edges(self) -> list[str]:
        return [e.id for e in self.edges.values() if e.spawnable]

    @property
    def max_speed(self) -> float:
        return max(e.speed_limit for e in self.edges.values())

    def resolve_anchor(self, key: str) -> tuple[str, float]:
        """Map a shared location id (or a plain edge id) to ``(edge, offset)``."""
        if key in self.anchors:
            return self.anchors[key]
        if key in self.edges:
            return key, 0.0
        raise KeyError(f"unknown location {key!r}")

    def position_at(self, edge_id: str, offset: float) -> tuple[float, float]:
        return polyline_point(self.edges[edge_id].geometry, offset)[0]

    # -- JSON ---------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "x": n.x, "y": n.y, "kind": n.kind} for n in self.nodes.values()
            ],
            "edges": [
                {
                    "id": e.id,
                    "from": e.from_node,
                    "to": e.to_node,
                    "length": e.length,
                    "lane_count": e.lane_count,
                    "speed_limit": e.speed_limit,
                    "geometry": [list(p) for p in e.geometry],
                    "kind": e.kind,
                    "radius": e.radius,
                    "merge_zone": e.merge_zone,
                    "spawnable": e.spawnable,
                }
                for e in self.edges.values()
            ],
            "connections": {k: list(v) for k, v in self.connections.items()},
            "lane_rules": [
                {"edge": a, "next": b, "lanes": list(lanes)}
                for (a, b), lanes in self.lane_rules.items()
            ],
            "controllers": [
                {
                    "id": c.id,
                    "junction": c.junction,
                    "mode": c.mode,
                    "time_loss_threshold": c.time_loss_threshold,
                    "max_green": c.max_green,
                    "phases": [
                        {"name": p.name, "green": p.green, "yellow": p.yellow, "all_red": p.all_red}
                        for p in c.phases
                    ],
                    "links": [list(link) for link in c.links],
                }
                for c in self.controllers
            ],
            "merge_zones": [
                {
                    "id": m.id,
                    "merge_edge": m.merge_edge,
                    "entries": list(m.entries),
                    "exits": list(m.exits),
                }
                for m in self.merge_zones
            ],
            "anchors": {k: [e, off] for k, (e, off) in self.anchors.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> RoadNetwork:
        nodes = {n["id"]: Node(n["id"], n["x"], n["y"], n.get("kind", "junction")) for n in doc["nodes"]}
        edges = {}
        for e in doc["edges"]:
            edges[e["id"]] = Edge(
                id=e["id"],
                from_node=e["from"],
                to_node=e["to"],
                length=e["length"],
                lane_count=e["lane_count"],
                speed_limit=e["speed_limit"],
                geometry=tuple(tuple(p) for p in e["geometry"]),
                kind=e.get("kind", "straight"),
                radius=e.get("radius"),
                merge_zone=e.get("merge_zone"),
                spawnable=e.get("spawnable", False),
            )
        controllers = tuple(
            SignalProgram(
                id=c["id"],
                junction=c["junction"],
                mode=c.get("mode", "static"),
                time_loss_threshold=c.get("time_loss_threshold", 1.0),
                max_green=c.get("max_green", 45.0),
                phases=tuple(Phase(**p) for p in c["phases"]),
                links=tuple((a, b, int(i)) for a, b, i in c["links"]),
            )
            for c in doc.get("controllers", [])
        )
        merges = tuple(
            MergeZoneSpec(m["id"], m["merge_edge"], tuple(m["entries"]), tuple(m["exits"]))
            for m in doc.get("merge_zones", [])
        )
        return cls(
            nodes=nodes,
            edges=edges,
            connections={k: tuple(v) for k, v in doc.get("connections", {}).items()},
            lane_rules={(r["edge"], r["next"]): tuple(r["lanes"]) for r in doc.get("lane_rules", [])},
            controllers=controllers,
            merge_zones=merges,
            anchors={k: (v[0], float(v[1])) for k, v in doc.get("anchors", {}).items()},
            meta=doc.get("meta", {}),
        )

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=False)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> RoadNetwork:
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
        return cls.from_dict(json.loads(text))


def polyline_point(points: Sequence[tuple[float, float]], offset: float):
    """Point and unit tangent at arc-length ``offset`` along a polyline."""
    remaining = max(0.0, offset)
    last = len(points) - 2
    for i in range(last + 1):
        (x0, y0), (x1, y1) = points[i], points[i + 1]
        seg = math.hypot(x1 - x0, y1 - y0)
        if seg == 0.0:
            continue
        if remaining <= seg or i == last:
            t = min(remaining / seg, 1.0)
            tx, ty = (x1 - x0) / seg, (y1 - y0) / seg
            return (x0 + t * (x1 - x0), y0 + t * (y1 - y0)), (tx, ty)
        remaining -= seg
    x, y = points[-1]
    return (x, y), (1.0, 0.0)


# ---------------------------------------------------------------------------
# validation


def validate_network(net: RoadNetwork) -> ValidationReport:
    """Collect every structural violation; an empty report means well-formed."""
    report = ValidationReport()
    v = report.violations
    for e in net.edges.values():
        if e.from_node not in net.nodes:
            v.append(f"edge {e.id}: tail node {e.from_node!r} does not exist")
        if e.to_node not in net.nodes:
            v.append(f"edge {e.id}: head node {e.to_node!r} does not exist")
        if not e.speed_limit > 0:
            v.append(f"edge {e.id}: speed limit {e.speed_limit} not positive")
        if e.lane_count < 1:
            v.append(f"edge {e.id}: lane_count {e.lane_count} < 1")
        if e.kind not in EDGE_KINDS:
            v.append(f"edge {e.id}: unknown kind {e.kind!r}")
        if len(e.geometry) < 2:
            v.append(f"edge {e.id}: geometry needs at least two points")
        elif abs(Edge.polyline_length(e.geometry) - e.length) > 1e-6:
            v.append(f"edge {e.id}: length {e.length} != polyline length")
        if e.kind == "arc" and (e.radius is None or e.radius < 0):
            v.append(f"edge {e.id}: arc without radius")
        if e.kind == "zipper-merge" and not e.merge_zone:
            v.append(f"edge {e.id}: zipper-merge without merge zone id")
    for src, succ in net.connections.items():
        if src not in net.edges:
            v.append(f"connection from unknown edge {src!r}")
            continue
        for s in succ:
            if s not in net.edges:
                v.append(f"connection {src}->{s}: unknown successor")
            elif net.edges[s].from_node != net.edges[src].to_node:
                v.append(f"connection {src}->{s}: edges are not adjacent")
    for (a, b), lanes in net.lane_rules.items():
        if a in net.edges and any(not 0 <= k < net.edges[a].lane_count for k in lanes):
            v.append(f"lane rule {a}->{b}: lane index out of range")
    if v:
        # connectivity on a broken graph would only repeat the same faults
        return report

    ids = list(net.edges)
    succ = {e: net.successors(e) for e in ids}
    pred: dict[str, list[str]] = {e: [] for e in ids}
    for e, ss in succ.items():
        for s in ss:
            pred[s].append(e)
    if ids:
        fwd = _reach(ids[0], succ)
        bwd = _reach(ids[0], pred)
        for e in ids:
            if e not in fwd:
                v.append(f"edge {e}: unreachable from {ids[0]} (not strongly connected)")
            elif e not in bwd:
                v.append(f"edge {e}: cannot reach {ids[0]} (not strongly connected)")
    return report


def _reach(start: str, adj) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


# ---------------------------------------------------------------------------
# routing


class Router:
    """Free-flow-time shortest routes with a lexicographic tie-break.

    Costs are integer microseconds, so equal-cost alternatives compare exactly and
    the tie-break is deterministic. Backward distance tables are cached per
    destination; a router is cheap to share between simulations of one network.
    """

    def __init__(self, net: RoadNetwork):
        self.net = net
        self.ids = sorted(net.edges)
        self.index = {e: i for i, e in enumerate(self.ids)}
        self.weight = [
            int(round(net.edges[e].length / net.edges[e].speed_limit * _COST_SCALE)) for e in self.ids
        ]
        # successor lists sorted by id: index order equals lexicographic order
        self.succ = [sorted(self.index[s] for s in net.successors(e)) for e in self.ids]
        self.pred: list[list[int]] = [[] for _ in self.ids]
        for i, ss in enumerate(self.succ):
            for s in ss:
                self.pred[s].append(i)
        self._to_cache: dict[int, list[float]] = {}
        self._route_cache: dict[tuple[str, str], Route] = {}

    def cost_to(self, dest: str) -> list[float]:
        """Cost (µs) from every edge to ``dest``, both ends inclusive."""
        d = self.index[dest]
        cached = self._to_cache.get(d)
        if cached is not None:
            return cached
        dist = [math.inf] * len(self.ids)
        dist[d] = self.weight[d]
        heap = [(dist[d], d)]
        w = self.weight
        pred = self.pred
        while heap:
            c, u = heapq.heappop(heap)
            if c > dist[u]:
                continue
            for p in pred[u]:
                nc = c + w[p]
                if nc < dist[p]:
                    dist[p] = nc
                    heapq.heappush(heap, (nc, p))
        self._to_cache[d] = dist
        return dist

    def route(self, origin: str, dest: str) -> Route:
        key = (origin, dest)
        hit = self._route_cache.get(key)
        if hit is not None:
            return hit
        if origin not in self.index:
            raise KeyError(f"unknown origin edge {origin!r}")
        if dest not in self.index:
            raise KeyError(f"unknown destination edge {dest!r}")
        if origin == dest:
            r = Route((origin,), self.net.edges[origin].length)
            self._route_cache[key] = r
            return r
        togo = self.cost_to(dest)
        o = self.index[origin]
        if math.isinf(togo[o]):
            raise NoRouteError(f"no route from {origin} to {dest}")
        d = self.index[dest]
        path = [o]
        remaining = togo[o] - self.weight[o]
        cur = o
        while cur != d:
            for s in self.succ[cur]:
                if togo[s] == remaining:
                    cur = s
                    break
            else:  # pragma: no cover - would mean an inconsistent table
                raise NoRouteError(f"route reconstruction failed {origin}->{dest}")
            path.append(cur)
            remaining -= self.weight[cur]
        edges = tuple(self.ids[i] for i in path)
        r = Route(edges, sum(self.net.edges[e].length for e in edges))
        self._route_cache[key] = r
        return r

    def anchor_distance(self, origin_key: str, dest_key: str) -> float:
        """Driving distance between two anchored locations."""
        oe, oo = self.net.resolve_anchor(origin_key)
        de, do = self.net.resolve_anchor(dest_key)
        if oe == de and do >= oo:
            return do - oo
        if oe == de:
            # wrap around: leave the edge and come back to it
            best = min(
                (self.route(s, de) for s in self.net.successors(oe)),
                key=lambda r: (sum(self.weight[self.index[e]] for e in r.edges), r.edges),
            )
            return self.net.edges[oe].length - oo + best.total_length - (self.net.edges[de].length - do)
        r = self.route(oe, de)
        return r.total_length - oo - (self.net.edges[de].length - do)


def shortest_route(net: RoadNetwork, origin: str, dest: str, router: Router | None = None) -> Route:
    """Minimum free-flow-time route; ties go to the lexicographically smallest edge sequence."""
    return (router or Router(net)).route(origin, dest)


def sample_anchor_pairs(nets: Sequence[RoadNetwork], n: int, seed: int) -> list[ODPair]:
    """``n`` seeded random pairs of distinct anchor locations present in every network."""
    keys = sorted(set.intersection(*(set(net.anchors) for net in nets)))
    if len(keys) < 2:
        raise ValueError("networks share fewer than two anchor locations")
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        a, b = rng.sample(keys, 2)
        out.append(ODPair(a, b))
    return out


def route_length_ratio(
    net_a: RoadNetwork,
    net_b: RoadNetwork,
    pairs: Iterable[ODPair],
    router_a: Router | None = None,
    router_b: Router | None = None,
) -> float:
    """mean(route length in ``net_a``) / mean(route length in ``net_b``).

    Pair endpoints are location ids resolved through each network's anchors, so
    the same zone-side coordinates can be compared across topologies.
    """
    ra = router_a or Router(net_a)
    rb = router_b or Router(net_b)
    total_a = total_b = 0.0
    n = 0
    for pair in pairs:
        try:
            total_a += ra.anchor_distance(pair.origin, pair.destination)
            total_b += rb.anchor_distance(pair.origin, pair.destination)
        except (NoRouteError, KeyError) as exc:
            raise NoRouteError(f"pair {pair.origin}->{pair.destination} is not routable: {exc}") from exc
        n += 1
    if n == 0:
        raise ValueError("route_length_ratio needs at least one pair")
    if total_b == 0:
        raise ZeroDivisionError("reference network has zero total route length")
    return (total_a / n) / (total_b / n)
