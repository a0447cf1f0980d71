"""Procedural builders for the signalized grid and the loop-based zonal grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .netcore import (
    Edge,
    MergeZoneSpec,
    Node,
    Phase,
    RoadNetwork,
    SignalProgram,
)

KMH = 1 / 3.6

# unit headings and the side of a zone each one runs along
_HEADINGS = {"E": (1.0, 0.0), "N": (0.0, 1.0), "W": (-1.0, 0.0), "S": (0.0, -1.0)}


@dataclass(frozen=True)
class GridSpec:
    rows: int = 10
    cols: int = 10
    zone_size: float = 250.0
    lane_count: int = 2
    speed_limit: float = 50 * KMH
    curve_radius: float = 30.0
    light_mode: str = "static"
    merge_segment_length: float = 60.0
    merges_per_boundary: int = 2
    pocket_length: float = 50.0
    curve_speed_factor: float = 1.0
    # static program: green per phase (NS through+right, NS left, EW through+right, EW left)
    through_green: float = 30.0
    left_green: float = 12.0
    yellow: float = 3.0
    all_red: float = 1.0
    # adaptive program: minimum green before delay-based extension may start
    adaptive_through_green: float = 10.0
    adaptive_left_green: float = 6.0
    max_green: float = 45.0
    time_loss_threshold: float = 1.0
    arc_segments: int = 16

    def validate(self) -> None:
        for name in ("rows", "cols", "lane_count", "merges_per_boundary", "arc_segments"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"GridSpec.{name} must be an integer >= 1, got {value!r}")
        for name in (
            "zone_size",
            "speed_limit",
            "curve_radius",
            "merge_segment_length",
            "pocket_length",
            "curve_speed_factor",
            "through_green",
            "left_green",
            "adaptive_through_green",
            "adaptive_left_green",
            "max_green",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"GridSpec.{name} must be positive, got {getattr(self, name)!r}")
        if self.yellow < 0 or self.all_red < 0 or self.time_loss_threshold < 0:
            raise ValueError("GridSpec clearance intervals and threshold must be non-negative")
        if not self.zone_size > 2 * self.curve_radius:
            raise ValueError(
                f"GridSpec.zone_size ({self.zone_size}) must exceed 2*curve_radius ({self.curve_radius})"
            )
        if max(self.adaptive_through_green, self.adaptive_left_green) > self.max_green:
            raise ValueError("GridSpec adaptive minimum greens must not exceed max_green")
        if self.light_mode not in ("static", "adaptive"):
            raise ValueError(f"GridSpec.light_mode must be 'static' or 'adaptive', got {self.light_mode!r}")
        straight = self.zone_size - 2 * self.curve_radius
        if self.merges_per_boundary * self.merge_segment_length >= straight:
            raise ValueError("GridSpec.merge_segment_length: merges do not fit on a zone side")
        if self.pocket_length >= self.zone_size:
            raise ValueError("GridSpec.pocket_length must be shorter than a zone side")


@dataclass(frozen=True)
class LoopAssignment:
    rotations: dict[tuple[int, int], str] = field(default_factory=dict)

    @classmethod
    def checkerboard(cls, rows: int, cols: int) -> LoopAssignment:
        return cls({(r, c): ("CCW" if (r + c) % 2 == 0 else "CW") for r in range(rows) for c in range(cols)})

    def __getitem__(self, zone: tuple[int, int]) -> str:
        return self.rotations[zone]

    def is_checkerboard(self) -> bool:
        for (r, c), rot in self.rotations.items():
            for nb in ((r + 1, c), (r, c + 1)):
                if nb in self.rotations and self.rotations[nb] == rot:
                    return False
        return True


@dataclass(frozen=True)
class ConflictCounts:
    crossing: int
    merging: int
    diverging: int

    @property
    def total(self) -> int:
        return self.crossing + self.merging + self.diverging


_CONFLICTS = {
    "signalized-intersection": ConflictCounts(crossing=16, merging=8, diverging=8),
    "roundabout": ConflictCounts(crossing=0, merging=4, diverging=4),
    "zonal-boundary": ConflictCounts(crossing=0, merging=0, diverging=0),
}


def count_conflict_points(junction_kind: str) -> ConflictCounts:
    """Conflict-point taxonomy for a two-way four-leg junction of the given kind."""
    try:
        return _CONFLICTS[junction_kind]
    except KeyError:
        raise ValueError(
            f"unknown junction kind {junction_kind!r}; expected one of {sorted(_CONFLICTS)}"
        ) from None


def _turn(h_in: tuple[float, float], h_out: tuple[float, float]) -> str:
    cross = h_in[0] * h_out[1] - h_in[1] * h_out[0]
    dot = h_in[0] * h_out[0] + h_in[1] * h_out[1]
    if cross > 1e-9:
        return "left"
    if cross < -1e-9:
        return "right"
    return "through" if dot > 0 else "uturn"


def _heading(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    d = math.dist(a, b)
    return ((b[0] - a[0]) / d, (b[1] - a[1]) / d)


def _straight(eid, a: Node, b: Node, lanes, speed, kind="straight", **kw) -> Edge:
    geom = (a.position, b.position)
    return Edge(eid, a.id, b.id, Edge.polyline_length(geom), lanes, speed, geom, kind, **kw)


# ---------------------------------------------------------------------------
# traditional grid


def _junction_id(i: int, j: int) -> str:
    return f"J{i}_{j}"


def build_traditional_grid(spec: GridSpec) -> RoadNetwork:
    """Bidirectional two-lane grid with signal programs and left-turn pockets.

    Every junction where three or more roads meet is signalized; corners of the
    outer rim are plain bends. A signalized approach that offers a left turn ends
    in a short through section plus a one-lane pocket of ``pocket_length``.
    """
    spec.validate()
    z = spec.zone_size
    nodes: dict[str, Node] = {}
    for j in range(spec.rows + 1):
        for i in range(spec.cols + 1):
            nid = _junction_id(i, j)
            nodes[nid] = Node(nid, i * z, j * z, "junction")

    neighbours: dict[str, list[str]] = {nid: [] for nid in nodes}
    for j in range(spec.rows + 1):
        for i in range(spec.cols + 1):
            here = _junction_id(i, j)
            if i < spec.cols:
                neighbours[here].append(_junction_id(i + 1, j))
                neighbours[_junction_id(i + 1, j)].append(here)
            if j < spec.rows:
                neighbours[here].append(_junction_id(i, j + 1))
                neighbours[_junction_id(i, j + 1)].append(here)
    signalized = {nid for nid, nb in neighbours.items() if len(nb) >= 3}

    def heading(u: str, v: str):
        return _heading(nodes[u].position, nodes[v].position)

    def has_left(u: str, v: str) -> bool:
        return any(_turn(heading(u, v), heading(v, w)) == "left" for w in neighbours[v] if w != u)

    edges: dict[str, Edge] = {}
    connections: dict[str, tuple[str, ...]] = {}
    lane_rules: dict[tuple[str, str], tuple[int, ...]] = {}
    anchors: dict[str, tuple[str, float]] = {}
    # approach edge feeding junction v from u, keyed by (u, v) -> [(edge id, allowed turns)]
    approaches: dict[tuple[str, str], list[tuple[str, tuple[str, ...]]]] = {}
    main_of: dict[tuple[str, str], str] = {}

    speed = spec.speed_limit
    for u in list(neighbours):
        for v in neighbours[u]:
            road = f"{u}>{v}"
            main_of[(u, v)] = road
            if v in signalized and has_left(u, v):
                hx, hy = heading(u, v)
                pos = (nodes[v].x - hx * spec.pocket_length, nodes[v].y - hy * spec.pocket_length)
                snode = Node(f"{road}.s", pos[0], pos[1], "diverge")
                nodes[snode.id] = snode
                edges[road] = _straight(road, nodes[u], snode, spec.lane_count, speed, spawnable=True)
                thru = _straight(f"{road}.t", snode, nodes[v], spec.lane_count, speed)
                pocket = _straight(f"{road}.p", snode, nodes[v], 1, speed, kind="turn-pocket")
                edges[thru.id] = thru
                edges[pocket.id] = pocket
                connections[road] = (thru.id, pocket.id)
                approaches[(u, v)] = [(thru.id, ("through", "right")), (pocket.id, ("left",))]
            else:
                edges[road] = _straight(road, nodes[u], nodes[v], spec.lane_count, speed, spawnable=True)
                approaches[(u, v)] = [(road, ("through", "right", "left"))]

    programs: list[SignalProgram] = []
    if spec.light_mode == "adaptive":
        g_through, g_left = spec.adaptive_through_green, spec.adaptive_left_green
    else:
        g_through, g_left = spec.through_green, spec.left_green
    phases = (
        Phase("NS-through", g_through, spec.yellow, spec.all_red),
        Phase("NS-left", g_left, spec.yellow, spec.all_red),
        Phase("EW-through", g_through, spec.yellow, spec.all_red),
        Phase("EW-left", g_left, spec.yellow, spec.all_red),
    )
    for (u, v), feeds in approaches.items():
        h_in = heading(u, v)
        for edge_id, turns in feeds:
            outs = []
            for w in sorted(neighbours[v]):
                # turnarounds only at unsignalized rim corners, which keeps a 1x1 grid connected
                if w == u and v in signalized:
                    continue
                kind = _turn(h_in, heading(v, w))
                if kind == "uturn":
                    kind = "left"
                if kind in turns:
                    out = main_of[(v, w)]
                    outs.append(out)
                    if edge_id.endswith(".t") and kind == "right":
                        lane_rules[(edge_id, out)] = (0,)
            connections[edge_id] = tuple(sorted(outs))
    for v in sorted(signalized):
        links = []
        for u in sorted(neighbours[v]):
            h_in = heading(u, v)
            axis = 0 if abs(h_in[1]) > abs(h_in[0]) else 2
            for edge_id, _turns in approaches[(u, v)]:
                for out in connections[edge_id]:
                    w = edges[out].to_node
                    kind = _turn(h_in, heading(v, w))
                    links.append((edge_id, out, axis + (1 if kind == "left" else 0)))
        programs.append(
            SignalProgram(
                id=f"tls:{v}",
                junction=v,
                phases=phases,
                links=tuple(links),
                mode=spec.light_mode,
                time_loss_threshold=spec.time_loss_threshold,
                max_green=spec.max_green,
            )
        )

    # shared zone-side locations: the road along the side, travelling the way the
    # zonal loop of that zone travels, at the middle of the side
    rotation = LoopAssignment.checkerboard(spec.rows, spec.cols)
    for r in range(spec.rows):
        for c in range(spec.cols):
            for side, (a, b) in _zone_side_corners(r, c, rotation[(r, c)]).items():
                anchors[f"Z{r}_{c}.{side}"] = (main_of[(_junction_id(*a), _junction_id(*b))], z / 2)

    return RoadNetwork(
        nodes=nodes,
        edges=edges,
        connections=connections,
        lane_rules=lane_rules,
        controllers=tuple(programs),
        anchors=anchors,
        meta={
            "topology": "trad-" + spec.light_mode,
            "rows": spec.rows,
            "cols": spec.cols,
            "zone_size": z,
            "signalized": sorted(signalized),
        },
    )


def _zone_side_corners(r: int, c: int, rotation: str) -> dict[str, tuple[tuple[int, int], tuple[int, int]]]:
    """Grid-vertex endpoints (i, j) of each zone side in the loop's travel direction."""
    sw, se, ne, nw = (c, r), (c + 1, r), (c + 1, r + 1), (c, r + 1)
    if rotation == "CCW":
        return {"S": (sw, se), "E": (se, ne), "N": (ne, nw), "W": (nw, sw)}
    return {"W": (sw, nw), "N": (nw, ne), "E": (ne, se), "S": (se, sw)}


# ---------------------------------------------------------------------------
# zonal grid


def _arc_points(center, radius, a0, a1, n):
    return tuple(
        (center[0] + radius * math.cos(a0 + (a1 - a0) * k / n), center[1] + radius * math.sin(a0 + (a1 - a0) * k / n))
        for k in range(n + 1)
    )


def build_zonal_grid(spec: GridSpec) -> RoadNetwork:
    """One unidirectional loop per zone, checkerboard rotations, crossover merges.

    Two neighbouring loops travel the same direction along their shared side. The
    side is split by ``merges_per_boundary`` crossover structures: at each one the
    inner lanes of both loops zipper into a single merge edge that may exit onto
    either loop, while traffic staying on its loop uses a parallel one-lane bypass.
    Corners are circular arcs of ``curve_radius``.
    """
    spec.validate()
    z = spec.zone_size
    rad = spec.curve_radius
    rotation = LoopAssignment.checkerboard(spec.rows, spec.cols)
    speed = spec.speed_limit
    curve_speed = spec.speed_limit * spec.curve_speed_factor
    lanes = spec.lane_count
    m = spec.merges_per_boundary
    mlen = spec.merge_segment_length
    straight_len = z - 2 * rad
    seg_len = (straight_len - m * mlen) / (m + 1)

    nodes: dict[str, Node] = {}
    edges: dict[str, Edge] = {}
    connections: dict[str, list[str]] = {}
    lane_rules: dict[tuple[str, str], tuple[int, ...]] = {}
    merge_specs: list[MergeZoneSpec] = []
    anchors: dict[str, tuple[str, float]] = {}

    def add_node(nid, pos, kind):
        if nid not in nodes:
            nodes[nid] = Node(nid, pos[0], pos[1], kind)
        return nodes[nid]

    def neighbour(r, c, side):
        dr, dc = {"N": (1, 0), "S": (-1, 0), "E": (0, 1), "W": (0, -1)}[side]
        rr, cc = r + dr, c + dc
        if 0 <= rr < spec.rows and 0 <= cc < spec.cols:
            return rr, cc
        return None

    # side chains: zone -> side -> (first edge id, last edge id)
    chains: dict[tuple[int, int], dict[str, tuple[str, str]]] = {}
    # per shared boundary and merge index, the loop segments entering/leaving it
    boundary_parts: dict[tuple[tuple[int, int], tuple[int, int], int], dict] = {}

    for r in range(spec.rows):
        for c in range(spec.cols):
            zone = (r, c)
            tag = f"L{r}_{c}"
            chains[zone] = {}
            for side, (a, b) in _zone_side_corners(r, c, rotation[zone]).items():
                pa = (a[0] * z, a[1] * z)
                pb = (b[0] * z, b[1] * z)
                h = _heading(pa, pb)
                start = (pa[0] + h[0] * rad, pa[1] + h[1] * rad)
                end = (pb[0] - h[0] * rad, pb[1] - h[1] * rad)
                n_start = add_node(f"{tag}.{side}.a", start, "curve")
                n_end = add_node(f"{tag}.{side}.b", end, "curve")
                nb = neighbour(r, c, side)
                if nb is None:
                    e = _straight(f"{tag}.{side}", n_start, n_end, lanes, speed, spawnable=True)
                    edges[e.id] = e
                    chains[zone][side] = (e.id, e.id)
                    anchors[f"Z{r}_{c}.{side}"] = (e.id, straight_len / 2)
                    continue
                key = (min(zone, nb), max(zone, nb))
                btag = f"X{key[0][0]}_{key[0][1]}-{key[1][0]}_{key[1][1]}"
                points = [start]
                along = 0.0
                for k in range(m):
                    along += seg_len
                    points.append((start[0] + h[0] * along, start[1] + h[1] * along))
                    along += mlen
                    points.append((start[0] + h[0] * along, start[1] + h[1] * along))
                points.append(end)
                node_ids = [n_start.id]
                for k in range(m):
                    node_ids.append(add_node(f"{btag}.h{k + 1}", points[2 * k + 1], "merge-head").id)
                    node_ids.append(add_node(f"{btag}.t{k + 1}", points[2 * k + 2], "merge-tail").id)
                node_ids.append(n_end.id)
                segs = []
                for k in range(m + 1):
                    e = _straight(
                        f"{tag}.{side}{k + 1}",
                        nodes[node_ids[2 * k]],
                        nodes[node_ids[2 * k + 1]],
                        lanes,
                        speed,
                        spawnable=True,
                    )
                    edges[e.id] = e
                    segs.append(e.id)
                if m % 2 == 0:
                    mid = segs[m // 2]
                    anchors[f"Z{r}_{c}.{side}"] = (mid, seg_len / 2)
                else:
                    anchors[f"Z{r}_{c}.{side}"] = (segs[0], straight_len / 2)
                for k in range(m):
                    bypass = _straight(
                        f"{tag}.{side}{k + 1}b",
                        nodes[node_ids[2 * k + 1]],
                        nodes[node_ids[2 * k + 2]],
                        1,
                        speed,
                    )
                    edges[bypass.id] = bypass
                    connections[segs[k]] = [bypass.id]
                    connections[bypass.id] = [segs[k + 1]]
                    lane_rules[(segs[k], bypass.id)] = (0,)
                    part = boundary_parts.setdefault((key[0], key[1], k), {"btag": btag, "loops": []})
                    part["loops"].append((segs[k], segs[k + 1]))
                chains[zone][side] = (segs[0], segs[-1])

            # corner arcs joining consecutive sides
            order = list(_zone_side_corners(r, c, rotation[zone]))
            for idx, side in enumerate(order):
                nxt = order[(idx + 1) % 4]
                a = nodes[f"{tag}.{side}.b"]
                b = nodes[f"{tag}.{nxt}.a"]
                h_in = _HEADINGS_FOR(side, rotation[zone])
                h_out = _HEADINGS_FOR(nxt, rotation[zone])
                # arc centre sits one radius inward from both sides
                cx = a.x + h_out[0] * rad
                cy = a.y + h_out[1] * rad
                a0 = math.atan2(a.y - cy, a.x - cx)
                delta = math.pi / 2 if _turn(h_in, h_out) == "left" else -math.pi / 2
                geom = _arc_points((cx, cy), rad, a0, a0 + delta, spec.arc_segments)
                geom = (a.position,) + geom[1:-1] + (b.position,)
                corner = _corner_name(side, nxt)
                arc = Edge(
                    f"{tag}.{corner}",
                    a.id,
                    b.id,
                    Edge.polyline_length(geom),
                    lanes,
                    curve_speed,
                    geom,
                    "arc",
                    radius=rad,
                )
                edges[arc.id] = arc
                connections.setdefault(chains[zone][side][1], []).append(arc.id)
                connections[arc.id] = [chains[zone][nxt][0]]

    for (za, zb, k), part in sorted(boundary_parts.items()):
        (a_in, a_out), (b_in, b_out) = part["loops"]
        head = nodes[edges[a_in].to_node]
        tail = nodes[edges[a_out].from_node]
        mid = f"{part['btag']}.{k + 1}"
        medge = _straight(mid, head, tail, 1, speed, kind="zipper-merge", merge_zone=mid)
        edges[medge.id] = medge
        for src in (a_in, b_in):
            connections[src].append(medge.id)
            lane_rules[(src, medge.id)] = (lanes - 1,)
        connections[medge.id] = [a_out, b_out]
        merge_specs.append(MergeZoneSpec(mid, medge.id, (a_in, b_in), (a_out, b_out)))

    return RoadNetwork(
        nodes=nodes,
        edges=edges,
        connections={k: tuple(sorted(v)) for k, v in connections.items()},
        lane_rules=lane_rules,
        controllers=(),
        merge_zones=tuple(merge_specs),
        anchors=anchors,
        meta={
            "topology": "zonal",
            "rows": spec.rows,
            "cols": spec.cols,
            "zone_size": z,
            "rotations": {f"{r}_{c}": rot for (r, c), rot in rotation.rotations.items()},
        },
    )


def _HEADINGS_FOR(side: str, rotation: str) -> tuple[float, float]:
    ccw = {"S": "E", "E": "N", "N": "W", "W": "S"}
    cw = {"W": "N", "N": "E", "E": "S", "S": "W"}
    return _HEADINGS[(ccw if rotation == "CCW" else cw)[side]]


def _corner_name(side: str, nxt: str) -> str:
    return "".join(sorted(side + nxt, key="NSEW".index))


def build_network(topology: str, spec: GridSpec) -> RoadNetwork:
    """Dispatch on ``zonal`` / ``trad-static`` / ``trad-adaptive``."""
    if topology == "zonal":
        return build_zonal_grid(spec)
    if topology in ("trad-static", "trad-adaptive"):
        return build_traditional_grid(replace(spec, light_mode=topology.split("-")[1]))
    raise ValueError(f"unknown topology {topology!r}")


def loop_cycles(net: RoadNetwork) -> dict[str, list[str]]:
    """Walk each zone loop through its own straights and arcs.

    Returns the edge sequence per loop tag; each walk must return to its start.
    """
    loops: dict[str, list[str]] = {}
    for eid, e in net.edges.items():
        if e.kind != "arc":
            continue
        tag = eid.split(".")[0]
        if tag in loops:
            continue
        seq = [eid]
        cur = eid
        while True:
            own = [s for s in net.successors(cur) if s.split(".")[0] == tag]
            if not own:
                break
            cur = own[0]
            if cur == eid:
                break
            seq.append(cur)
            if len(seq) > 10_000:
                break
        loops[tag] = seq
    return loops
