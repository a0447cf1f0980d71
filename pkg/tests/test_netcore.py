from __future__ import annotations

import itertools
import math

import networkx as nx
import pytest
from conftest import network

from zonalsim.netcore import (
    Edge,
    Node,
    NoRouteError,
    ODPair,
    RoadNetwork,
    Router,
    route_length_ratio,
    sample_anchor_pairs,
    shortest_route,
    validate_network,
)


def _line(a: Node, b: Node, eid: str, **kw) -> Edge:
    length = math.dist(a.position, b.position)
    return Edge(eid, a.id, b.id, length, 1, 10.0, (a.position, b.position), **kw)


def _ring() -> RoadNetwork:
    a, b, c = Node("a", 0, 0), Node("b", 100, 0), Node("c", 100, 100)
    nodes = {n.id: n for n in (a, b, c)}
    edges = {e.id: e for e in (_line(a, b, "ab"), _line(b, c, "bc"), _line(c, a, "ca"))}
    return RoadNetwork(nodes, edges)


def _line_graph(net: RoadNetwork) -> nx.DiGraph:
    """Edge-to-edge graph; a move costs the free-flow time of the edge entered."""
    g = nx.DiGraph()
    for e in net.edges:
        g.add_node(e)
        for s in net.successors(e):
            ed = net.edges[s]
            g.add_edge(e, s, weight=ed.length / ed.speed_limit)
    return g


def _time(net, edges):
    return sum(net.edges[e].length / net.edges[e].speed_limit for e in edges)


class TestValidate:
    def test_zonal_2x2_is_clean(self):
        assert validate_network(network("zonal", 2, 2)).violations == []

    def test_traditional_2x2_is_clean(self):
        assert validate_network(network("trad-static", 2, 2)).ok

    def test_dangling_edge_head(self):
        net = _ring()
        bad = Edge("cx", "c", "ghost", 10.0, 1, 10.0, ((100, 100), (110, 100)))
        broken = RoadNetwork(net.nodes, {**net.edges, "cx": bad})
        rep = validate_network(broken)
        assert len(rep) == 1
        assert "cx" in rep.violations[0]

    def test_unreachable_terminus(self):
        net = _ring()
        d = Node("d", 200, 0, "terminus")
        spur = _line(net.nodes["b"], d, "bd")
        broken = RoadNetwork({**net.nodes, "d": d}, {**net.edges, "bd": spur})
        rep = validate_network(broken)
        assert rep.violations
        assert all("strongly connected" in v for v in rep.violations)
        # BFS oracle agrees the spur is a dead end
        g = _line_graph(broken)
        assert not nx.is_strongly_connected(g)

    def test_length_mismatch_and_speed(self):
        net = _ring()
        bad = Edge("ab", "a", "b", 99.0, 1, 0.0, ((0, 0), (100, 0)))
        rep = validate_network(RoadNetwork(net.nodes, {**net.edges, "ab": bad}))
        assert any("speed limit" in v for v in rep)
        assert any("polyline" in v for v in rep)

    def test_arc_needs_radius_and_zipper_needs_zone(self):
        net = _ring()
        arc = Edge("ab", "a", "b", 100.0, 1, 10.0, ((0, 0), (100, 0)), kind="arc")
        zip_ = Edge("bc", "b", "c", 100.0, 1, 10.0, ((100, 0), (100, 100)), kind="zipper-merge")
        rep = validate_network(RoadNetwork(net.nodes, {**net.edges, "ab": arc, "bc": zip_}))
        assert any("arc without radius" in v for v in rep)
        assert any("merge zone" in v for v in rep)


class TestShortestRoute:
    def test_fig1_loop_transfer(self):
        # origin on loop 1 (zone 0,0), destination in zone 4 (1,1) via loop 2 (0,1)
        net = network("zonal", 2, 2)
        r = shortest_route(net, "L0_0.S", "L1_1.E")
        loops = [k for k, _ in itertools.groupby(e.split(".")[0] for e in r.edges if e.startswith("L"))]
        assert loops == ["L0_0", "L0_1", "L1_1"]

    def test_single_hop(self):
        net = network("zonal", 2, 2)
        o = "L0_0.S"
        nxt = net.successors(o)[0]
        r = shortest_route(net, o, nxt)
        assert r.edges == (o, nxt)

    @pytest.mark.parametrize("topology", ["zonal", "trad-static"])
    def test_all_pairs_match_dijkstra_oracle(self, topology):
        net = network(topology, 2, 2)
        g = _line_graph(net)
        router = Router(net)
        spawn = sorted(net.spawn_edges)
        for o in spawn:
            cost = nx.single_source_dijkstra_path_length(g, o, weight="weight")
            for d in spawn:
                if o == d:
                    continue
                r = router.route(o, d)
                assert r.edges[0] == o and r.edges[-1] == d
                assert _time(net, r.edges[1:]) == pytest.approx(cost[d], rel=1e-9)

    def test_tie_break_is_lexicographic(self):
        # two equal-time paths a->{b1|b2}->c; the smaller id wins
        a, b, c = Node("a", 0, 0), Node("b", 100, 0), Node("c", 200, 0)
        nodes = {n.id: n for n in (a, b, c)}
        edges = {
            "s": _line(a, b, "s"),
            "x2": _line(b, c, "x2"),
            "x1": _line(b, c, "x1"),
            "t": _line(c, a, "t"),
        }
        net = RoadNetwork(nodes, edges)
        assert shortest_route(net, "s", "t").edges == ("s", "x1", "t")

    def test_route_invariants(self):
        net = network("trad-static", 3, 3)
        router = Router(net)
        vmax = net.max_speed
        for o, d in itertools.islice(itertools.permutations(sorted(net.spawn_edges), 2), 300):
            r = router.route(o, d)
            for u, v in zip(r.edges, r.edges[1:]):
                assert v in net.successors(u)
            walk = sum(net.edges[e].length for e in r.edges)
            assert r.total_length == pytest.approx(walk, rel=1e-9)
            straight = math.dist(net.edges[o].geometry[-1], net.edges[d].geometry[0])
            assert _time(net, r.edges[1:]) >= straight / vmax - 1e-9
            assert router.route(o, d) == r == Router(net).route(o, d)

    def test_unreachable_raises(self):
        net = _ring()
        d = Node("d", 200, 0, "terminus")
        broken = RoadNetwork({**net.nodes, "d": d}, {**net.edges, "bd": _line(net.nodes["b"], d, "bd")})
        with pytest.raises(NoRouteError):
            shortest_route(broken, "bd", "ab")


class TestRouteRatio:
    def test_identity(self):
        net = network("zonal", 2, 2)
        pairs = sample_anchor_pairs([net], 50, 3)
        assert route_length_ratio(net, net, pairs) == 1.0

    def test_all_pairs_brute_force(self):
        z, t = network("zonal", 2, 2), network("trad-static", 2, 2)
        keys = sorted(set(z.anchors) & set(t.anchors))
        pairs = [ODPair(a, b) for a, b in itertools.permutations(keys, 2)]
        rz, rt = Router(z), Router(t)

        def dist(net, router, a, b):
            # independent oracle: networkx distance between anchor points
            (ea, oa), (eb, ob) = net.anchors[a], net.anchors[b]
            g = nx.DiGraph()
            for e in net.edges:
                for s in net.successors(e):
                    g.add_edge(e, s, weight=net.edges[s].length)
            if ea == eb and ob >= oa:
                return ob - oa
            if ea == eb:
                best = min(
                    nx.dijkstra_path_length(g, s, eb, weight="weight") + net.edges[s].length for s in net.successors(ea)
                )
                return net.edges[ea].length - oa + best - (net.edges[eb].length - ob)
            return net.edges[ea].length - oa + nx.dijkstra_path_length(g, ea, eb, weight="weight") - (net.edges[eb].length - ob)

        mean_z = sum(dist(z, rz, p.origin, p.destination) for p in pairs) / len(pairs)
        mean_t = sum(dist(t, rt, p.origin, p.destination) for p in pairs) / len(pairs)
        assert route_length_ratio(z, t, pairs) == pytest.approx(mean_z / mean_t, rel=1e-9)

    def test_unroutable_pair_named(self):
        net = network("zonal", 2, 2)
        with pytest.raises(NoRouteError, match="nowhere"):
            route_length_ratio(net, net, [ODPair("Z0_0.S", "nowhere")])


def test_json_round_trip(tmp_path):
    net = network("trad-adaptive", 2, 2)
    path = tmp_path / "net.json"
    net.to_json(path)
    back = RoadNetwork.from_json(path)
    assert back.edges == net.edges
    assert back.nodes == net.nodes
    assert back.controllers == net.controllers
    assert back.connections == net.connections
    assert back.lane_rules == net.lane_rules
    assert back.anchors == net.anchors
