"""Discrete-time microscopic simulation.

Vehicles live in lanes. Each lane keeps an ordered queue holding the vehicles
physically on it, front first, followed by vehicles that hold a reservation to
enter it. A vehicle may only cross the node at the end of its lane into a lane
it has reserved, so its leader is always either its predecessor in one of the
queues along its reserved chain or a stop line at the end of the chain.

Reservations are requested by the foremost vehicle of a chain once it is within
``request_distance`` of the node. A request is granted only if the vehicle can
follow the current tail of the target lane without braking harder than
``max_decel``; competing requests for one edge are ordered by zipper alternation
on crossover merges and by distance elsewhere. Signalized movements are only
granted on green; at the end of a green, reservations held by vehicles that can
still stop comfortably are withdrawn. Lane changes happen at nodes when the
reservation picks a lane.
"""

from __future__ import annotations

import bisect
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..demand import STREAM_DRIVER, STREAM_SAMPLE, ArrivalSchedule, rng_for
from ..energy import EnergyLedger, EVParams, accumulate
from ..metrics import HALT_SPEED, HaltTracker, RunSeries, TripRecord
from ..netcore import RoadNetwork, Router
from .carfollow import CarFollowingParams, euler_safe_speed, follow_speed
from .merge import MergeZone
from .signals import SignalController

INF = math.inf
_TOL = 1e-6

QUEUE = "queue"
SIGNAL = "signal"
MERGE = "merge"
FREE = "free"


class SimulationError(RuntimeError):
    """Internal consistency violation; ``state`` carries a dump of the simulation."""

    def __init__(self, message: str, state: dict | None = None):
        super().__init__(message)
        self.state = state or {}


@dataclass(frozen=True)
class SimParams:
    dt: float = 1.0
    car: CarFollowingParams = field(default_factory=CarFollowingParams)
    ev: EVParams = field(default_factory=EVParams)
    request_distance: float = 50.0
    detect_range: float = 100.0
    reroute_interval: float = 0.0  # seconds; 0 disables dynamic rerouting
    log_sample: int | None = 1000  # None logs every vehicle's trajectory, 0 logs none
    strict: bool = True  # raise on negative gaps

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.request_distance <= 0 or self.detect_range <= 0:
            raise ValueError("distances must be positive")
        if self.reroute_interval < 0:
            raise ValueError("reroute_interval must be >= 0")


class Lane:
    __slots__ = ("edge", "index", "length", "limit", "queue", "kind")

    def __init__(self, edge: str, index: int, length: float, limit: float, kind: str):
        self.edge = edge
        self.index = index
        self.length = length
        self.limit = limit
        self.kind = kind
        self.queue: list[VehicleState] = []

    def __repr__(self) -> str:
        return f"Lane({self.edge}#{self.index})"


class VehicleState:
    __slots__ = (
        "id",
        "route",
        "ridx",
        "chain",
        "offset",
        "v",
        "accel",
        "length",
        "spawn_time",
        "insert_time",
        "dest_xy",
        "ledger",
        "accumulated_time_loss",
        "halt",
        "odometer",
        "elapsed",
        "pr_sum",
        "sd_sum",
        "samples",
        "route_length",
        "stop_cause",
        "stop_start",
        "cause",
        "logged",
    )

    def __init__(self, vid: int, route: tuple[str, ...], spawn_time: float, length: float, dt: float):
        self.id = vid
        self.route = route
        self.ridx = 0
        self.chain: list[Lane] = []
        self.offset = 0.0
        self.v = 0.0
        self.accel = 0.0
        self.length = length
        self.spawn_time = spawn_time
        self.insert_time = math.nan
        self.dest_xy = (0.0, 0.0)
        self.ledger = EnergyLedger()
        self.accumulated_time_loss = 0.0
        self.halt = HaltTracker(dt)
        self.odometer = 0.0
        self.elapsed = 0.0
        self.pr_sum = 0.0
        self.sd_sum = 0.0
        self.samples = 0
        self.route_length = 0.0
        self.stop_cause: str | None = None
        self.stop_start = 0.0
        self.cause = FREE
        self.logged = False

    @property
    def edge(self) -> str:
        return self.route[self.ridx]

    @property
    def lane(self) -> int:
        return self.chain[0].index

    def __repr__(self) -> str:
        return f"Veh({self.id} {self.edge}#{self.lane}@{self.offset:.2f} v={self.v:.2f})"


def _pos_in(veh: VehicleState, lane: Lane) -> float:
    """Front position of ``veh`` in the coordinates of ``lane`` (negative before its start)."""
    ch = veh.chain
    if ch[0] is lane:
        return veh.offset
    d = ch[0].length - veh.offset
    for L in ch[1:]:
        if L is lane:
            return -d
        d += L.length
    raise SimulationError(f"vehicle {veh.id} is queued on {lane} outside its chain")


class _Geometry:
    """Cumulative-length tables for fast position/tangent lookup on edge polylines."""

    def __init__(self, net: RoadNetwork):
        self.pts: dict[str, tuple] = {}
        self.cum: dict[str, list[float]] = {}
        for eid, e in net.edges.items():
            g = e.geometry
            c = [0.0]
            for i in range(len(g) - 1):
                c.append(c[-1] + math.dist(g[i], g[i + 1]))
            self.pts[eid] = g
            self.cum[eid] = c

    def point(self, edge: str, offset: float):
        g = self.pts[edge]
        c = self.cum[edge]
        i = bisect.bisect_right(c, offset) - 1
        i = min(max(i, 0), len(g) - 2)
        seg = c[i + 1] - c[i]
        (x0, y0), (x1, y1) = g[i], g[i + 1]
        tx, ty = (x1 - x0) / seg, (y1 - y0) / seg
        s = offset - c[i]
        return x0 + tx * s, y0 + ty * s, tx, ty


class Simulation:
    def __init__(
        self,
        net: RoadNetwork,
        schedule: ArrivalSchedule,
        params: SimParams | None = None,
        seed: int = 0,
        router: Router | None = None,
    ):
        self.net = net
        self.schedule = schedule
        self.p = params or SimParams()
        self.seed = seed
        self.router = router or Router(net)
        self.geom = _Geometry(net)
        self.time = 0.0
        self.step_index = 0
        self.lanes: dict[tuple[str, int], Lane] = {}
        for eid in sorted(net.edges):
            e = net.edges[eid]
            for k in range(e.lane_count):
                self.lanes[(eid, k)] = Lane(eid, k, e.length, e.speed_limit, e.kind)
        self.lanes_of = {eid: [self.lanes[(eid, k)] for k in range(e.lane_count)] for eid, e in net.edges.items()}
        self.allowed_cache: dict[tuple[str, str | None], tuple[int, ...]] = {}
        self.controllers = [SignalController(prog) for prog in net.controllers]
        self.link_ctrl: dict[tuple[str, str], tuple[int, int]] = {}
        for ci, c in enumerate(self.controllers):
            for (a, b), k in c.link_phase.items():
                self.link_ctrl[(a, b)] = (ci, k)
        self.pending: list[list[tuple[VehicleState, str, Lane]]] = [[] for _ in self.controllers]
        self.merges = {mz.merge_edge: MergeZone.from_spec(mz) for mz in net.merge_zones}
        self.diverge_end = {eid for eid, e in net.edges.items() if net.nodes[e.to_node].kind == "diverge"}
        self.driver_rng = rng_for(seed, STREAM_DRIVER)
        self.vehicles: dict[int, VehicleState] = {}
        self.origin_queues: dict[str, deque[VehicleState]] = {}
        self.arrival_ptr = 0
        self.next_vid = 0
        self.trips: list[TripRecord] = []
        self.series = RunSeries(self.p.dt)
        self.stop_log: list[tuple[int, float, float, str]] = []
        self.trajectory: list[tuple] = []
        self.counters = {
            "negative_gaps": 0,
            "min_gap_shortfalls": 0,
            "emergency_brakes": 0,
            "vehicle_steps": 0,
            "spawned": 0,
            "inserted": 0,
            "completed": 0,
            "revoked": 0,
        }
        self.max_abs_accel = 0.0
        self.min_bumper_gap = INF
        self.log_ids = self._pick_logged()
        self.finished = False
        self._edge_speed_sum: dict[str, float] = {}
        self._edge_count: dict[str, int] = {}

    # ------------------------------------------------------------------ setup

    def _pick_logged(self) -> set[int] | None:
        n = len(self.schedule)
        k = self.p.log_sample
        if k is None or k >= n:
            return None  # log everyone
        if k <= 0:
            return set()
        picks = rng_for(self.seed, STREAM_SAMPLE).choice(n, size=k, replace=False)
        return {int(i) for i in picks}

    def _allowed(self, edge: str, nxt: str | None) -> tuple[int, ...]:
        key = (edge, nxt)
        r = self.allowed_cache.get(key)
        if r is None:
            r = self.net.allowed_lanes(edge, nxt)
            self.allowed_cache[key] = r
        return r

    # ------------------------------------------------------------------ queries

    @property
    def active_count(self) -> int:
        return len(self.vehicles)

    @property
    def queued_count(self) -> int:
        return sum(len(q) for q in self.origin_queues.values())

    def _next_edge(self, veh: VehicleState, k: int) -> str | None:
        return veh.route[k] if k < len(veh.route) else None

    def _bound(self, veh: VehicleState) -> tuple[float, str, float, float]:
        """(speed bound, binding cause, smallest bumper gap, hard safety bound) for ``veh``.

        The speed bound combines the Krauss speed with the discrete stopping bound;
        the hard bound is the stopping bound alone, which is what collision freedom
        needs. The Krauss term may ask for more than ``max_decel``; clamping it is
        safe as long as the hard bound allows the clamped speed.

        Every lane of the reserved chain is checked, because a vehicle merging in
        from another feeder can become the predecessor in a later lane. The node at
        the end of the chain acts as a stop unless the chain reaches the destination.
        """
        car = self.p.car
        dt = self.p.dt
        mg = car.min_gap
        v = veh.v
        ch = veh.chain
        b = car.max_decel
        vs = INF
        ve = INF
        cause = FREE
        bumper = INF
        pos = veh.offset  # front position in the coordinates of the lane being scanned
        for L in ch:
            q = L.queue
            i = q.index(veh)
            if i:
                P = q[i - 1]
                bg = _pos_in(P, L) - P.length - pos
                if bg < bumper:
                    bumper = bg
                s = follow_speed(P.v, bg - mg, v, car, dt)
                if s < vs:
                    vs = s
                    cause = QUEUE
                e = euler_safe_speed(bg - mg, P.v, b, dt)
                if e < ve:
                    ve = e
            pos -= L.length
        k = veh.ridx + len(ch)
        if k < len(veh.route):
            e = euler_safe_speed(-pos, 0.0, b, dt)
            if e < ve:
                ve = e
            s = follow_speed(0.0, -pos, v, car, dt)
            if s < vs:
                vs = s
                last = ch[-1].edge
                nxt = veh.route[k]
                link = self.link_ctrl.get((last, nxt))
                if link is not None and not self.controllers[link[0]].allows(last, nxt):
                    cause = SIGNAL
                elif nxt in self.merges:
                    cause = MERGE
                else:
                    cause = QUEUE
        return vs, cause, bumper, ve

    def _speed_caps(self, veh: VehicleState) -> float:
        """Lowest speed limit the vehicle must respect now, with slower lanes ahead folded in."""
        ch = veh.chain
        cap = ch[0].limit
        if len(ch) > 1:
            d = ch[0].length - veh.offset
            car = self.p.car
            for L in ch[1:]:
                if L.limit < cap:
                    vs = L.limit + (d - L.limit * car.tau) / (car.tau + (L.limit + veh.v) / (2 * car.max_decel))
                    cap = min(cap, max(vs, L.limit))
                d += L.length
        return cap

    # ------------------------------------------------------------------ stepping

    def run(self, duration: float | None = None) -> Simulation:
        end = self.schedule.duration if duration is None else duration
        n = int(round(end / self.p.dt))
        for _ in range(n):
            self.step()
        self.finish()
        return self

    def step(self) -> None:
        if self.finished:
            raise RuntimeError("simulation already finished")
        dt = self.p.dt
        t = self.time
        car = self.p.car
        inserted = self._insert(t)
        if self.p.reroute_interval > 0 and self.step_index > 0:
            every = max(1, int(round(self.p.reroute_interval / dt)))
            if self.step_index % every == 0:
                self._reroute()
        self._grant(t)

        # speeds from the state at the start of the step
        b = car.max_decel
        a_max = car.max_accel
        mg = car.min_gap
        sigma = car.sigma
        rng = self.driver_rng
        new_v: list[float] = []
        vehs = list(self.vehicles.values())
        for veh in vehs:
            vs, cause, bumper, ve = self._bound(veh)
            v = veh.v
            if bumper != INF:
                if bumper < self.min_bumper_gap:
                    self.min_bumper_gap = bumper
                if bumper < mg - _TOL:
                    self.counters["min_gap_shortfalls"] += 1
                if bumper < -1e-9:
                    self.counters["negative_gaps"] += 1
                    if self.p.strict:
                        raise SimulationError(
                            f"negative gap {bumper:.6f} m behind vehicle {veh.id} at t={t}", self.dump()
                        )
            limit = self._speed_caps(veh)
            vc = min(vs, v + a_max * dt, limit)
            if sigma > 0:
                vc -= sigma * a_max * dt * rng.random()
            floor = v - b * dt
            if vc < floor:
                if ve < floor - 1e-9:
                    self.counters["emergency_brakes"] += 1
                vc = floor
            if vc < 0.0:
                vc = 0.0
            veh.cause = cause
            new_v.append(vc)

        completed = self._move(vehs, new_v, t)
        self._signals(t)
        self.time = t + dt
        self.step_index += 1
        self.series.append(self.time, len(self.vehicles), inserted, completed, self.queued_count)

    # ------------------------------------------------------------------ insertion

    def _insert(self, t: float) -> int:
        arrivals = self.schedule.arrivals
        dt = self.p.dt
        while self.arrival_ptr < len(arrivals) and arrivals[self.arrival_ptr].time <= t + 1e-12:
            a = arrivals[self.arrival_ptr]
            route = self.router.route(a.origin, a.destination)
            veh = VehicleState(self.next_vid, route.edges, a.time, self.p.car.length, dt)
            veh.route_length = route.total_length
            dest = self.net.edges[a.destination]
            veh.dest_xy = dest.geometry[-1]
            veh.logged = self.log_ids is None or veh.id in self.log_ids
            self.next_vid += 1
            self.arrival_ptr += 1
            self.counters["spawned"] += 1
            self.origin_queues.setdefault(a.origin, deque()).append(veh)
        count = 0
        for origin in sorted(self.origin_queues):
            q = self.origin_queues[origin]
            while q:
                if not self._try_insert(q[0], t):
                    break
                q.popleft()
                count += 1
        for origin in [o for o, q in self.origin_queues.items() if not q]:
            del self.origin_queues[origin]
        return count

    def _try_insert(self, veh: VehicleState, t: float) -> bool:
        car = self.p.car
        origin = veh.route[0]
        nxt = self._next_edge(veh, 1)
        best = None
        for k in self._allowed(origin, nxt):
            lane = self.lanes[(origin, k)]
            q = lane.queue
            nphys = 0
            while nphys < len(q) and q[nphys].chain[0] is lane:
                nphys += 1
            limit = lane.limit
            v0 = limit
            gap = lane.length
            if nphys:
                lead = q[nphys - 1]
                gap = lead.offset - lead.length - car.min_gap
                if gap < 0:
                    continue
                vl = lead.v
                v0 = min(v0, follow_speed(vl, gap, limit, car, self.p.dt))
            if len(veh.route) > 1:
                v0 = min(v0, follow_speed(0.0, lane.length, limit, car, self.p.dt))
            v0 = max(0.0, v0)
            # the first pending vehicle behind must be able to follow the newcomer
            if nphys < len(q):
                follower = q[nphys]
                fgap = -_pos_in(follower, lane) - veh.length - car.min_gap
                if fgap < 0:
                    continue
                fv = follower.v
                vs = follow_speed(v0, fgap, fv, car, self.p.dt)
                if vs < fv - car.max_decel * self.p.dt - 1e-9:
                    continue
            space = gap
            if best is None or space > best[0] + 1e-12:
                best = (space, lane, nphys, v0)
        if best is None:
            return False
        _, lane, nphys, v0 = best
        lane.queue.insert(nphys, veh)
        # followers now queue behind the newcomer, so their reservations past this lane lapse
        for u in lane.queue[nphys + 1 :]:
            if u.chain[-1] is not lane:
                j = u.chain.index(lane) + 1
                for L in u.chain[j:]:
                    L.queue.remove(u)
                del u.chain[j:]
                self.counters["revoked"] += 1
        veh.chain = [lane]
        veh.offset = 0.0
        veh.v = v0
        veh.insert_time = t
        self.vehicles[veh.id] = veh
        self.counters["inserted"] += 1
        return True

    # ------------------------------------------------------------------ reservations

    def _grant(self, t: float) -> None:
        R = self.p.request_distance
        for _round in range(8):
            requests: dict[str, list[tuple[float, VehicleState]]] = {}
            for veh in self.vehicles.values():
                ch = veh.chain
                last = ch[-1]
                lq = last.queue
                # everyone ahead in this lane must already hold a reservation past its end
                blocked = False
                for P in lq:
                    if P is veh:
                        break
                    if P.chain[-1] is last:
                        blocked = True
                        break
                if blocked:
                    continue
                k = veh.ridx + len(ch)
                if k >= len(veh.route):
                    continue
                d = ch[0].length - veh.offset
                for L in ch[1:]:
                    d += L.length
                if d > R:
                    continue
                nxt = veh.route[k]
                link = self.link_ctrl.get((last.edge, nxt))
                if link is not None and not self.controllers[link[0]].allows(last.edge, nxt):
                    continue
                requests.setdefault(nxt, []).append((d, veh))
            if not requests:
                return
            granted_any = False
            for edge in sorted(requests):
                reqs = requests[edge]
                zone = self.merges.get(edge)
                if zone is not None:
                    by_feeder = {r[1].chain[-1].edge: r for r in reqs}
                    order = [by_feeder[f] for f in zone.order(list(by_feeder))]
                    extra = [r for r in reqs if r[1].chain[-1].edge not in zone.entries]
                    order += sorted(extra, key=lambda r: (r[0], r[1].id))
                    for d, veh in order:
                        if not self._reserve(veh, edge, d):
                            break  # strict alternation: nobody jumps the turn
                        zone.record(t, veh.id, veh.chain[-2].edge)
                        granted_any = True
                else:
                    for d, veh in sorted(reqs, key=lambda r: (r[0], r[1].id)):
                        if self._reserve(veh, edge, d):
                            granted_any = True
            if not granted_any:
                return

    def _reserve(self, veh: VehicleState, edge: str, d: float) -> bool:
        """Try to append ``veh`` to a lane of ``edge``; ``d`` is its distance to that edge's start."""
        car = self.p.car
        k = veh.ridx + len(veh.chain)
        nxt = self._next_edge(veh, k + 1)
        best = None
        for idx in self._allowed(edge, nxt):
            lane = self.lanes[(edge, idx)]
            q = lane.queue
            if q:
                tail = q[-1]
                gap = _pos_in(tail, lane) - tail.length - car.min_gap + d
                if gap < 0:
                    continue
                vl = tail.v
                vs = follow_speed(vl, gap, veh.v, car, self.p.dt)
                if vs < veh.v - car.max_decel * self.p.dt - 1e-9:
                    continue
            else:
                gap = INF
            if best is None or gap > best[0] + 1e-12:
                best = (gap, lane)
        if best is None:
            return False
        lane = best[1]
        last = veh.chain[-1].edge
        lane.queue.append(veh)
        veh.chain.append(lane)
        link = self.link_ctrl.get((last, edge))
        if link is not None:
            self.pending[link[0]].append((veh, last, lane))
        return True

    def _revoke(self, ci: int, phase: int) -> None:
        """End of a green: withdraw reservations across its movements from vehicles that can still stop.

        Vehicles queued behind a withdrawn one in the same approach lane lose their
        reservations past that lane too, so reservations always form a prefix of
        each lane queue. They can stop because they are following the withdrawn one.
        """
        car = self.p.car
        ctrl = self.controllers[ci]
        keep = []
        cut_lanes: list[tuple[Lane, VehicleState]] = []
        for veh, in_edge, lane in self.pending[ci]:
            if veh.id not in self.vehicles or lane not in veh.chain or veh.chain[0] is lane:
                continue
            if ctrl.link_phase.get((in_edge, lane.edge)) != phase:
                keep.append((veh, in_edge, lane))
                continue
            d = -_pos_in(veh, lane)
            v = veh.v
            if follow_speed(0.0, d, v, car, self.p.dt) >= v - car.max_decel * self.p.dt + 1e-9:
                in_lane = veh.chain[veh.chain.index(lane) - 1]
                cut_lanes.append((in_lane, veh))
            else:
                keep.append((veh, in_edge, lane))
        revoked: set[int] = set()
        for in_lane, first in cut_lanes:
            if first.id in revoked:
                continue
            behind = False
            for veh in list(in_lane.queue):
                if veh is first:
                    behind = True
                if not behind or veh.chain[-1] is in_lane or in_lane not in veh.chain:
                    continue
                j = veh.chain.index(in_lane) + 1
                for L in veh.chain[j:]:
                    L.queue.remove(veh)
                del veh.chain[j:]
                revoked.add(veh.id)
                self.counters["revoked"] += 1
        self.pending[ci] = [e for e in keep if e[0].id not in revoked]
        if revoked:
            for cj in range(len(self.pending)):
                if cj != ci:
                    self.pending[cj] = [
                        e for e in self.pending[cj] if e[0].id not in revoked or e[2] in e[0].chain
                    ]

    # ------------------------------------------------------------------ motion

    def _move(self, vehs: list[VehicleState], new_v: list[float], t: float) -> int:
        dt = self.p.dt
        ev = self.p.ev
        geom = self.geom
        completed = 0
        for veh, v in zip(vehs, new_v):
            v_old = veh.v
            a = (v - v_old) / dt
            if abs(a) > self.max_abs_accel:
                self.max_abs_accel = abs(a)
            lane = veh.chain[0]
            limit = lane.limit
            edge = lane.edge
            x, y, tx, ty = geom.point(edge, veh.offset)
            if veh.logged:
                self.trajectory.append((self.step_index, t, veh.id, edge, lane.index, veh.offset, v, a))
            # per-step samples: position at step start, speed adopted for the step
            dx = veh.dest_xy[0] - x
            dy = veh.dest_xy[1] - y
            dist = math.hypot(dx, dy)
            if dist > 0.0:
                rho = v * (tx * dx + ty * dy) / (dist * limit)
                rho = 1.0 if rho > 1.0 else (-1.0 if rho < -1.0 else rho)
            else:
                rho = 0.0
            veh.pr_sum += rho
            veh.sd_sum += (v - limit) / limit
            veh.samples += 1
            loss = 1.0 - v / limit
            if loss > 0.0:
                veh.accumulated_time_loss += dt * loss
            veh.halt.update(v)
            self._track_stop(veh, v, t)
            accumulate(veh.ledger, 0.5 * (v_old + v), a, dt, ev)
            veh.v = v
            veh.accel = a
            veh.elapsed += dt
            self.counters["vehicle_steps"] += 1

            travel = v * dt
            veh.offset += travel
            done = False
            last = len(veh.route) - 1
            while True:
                if veh.ridx == last:
                    if veh.offset >= lane.length:
                        travel -= veh.offset - lane.length
                        done = True
                    break
                if veh.offset <= lane.length:
                    break
                if len(veh.chain) > 1:
                    lane.queue.remove(veh)
                    veh.offset -= lane.length
                    veh.chain.pop(0)
                    veh.ridx += 1
                    lane = veh.chain[0]
                elif veh.offset - lane.length <= _TOL:
                    travel -= veh.offset - lane.length
                    veh.offset = lane.length
                    break
                else:
                    raise SimulationError(
                        f"vehicle {veh.id} ran {veh.offset - lane.length:.4f} m past the end of {lane} without a reservation",
                        self.dump(),
                    )
            veh.odometer += travel
            if done:
                self._complete(veh, t + dt)
                completed += 1
        return completed

    def _track_stop(self, veh: VehicleState, v: float, t: float) -> None:
        cause = veh.cause if v < HALT_SPEED else None
        if cause == FREE:
            cause = QUEUE
        if cause != veh.stop_cause:
            if veh.stop_cause is not None:
                self.stop_log.append((veh.id, veh.stop_start, t, veh.stop_cause))
            veh.stop_cause = cause
            veh.stop_start = t

    def _complete(self, veh: VehicleState, now: float) -> None:
        for L in veh.chain:
            L.queue.remove(veh)
        veh.chain = []
        del self.vehicles[veh.id]
        if veh.stop_cause is not None:
            self.stop_log.append((veh.id, veh.stop_start, now, veh.stop_cause))
            veh.stop_cause = None
        self.counters["completed"] += 1
        self.trips.append(self._record(veh, now, True))

    def _record(self, veh: VehicleState, now: float, completed: bool) -> TripRecord:
        n = veh.samples
        return TripRecord(
            vehicle_id=veh.id,
            origin=veh.route[0],
            destination=veh.route[-1],
            spawn_time=veh.spawn_time,
            insert_time=veh.insert_time,
            finish_time=now,
            drive_time=now - veh.spawn_time,
            distance=veh.odometer,
            energy_used=veh.ledger.used,
            energy_output=veh.ledger.output,
            energy_input=veh.ledger.input,
            energy_lost=veh.ledger.lost,
            mean_progress_rate=veh.pr_sum / n if n else 0.0,
            mean_speed_deviation=veh.sd_sum / n if n else 0.0,
            halts=veh.halt.count,
            time_loss=veh.accumulated_time_loss,
            completed=completed,
        )

    # ------------------------------------------------------------------ signals

    def _approach_losses(self) -> dict[int, float]:
        """Max accumulated time loss of vehicles approaching each controller's current green movements."""
        need = {ci for ci, c in enumerate(self.controllers) if c.wants_demand(self.p.dt)}
        out: dict[int, float] = {}
        if not need:
            return out
        rng = self.p.detect_range
        for veh in self.vehicles.values():
            r = veh.route
            k = veh.ridx
            if k + 1 >= len(r):
                continue
            lane = veh.chain[0]
            d = lane.length - veh.offset
            link = self.link_ctrl.get((r[k], r[k + 1]))
            if link is None and r[k] in self.diverge_end and k + 2 < len(r):
                link = self.link_ctrl.get((r[k + 1], r[k + 2]))
                d += self.net.edges[r[k + 1]].length
            if link is None or d > rng:
                continue
            ci, ph = link
            if ci in need and self.controllers[ci].phase == ph:
                if veh.accumulated_time_loss > out.get(ci, 0.0):
                    out[ci] = veh.accumulated_time_loss
        return out

    def _signals(self, t: float) -> None:
        if not self.controllers:
            return
        losses = self._approach_losses()
        dt = self.p.dt
        for ci, ctrl in enumerate(self.controllers):
            ended = ctrl.advance(t, dt, losses.get(ci, 0.0))
            if ended is not None:
                self._revoke(ci, ended)

    # ------------------------------------------------------------------ rerouting

    def _reroute(self) -> None:
        """Replace each vehicle's unreserved route tail with a current travel-time shortest path."""
        weights: dict[str, float] = {}
        for eid, e in self.net.edges.items():
            vs = [v.v for L in self.lanes_of[eid] for v in L.queue if v.chain and v.chain[0] is L]
            mean = sum(vs) / len(vs) if vs else e.speed_limit
            weights[eid] = e.length / max(mean, 0.5)
        for veh in self.vehicles.values():
            k = veh.ridx + len(veh.chain)  # first unreserved route index
            if k + 1 >= len(veh.route):
                continue
            start = veh.route[k]
            tail = self._dyn_path(start, veh.route[-1], weights)
            if tail is not None and tail != veh.route[k:]:
                veh.route = veh.route[:k] + tail
                veh.route_length = sum(self.net.edges[e].length for e in veh.route)

    def _dyn_path(self, start: str, dest: str, w: dict[str, float]) -> tuple[str, ...] | None:
        dist = {start: 0.0}
        prev: dict[str, str] = {}
        heap = [(0.0, start)]
        while heap:
            d, e = heapq.heappop(heap)
            if e == dest:
                out = [e]
                while out[-1] != start:
                    out.append(prev[out[-1]])
                return tuple(reversed(out))
            if d > dist[e]:
                continue
            for s in self.net.successors(e):
                nd = d + w[s]
                if nd < dist.get(s, INF) - 1e-12:
                    dist[s] = nd
                    prev[s] = e
                    heapq.heappush(heap, (nd, s))
        return None

    # ------------------------------------------------------------------ end of run

    def finish(self) -> None:
        """Check final gaps, close logs and emit records for vehicles still on the road."""
        if self.finished:
            return
        self.finished = True
        for veh in list(self.vehicles.values()):
            bumper = self._bound(veh)[2]
            if bumper < -1e-9:
                self.counters["negative_gaps"] += 1
                if self.p.strict:
                    raise SimulationError(f"negative gap behind vehicle {veh.id} at end of run", self.dump())
        for ctrl in self.controllers:
            ctrl.finish()
        for veh in self.vehicles.values():
            if veh.stop_cause is not None:
                self.stop_log.append((veh.id, veh.stop_start, self.time, veh.stop_cause))
                veh.stop_cause = None
            self.trips.append(self._record(veh, self.time, False))
        self.trips.sort(key=lambda r: r.vehicle_id)

    def conservation_ok(self) -> bool:
        c = self.counters
        return c["spawned"] == len(self.vehicles) + c["completed"] + self.queued_count

    def dump(self) -> dict:
        return {
            "time": self.time,
            "vehicles": [
                {
                    "id": v.id,
                    "edge": v.edge,
                    "lane": v.chain[0].index if v.chain else None,
                    "offset": v.offset,
                    "speed": v.v,
                    "chain": [f"{L.edge}#{L.index}" for L in v.chain],
                    "route_index": v.ridx,
                    "route": list(v.route),
                }
                for v in self.vehicles.values()
            ],
            "queues": {f"{k[0]}#{k[1]}": [v.id for v in L.queue] for k, L in self.lanes.items() if L.queue},
            "controllers": [(c.id, c.phase, c.stage, c.elapsed) for c in self.controllers],
            "counters": dict(self.counters),
        }

    # ------------------------------------------------------------------ logs

    def green_log(self):
        return [g for c in self.controllers for g in c.green_log]

    def prolong_log(self):
        return [p for c in self.controllers for p in c.prolong_log]


def step(sim: Simulation, dt: float | None = None) -> Simulation:
    """Advance ``sim`` by one step. ``dt`` must match the simulation's configured step."""
    if dt is not None and abs(dt - sim.p.dt) > 1e-12:
        raise ValueError(f"simulation was configured with dt={sim.p.dt}, got {dt}")
    sim.step()
    return sim


def insert_vehicle(sim: Simulation, veh: VehicleState) -> str:
    """Place ``veh`` at its origin now if headway allows, else append it to the origin queue."""
    if veh.id in sim.vehicles:
        raise ValueError(f"vehicle {veh.id} already active")
    q = sim.origin_queues.setdefault(veh.route[0], deque())
    if not q and sim._try_insert(veh, sim.time):
        return "inserted"
    q.append(veh)
    return "queued"


def make_vehicle(sim: Simulation, origin: str, destination: str, spawn_time: float | None = None) -> VehicleState:
    route = sim.router.route(origin, destination)
    veh = VehicleState(sim.next_vid, route.edges, sim.time if spawn_time is None else spawn_time, sim.p.car.length, sim.p.dt)
    veh.route_length = route.total_length
    veh.dest_xy = sim.net.edges[destination].geometry[-1]
    veh.logged = True
    sim.next_vid += 1
    sim.counters["spawned"] += 1
    return veh
