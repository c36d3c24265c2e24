"""Random waypoint mobility: schedule generation, position queries, range tests."""

import math
from dataclasses import dataclass

import numpy as np

from .engine import US_PER_SEC, to_us, us_to_str


class InvalidConfig(Exception):
    """Mobility parameters outside their valid ranges."""


class OutOfRange(Exception):
    """Position queried past the end of the schedule."""


@dataclass
class Leg:
    """One straight move: depart start toward end at speed, then dwell pause_after."""

    start: tuple
    end: tuple
    depart_at: int  # us
    speed: float  # m/s, > 0 for moving legs
    pause_after: int  # us

    @property
    def travel_us(self):
        dist = math.dist(self.start, self.end)
        return int(round(dist / self.speed * US_PER_SEC)) if self.speed > 0 else 0

    @property
    def arrive_at(self):
        return self.depart_at + self.travel_us


class MobilitySchedule:
    """Per-node leg lists compiled to piecewise-linear segments over [0, sim_time]."""

    def __init__(self, legs_by_node, sim_time_us):
        self.legs = legs_by_node  # list of lists of Leg, index = node id
        self.sim_time_us = sim_time_us
        self.n_nodes = len(legs_by_node)
        # Segments: (t0, t1, x0, y0, vx, vy) with v in meters per microsecond.
        self.segments = [_compile_segments(legs, sim_time_us) for legs in legs_by_node]

    def position_at(self, node, t_us):
        """Exact position of node at t_us by bisection over its segments."""
        if t_us > self.sim_time_us:
            raise OutOfRange(f"t={us_to_str(t_us)} > sim_time")
        segs = self.segments[node]
        lo, hi = 0, len(segs) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if segs[mid][0] <= t_us:
                lo = mid
            else:
                hi = mid - 1
        t0, _t1, x0, y0, vx, vy = segs[lo]
        dt = t_us - t0
        return (x0 + vx * dt, y0 + vy * dt)

    def in_range(self, a, b, t_us, tx_range):
        """True iff nodes a and b are within tx_range (closed disk) at t_us."""
        ax, ay = self.position_at(a, t_us)
        bx, by = self.position_at(b, t_us)
        return (ax - bx) ** 2 + (ay - by) ** 2 <= tx_range * tx_range


def _compile_segments(legs, sim_time_us):
    """Flatten legs into motion and pause segments; pad to cover [0, sim_time]."""
    segs = []
    for leg in legs:
        travel = leg.travel_us
        if travel > 0:
            vx = (leg.end[0] - leg.start[0]) / travel
            vy = (leg.end[1] - leg.start[1]) / travel
            segs.append((leg.depart_at, leg.depart_at + travel, leg.start[0], leg.start[1], vx, vy))
        if leg.pause_after > 0:
            t0 = leg.depart_at + travel
            segs.append((t0, t0 + leg.pause_after, leg.end[0], leg.end[1], 0.0, 0.0))
    if not segs:
        raise InvalidConfig("empty schedule")
    # Hold the final waypoint exactly through the end of the run.
    last_t1 = segs[-1][1]
    end_x, end_y = legs[-1].end
    segs.append((last_t1, sim_time_us + US_PER_SEC, end_x, end_y, 0.0, 0.0))
    return segs


def generate_schedule(n_nodes, area_x, area_y, speed_min, speed_max, pause_time,
                      sim_time, rng):
    """Random waypoint schedule for n_nodes over the rectangular field.

    Waypoints are uniform over the field, speeds uniform per leg in
    [speed_min, speed_max], dwell at each waypoint equals pause_time.
    Draws come from per-node streams "mobility/<id>" of rng.
    """
    if speed_min <= 0 or speed_min > speed_max:
        raise InvalidConfig(f"speed bounds ({speed_min}, {speed_max})")
    if area_x <= 0 or area_y <= 0 or sim_time <= 0:
        raise InvalidConfig("area and sim_time must be positive")
    if pause_time < 0:
        raise InvalidConfig("pause_time must be non-negative")

    sim_us = to_us(sim_time)
    pause_us = to_us(pause_time)
    legs_by_node = []
    for node in range(n_nodes):
        key = f"mobility/{node}"
        x = rng.uniform(key, 0.0, area_x)
        y = rng.uniform(key, 0.0, area_y)
        legs = []
        t = 0
        while t < sim_us:
            wx = rng.uniform(key, 0.0, area_x)
            wy = rng.uniform(key, 0.0, area_y)
            speed = rng.uniform(key, speed_min, speed_max)
            leg = Leg((x, y), (wx, wy), t, speed, pause_us)
            if leg.travel_us == 0 and pause_us == 0:
                continue  # degenerate zero-length hop, redraw
            legs.append(leg)
            t = leg.arrive_at + pause_us
            x, y = wx, wy
        legs_by_node.append(legs)
    return MobilitySchedule(legs_by_node, sim_us)


def static_schedule(positions, sim_time):
    """Schedule where every node holds a fixed position for the whole run."""
    sim_us = to_us(sim_time)
    legs = [[Leg((x, y), (x, y), 0, 1.0, sim_us + US_PER_SEC)] for x, y in positions]
    return MobilitySchedule(legs, sim_us)


def export_schedule(schedule):
    """Render a schedule as waypoint lines: node <id> t <s> x <x> y <y> speed <v>."""
    lines = []
    for node, legs in enumerate(schedule.legs):
        for leg in legs:
            lines.append(
                f"node {node} t {us_to_str(leg.depart_at)} "
                f"x {leg.start[0]!r} y {leg.start[1]!r} speed {leg.speed!r}"
            )
        if legs:
            last = legs[-1]
            lines.append(
                f"node {node} t {us_to_str(last.arrive_at)} "
                f"x {last.end[0]!r} y {last.end[1]!r} speed 0.0"
            )
    return "\n".join(lines) + "\n"


def import_schedule(text, sim_time):
    """Rebuild a schedule from export_schedule output."""
    waypoints = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 10 or parts[0] != "node" or (parts[2], parts[4], parts[6], parts[8]) != ("t", "x", "y", "speed"):
            raise InvalidConfig(f"bad waypoint line {lineno}: {raw!r}")
        node = int(parts[1])
        t_us = to_us(float(parts[3]))
        waypoints.setdefault(node, []).append(
            (t_us, float(parts[5]), float(parts[7]), float(parts[9]))
        )
    if not waypoints or sorted(waypoints) != list(range(len(waypoints))):
        raise InvalidConfig("waypoint file must cover node ids 0..n-1")

    legs_by_node = []
    for node in range(len(waypoints)):
        pts = waypoints[node]
        legs = []
        for (t0, x0, y0, v0), (t1, x1, y1, _v1) in zip(pts, pts[1:]):
            if v0 <= 0:
                raise InvalidConfig(f"node {node}: non-positive speed before a later waypoint")
            leg = Leg((x0, y0), (x1, y1), t0, v0, 0)
            pause = t1 - leg.arrive_at
            if pause < 0:
                raise InvalidConfig(f"node {node}: waypoint at t={us_to_str(t1)} unreachable")
            leg.pause_after = pause
            if leg.travel_us == 0 and pause == 0:
                continue  # zero-length hold, nothing to replay
            legs.append(leg)
        if not legs:  # stationary node
            t0, x0, y0, _ = pts[0]
            legs.append(Leg((x0, y0), (x0, y0), t0, 1.0, to_us(sim_time) + US_PER_SEC))
        legs_by_node.append(legs)
    return MobilitySchedule(legs_by_node, to_us(sim_time))


class PositionTracker:
    """Vectorized all-node position queries for monotonically non-decreasing times.

    Keeps each node's active segment in numpy arrays so a broadcast delivery
    can range-test all nodes with a handful of array operations.
    """

    def __init__(self, schedule):
        self.schedule = schedule
        n = schedule.n_nodes
        self._idx = [0] * n
        self._t0 = np.zeros(n)
        self._t1 = np.zeros(n)
        self._x0 = np.zeros(n)
        self._y0 = np.zeros(n)
        self._vx = np.zeros(n)
        self._vy = np.zeros(n)
        for node in range(n):
            self._load(node, 0)
        self._cache_t = -1
        self._cache_xy = None

    def _load(self, node, i):
        t0, t1, x0, y0, vx, vy = self.schedule.segments[node][i]
        self._idx[node] = i
        self._t0[node] = t0
        self._t1[node] = t1
        self._x0[node] = x0
        self._y0[node] = y0
        self._vx[node] = vx
        self._vy[node] = vy

    def positions(self, t_us):
        """(xs, ys) arrays for all nodes at t_us; t_us must not decrease across calls."""
        if t_us == self._cache_t:
            return self._cache_xy
        stale = np.nonzero(self._t1 <= t_us)[0]
        for node in stale:
            segs = self.schedule.segments[node]
            i = self._idx[node]
            while i + 1 < len(segs) and segs[i][1] <= t_us:
                i += 1
            self._load(node, i)
        dt = t_us - self._t0
        xs = self._x0 + self._vx * dt
        ys = self._y0 + self._vy * dt
        self._cache_t = t_us
        self._cache_xy = (xs, ys)
        return xs, ys

    def in_range_mask(self, node, t_us, tx_range):
        """Boolean array: which nodes sit within tx_range of node at t_us."""
        xs, ys = self.positions(t_us)
        dx = xs - xs[node]
        dy = ys - ys[node]
        return dx * dx + dy * dy <= tx_range * tx_range

    def dist2(self, a, b, t_us):
        xs, ys = self.positions(t_us)
        return (xs[a] - xs[b]) ** 2 + (ys[a] - ys[b]) ** 2
