"""Link layer: queue behavior, serialization timing, range gating, collisions, acks."""

import pytest

from manetsim.engine import Simulator, to_us
from manetsim.link import BROADCAST, CS_BACKOFF, Frame, LinkConfig, LinkLayer
from manetsim.metrics import MetricsAccumulator
from manetsim.mobility import PositionTracker, static_schedule
from manetsim.tracing import TraceCollector


class Harness:
    def __init__(self, positions, **link_kw):
        self.sim = Simulator(1)
        sched = static_schedule(positions, sim_time=100.0)
        self.tracker = PositionTracker(sched)
        self.acc = MetricsAccumulator()
        self.trace = TraceCollector(self.acc, keep_lines=True)
        self.cfg = LinkConfig(**link_kw)
        self.link = LinkLayer(self.sim, self.tracker, self.cfg, self.trace,
                              len(positions))
        self.received = []  # (time_us, node, uid, from)
        for i in range(len(positions)):
            self.link.receivers[i] = self._make_receiver(i)
        self.outcomes = []

    def _make_receiver(self, node):
        def on_frame(frame, from_node):
            self.received.append((self.sim.now, node, frame.uid, from_node))
        return on_frame

    def frame(self, uid, src, dest, size=570, **kw):
        return Frame(uid, src, dest, "cbr", size, None, **kw)

    def outcome(self, frame, delivered):
        self.outcomes.append((frame.uid, delivered, frame.attempts))


def test_serialization_delay_exact():
    h = Harness([(0, 0), (100, 0)])
    # 512-byte payload + 58 overhead at 2 Mbit/s -> 2.28 ms
    assert h.link.serialization_us(570) == 2280


def test_single_sender_delivery_time_is_exact():
    h = Harness([(0.0, 0.0), (100.0, 0.0)], jitter_max=0.0)
    h.link.send(0, h.frame(1, 0, BROADCAST))
    h.sim.run_until(to_us(1.0))
    assert h.received == [(2280, 1, 1, 0)]


def test_broadcast_range_gate():
    h = Harness([(0.0, 0.0), (0.0, 100.0), (0.0, 400.0)], jitter_max=0.0)
    h.link.send(0, h.frame(1, 0, BROADCAST))
    h.sim.run_until(to_us(1.0))
    receivers = sorted(node for _, node, _, _ in h.received)
    assert receivers == [1]


def test_queue_capacity_boundary():
    h = Harness([(0.0, 0.0), (0.0, 100.0)])
    # transmission starts via a scheduled event, so a cold queue takes 50
    accepted = [h.link.send(0, h.frame(i, 0, BROADCAST)) for i in range(52)]
    assert all(accepted[:50])
    assert accepted[50:] == [False, False]
    assert h.link.ifq_drops[0] == 2
    assert any(" RIFQ" in ln for ln in h.trace.lines)


def test_hidden_terminal_collision_destroys_both():
    # A (0,0) and B (0,400) are hidden from each other; M (0,200) hears both.
    h = Harness([(0.0, 0.0), (0.0, 400.0), (0.0, 200.0)], jitter_max=0.0)
    h.sim.schedule(0, lambda: h.link.send(0, h.frame(1, 0, BROADCAST)))
    h.sim.schedule(0, lambda: h.link.send(1, h.frame(2, 1, BROADCAST)))
    h.sim.run_until(to_us(1.0))
    assert [(n, u) for _, n, u, _ in h.received] == []
    collisions = [ln for ln in h.trace.lines if "RCOLLISION" in ln]
    assert len(collisions) == 2


def test_visible_senders_serialize_without_collision():
    # A and B in range of each other: carrier sense defers the second one.
    h = Harness([(0.0, 0.0), (0.0, 200.0), (0.0, 100.0)], jitter_max=0.0)
    h.sim.schedule(0, lambda: h.link.send(0, h.frame(1, 0, BROADCAST)))
    h.sim.schedule(0, lambda: h.link.send(1, h.frame(2, 1, BROADCAST)))
    h.sim.run_until(to_us(1.0))
    got = sorted((n, u) for _, n, u, _ in h.received)
    # every pair delivered: M hears both, A hears B, B hears A
    assert (2, 1) in got and (2, 2) in got
    assert (0, 2) in got and (1, 1) in got


def test_unicast_happy_path():
    h = Harness([(0.0, 0.0), (0.0, 100.0)], jitter_max=0.0)
    h.link.send(0, h.frame(1, 0, 1, on_outcome=h.outcome))
    h.sim.run_until(to_us(1.0))
    assert h.outcomes == [(1, True, 1)]
    assert h.received == [(2280, 1, 1, 0)]


def test_unicast_out_of_range_link_broken_after_retries():
    h = Harness([(0.0, 0.0), (0.0, 400.0)], jitter_max=0.0, retry_limit=3)
    h.link.send(0, h.frame(1, 0, 1, on_outcome=h.outcome))
    h.sim.run_until(to_us(1.0))
    assert h.outcomes == [(1, False, 4)]  # initial attempt + 3 retries
    assert h.received == []


def test_retry_limit_zero_breaks_immediately():
    h = Harness([(0.0, 0.0), (0.0, 400.0)], jitter_max=0.0, retry_limit=0)
    h.link.send(0, h.frame(1, 0, 1, on_outcome=h.outcome))
    h.sim.run_until(to_us(1.0))
    assert h.outcomes == [(1, False, 1)]


def test_broadcast_delivered_once_per_neighbor():
    h = Harness([(0.0, 0.0)] + [(0.0, float(10 * k)) for k in range(1, 6)])
    h.link.send(0, h.frame(1, 0, BROADCAST))
    h.sim.run_until(to_us(1.0))
    per_node = {}
    for _, node, uid, _ in h.received:
        per_node[node] = per_node.get(node, 0) + 1
    assert all(count == 1 for count in per_node.values())
    assert len(per_node) == 5


def test_queue_accounting_balances():
    h = Harness([(0.0, 0.0), (0.0, 100.0), (0.0, 150.0)])
    for i in range(30):
        h.link.send(i % 3, h.frame(i, i % 3, BROADCAST, size=120))
    h.sim.run_until(to_us(5.0))
    assert h.link.queue_accounting_balanced()
    assert all(len(q) == 0 for q in h.link.queues)


def test_backoff_bounds_respected():
    lo, hi = CS_BACKOFF
    assert 0 < lo < hi
