"""Shared routing-protocol machinery: run context, send buffers, base class."""

from collections import deque

from . import tracing
from .engine import to_us


class RunContext:
    """Everything a per-node protocol instance needs from the running scenario."""

    def __init__(self, sim, trace, link, cfg):
        self.sim = sim
        self.rng = sim.rng
        self.trace = trace
        self.link = link
        self.cfg = cfg
        self.deliver_app = None  # set by the traffic layer
        self.flow_lookup = None  # fn(src, dst, now_us) -> bool, set by traffic
        self._uid = 0
        self.check_invariants = False
        self.violations = []

    def next_uid(self):
        self._uid += 1
        return self._uid

    def violation(self, message):
        self.violations.append(message)
        if self.check_invariants:
            raise AssertionError(message)


class SendBuffer:
    """Per-destination packet buffer used while discovery runs: bounded, drop-oldest."""

    def __init__(self, ctx, node, capacity):
        self.ctx = ctx
        self.node = node
        self.capacity = capacity
        self.packets = {}  # dest -> deque of AppPacket

    def push(self, dest, pkt):
        q = self.packets.setdefault(dest, deque())
        if len(q) >= self.capacity:
            old = q.popleft()
            self._drop(old)
        q.append(pkt)

    def pop_all(self, dest):
        q = self.packets.pop(dest, None)
        return list(q) if q else []

    def drop_all(self, dest):
        for pkt in self.pop_all(dest):
            self._drop(pkt)

    def _drop(self, pkt):
        self.ctx.trace.drop(self.ctx.sim.now, self.node, tracing.RTR, pkt.uid,
                            tracing.DATA, pkt.size, tracing.NRTE, pkt.flow_id, pkt.seq)

    def pending_count(self):
        return sum(len(q) for q in self.packets.values())


class Protocol:
    """Base for the three routing protocols; one instance per node."""

    name = "?"

    def __init__(self, ctx, node):
        self.ctx = ctx
        self.node = node
        self.sim = ctx.sim
        self.link = ctx.link
        self.trace = ctx.trace

    def start(self):
        """Schedule initial timers; called once before the run."""

    def send_data(self, pkt):
        raise NotImplementedError

    def on_frame(self, frame, from_node):
        raise NotImplementedError

    def pending_data_count(self):
        """Data packets currently held by this protocol (buffers etc.)."""
        return 0

    # Helpers shared by the concrete protocols

    def _deliver_local(self, pkt):
        self.ctx.deliver_app(self.node, pkt)

    def _drop_data(self, pkt, reason):
        self.trace.drop(self.sim.now, self.node, tracing.RTR, pkt.uid, tracing.DATA,
                        pkt.size, reason, pkt.flow_id, pkt.seq)
