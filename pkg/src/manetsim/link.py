"""Simplified wireless link layer: drop-tail IFQ, carrier sense, collisions, acked unicast."""

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import tracing
from .engine import to_us

BROADCAST = None

# Carrier-sense deferral backoff and inter-frame gap bounds (seconds).
CS_BACKOFF = (0.0005, 0.002)


@dataclass
class LinkConfig:
    tx_range: float = 250.0  # meters
    bitrate: float = 2_000_000.0  # bits/second
    overhead: int = 58  # per-frame link overhead, bytes
    retry_limit: int = 3  # unicast retransmissions after the first attempt
    jitter_max: float = 0.001  # seconds added to each occupation
    ifq_len: int = 50  # packets

    def __post_init__(self):
        if self.tx_range <= 0 or self.bitrate <= 0 or self.ifq_len <= 0:
            raise ValueError("tx_range, bitrate and ifq_len must be positive")
        if self.retry_limit < 0 or self.jitter_max < 0 or self.overhead < 0:
            raise ValueError("retry_limit, jitter_max and overhead must be non-negative")


class Frame:
    """One link-layer transmission unit wrapping a routing or data packet."""

    __slots__ = ("uid", "src", "dest", "ptype", "size", "payload",
                 "flow_id", "seq", "on_outcome", "attempts")

    def __init__(self, uid, src, dest, ptype, size, payload,
                 flow_id=None, seq=None, on_outcome=None):
        self.uid = uid
        self.src = src
        self.dest = dest  # BROADCAST or node id
        self.ptype = ptype
        self.size = size  # on-air bytes including link overhead
        self.payload = payload
        self.flow_id = flow_id
        self.seq = seq
        self.on_outcome = on_outcome  # unicast only: fn(frame, delivered: bool)
        self.attempts = 0


class _Transmission:
    __slots__ = ("sender", "start", "end", "frame")

    def __init__(self, sender, start, end, frame):
        self.sender = sender
        self.start = start
        self.end = end
        self.frame = frame


class LinkLayer:
    """Shared medium plus one interface queue per node.

    Contention model: a node defers while any in-range node is mid-transmission,
    re-polling after a uniform random backoff; transmissions from two senders
    both in range of a common receiver that overlap in time are both lost at
    that receiver. Broadcasts are never retried; unicasts are acknowledged and
    retried up to retry_limit before the sender's routing layer hears
    link_broken.
    """

    # Ended transmissions stay visible this long for overlap checks.
    RECENT_HORIZON_US = 50_000

    def __init__(self, sim, tracker, config, trace, n_nodes):
        self.sim = sim
        self.tracker = tracker
        self.cfg = config
        self.trace = trace
        self.n = n_nodes
        self.queues = [deque() for _ in range(n_nodes)]
        self.current = [None] * n_nodes  # frame whose attempt chain is live
        self.busy = [False] * n_nodes
        self.poll_scheduled = [False] * n_nodes
        self.active = []
        self.recent = deque()
        self.receivers = [None] * n_nodes  # fn(frame, from_node) set by routing
        self.enqueued = [0] * n_nodes
        self.ifq_drops = [0] * n_nodes
        self.completions = [0] * n_nodes
        self.range2 = config.tx_range * config.tx_range

    def serialization_us(self, size):
        return int(round(size * 8 / self.cfg.bitrate * 1_000_000))

    def send(self, node, frame):
        """Queue a frame for transmission; False means drop-tail rejected it.

        An idle interface gets its transmission event scheduled immediately
        (same timestamp, after the caller's event completes).
        """
        q = self.queues[node]
        if len(q) >= self.cfg.ifq_len:
            self.ifq_drops[node] += 1
            self.trace.drop(self.sim.now, node, tracing.MAC, frame.uid, frame.ptype,
                            frame.size, tracing.IFQ, frame.flow_id, frame.seq)
            return False
        self.enqueued[node] += 1
        q.append(frame)
        if not self.busy[node] and self.current[node] is None:
            self._schedule_poll(node, immediate=True)
        return True

    def _medium_busy_for(self, node):
        if not self.active:
            return False
        xs, ys = self.tracker.positions(self.sim.now)
        x, y = xs[node], ys[node]
        for tx in self.active:
            s = tx.sender
            if s == node:
                continue
            if (xs[s] - x) ** 2 + (ys[s] - y) ** 2 <= self.range2:
                return True
        return False

    def _schedule_poll(self, node, immediate=False):
        if self.poll_scheduled[node]:
            return
        self.poll_scheduled[node] = True
        delay = 0 if immediate else self.sim.rng.uniform_us(f"mac/{node}", *CS_BACKOFF)
        self.sim.schedule_in(delay, lambda n=node: self._poll(n), target=node, kind="mac-poll")

    def _poll(self, node):
        self.poll_scheduled[node] = False
        self._try_start(node)

    def _try_start(self, node):
        if self.busy[node]:
            return
        frame = self.current[node]
        if frame is None:
            if not self.queues[node]:
                return
            frame = self.queues[node].popleft()
            self.current[node] = frame
        if self._medium_busy_for(node):
            self._schedule_poll(node)
            return
        now = self.sim.now
        jitter = self.sim.rng.uniform_us(f"mac/{node}", 0.0, self.cfg.jitter_max)
        duration = jitter + self.serialization_us(frame.size)
        tx = _Transmission(node, now, now + duration, frame)
        self.active.append(tx)
        self.busy[node] = True
        frame.attempts += 1
        self.trace.mac_send(now, node, frame.uid, frame.ptype, frame.size,
                            frame.flow_id, frame.seq)
        self.sim.schedule(now + duration, lambda t=tx: self._tx_end(t),
                          target=node, kind="mac-tx-end")

    def _tx_end(self, tx):
        now = self.sim.now
        node = tx.sender
        frame = tx.frame
        self.active.remove(tx)
        self.recent.append(tx)
        while self.recent and self.recent[0].end < now - self.RECENT_HORIZON_US:
            self.recent.popleft()
        self.busy[node] = False

        in_range = self.tracker.in_range_mask(node, now, self.cfg.tx_range)
        collided = self._collision_mask(tx, now)

        if frame.dest is BROADCAST:
            self._finish_chain(node)
            receivers = np.nonzero(in_range)[0]
            for r in receivers:
                r = int(r)
                if r == node:
                    continue
                if collided[r]:
                    self.trace.drop(now, r, tracing.MAC, frame.uid, frame.ptype,
                                    frame.size, tracing.COLLISION, frame.flow_id, frame.seq)
                else:
                    self.trace.mac_recv(now, r, frame.uid, frame.ptype, frame.size,
                                        frame.flow_id, frame.seq)
                    self.receivers[r](frame, node)
        else:
            d = frame.dest
            ok = d != node and in_range[d] and not collided[d]
            if ok:
                self.trace.mac_recv(now, d, frame.uid, frame.ptype, frame.size,
                                    frame.flow_id, frame.seq)
                self._finish_chain(node)
                self.receivers[d](frame, node)
                if frame.on_outcome is not None:
                    frame.on_outcome(frame, True)
            else:
                if in_range[d] and collided[d]:
                    self.trace.drop(now, int(d), tracing.MAC, frame.uid, frame.ptype,
                                    frame.size, tracing.COLLISION,
                                    frame.flow_id, frame.seq)
                if frame.attempts <= self.cfg.retry_limit:
                    self._schedule_poll(node)  # retry the same frame after backoff
                    return
                self._finish_chain(node)
                if frame.on_outcome is not None:
                    frame.on_outcome(frame, False)
        if self.current[node] is not None or self.queues[node]:
            self._schedule_poll(node)

    def _collision_mask(self, tx, now):
        """Nodes whose copy of tx was destroyed by an overlapping transmission."""
        mask = np.zeros(self.n, dtype=bool)
        for other in self.active:
            if other.sender != tx.sender and other.start < tx.end and tx.start < other.end:
                mask |= self.tracker.in_range_mask(other.sender, now, self.cfg.tx_range)
                mask[other.sender] = True  # half duplex: a talking node cannot hear
        for other in self.recent:
            if other is tx or other.sender == tx.sender:
                continue
            if other.start < tx.end and tx.start < other.end:
                mask |= self.tracker.in_range_mask(other.sender, now, self.cfg.tx_range)
                mask[other.sender] = True
        return mask

    def _finish_chain(self, node):
        self.current[node] = None
        self.completions[node] += 1

    def pending_frames(self, node):
        """Frames not yet resolved: queued plus any live attempt chain."""
        frames = list(self.queues[node])
        if self.current[node] is not None:
            frames.append(self.current[node])
        return frames

    def queue_accounting_balanced(self):
        """Per-node conservation: enqueued = completed + still pending."""
        for node in range(self.n):
            pending = len(self.queues[node]) + (1 if self.current[node] is not None else 0)
            if self.enqueued[node] != self.completions[node] + pending:
                return False
        return True
