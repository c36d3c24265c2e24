"""Dynamic source routing: accumulated hop lists, per-destination route cache, RERR fallback."""

from dataclasses import dataclass

from . import link as linklayer
from . import tracing
from .engine import to_us
from .protocols import Protocol, SendBuffer

RREQ_BASE_SIZE = 16
RREP_BASE_SIZE = 16
RERR_BASE_SIZE = 24
PER_HOP_SIZE = 4
DATA_HEADER_BASE = 8


class MalformedHeader(Exception):
    """Source-route cursor points past the end of the hop list."""


@dataclass
class DsrParams:
    discovery_ttl: int = 35
    dsr_retries: int = 2  # re-floods after the first network-wide discovery
    retry_backoff: float = 0.5  # seconds; doubles per retry
    buffer_capacity: int = 64
    cache_capacity: int = 4  # routes kept per destination, FIFO eviction
    bcast_jitter: float = 0.01  # forwarding delay spread for flooded RREQs
    rediscovery_holdoff_max: float = 10.0  # backoff cap between failed cycles
    reply_from_cache: bool = True
    # Destination also answers duplicate copies no longer than its previous
    # reply. Reply lengths never grow, so the newest cached route at the
    # source is always a shortest one even under FIFO eviction, while
    # equal-length alternates still land in the cache for fallback.
    reply_shorter_at_dest: bool = True


def data_size(payload_size, route_len):
    """On-air data packet size: payload plus the source-route header."""
    return payload_size + DATA_HEADER_BASE + PER_HOP_SIZE * route_len


class DsrRreq:
    __slots__ = ("uid", "origin", "request_id", "dest", "accumulated", "ttl")

    def __init__(self, uid, origin, request_id, dest, accumulated, ttl):
        self.uid = uid
        self.origin = origin
        self.request_id = request_id
        self.dest = dest
        self.accumulated = accumulated  # tuple of node ids, begins with origin
        self.ttl = ttl

    @property
    def size(self):
        return RREQ_BASE_SIZE + PER_HOP_SIZE * len(self.accumulated)


class DsrRrep:
    __slots__ = ("uid", "route", "return_path", "cursor")

    def __init__(self, uid, route, return_path, cursor):
        self.uid = uid
        self.route = route  # full source route origin..dest for data use
        self.return_path = return_path  # hop list this RREP travels, 0 = replier
        self.cursor = cursor

    @property
    def size(self):
        return RREP_BASE_SIZE + PER_HOP_SIZE * len(self.route)


class DsrRerr:
    __slots__ = ("uid", "broken_link", "origin", "return_path", "cursor", "packet")

    def __init__(self, uid, broken_link, origin, return_path, cursor, packet):
        self.uid = uid
        self.broken_link = broken_link  # (from_node, to_node)
        self.origin = origin  # source of the failed packet
        self.return_path = return_path
        self.cursor = cursor
        self.packet = packet  # the failed data packet, carried back for resend

    @property
    def size(self):
        return RERR_BASE_SIZE + (self.packet.size if self.packet is not None else 0)


class SourceRouted:
    """Source-route header around a data packet: hop list plus a cursor."""

    __slots__ = ("route", "cursor", "packet")

    def __init__(self, route, cursor, packet):
        self.route = route
        self.cursor = cursor
        self.packet = packet


class Dsr(Protocol):
    name = "dsr"

    def __init__(self, ctx, node):
        super().__init__(ctx, node)
        self.p = ctx.cfg.dsr
        self.cache = {}  # dest -> list of route tuples, oldest first
        self.request_id = 0
        self.seen = set()  # (origin, request_id), kept for the whole run
        self.replied_len = {}  # (origin, request_id) -> shortest route length replied
        self.buffer = SendBuffer(ctx, node, self.p.buffer_capacity)
        self.pending = {}  # dest -> [attempt, generation]
        self.cycle_failures = {}  # dest -> consecutive exhausted discovery cycles
        self.next_discovery = {}  # dest -> earliest us a new cycle may start

    # Route cache

    def cached_routes(self, dest):
        return self.cache.get(dest, [])

    def select_route(self, dest):
        """Shortest cached route; ties resolved by earliest insertion."""
        routes = self.cache.get(dest)
        if not routes:
            return None
        return min(routes, key=len)

    def cache_insert(self, route):
        route = tuple(route)
        if route[0] != self.node or len(route) < 2:
            return
        if len(set(route)) != len(route):
            self.ctx.violation(f"dsr node {self.node}: caching non-simple route {route}")
            return
        dest = route[-1]
        routes = self.cache.setdefault(dest, [])
        if route in routes:
            return
        routes.append(route)
        if len(routes) > self.p.cache_capacity:
            routes.pop(0)

    def purge_link(self, u, v):
        """Remove every cached route using the (undirected) link u-v."""
        for dest in list(self.cache):
            kept = []
            for route in self.cache[dest]:
                broken = any((a == u and b == v) or (a == v and b == u)
                             for a, b in zip(route, route[1:]))
                if not broken:
                    kept.append(route)
            if kept:
                self.cache[dest] = kept
            else:
                del self.cache[dest]

    # Data path

    def send_data(self, pkt):
        if pkt.dst == self.node:
            self._deliver_local(pkt)
            return
        route = self.select_route(pkt.dst)
        if route is not None:
            self._send_along(route, pkt)
            return
        self.buffer.push(pkt.dst, pkt)
        self._start_discovery(pkt.dst)

    def _send_along(self, route, pkt):
        header = SourceRouted(route, 0, pkt)
        self._forward_data(header, originating=True)

    def _forward_data(self, header, originating):
        route = header.route
        cursor = route.index(self.node) if self.node in route else -1
        if cursor < 0 or cursor + 1 >= len(route):
            self._drop_data(header.packet, tracing.MALFORMED)
            return
        header.cursor = cursor
        pkt = header.packet
        if not originating:
            self.trace.rtr_forward(self.sim.now, self.node, pkt.uid, tracing.DATA,
                                   pkt.size, pkt.flow_id, pkt.seq)
        size = data_size(pkt.size, len(route)) + self.ctx.cfg.link.overhead
        frame = linklayer.Frame(pkt.uid, self.node, route[cursor + 1], tracing.DATA,
                                size, header, pkt.flow_id, pkt.seq, self._data_outcome)
        self.link.send(self.node, frame)

    def _data_outcome(self, frame, delivered):
        if delivered:
            return
        header = frame.payload
        self.handle_link_break(header, frame.dest)

    def handle_link_break(self, header, lost_neighbor):
        """MAC gave up on the next hop: purge, report back, let the source recover."""
        self.purge_link(self.node, lost_neighbor)
        pkt = header.packet
        if header.packet.src == self.node:
            self._recover_at_source(pkt)
            return
        prefix = header.route[:header.route.index(self.node) + 1]
        return_path = tuple(reversed(prefix))
        rerr = DsrRerr(self.ctx.next_uid(), (self.node, lost_neighbor), pkt.src,
                       return_path, 0, pkt)
        self._relay_rerr(rerr, originated=True)

    def _recover_at_source(self, pkt):
        route = self.select_route(pkt.dst)
        if route is not None:
            self._send_along(route, pkt)
        else:
            self.buffer.push(pkt.dst, pkt)
            self._start_discovery(pkt.dst)

    def _relay_rerr(self, rerr, originated):
        cursor = rerr.cursor
        if cursor + 1 >= len(rerr.return_path):
            if rerr.packet is not None:
                self._drop_data(rerr.packet, tracing.MALFORMED)
            return
        nxt = rerr.return_path[cursor + 1]
        frame = linklayer.Frame(rerr.uid, self.node, nxt, "DSR-RERR",
                                rerr.size + self.ctx.cfg.link.overhead, rerr,
                                on_outcome=self._rerr_outcome)
        if self.link.send(self.node, frame):
            if originated:
                self.trace.rtr_send(self.sim.now, self.node, rerr.uid, "DSR-RERR", rerr.size)
            else:
                self.trace.rtr_forward(self.sim.now, self.node, rerr.uid, "DSR-RERR", rerr.size)
        elif rerr.packet is not None:
            self._drop_data(rerr.packet, tracing.NRTE)

    def _rerr_outcome(self, frame, delivered):
        if delivered:
            return
        rerr = frame.payload
        self.purge_link(self.node, frame.dest)
        if rerr.packet is not None:
            self._drop_data(rerr.packet, tracing.NRTE)

    def _on_rerr(self, rerr, from_node):
        u, v = rerr.broken_link
        self.purge_link(u, v)
        if self.node == rerr.origin:
            if rerr.packet is not None:
                self._recover_at_source(rerr.packet)
            return
        relay = DsrRerr(rerr.uid, rerr.broken_link, rerr.origin, rerr.return_path,
                        rerr.return_path.index(self.node), rerr.packet)
        self._relay_rerr(relay, originated=False)

    # Discovery

    def _start_discovery(self, dest):
        if dest in self.pending:
            return
        if self.sim.now < self.next_discovery.get(dest, 0):
            return  # holding off after failed cycles; packets wait in the buffer
        self.pending[dest] = [0, 0]
        self._attempt(dest)

    def _attempt(self, dest):
        state = self.pending.get(dest)
        if state is None:
            return
        if state[0] > self.p.dsr_retries:
            del self.pending[dest]
            self.buffer.drop_all(dest)
            fails = self.cycle_failures.get(dest, 0) + 1
            self.cycle_failures[dest] = fails
            holdoff = min(self.p.retry_backoff * (2 ** fails),
                          self.p.rediscovery_holdoff_max)
            self.next_discovery[dest] = self.sim.now + to_us(holdoff)
            return
        self.request_id += 1
        rreq = DsrRreq(self.ctx.next_uid(), self.node, self.request_id, dest,
                       (self.node,), self.p.discovery_ttl)
        self._broadcast_rreq(rreq, originated=True)
        state[1] += 1
        gen = state[1]
        timeout = to_us(self.p.retry_backoff * (2 ** state[0]))
        self.sim.schedule_in(timeout, lambda d=dest, g=gen: self._attempt_timeout(d, g),
                             target=self.node, kind="dsr-retry")

    def _attempt_timeout(self, dest, gen):
        state = self.pending.get(dest)
        if state is None or state[1] != gen:
            return
        if self.select_route(dest) is not None:
            del self.pending[dest]
            self._flush_buffer(dest)
            return
        state[0] += 1
        self._attempt(dest)

    def _flush_buffer(self, dest):
        for pkt in self.buffer.pop_all(dest):
            route = self.select_route(dest)
            if route is None:
                self.buffer.push(dest, pkt)
                self._start_discovery(dest)
                return
            self._send_along(route, pkt)

    # Control packet handling

    def on_frame(self, frame, from_node):
        ptype = frame.ptype
        if ptype == tracing.DATA:
            self._on_data(frame.payload)
        elif ptype == "DSR-RREQ":
            self._on_rreq(frame.payload, from_node)
        elif ptype == "DSR-RREP":
            self._on_rrep(frame.payload, from_node)
        elif ptype == "DSR-RERR":
            self._on_rerr(frame.payload, from_node)

    def _on_data(self, header):
        pkt = header.packet
        if pkt.dst == self.node:
            self._deliver_local(pkt)
            return
        if self.node not in header.route:
            self._drop_data(pkt, tracing.MALFORMED)
            return
        self._forward_data(header, originating=False)

    def _on_rreq(self, rreq, from_node):
        if rreq.origin == self.node:
            return
        now = self.sim.now
        if rreq.dest == self.node:
            if self.node in rreq.accumulated:
                return
            key = (rreq.origin, rreq.request_id)
            full = rreq.accumulated + (self.node,)
            best = self.replied_len.get(key)
            again = best is not None and len(full) <= best and self.p.reply_shorter_at_dest
            if best is None or again:
                self.replied_len[key] = min(len(full), best) if best is not None else len(full)
                rrep = DsrRrep(self.ctx.next_uid(), full, tuple(reversed(full)), 0)
                self._relay_rrep(rrep, originated=True)
            return
        key = (rreq.origin, rreq.request_id)
        if key in self.seen or self.node in rreq.accumulated:
            return
        self.seen.add(key)
        if self.p.reply_from_cache:
            cached = self.select_route(rreq.dest)
            if cached is not None:
                full = rreq.accumulated + cached  # cached starts at this node
                if len(set(full)) == len(full):
                    here = rreq.accumulated + (self.node,)
                    rrep = DsrRrep(self.ctx.next_uid(), full,
                                   tuple(reversed(here)), 0)
                    self._relay_rrep(rrep, originated=True)
                    return
        ttl = rreq.ttl - 1
        if ttl <= 0:
            self.trace.drop(now, self.node, tracing.RTR, rreq.uid, "DSR-RREQ",
                            rreq.size, tracing.TTL)
            return
        fwd = DsrRreq(rreq.uid, rreq.origin, rreq.request_id, rreq.dest,
                      rreq.accumulated + (self.node,), ttl)
        delay = self.ctx.rng.uniform_us(f"dsr/{self.node}", 0.0, self.p.bcast_jitter)
        self.sim.schedule_in(delay, lambda f=fwd: self._broadcast_rreq(f, originated=False),
                             target=self.node, kind="dsr-fwd")

    def _broadcast_rreq(self, rreq, originated):
        frame = linklayer.Frame(rreq.uid, self.node, linklayer.BROADCAST, "DSR-RREQ",
                                rreq.size + self.ctx.cfg.link.overhead, rreq)
        if self.link.send(self.node, frame):
            if originated:
                self.trace.rtr_send(self.sim.now, self.node, rreq.uid, "DSR-RREQ", rreq.size)
            else:
                self.trace.rtr_forward(self.sim.now, self.node, rreq.uid, "DSR-RREQ", rreq.size)

    def _relay_rrep(self, rrep, originated):
        cursor = rrep.cursor
        if cursor + 1 >= len(rrep.return_path):
            return
        nxt = rrep.return_path[cursor + 1]
        frame = linklayer.Frame(rrep.uid, self.node, nxt, "DSR-RREP",
                                rrep.size + self.ctx.cfg.link.overhead, rrep,
                                on_outcome=None)
        if self.link.send(self.node, frame):
            if originated:
                self.trace.rtr_send(self.sim.now, self.node, rrep.uid, "DSR-RREP", rrep.size)
            else:
                self.trace.rtr_forward(self.sim.now, self.node, rrep.uid, "DSR-RREP", rrep.size)

    def _on_rrep(self, rrep, from_node):
        if self.node == rrep.return_path[-1]:
            if self.node == rrep.route[0]:
                self.cache_insert(rrep.route)
                dest = rrep.route[-1]
                self.cycle_failures.pop(dest, None)
                self.next_discovery.pop(dest, None)
                if dest in self.pending:
                    del self.pending[dest]
                self._flush_buffer(dest)
            return
        if self.node not in rrep.return_path:
            return
        relay = DsrRrep(rrep.uid, rrep.route, rrep.return_path,
                        rrep.return_path.index(self.node))
        self._relay_rrep(relay, originated=False)

    def pending_data_count(self):
        return self.buffer.pending_count()
