"""On-demand distance vector routing: RREQ flood, reverse paths, RERR, hello beacons."""

from dataclasses import dataclass

from . import link as linklayer
from . import tracing
from .engine import to_us
from .protocols import Protocol, SendBuffer

RREQ_SIZE = 24
RREP_SIZE = 20
HELLO_SIZE = 20
RERR_BASE_SIZE = 4
RERR_DEST_SIZE = 8


@dataclass
class AodvParams:
    active_route_timeout: float = 3.0
    my_route_timeout: float = 6.0  # lifetime a destination grants its own RREPs
    hello_interval: float = 1.0
    allowed_hello_loss: int = 2
    ring_ttls: tuple = (1, 3, 5, 7)  # expanding-ring schedule before network-wide
    net_diameter: int = 35
    rreq_retries: int = 2  # network-wide attempts after the ring schedule
    node_traversal_time: float = 0.04  # per-hop budget for ring timeouts
    seen_lifetime: float = 2.8  # duplicate-RREQ cache entry lifetime
    buffer_capacity: int = 64
    bcast_jitter: float = 0.01  # forwarding delay spread for flooded RREQs
    intermediate_reply: bool = True
    dest_reply_improving: bool = True  # destination answers shorter duplicate copies
    hello_suppress: bool = True  # a recent broadcast counts as a hello
    sweep_interval: float = 1.0


class Entry:
    __slots__ = ("dest", "next_hop", "hop_count", "seqno", "valid_until",
                 "precursors", "valid")

    def __init__(self, dest, next_hop, hop_count, seqno, valid_until):
        self.dest = dest
        self.next_hop = next_hop
        self.hop_count = hop_count
        self.seqno = seqno
        self.valid_until = valid_until
        self.precursors = set()
        self.valid = True


class Rreq:
    __slots__ = ("uid", "origin", "origin_seqno", "rreq_id", "dest", "dest_seqno",
                 "hop_count", "ttl")

    def __init__(self, uid, origin, origin_seqno, rreq_id, dest, dest_seqno,
                 hop_count, ttl):
        self.uid = uid
        self.origin = origin
        self.origin_seqno = origin_seqno
        self.rreq_id = rreq_id
        self.dest = dest
        self.dest_seqno = dest_seqno  # None when unknown
        self.hop_count = hop_count
        self.ttl = ttl


class Rrep:
    __slots__ = ("uid", "dest", "dest_seqno", "hop_count", "origin", "lifetime_us")

    def __init__(self, uid, dest, dest_seqno, hop_count, origin, lifetime_us):
        self.uid = uid
        self.dest = dest
        self.dest_seqno = dest_seqno
        self.hop_count = hop_count
        self.origin = origin
        self.lifetime_us = lifetime_us


class Rerr:
    __slots__ = ("uid", "unreachable")

    def __init__(self, uid, unreachable):
        self.uid = uid
        self.unreachable = unreachable  # list of (dest, dest_seqno)

    @property
    def size(self):
        return RERR_BASE_SIZE + RERR_DEST_SIZE * len(self.unreachable)


class Hello:
    __slots__ = ("uid", "seqno")

    def __init__(self, uid, seqno):
        self.uid = uid
        self.seqno = seqno


class Aodv(Protocol):
    name = "aodv"

    def __init__(self, ctx, node):
        super().__init__(ctx, node)
        self.p = ctx.cfg.aodv
        self.table = {}
        self.own_seqno = 0
        self.rreq_id = 0
        self.seen = {}  # (origin, rreq_id) -> [expiry_us, best_replied_hops or None]
        self.buffer = SendBuffer(ctx, node, self.p.buffer_capacity)
        self.pending = {}  # dest -> [stage, generation]
        self.last_heard = {}
        self.last_bcast = -10**12
        self._forwarded_rreqs = set()
        self._seq_watch = {}
        self._art_us = to_us(self.p.active_route_timeout)

    def start(self):
        key = f"aodv/{self.node}"
        hello_us = to_us(self.p.hello_interval)
        first = self.ctx.rng.uniform_us(key, 0.0, self.p.hello_interval)
        self.sim.schedule_in(first + 1, self._hello_tick, target=self.node, kind="aodv-hello")
        sweep = self.ctx.rng.uniform_us(key, 0.0, self.p.sweep_interval)
        self.sim.schedule_in(sweep + 1, self._sweep, target=self.node, kind="aodv-sweep")

    # Route table

    def _valid_entry(self, dest):
        e = self.table.get(dest)
        if e is None or not e.valid:
            return None
        if e.valid_until < self.sim.now:
            e.valid = False
            return None
        return e

    def _consider_install(self, dest, next_hop, hop_count, seqno, valid_until):
        if dest == self.node:
            return None
        e = self.table.get(dest)
        if e is None:
            e = Entry(dest, next_hop, hop_count, seqno, valid_until)
            self.table[dest] = e
            self._watch_seqno(dest, seqno)
            return e
        take = False
        if seqno > e.seqno:
            take = True
        elif seqno == e.seqno and (not e.valid or e.valid_until < self.sim.now
                                   or hop_count < e.hop_count):
            take = True
        if not take:
            return None
        e.next_hop = next_hop
        e.hop_count = hop_count
        e.seqno = seqno
        e.valid_until = valid_until
        e.valid = True
        self._watch_seqno(dest, seqno)
        return e

    def _refresh(self, e):
        e.valid_until = max(e.valid_until, self.sim.now + self._art_us)

    def _watch_seqno(self, dest, seqno):
        prev = self._seq_watch.get(dest)
        if prev is not None and seqno < prev:
            self.ctx.violation(
                f"aodv node {self.node}: seqno for dest {dest} decreased {prev} -> {seqno}")
        self._seq_watch[dest] = max(seqno, prev if prev is not None else seqno)

    # Data path

    def send_data(self, pkt):
        if pkt.dst == self.node:
            self._deliver_local(pkt)
            return
        e = self._valid_entry(pkt.dst)
        if e is not None:
            self._forward_data(pkt, e, originating=True)
            return
        self.buffer.push(pkt.dst, pkt)
        self._start_discovery(pkt.dst)

    def _forward_data(self, pkt, e, originating):
        self._refresh(e)
        hop = self.table.get(e.next_hop)
        if hop is not None and hop.valid:
            self._refresh(hop)
        if not originating:
            self.trace.rtr_forward(self.sim.now, self.node, pkt.uid, tracing.DATA,
                                   pkt.size, pkt.flow_id, pkt.seq)
        frame = linklayer.Frame(pkt.uid, self.node, e.next_hop, tracing.DATA,
                                pkt.size + self.ctx.cfg.link.overhead, pkt,
                                pkt.flow_id, pkt.seq, self._data_outcome)
        self.link.send(self.node, frame)

    def _data_outcome(self, frame, delivered):
        if delivered:
            self.last_heard[frame.dest] = self.sim.now
            return
        self._link_break(frame.dest, frame.payload)

    # Discovery

    def _start_discovery(self, dest):
        if dest in self.pending:
            return
        self.pending[dest] = [0, 0]
        self._attempt(dest)

    def _stages(self):
        return tuple(self.p.ring_ttls) + (self.p.net_diameter,) * self.p.rreq_retries

    def _attempt(self, dest):
        state = self.pending.get(dest)
        if state is None:
            return
        stages = self._stages()
        if state[0] >= len(stages):
            del self.pending[dest]
            self.buffer.drop_all(dest)
            return
        ttl = stages[state[0]]
        self.own_seqno += 1
        self.rreq_id += 1
        stored = self.table.get(dest)
        rreq = Rreq(self.ctx.next_uid(), self.node, self.own_seqno, self.rreq_id,
                    dest, stored.seqno if stored is not None else None, 0, ttl)
        self._broadcast("RREQ", RREQ_SIZE, rreq, originated=True)
        state[1] += 1
        gen = state[1]
        # ring traversal time with two hops of slack; network-wide retries
        # back off exponentially so congestion cannot feed discovery storms
        timeout = to_us(2 * self.p.node_traversal_time * (ttl + 2))
        wide_extra = state[0] - len(self.p.ring_ttls)
        if wide_extra > 0:
            timeout *= 2 ** wide_extra
        self.sim.schedule_in(timeout, lambda d=dest, g=gen: self._attempt_timeout(d, g),
                             target=self.node, kind="aodv-ring")

    def _attempt_timeout(self, dest, gen):
        state = self.pending.get(dest)
        if state is None or state[1] != gen:
            return
        e = self._valid_entry(dest)
        if e is not None:
            del self.pending[dest]
            self._flush_buffer(dest, e)
            return
        state[0] += 1
        self._attempt(dest)

    def _flush_buffer(self, dest, entry):
        for pkt in self.buffer.pop_all(dest):
            self._forward_data(pkt, entry, originating=True)

    # Control packet handling

    def on_frame(self, frame, from_node):
        self.last_heard[from_node] = self.sim.now
        ptype = frame.ptype
        if ptype == tracing.DATA:
            self._on_data(frame.payload)
        elif ptype == "RREQ":
            self._on_rreq(frame.payload, from_node)
        elif ptype == "RREP":
            self._on_rrep(frame.payload, from_node)
        elif ptype == "RERR":
            self._on_rerr(frame.payload, from_node)
        elif ptype == "HELLO":
            e = self.table.get(from_node)
            if e is not None and e.valid and e.next_hop == from_node:
                self._refresh(e)

    def _on_data(self, pkt):
        if pkt.dst == self.node:
            self._deliver_local(pkt)
            return
        e = self._valid_entry(pkt.dst)
        if e is None:
            self._drop_data(pkt, tracing.NRTE)
            return
        self._forward_data(pkt, e, originating=False)

    def _on_rreq(self, rreq, from_node):
        if rreq.origin == self.node:
            return
        now = self.sim.now
        key = (rreq.origin, rreq.rreq_id)
        hops_here = rreq.hop_count + 1
        rec = self.seen.get(key)
        if rec is not None and rec[0] > now:
            # Duplicate copy. The destination still answers copies that arrive
            # over a strictly shorter path, so the settled route is shortest.
            if (rreq.dest == self.node and self.p.dest_reply_improving
                    and rec[1] is not None and hops_here < rec[1]):
                rec[1] = hops_here
                self._consider_install(rreq.origin, from_node, hops_here,
                                       rreq.origin_seqno, now + self._art_us)
                self._reply_as_dest(rreq, from_node)
            return
        self.seen[key] = [now + to_us(self.p.seen_lifetime),
                          hops_here if rreq.dest == self.node else None]
        self._consider_install(rreq.origin, from_node, hops_here,
                               rreq.origin_seqno, now + self._art_us)
        if rreq.dest == self.node:
            if rreq.dest_seqno is not None and rreq.dest_seqno > self.own_seqno:
                self.own_seqno = rreq.dest_seqno
            self._reply_as_dest(rreq, from_node)
            return
        if self.p.intermediate_reply:
            e = self._valid_entry(rreq.dest)
            if e is not None and (rreq.dest_seqno is None or e.seqno >= rreq.dest_seqno):
                rrep = Rrep(self.ctx.next_uid(), rreq.dest, e.seqno, e.hop_count,
                            rreq.origin, e.valid_until - now)
                e.precursors.add(from_node)
                self._unicast("RREP", RREP_SIZE, rrep, from_node, originated=True)
                return
        ttl = rreq.ttl - 1
        if ttl <= 0:
            self.trace.drop(now, self.node, tracing.RTR, rreq.uid, "RREQ",
                            RREQ_SIZE, tracing.TTL)
            return
        if self.ctx.check_invariants:
            if key in self._forwarded_rreqs:
                self.ctx.violation(
                    f"aodv node {self.node}: re-forwarded RREQ {key}")
            self._forwarded_rreqs.add(key)
        fwd = Rreq(rreq.uid, rreq.origin, rreq.origin_seqno, rreq.rreq_id,
                   rreq.dest, rreq.dest_seqno, hops_here, ttl)
        delay = self.ctx.rng.uniform_us(f"aodv/{self.node}", 0.0, self.p.bcast_jitter)
        self.sim.schedule_in(delay, lambda f=fwd: self._broadcast("RREQ", RREQ_SIZE, f,
                                                                  originated=False),
                             target=self.node, kind="aodv-fwd")

    def _reply_as_dest(self, rreq, from_node):
        rrep = Rrep(self.ctx.next_uid(), self.node, self.own_seqno, 0, rreq.origin,
                    to_us(self.p.my_route_timeout))
        self._unicast("RREP", RREP_SIZE, rrep, from_node, originated=True)

    def _on_rrep(self, rrep, from_node):
        now = self.sim.now
        self._consider_install(rrep.dest, from_node, rrep.hop_count + 1,
                               rrep.dest_seqno, now + rrep.lifetime_us)
        if rrep.origin == self.node:
            e = self._valid_entry(rrep.dest)
            if e is not None:
                self.pending.pop(rrep.dest, None)
                self._flush_buffer(rrep.dest, e)
            return
        rev = self._valid_entry(rrep.origin)
        if rev is None:
            self.trace.drop(now, self.node, tracing.RTR, rrep.uid, "RREP",
                            RREP_SIZE, tracing.NRTE)
            return
        fwd_entry = self.table.get(rrep.dest)
        if fwd_entry is not None:
            fwd_entry.precursors.add(rev.next_hop)
        self._refresh(rev)
        relay = Rrep(rrep.uid, rrep.dest, rrep.dest_seqno, rrep.hop_count + 1,
                     rrep.origin, rrep.lifetime_us)
        self._unicast("RREP", RREP_SIZE, relay, rev.next_hop, originated=False)

    def _on_rerr(self, rerr, from_node):
        now = self.sim.now
        affected = []
        precursors = set()
        for dest, seqno in rerr.unreachable:
            e = self.table.get(dest)
            if e is not None and e.valid and e.next_hop == from_node:
                e.valid = False
                e.seqno = max(e.seqno, seqno)
                self._watch_seqno(dest, e.seqno)
                affected.append((dest, e.seqno))
                precursors |= e.precursors
        if affected:
            self._emit_rerr(affected, precursors)
        for dest, _seq in affected:
            if self.ctx.flow_lookup(self.node, dest, now):
                self._start_discovery(dest)

    def _link_break(self, lost, failed_pkt):
        affected = []
        precursors = set()
        for e in self.table.values():
            if e.valid and e.next_hop == lost:
                e.valid = False
                e.seqno += 1
                self._watch_seqno(e.dest, e.seqno)
                affected.append((e.dest, e.seqno))
                precursors |= e.precursors
        self.last_heard.pop(lost, None)
        if affected:
            self._emit_rerr(affected, precursors)
        if failed_pkt is None:
            return
        if failed_pkt.src == self.node:
            self.buffer.push(failed_pkt.dst, failed_pkt)
            self._start_discovery(failed_pkt.dst)
        else:
            self._drop_data(failed_pkt, tracing.NRTE)

    def _emit_rerr(self, affected, precursors):
        rerr = Rerr(self.ctx.next_uid(), affected)
        if len(precursors) == 1:
            self._unicast("RERR", rerr.size, rerr, next(iter(precursors)),
                          originated=True)
        elif precursors:
            self._broadcast("RERR", rerr.size, rerr, originated=True)

    # Hello and expiry timers

    def _hello_tick(self):
        now = self.sim.now
        hello_us = to_us(self.p.hello_interval)
        threshold = self.p.allowed_hello_loss * hello_us
        for nbr in [n for n, t in self.last_heard.items() if now - t > threshold]:
            uses = any(e.valid and e.next_hop == nbr for e in self.table.values())
            if uses:
                self._link_break(nbr, None)
            else:
                self.last_heard.pop(nbr, None)
        active = any(e.valid and e.valid_until >= now for e in self.table.values())
        if active and (not self.p.hello_suppress or now - self.last_bcast >= hello_us):
            hello = Hello(self.ctx.next_uid(), self.own_seqno)
            self._broadcast("HELLO", HELLO_SIZE, hello, originated=True)
        self.sim.schedule_in(hello_us, self._hello_tick, target=self.node,
                             kind="aodv-hello")

    def _sweep(self):
        now = self.sim.now
        for e in self.table.values():
            if e.valid and e.valid_until < now:
                e.valid = False
        for key in [k for k, rec in self.seen.items() if rec[0] <= now]:
            del self.seen[key]
            self._forwarded_rreqs.discard(key)
        self.sim.schedule_in(to_us(self.p.sweep_interval), self._sweep,
                             target=self.node, kind="aodv-sweep")

    # Frame emission

    def _broadcast(self, ptype, size, payload, originated):
        frame = linklayer.Frame(payload.uid, self.node, linklayer.BROADCAST, ptype,
                                size + self.ctx.cfg.link.overhead, payload)
        if self.link.send(self.node, frame):
            if originated:
                self.trace.rtr_send(self.sim.now, self.node, payload.uid, ptype, size)
            else:
                self.trace.rtr_forward(self.sim.now, self.node, payload.uid, ptype, size)
            self.last_bcast = self.sim.now

    def _unicast(self, ptype, size, payload, dest, originated):
        frame = linklayer.Frame(payload.uid, self.node, dest, ptype,
                                size + self.ctx.cfg.link.overhead, payload,
                                on_outcome=self._ctrl_outcome)
        if self.link.send(self.node, frame):
            if originated:
                self.trace.rtr_send(self.sim.now, self.node, payload.uid, ptype, size)
            else:
                self.trace.rtr_forward(self.sim.now, self.node, payload.uid, ptype, size)

    def _ctrl_outcome(self, frame, delivered):
        if delivered:
            self.last_heard[frame.dest] = self.sim.now

    def pending_data_count(self):
        return self.buffer.pending_count()
