"""Destination-sequenced distance vector routing with settling-time damping."""

from dataclasses import dataclass

from . import link as linklayer
from . import tracing
from .engine import to_us
from .protocols import Protocol

INF = float("inf")

UPDATE_SIZE_HEADER = 8
UPDATE_SIZE_ENTRY = 12


@dataclass
class DsdvParams:
    update_interval: float = 15.0  # seconds, jittered per tick
    update_jitter: float = 0.15  # +-fraction of the interval
    full_dump_every: int = 3  # every k-th periodic update is a full dump
    settling_time: float = 6.0  # advertisement delay for same-seqno next-hop flips
    trigger_min_gap: float = 1.0  # floor between triggered updates per node
    trigger_spread: float = 0.25  # scheduling window for triggered updates
    first_update_max: float = 1.0  # bootstrap advertisement lands in (0, this]
    incremental_cap: int = 100  # entries; larger incrementals promote to full dump


class Entry:
    __slots__ = ("dest", "next_hop", "metric", "seqno", "install_time",
                 "advertise_after", "changed")

    def __init__(self, dest, next_hop, metric, seqno, now):
        self.dest = dest
        self.next_hop = next_hop
        self.metric = metric
        self.seqno = seqno
        self.install_time = now
        self.advertise_after = now
        self.changed = True


class DsdvUpdate:
    """Broadcast advertisement carrying (dest, metric, seqno) triples."""

    __slots__ = ("origin", "kind", "entries")

    def __init__(self, origin, kind, entries):
        self.origin = origin
        self.kind = kind  # "full" | "incremental"
        self.entries = entries

    @property
    def size(self):
        return UPDATE_SIZE_HEADER + UPDATE_SIZE_ENTRY * len(self.entries)


class Dsdv(Protocol):
    name = "dsdv"

    def __init__(self, ctx, node):
        super().__init__(ctx, node)
        self.p = ctx.cfg.dsdv
        self.table = {}
        self.own_seqno = 0
        self.update_count = 0
        self.last_update_sent = -to_us(self.p.trigger_min_gap)
        self.trigger_pending = False
        now = self.sim.now
        self.table[node] = Entry(node, node, 0, 0, now)

    def start(self):
        key = f"dsdv/{self.node}"
        first = self.ctx.rng.uniform_us(key, 0.000001, self.p.first_update_max)
        self.sim.schedule_in(first, self._periodic, target=self.node, kind="dsdv-periodic")

    # Advertisement

    def _periodic(self):
        self.own_seqno += 2
        self._touch_self()
        self.update_count += 1
        full = (self.update_count - 1) % self.p.full_dump_every == 0
        self._advertise(full)
        key = f"dsdv/{self.node}"
        jitter = self.p.update_jitter
        gap = self.ctx.rng.uniform_us(key, self.p.update_interval * (1 - jitter),
                                      self.p.update_interval * (1 + jitter))
        self.sim.schedule_in(gap, self._periodic, target=self.node, kind="dsdv-periodic")

    def _touch_self(self):
        e = self.table[self.node]
        e.seqno = self.own_seqno
        e.changed = True

    def _advertise(self, full):
        now = self.sim.now
        if full:
            chosen = list(self.table.values())
        else:
            chosen = [e for e in self.table.values()
                      if e.changed and e.advertise_after <= now]
            if not chosen:
                return
            if len(chosen) > self.p.incremental_cap:
                full = True
                chosen = list(self.table.values())
        msg = DsdvUpdate(self.node, "full" if full else "incremental",
                         [(e.dest, e.metric, e.seqno) for e in chosen])
        uid = self.ctx.next_uid()
        frame = linklayer.Frame(uid, self.node, linklayer.BROADCAST, "DSDV",
                                msg.size + self.ctx.cfg.link.overhead, msg)
        if self.link.send(self.node, frame):
            self.trace.rtr_send(now, self.node, uid, "DSDV", msg.size)
        self.last_update_sent = now
        if full:
            for e in self.table.values():
                e.changed = False
        else:
            for e in chosen:
                e.changed = False

    def _schedule_trigger(self):
        if self.trigger_pending:
            return
        self.trigger_pending = True
        key = f"dsdv/{self.node}"
        spread = self.ctx.rng.uniform_us(key, 0.0, self.p.trigger_spread)
        fire = max(self.sim.now + spread,
                   self.last_update_sent + to_us(self.p.trigger_min_gap))
        self.sim.schedule(fire, self._triggered, target=self.node, kind="dsdv-trigger")

    def _triggered(self):
        self.trigger_pending = False
        if self.sim.now - self.last_update_sent < to_us(self.p.trigger_min_gap):
            self._schedule_trigger()
            return
        self._advertise(full=False)

    # Table maintenance

    def handle_update(self, msg, from_node):
        now = self.sim.now
        material = False
        for dest, metric, seqno in msg.entries:
            if dest == self.node:
                # A broken (or stale) route to ourselves circulating out there:
                # reissue a fresher even sequence number.
                if seqno > self.own_seqno:
                    self.own_seqno = seqno + 1 if seqno % 2 else seqno + 2
                    self._touch_self()
                    material = True
                continue
            cand_metric = metric + 1 if metric != INF else INF
            stored = self.table.get(dest)
            if stored is None:
                self.table[dest] = Entry(dest, from_node, cand_metric, seqno, now)
                if self.ctx.check_invariants:
                    self._check_entry(self.table[dest])
                material = material or cand_metric != INF
                continue
            if seqno > stored.seqno:
                changed = (stored.metric != cand_metric or stored.next_hop != from_node
                           or stored.metric == INF)
                stored.seqno = seqno
                stored.metric = cand_metric
                stored.next_hop = from_node
                stored.install_time = now
                stored.advertise_after = now
                if changed:
                    stored.changed = True
                    material = True
            elif seqno == stored.seqno and cand_metric < stored.metric:
                if stored.next_hop != from_node:
                    stored.advertise_after = now + to_us(self.p.settling_time)
                stored.next_hop = from_node
                stored.metric = cand_metric
                stored.install_time = now
                stored.changed = True
                material = True
            if self.ctx.check_invariants:
                self._check_entry(stored)
        for e in self.table.values():
            if e.next_hop == from_node and e.metric != INF:
                e.install_time = now
        if material:
            self._schedule_trigger()

    def on_link_break(self, lost_neighbor):
        now = self.sim.now
        any_broken = False
        for e in self.table.values():
            if e.dest != self.node and e.next_hop == lost_neighbor and e.metric != INF:
                e.metric = INF
                e.seqno += 1  # odd: destination-unreachable marker
                e.changed = True
                e.advertise_after = now
                any_broken = True
                if self.ctx.check_invariants:
                    self._check_entry(e)
        if any_broken:
            self._advertise(full=False)

    def lookup_next_hop(self, dest):
        e = self.table.get(dest)
        if e is None or e.metric == INF:
            return None
        return e.next_hop

    # Data path

    def send_data(self, pkt):
        self._route_or_drop(pkt, originating=True)

    def _route_or_drop(self, pkt, originating):
        if pkt.dst == self.node:
            self._deliver_local(pkt)
            return
        nh = self.lookup_next_hop(pkt.dst)
        if nh is None:
            self._drop_data(pkt, tracing.NRTE)
            return
        if not originating:
            self.trace.rtr_forward(self.sim.now, self.node, pkt.uid, tracing.DATA,
                                   pkt.size, pkt.flow_id, pkt.seq)
        frame = linklayer.Frame(pkt.uid, self.node, nh, tracing.DATA,
                                pkt.size + self.ctx.cfg.link.overhead, pkt,
                                pkt.flow_id, pkt.seq, self._data_outcome)
        self.link.send(self.node, frame)

    def _data_outcome(self, frame, delivered):
        if delivered:
            return
        self.on_link_break(frame.dest)
        self._drop_data(frame.payload, tracing.NRTE)

    def on_frame(self, frame, from_node):
        if frame.ptype == "DSDV":
            self.handle_update(frame.payload, from_node)
        elif frame.ptype == tracing.DATA:
            self._route_or_drop(frame.payload, originating=False)

    # Invariants

    def _check_entry(self, e):
        if e.metric == INF and e.seqno % 2 == 0:
            self.ctx.violation(f"dsdv node {self.node}: broken entry {e.dest} has even seqno {e.seqno}")
        if e.metric != INF and e.seqno % 2 == 1:
            self.ctx.violation(f"dsdv node {self.node}: usable entry {e.dest} has odd seqno {e.seqno}")


def check_loop_freedom(protocols, ctx):
    """Equal-max-seqno next-hop graphs must strictly decrease the metric."""
    dests = range(len(protocols))
    for dest in dests:
        max_seq = None
        for p in protocols:
            e = p.table.get(dest)
            if e is not None and e.metric != INF:
                if max_seq is None or e.seqno > max_seq:
                    max_seq = e.seqno
        if max_seq is None:
            continue
        members = {}
        for p in protocols:
            e = p.table.get(dest)
            if e is not None and e.metric != INF and e.seqno == max_seq:
                members[p.node] = e
        for node, e in members.items():
            if node == dest:
                continue
            nxt = members.get(e.next_hop)
            if nxt is not None and not nxt.metric < e.metric:
                ctx.violation(
                    f"dsdv loop-freedom: dest {dest} node {node} metric {e.metric} "
                    f"-> next {e.next_hop} metric {nxt.metric} at seq {max_seq}")
