"""Constant-bit-rate traffic over an unreliable datagram layer."""

from dataclasses import dataclass

from .engine import US_PER_SEC, to_us


class InvalidConfig(Exception):
    """Traffic parameters outside their valid ranges."""


@dataclass
class CbrFlow:
    flow_id: int
    src: int
    dst: int
    rate: float  # packets/second
    packet_size: int  # bytes
    start_at: int  # us
    stop_at: int  # us


class AppPacket:
    __slots__ = ("uid", "flow_id", "seq", "src", "dst", "size", "sent_at")

    def __init__(self, uid, flow_id, seq, src, dst, size, sent_at):
        self.uid = uid
        self.flow_id = flow_id
        self.seq = seq
        self.src = src
        self.dst = dst
        self.size = size
        self.sent_at = sent_at


def generate_flows(n_nodes, connections, rate, packet_size, start_lo, start_hi,
                   sim_time, rng):
    """Randomly spread (src, dst) pairs, drawn without pair replacement.

    A node may serve several flows but no ordered pair repeats. Start times
    are staggered uniformly in [start_lo, start_hi]; flows run to sim_time.
    """
    if n_nodes < 2:
        raise InvalidConfig("need at least 2 nodes for traffic")
    if connections < 1:
        raise InvalidConfig("connections must be positive")
    if connections > n_nodes * (n_nodes - 1):
        raise InvalidConfig(
            f"{connections} connections exceed {n_nodes * (n_nodes - 1)} ordered pairs")
    if rate <= 0 or packet_size <= 0:
        raise InvalidConfig("rate and packet_size must be positive")
    if not 0 <= start_lo <= start_hi < sim_time:
        raise InvalidConfig("flow start window must fall inside the run")

    key = "traffic/flows"
    pairs = set()
    flows = []
    for flow_id in range(connections):
        while True:
            src = rng.uniform_int(key, 0, n_nodes - 1)
            dst = rng.uniform_int(key, 0, n_nodes - 1)
            if src != dst and (src, dst) not in pairs:
                break
        pairs.add((src, dst))
        start = rng.uniform_us(key, start_lo, start_hi)
        flows.append(CbrFlow(flow_id, src, dst, rate, packet_size,
                             start, to_us(sim_time)))
    return flows


def export_flows(flows):
    """Replayable text form, one `flow ...` line per flow."""
    lines = []
    for f in flows:
        lines.append(f"flow {f.flow_id} src {f.src} dst {f.dst} rate {f.rate!r} "
                     f"size {f.packet_size} start {f.start_at / US_PER_SEC!r} "
                     f"stop {f.stop_at / US_PER_SEC!r}")
    return "\n".join(lines) + "\n"


class TrafficManager:
    """Drives CBR sources and deduplicates deliveries at flow endpoints."""

    def __init__(self, ctx, flows, protocols):
        self.ctx = ctx
        self.flows = flows
        self.protocols = protocols
        self.seqs = [0] * len(flows)
        self.delivered = [set() for _ in flows]
        ctx.deliver_app = self.deliver
        ctx.flow_lookup = self.has_active_flow
        for flow in flows:
            ctx.sim.schedule(flow.start_at, lambda f=flow: self._tick(f),
                             target=flow.src, kind="traffic")

    def _tick(self, flow):
        now = self.ctx.sim.now
        if now >= flow.stop_at:
            return
        seq = self.seqs[flow.flow_id]
        self.seqs[flow.flow_id] += 1
        pkt = AppPacket(self.ctx.next_uid(), flow.flow_id, seq, flow.src, flow.dst,
                        flow.packet_size, now)
        self.ctx.trace.agt_send(now, flow.src, pkt.uid, pkt.size, pkt.flow_id, pkt.seq)
        self.protocols[flow.src].send_data(pkt)
        period = int(round(US_PER_SEC / flow.rate))
        self.ctx.sim.schedule(now + period, lambda f=flow: self._tick(f),
                              target=flow.src, kind="traffic")

    def deliver(self, node, pkt):
        if node != pkt.dst:
            return
        seen = self.delivered[pkt.flow_id]
        if pkt.seq in seen:
            return
        seen.add(pkt.seq)
        self.ctx.trace.agt_recv(self.ctx.sim.now, node, pkt.uid, pkt.size,
                                pkt.flow_id, pkt.seq, pkt.sent_at)

    def has_active_flow(self, src, dst, now_us):
        return any(f.src == src and f.dst == dst and f.start_at <= now_us < f.stop_at
                   for f in self.flows)
