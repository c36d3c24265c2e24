"""The four run metrics, online accumulation, offline trace recomputation, seed averaging."""

import math
from dataclasses import dataclass, field

from . import tracing
from .engine import US_PER_SEC, to_us


class NoPacketsSent(Exception):
    """PDF is undefined when no data packets were sent."""


class NoDeliveries(Exception):
    """Delay and NRL are undefined when nothing was delivered."""


class EmptyInput(Exception):
    """Aggregation needs at least one report."""


class TraceParseError(Exception):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def compute_pdf(sent, received):
    """Packet delivery fraction: received / sent * 100."""
    if sent == 0:
        raise NoPacketsSent("no data packets sent")
    return received / sent * 100.0


def compute_avg_delay(delivered):
    """Mean of (received_at - sent_at) over delivered pairs, in seconds."""
    if not delivered:
        raise NoDeliveries("no delivered packets")
    total = 0.0
    for sent_at, received_at in delivered:
        if received_at <= sent_at:
            raise ValueError(f"non-positive delay: {sent_at} -> {received_at}")
        total += received_at - sent_at
    return total / len(delivered)


def compute_nrl(routing_tx, delivered):
    """Routing packets transmitted per delivered data packet."""
    if delivered == 0:
        raise NoDeliveries("no delivered packets")
    return routing_tx / delivered


def compute_throughput(delivered, packet_size, window):
    """(kilobits/second, packets/second) of delivered data over the window."""
    if window <= 0:
        raise ValueError("window must be positive")
    pps = delivered / window
    kbps = delivered * packet_size * 8 / window / 1000.0
    return kbps, pps


@dataclass
class MetricsReport:
    """Aggregated outcome of one run."""

    sent: int
    received: int
    pdf: float  # None when sent == 0
    avg_delay: float  # seconds; None when received == 0
    routing_tx: int
    nrl: float  # None when received == 0
    throughput_kbps: float
    throughput_pps: float
    drops: dict  # data-packet drop counts keyed by reason
    in_flight: int
    window: float  # seconds

    def csv_fields(self):
        def num(x):
            return "" if x is None else repr(x)

        return [
            str(self.sent), str(self.received), num(self.pdf), num(self.avg_delay),
            str(self.routing_tx), num(self.nrl), num(self.throughput_kbps),
            num(self.throughput_pps),
            str(self.drops.get(tracing.IFQ, 0)),
            str(self.drops.get(tracing.NRTE, 0)),
            str(self.drops.get(tracing.COLLISION, 0)),
        ]


CSV_COLUMNS = ("protocol,nodes,connections,seed,sent,received,pdf,avg_delay,"
               "routing_tx,nrl,throughput_kbps,throughput_pps,"
               "drop_ifq,drop_nrte,drop_collision")


class MetricsAccumulator:
    """Online tally of everything the four metrics need, updated as events happen."""

    def __init__(self, nrl_mode="perhop"):
        if nrl_mode not in ("perhop", "originated"):
            raise ValueError(f"nrl_mode {nrl_mode!r}")
        self.nrl_mode = nrl_mode
        self.sent = 0
        self.received = 0
        self.delay_sum_us = 0
        self.sent_per_flow = {}
        self.recv_per_flow = {}
        self.rtr_originated = 0
        self.rtr_forwarded = 0
        self.rtr_tx_by_type = {}
        self.mac_sends = 0
        self.mac_recvs = 0
        self.data_drops = {}  # terminal data drops by reason
        self.data_collisions = 0  # per-receiver data frame losses (non-terminal)
        self.control_drops = {}

    def on_agt_send(self, flow_id):
        self.sent += 1
        self.sent_per_flow[flow_id] = self.sent_per_flow.get(flow_id, 0) + 1

    def on_agt_recv(self, flow_id, delay_us):
        self.received += 1
        self.delay_sum_us += delay_us
        self.recv_per_flow[flow_id] = self.recv_per_flow.get(flow_id, 0) + 1

    def on_rtr_tx(self, ptype, forwarded):
        if ptype in tracing.CONTROL_TYPES:
            if forwarded:
                self.rtr_forwarded += 1
            else:
                self.rtr_originated += 1
            self.rtr_tx_by_type[ptype] = self.rtr_tx_by_type.get(ptype, 0) + 1

    def on_mac_send(self):
        self.mac_sends += 1

    def on_mac_recv(self):
        self.mac_recvs += 1

    def on_drop(self, layer, ptype, reason):
        if ptype == tracing.DATA:
            if reason == tracing.COLLISION:
                self.data_collisions += 1
            else:
                self.data_drops[reason] = self.data_drops.get(reason, 0) + 1
        else:
            self.control_drops[reason] = self.control_drops.get(reason, 0) + 1

    @property
    def routing_tx(self):
        if self.nrl_mode == "originated":
            return self.rtr_originated
        return self.rtr_originated + self.rtr_forwarded

    def report(self, packet_size, window):
        """Freeze current tallies into a MetricsReport."""
        pdf = compute_pdf(self.sent, self.received) if self.sent else None
        if self.received:
            avg_delay = self.delay_sum_us / self.received / US_PER_SEC
            nrl = compute_nrl(self.routing_tx, self.received)
        else:
            avg_delay = None
            nrl = None
        kbps, pps = compute_throughput(self.received, packet_size, window)
        terminal = sum(self.data_drops.values())
        drops = dict(self.data_drops)
        drops[tracing.COLLISION] = self.data_collisions
        return MetricsReport(
            sent=self.sent, received=self.received, pdf=pdf, avg_delay=avg_delay,
            routing_tx=self.routing_tx, nrl=nrl, throughput_kbps=kbps,
            throughput_pps=pps, drops=drops,
            in_flight=self.sent - self.received - terminal, window=window,
        )


def recompute_from_trace(lines, packet_size, window, nrl_mode="perhop"):
    """Recompute the four metrics from trace lines alone: the offline path.

    Deliberately independent of MetricsAccumulator: its tallies come from
    parsed text, with times decoded back to integer microseconds.
    """
    sent = 0
    received = 0
    delay_sum_us = 0
    rtr_control_tx = 0
    send_time_us = {}  # uid -> AGT send time
    data_drops = {}
    data_collisions = 0
    last_t = -1
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) < 7:
            raise TraceParseError(lineno, f"expected at least 7 fields, got {len(parts)}")
        op, t_str, _node, layer, uid_str, ptype, size_str = parts[:7]
        if op not in ("s", "r", "d", "f"):
            raise TraceParseError(lineno, f"bad op {op!r}")
        try:
            t_us = _parse_time_us(t_str)
            uid = int(uid_str)
            int(size_str)
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
        if t_us < last_t:
            raise TraceParseError(lineno, "time went backwards")
        last_t = t_us
        reason = None
        for extra in parts[7:]:
            if extra.startswith("R"):
                reason = extra[1:]
            elif not (extra.startswith("f") or extra.startswith("q")):
                raise TraceParseError(lineno, f"unexpected field {extra!r}")

        if layer == tracing.AGT and ptype == tracing.DATA:
            if op == "s":
                sent += 1
                send_time_us[uid] = t_us
            elif op == "r":
                if uid not in send_time_us:
                    raise TraceParseError(lineno, f"receive of unsent uid {uid}")
                received += 1
                delay_sum_us += t_us - send_time_us[uid]
        elif layer == tracing.RTR and op in ("s", "f") and ptype in tracing.CONTROL_TYPES:
            if op == "s" or nrl_mode == "perhop":
                rtr_control_tx += 1
        if op == "d" and ptype == tracing.DATA:
            if reason is None:
                raise TraceParseError(lineno, "drop line without reason")
            if reason == tracing.COLLISION:
                data_collisions += 1
            else:
                data_drops[reason] = data_drops.get(reason, 0) + 1

    pdf = compute_pdf(sent, received) if sent else None
    avg_delay = (delay_sum_us / received / US_PER_SEC) if received else None
    nrl = compute_nrl(rtr_control_tx, received) if received else None
    kbps, pps = compute_throughput(received, packet_size, window)
    terminal = sum(data_drops.values())
    drops = dict(data_drops)
    drops[tracing.COLLISION] = data_collisions
    return MetricsReport(
        sent=sent, received=received, pdf=pdf, avg_delay=avg_delay,
        routing_tx=rtr_control_tx, nrl=nrl, throughput_kbps=kbps,
        throughput_pps=pps, drops=drops,
        in_flight=sent - received - terminal, window=window,
    )


def _parse_time_us(text):
    """Decode a '<sec>.<usec 6 digits>' timestamp to integer microseconds."""
    sec, dot, frac = text.partition(".")
    if dot != "." or len(frac) != 6:
        raise ValueError(f"bad timestamp {text!r}")
    return int(sec) * US_PER_SEC + int(frac)


AGGREGATE_METRICS = ("pdf", "avg_delay", "nrl", "throughput_kbps", "throughput_pps")


def aggregate(reports):
    """Per-metric mean and sample standard deviation across seed runs.

    Metrics absent from a run (no deliveries) are excluded from that
    metric's mean; the count of contributing runs is reported alongside.
    Returns {metric: (mean, stddev_or_None, n)}.
    """
    if not reports:
        raise EmptyInput("no reports")
    out = {}
    for name in AGGREGATE_METRICS:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if not values:
            out[name] = (None, None, 0)
            continue
        mean = sum(values) / len(values)
        if len(values) > 1:
            var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
            std = math.sqrt(var)
        else:
            std = None
        out[name] = (mean, std, len(values))
    return out
