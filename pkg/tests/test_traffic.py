"""CBR flow generation and emission schedules."""

import pytest

from manetsim.engine import RngStreams, Simulator, to_us
from manetsim.link import LinkLayer, LinkConfig
from manetsim.metrics import MetricsAccumulator
from manetsim.mobility import PositionTracker, static_schedule
from manetsim.protocols import Protocol, RunContext
from manetsim.scenario import ScenarioConfig
from manetsim.tracing import TraceCollector
from manetsim.traffic import (AppPacket, CbrFlow, InvalidConfig, TrafficManager,
                              export_flows, generate_flows)


def test_flow_count_and_distinct_pairs():
    rng = RngStreams(5)
    flows = generate_flows(20, 5, 4.0, 512, 1.0, 5.0, 100.0, rng)
    assert len(flows) == 5
    pairs = {(f.src, f.dst) for f in flows}
    assert len(pairs) == 5
    assert all(f.src != f.dst for f in flows)
    assert all(to_us(1.0) <= f.start_at <= to_us(5.0) for f in flows)
    assert all(f.stop_at == to_us(100.0) for f in flows)


def test_flow_generation_deterministic():
    a = generate_flows(20, 5, 4.0, 512, 1.0, 5.0, 100.0, RngStreams(5))
    b = generate_flows(20, 5, 4.0, 512, 1.0, 5.0, 100.0, RngStreams(5))
    assert a == b


def test_too_many_connections_rejected():
    with pytest.raises(InvalidConfig):
        generate_flows(2, 3, 4.0, 512, 1.0, 5.0, 100.0, RngStreams(1))


def test_flow_export_lines():
    flows = [CbrFlow(0, 1, 2, 4.0, 512, to_us(1.5), to_us(100.0))]
    text = export_flows(flows)
    assert text == "flow 0 src 1 dst 2 rate 4.0 size 512 start 1.5 stop 100.0\n"


class LoopbackProtocol(Protocol):
    """Hands every packet straight to the destination's app layer."""

    def send_data(self, pkt):
        self.ctx.deliver_app(pkt.dst, pkt)

    def on_frame(self, frame, from_node):
        pass


def emission_harness(flow):
    sim = Simulator(1)
    sched = static_schedule([(0.0, 0.0), (10.0, 0.0)], sim_time=100.0)
    tracker = PositionTracker(sched)
    acc = MetricsAccumulator()
    trace = TraceCollector(acc, keep_lines=True)
    link = LinkLayer(sim, tracker, LinkConfig(), trace, 2)
    ctx = RunContext(sim, trace, link, ScenarioConfig())
    protos = [LoopbackProtocol(ctx, 0), LoopbackProtocol(ctx, 1)]
    TrafficManager(ctx, [flow], protos)
    return sim, acc


def test_emission_count_half_open_interval():
    # rate 4 pkt/s active on [10, 100) -> exactly 360 packets
    flow = CbrFlow(0, 0, 1, 4.0, 512, to_us(10.0), to_us(100.0))
    sim, acc = emission_harness(flow)
    sim.run_until(to_us(100.0))
    assert acc.sent == 360
    assert acc.sent_per_flow[0] == 360


def test_no_emission_at_stop_time():
    flow = CbrFlow(0, 0, 1, 1.0, 512, to_us(99.0), to_us(100.0))
    sim, acc = emission_harness(flow)
    sim.run_until(to_us(100.0))
    assert acc.sent == 1  # tick at 99 only; tick at 100 lands on stop_at


def test_duplicate_deliveries_suppressed():
    sim = Simulator(1)
    sched = static_schedule([(0.0, 0.0), (10.0, 0.0)], sim_time=100.0)
    tracker = PositionTracker(sched)
    acc = MetricsAccumulator()
    trace = TraceCollector(acc)
    link = LinkLayer(sim, tracker, LinkConfig(), trace, 2)
    ctx = RunContext(sim, trace, link, ScenarioConfig())
    protos = [LoopbackProtocol(ctx, 0), LoopbackProtocol(ctx, 1)]
    tm = TrafficManager(ctx, [CbrFlow(0, 0, 1, 4.0, 512, 0, to_us(100.0))], protos)
    pkt = AppPacket(99, 0, 7, 0, 1, 512, 0)
    sim.run_until(to_us(0.5))  # loopback delivers seqs 0..2 (ticks at 0, .25, .5)
    delivered_by_flow = acc.received
    tm.deliver(1, pkt)
    tm.deliver(1, pkt)  # duplicate of seq 7: ignored
    assert acc.received == delivered_by_flow + 1
