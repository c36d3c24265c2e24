"""Shared fixtures: controlled topologies and protocol harnesses."""

import pytest

from manetsim.engine import Simulator, to_us
from manetsim.link import LinkLayer
from manetsim.metrics import MetricsAccumulator
from manetsim.mobility import PositionTracker, static_schedule
from manetsim.protocols import RunContext
from manetsim.scenario import PROTOCOLS, ScenarioConfig
from manetsim.tracing import TraceCollector
from manetsim.traffic import CbrFlow


def line_positions(n, spacing=200.0):
    return tuple((spacing * i, 0.0) for i in range(n))


def one_flow(src, dst, start_s, sim_time_s, rate=4.0, size=512, flow_id=0):
    return [CbrFlow(flow_id, src, dst, rate, size, to_us(start_s), to_us(sim_time_s))]


def line_config(protocol, n, sim_time=30.0, **kw):
    return ScenarioConfig(protocol=protocol, nodes=n, sim_time=sim_time,
                          positions=line_positions(n), connections=1,
                          start_lo=kw.pop("start_lo", 10.0),
                          start_hi=kw.pop("start_hi", 10.0), **kw)


class UnitHarness:
    """One protocol instance per node over a static topology, no traffic layer.

    Tests drive protocol entry points directly and run the event loop by hand.
    """

    def __init__(self, protocol, positions, sim_time=100.0, **cfg_kw):
        self.cfg = ScenarioConfig(protocol=protocol, nodes=len(positions),
                                  positions=tuple(positions), sim_time=sim_time,
                                  **cfg_kw)
        self.sim = Simulator(self.cfg.seed)
        schedule = static_schedule(positions, sim_time)
        self.tracker = PositionTracker(schedule)
        self.acc = MetricsAccumulator()
        self.trace = TraceCollector(self.acc, keep_lines=True)
        self.link = LinkLayer(self.sim, self.tracker, self.cfg.link, self.trace,
                              len(positions))
        self.ctx = RunContext(self.sim, self.trace, self.link, self.cfg)
        self.delivered = []
        self.ctx.deliver_app = lambda node, pkt: self.delivered.append((node, pkt))
        self.ctx.flow_lookup = lambda src, dst, now: True
        cls = PROTOCOLS[protocol]
        self.protocols = [cls(self.ctx, i) for i in range(len(positions))]
        for i, proto in enumerate(self.protocols):
            self.link.receivers[i] = proto.on_frame

    def start_all(self):
        for proto in self.protocols:
            proto.start()

    def run_to(self, t_s):
        self.sim.run_until(to_us(t_s))


@pytest.fixture
def make_harness():
    return UnitHarness
