"""Scenario configuration and single-run orchestration."""

import dataclasses
from dataclasses import dataclass, field

from . import dsdv as dsdv_mod
from . import mobility, traffic
from .aodv import Aodv, AodvParams
from .dsdv import Dsdv, DsdvParams
from .dsr import Dsr, DsrParams
from .engine import Simulator, to_us
from .link import LinkConfig, LinkLayer
from .metrics import MetricsAccumulator
from .mobility import PositionTracker
from .protocols import RunContext
from .tracing import DATA, TraceCollector
from .traffic import TrafficManager, generate_flows

PROTOCOLS = {"aodv": Aodv, "dsdv": Dsdv, "dsr": Dsr}


class ParseError(Exception):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ValidationError(Exception):
    def __init__(self, fieldname, message):
        super().__init__(f"{fieldname}: {message}")
        self.field = fieldname


@dataclass
class ScenarioConfig:
    """Full parameter set of one run; defaults mirror the experimental grid."""

    protocol: str = "aodv"
    nodes: int = 50
    area_x: float = 1000.0
    area_y: float = 1000.0
    connections: int = 5
    packet_size: int = 512
    cbr_rate: float = 4.0  # packets/second per flow
    sim_time: float = 100.0
    pause_time: float = 0.0
    speed_min: float = 1.0  # assumption: the experiments state only "high mobility"
    speed_max: float = 20.0
    start_lo: float = 1.0  # flow start stagger window
    start_hi: float = 5.0
    seed: int = 1
    static: bool = False
    nrl_mode: str = "perhop"
    check_invariants: bool = False
    positions: tuple = None  # explicit coordinates; implies a static topology
    mobility_file: str = None  # waypoint replay file
    link: LinkConfig = field(default_factory=LinkConfig)
    aodv: AodvParams = field(default_factory=AodvParams)
    dsdv: DsdvParams = field(default_factory=DsdvParams)
    dsr: DsrParams = field(default_factory=DsrParams)

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ValidationError("protocol", f"unknown protocol {self.protocol!r}")
        if self.nodes < 2:
            raise ValidationError("nodes", "need at least 2 nodes")
        if self.area_x <= 0 or self.area_y <= 0:
            raise ValidationError("area_x", "field dimensions must be positive")
        if self.connections < 1:
            raise ValidationError("connections", "must be positive")
        if self.connections > self.nodes * (self.nodes - 1):
            raise ValidationError("connections", "more flows than ordered node pairs")
        if self.packet_size <= 0:
            raise ValidationError("packet_size", "must be positive")
        if self.cbr_rate <= 0:
            raise ValidationError("cbr_rate", "must be positive")
        if self.sim_time <= 0:
            raise ValidationError("sim_time", "must be positive")
        if self.pause_time < 0:
            raise ValidationError("pause_time", "must be non-negative")
        if not self.static and self.positions is None and self.mobility_file is None:
            if self.speed_min <= 0 or self.speed_min > self.speed_max:
                raise ValidationError("speed_min", "need 0 < speed_min <= speed_max")
        if not 0 <= self.start_lo <= self.start_hi < self.sim_time:
            raise ValidationError("start_lo", "flow start window must precede sim end")
        if self.nrl_mode not in ("perhop", "originated"):
            raise ValidationError("nrl_mode", "perhop or originated")
        if self.positions is not None and len(self.positions) != self.nodes:
            raise ValidationError("positions", "must list one coordinate per node")
        return self


# Flat config-file keys that live on nested sub-configs.
_LINK_KEYS = {"tx_range", "bitrate", "ifq_len", "jitter_max", "retry_limit", "overhead"}
_BOOL_FIELDS = {"static", "check_invariants", "intermediate_reply",
                "dest_reply_improving", "hello_suppress", "reply_from_cache",
                "reply_shorter_at_dest"}


def _convert(name, raw, lineno):
    if name in _BOOL_FIELDS or raw.lower() in ("true", "false"):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ParseError(lineno, f"bad boolean for {name}: {raw!r}")
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config(text):
    """Parse flat key=value scenario text (# comments) into a ScenarioConfig."""
    cfg = ScenarioConfig()
    top_fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    sub_fields = {
        "aodv": {f.name for f in dataclasses.fields(AodvParams)},
        "dsdv": {f.name for f in dataclasses.fields(DsdvParams)},
        "dsr": {f.name for f in dataclasses.fields(DsrParams)},
    }
    seen_keys = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not value:
            raise ParseError(lineno, f"empty value for {key!r}")
        converted = _convert(key, value, lineno)
        if key in _LINK_KEYS:
            setattr(cfg.link, key, converted)
        elif key in top_fields and key not in ("link", "aodv", "dsdv", "dsr", "positions"):
            if key == "protocol":
                converted = str(value).lower()
            setattr(cfg, key, converted)
        else:
            prefix, _, rest = key.partition("_")
            if prefix in sub_fields and rest in sub_fields[prefix]:
                setattr(getattr(cfg, prefix), rest, converted)
            else:
                raise ParseError(lineno, f"unknown key {key!r}")
        seen_keys.add(key)
    cfg.explicit_keys = seen_keys
    try:
        cfg.link.__post_init__()
    except ValueError as exc:
        raise ValidationError("link", str(exc)) from None
    cfg.validate()
    return cfg


def report_header(cfg):
    """Echo of the run configuration, including every decided default."""
    lines = ["# run configuration (decided defaults included)"]
    for f in dataclasses.fields(ScenarioConfig):
        if f.name in ("link", "aodv", "dsdv", "dsr", "positions"):
            continue
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    for sub in ("link", "aodv", "dsdv", "dsr"):
        obj = getattr(cfg, sub)
        for f in dataclasses.fields(obj):
            key = f.name if sub == "link" else f"{sub}_{f.name}"
            lines.append(f"{key} = {getattr(obj, f.name)}")
    lines.append("# speed_min/speed_max and cbr_rate are assumptions; the source "
                 "experiments state only high mobility at pause time 0")
    return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    config: ScenarioConfig
    report: object
    trace_text: str  # None unless requested
    violations: list
    in_flight_census: int
    protocols: list
    schedule: object
    flows: list

    def csv_row(self):
        cfg = self.config
        head = [cfg.protocol, str(cfg.nodes), str(cfg.connections), str(cfg.seed)]
        return ",".join(head + self.report.csv_fields())


def build_schedule(cfg, rng):
    if cfg.mobility_file is not None:
        with open(cfg.mobility_file) as fh:
            return mobility.import_schedule(fh.read(), cfg.sim_time)
    if cfg.positions is not None:
        return mobility.static_schedule(cfg.positions, cfg.sim_time)
    if cfg.static:
        positions = [(rng.uniform(f"mobility/{i}", 0.0, cfg.area_x),
                      rng.uniform(f"mobility/{i}", 0.0, cfg.area_y))
                     for i in range(cfg.nodes)]
        return mobility.static_schedule(positions, cfg.sim_time)
    return mobility.generate_schedule(cfg.nodes, cfg.area_x, cfg.area_y,
                                      cfg.speed_min, cfg.speed_max, cfg.pause_time,
                                      cfg.sim_time, rng)


def run_scenario(cfg, keep_trace=False, flows=None):
    """Execute one scenario to sim_time; deterministic per seed.

    An explicit flow list bypasses random flow generation (fixed fixtures).
    """
    cfg.validate()
    sim = Simulator(cfg.seed)
    schedule = build_schedule(cfg, sim.rng)
    tracker = PositionTracker(schedule)
    acc = MetricsAccumulator(cfg.nrl_mode)
    trace = TraceCollector(acc, keep_lines=keep_trace)
    linklayer = LinkLayer(sim, tracker, cfg.link, trace, cfg.nodes)
    ctx = RunContext(sim, trace, linklayer, cfg)
    ctx.check_invariants = cfg.check_invariants
    cls = PROTOCOLS[cfg.protocol]
    protocols = [cls(ctx, node) for node in range(cfg.nodes)]
    for node, proto in enumerate(protocols):
        linklayer.receivers[node] = proto.on_frame
    if flows is None:
        flows = generate_flows(cfg.nodes, cfg.connections, cfg.cbr_rate,
                               cfg.packet_size, cfg.start_lo, cfg.start_hi,
                               cfg.sim_time, sim.rng)
    TrafficManager(ctx, flows, protocols)
    for proto in protocols:
        proto.start()
    if cfg.check_invariants and cfg.protocol == "dsdv":
        def snapshot():
            dsdv_mod.check_loop_freedom(protocols, ctx)
            sim.schedule_in(to_us(1.0), snapshot, kind="invariant-snapshot")
        sim.schedule_in(to_us(1.0), snapshot, kind="invariant-snapshot")

    sim.run_until(to_us(cfg.sim_time))

    census = sum(p.pending_data_count() for p in protocols)
    for node in range(cfg.nodes):
        for frame in linklayer.pending_frames(node):
            if frame.ptype == DATA:
                census += 1
            elif frame.ptype == "DSR-RERR" and frame.payload.packet is not None:
                census += 1
    report = acc.report(cfg.packet_size, cfg.sim_time)
    return RunResult(
        config=cfg, report=report,
        trace_text=trace.text() if keep_trace else None,
        violations=list(ctx.violations), in_flight_census=census,
        protocols=protocols, schedule=schedule, flows=flows,
    )
