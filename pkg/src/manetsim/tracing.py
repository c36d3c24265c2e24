"""Trace record emission: one line per packet event, plus online counting hooks."""

from .engine import us_to_str

AGT = "AGT"
RTR = "RTR"
MAC = "MAC"

# Drop reasons
IFQ = "IFQ"
NRTE = "NRTE"
COLLISION = "COLLISION"
TTL = "TTL"
MALFORMED = "MALFORMED"

DATA = "cbr"
CONTROL_TYPES = ("RREQ", "RREP", "RERR", "HELLO", "DSDV",
                 "DSR-RREQ", "DSR-RREP", "DSR-RERR")


class TraceCollector:
    """Receives every packet event of a run.

    When keep_lines is set, builds the bit-exact trace file lines
    (`<op> <time.6f> <node> <layer> <uid> <pkt_type> <size> [f<flow> q<seq>] [R<reason>]`);
    either way it feeds the online metrics accumulator.
    """

    def __init__(self, accumulator, keep_lines=False):
        self.acc = accumulator
        self.lines = [] if keep_lines else None

    def _emit(self, op, t_us, node, layer, uid, ptype, size, flow_id=None, seq=None, reason=None):
        if self.lines is None:
            return
        line = f"{op} {us_to_str(t_us)} {node} {layer} {uid} {ptype} {size}"
        if flow_id is not None:
            line += f" f{flow_id} q{seq}"
        if reason is not None:
            line += f" R{reason}"
        self.lines.append(line)

    # Application layer (CBR endpoints)

    def agt_send(self, t_us, node, uid, size, flow_id, seq):
        self.acc.on_agt_send(flow_id)
        self._emit("s", t_us, node, AGT, uid, DATA, size, flow_id, seq)

    def agt_recv(self, t_us, node, uid, size, flow_id, seq, sent_at_us):
        self.acc.on_agt_recv(flow_id, t_us - sent_at_us)
        self._emit("r", t_us, node, AGT, uid, DATA, size, flow_id, seq)

    # Routing layer

    def rtr_send(self, t_us, node, uid, ptype, size):
        self.acc.on_rtr_tx(ptype, forwarded=False)
        self._emit("s", t_us, node, RTR, uid, ptype, size)

    def rtr_forward(self, t_us, node, uid, ptype, size, flow_id=None, seq=None):
        self.acc.on_rtr_tx(ptype, forwarded=True)
        self._emit("f", t_us, node, RTR, uid, ptype, size, flow_id, seq)

    # Link layer

    def mac_send(self, t_us, node, uid, ptype, size, flow_id=None, seq=None):
        self.acc.on_mac_send()
        self._emit("s", t_us, node, MAC, uid, ptype, size, flow_id, seq)

    def mac_recv(self, t_us, node, uid, ptype, size, flow_id=None, seq=None):
        self.acc.on_mac_recv()
        self._emit("r", t_us, node, MAC, uid, ptype, size, flow_id, seq)

    def drop(self, t_us, node, layer, uid, ptype, size, reason, flow_id=None, seq=None):
        self.acc.on_drop(layer, ptype, reason)
        self._emit("d", t_us, node, layer, uid, ptype, size, flow_id, seq, reason)

    def text(self):
        if self.lines is None:
            raise ValueError("trace line collection was not enabled for this run")
        return "\n".join(self.lines) + ("\n" if self.lines else "")
