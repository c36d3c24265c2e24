"""DSDV table rules: sequence numbers, settling, link breaks, advertisements."""

import pytest

from manetsim.dsdv import INF, DsdvParams, DsdvUpdate, check_loop_freedom
from manetsim.engine import to_us
from manetsim.scenario import run_scenario
from manetsim.traffic import AppPacket

from conftest import UnitHarness, line_config, line_positions, one_flow


def two_node_harness(**kw):
    h = UnitHarness("dsdv", [(0.0, 0.0), (100.0, 0.0), (200.0, 0.0)], **kw)
    return h, h.protocols[0]


D = 77  # a destination id outside the topology, for pure table exercises


def update_from(origin, entries):
    return DsdvUpdate(origin, "incremental", entries)


def test_newer_seqno_wins():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 3, 10)]), from_node=1)
    assert p.table[D].metric == 4 and p.table[D].seqno == 10
    p.handle_update(update_from(2, [(D, 5, 12)]), from_node=2)
    assert p.table[D].seqno == 12
    assert p.table[D].metric == 6
    assert p.table[D].next_hop == 2


def test_equal_seqno_better_metric_adopted():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 5, 12)]), from_node=1)
    assert p.table[D].metric == 6
    p.handle_update(update_from(2, [(D, 3, 12)]), from_node=2)
    assert p.table[D].metric == 4
    assert p.table[D].next_hop == 2


def test_stale_seqno_ignored():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 5, 12)]), from_node=1)
    p.handle_update(update_from(2, [(D, 1, 8)]), from_node=2)
    assert p.table[D].seqno == 12
    assert p.table[D].metric == 6
    assert p.table[D].next_hop == 1


def test_settling_gate_on_same_seqno_next_hop_flip():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 5, 12)]), from_node=1)
    p.handle_update(update_from(2, [(D, 3, 12)]), from_node=2)
    e = p.table[D]
    assert e.advertise_after == h.sim.now + to_us(p.p.settling_time)
    # gated entry is excluded from incremental advertisements
    p.table[p.node].changed = False  # ignore the bootstrap self entry here
    p._advertise(full=False)
    incrementals = [ln for ln in h.trace.lines if " DSDV " in ln]
    assert not incrementals
    assert e.changed  # still awaiting advertisement once the gate passes
    # but a full dump carries every entry regardless of the gate
    p._advertise(full=True)
    assert any(" DSDV " in ln for ln in h.trace.lines)


def test_strictly_newer_seqno_has_no_settling_delay():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 5, 12)]), from_node=1)
    p.handle_update(update_from(2, [(D, 2, 14)]), from_node=2)
    assert p.table[D].advertise_after == h.sim.now


def test_link_break_marks_odd_infinite():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 2, 10), (D + 1, 3, 14)]), from_node=1)
    p.handle_update(update_from(2, [(D + 2, 1, 20)]), from_node=2)
    p.on_link_break(1)
    assert p.table[D].metric == INF and p.table[D].seqno == 11
    assert p.table[D + 1].metric == INF and p.table[D + 1].seqno == 15
    # route via the surviving neighbor untouched
    assert p.table[D + 2].metric == 2 and p.table[D + 2].seqno == 20
    # an immediate incremental goes out
    assert any(" DSDV " in ln and ln.startswith("s ") for ln in h.trace.lines)


def test_newer_even_seqno_recovers_broken_route():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 2, 10)]), from_node=1)
    p.on_link_break(1)
    assert p.table[D].seqno == 11
    p.handle_update(update_from(2, [(D, 4, 12)]), from_node=2)
    assert p.table[D].seqno == 12
    assert p.table[D].metric == 5
    assert p.lookup_next_hop(D) == 2


def test_lookup_rules():
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 1, 10)]), from_node=1)
    assert p.lookup_next_hop(D) == 1
    p.on_link_break(1)
    assert p.lookup_next_hop(D) is None


def test_self_delivery_without_forwarding():
    h, p = two_node_harness()
    pkt = AppPacket(1, 0, 0, 2, 0, 512, 0)
    p.send_data(pkt)
    assert h.delivered == [(0, pkt)]


def test_no_route_drop_is_traced_nrte():
    h, p = two_node_harness()
    pkt = AppPacket(1, 0, 0, 0, D, 512, 0)
    p.send_data(pkt)
    assert h.delivered == []
    assert any(ln.startswith("d ") and "RNRTE" in ln for ln in h.trace.lines)


def test_periodic_advertisement_bumps_even_seqno():
    h, p = two_node_harness()
    p.own_seqno = 4
    p._periodic()
    adverts = [ln for ln in h.trace.lines if " DSDV " in ln]
    assert adverts
    # own seqno advanced by 2 and stays even
    assert p.own_seqno == 6
    assert p.table[0].seqno == 6


def test_full_dump_every_third_update():
    h, p = two_node_harness()
    sent_kinds = []
    orig = p._advertise

    def spy(full):
        sent_kinds.append("full" if full else "incremental")
        orig(full)

    p._advertise = spy
    for _ in range(6):
        p._periodic()
    assert sent_kinds[0] == "full"
    assert sent_kinds[3] == "full"
    assert sent_kinds[1] == sent_kinds[2] == "incremental"


def test_empty_incremental_suppressed():
    h, p = two_node_harness()
    for e in p.table.values():
        e.changed = False
    before = len(h.trace.lines)
    p._advertise(full=False)
    assert len(h.trace.lines) == before  # nothing to carry, no frame sent


def test_oversized_incremental_promoted_to_full_dump():
    h, p = two_node_harness(dsdv=DsdvParams(incremental_cap=2))
    p.handle_update(update_from(1, [(D, 1, 10), (D + 1, 1, 10), (D + 2, 1, 10)]),
                    from_node=1)
    p._advertise(full=False)
    msg_lines = [ln for ln in h.trace.lines if " DSDV " in ln]
    assert msg_lines
    # promoted full dump carries the whole table: 3 adopted + self + neighbor entry
    size = int(msg_lines[-1].split()[6])
    n_entries = (size - 8) // 12
    assert n_entries == len(p.table)


def test_incremental_completeness_between_full_dumps():
    # every materially changed entry is advertised before its change flag clears
    h, p = two_node_harness()
    p.handle_update(update_from(1, [(D, 1, 10)]), from_node=1)
    assert p.table[D].changed
    p._advertise(full=False)
    assert not p.table[D].changed


def test_even_odd_discipline_under_churn():
    cfg = line_config("dsdv", 5, sim_time=40.0, check_invariants=True)
    result = run_scenario(cfg, flows=one_flow(0, 4, 20.0, 40.0))
    assert result.violations == []
    for proto in result.protocols:
        for e in proto.table.values():
            if e.metric == INF:
                assert e.seqno % 2 == 1
            else:
                assert e.seqno % 2 == 0


def test_loop_freedom_on_converged_line():
    cfg = line_config("dsdv", 5, sim_time=40.0, check_invariants=True)
    result = run_scenario(cfg, flows=one_flow(0, 4, 20.0, 40.0))
    ctx = result.protocols[0].ctx
    check_loop_freedom(result.protocols, ctx)
    assert ctx.violations == []


def test_line_convergence_delivers_data():
    cfg = line_config("dsdv", 5, sim_time=40.0)
    result = run_scenario(cfg, flows=one_flow(0, 4, 20.0, 40.0))
    # 20 s of 4 pkt/s after tables converged: everything arrives
    assert result.report.sent == 80
    assert result.report.received == 80
    assert result.report.pdf == 100.0
