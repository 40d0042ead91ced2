import pytest

from lorahop.engine import (Event, EventKind, RngRegistry, SchedulingError,
                            Simulator, ms, ms_ceil, seconds)


def collect_order(sim, kinds=(EventKind.MOBILITY_UPDATE,)):
    seen = []
    for kind in kinds:
        sim.on(kind, lambda ev: seen.append((sim.clock_ms, ev.subject)))
    return seen


def test_earlier_event_dequeued_first():
    sim = Simulator()
    seen = collect_order(sim)
    sim.schedule(Event(5000, EventKind.MOBILITY_UPDATE, "E"))
    sim.schedule(Event(3000, EventKind.MOBILITY_UPDATE, "E2"))
    sim.run_until(10_000)
    assert seen == [(3000, "E2"), (5000, "E")]


def test_fifo_tie_break_at_equal_times():
    sim = Simulator()
    seen = collect_order(sim)
    sim.schedule(Event(7000, EventKind.MOBILITY_UPDATE, "A"))
    sim.schedule(Event(7000, EventKind.MOBILITY_UPDATE, "B"))
    sim.run_until(10_000)
    assert seen == [(7000, "A"), (7000, "B")]


def test_scheduling_in_the_past_aborts():
    sim = Simulator()
    sim.on(EventKind.MOBILITY_UPDATE, lambda ev: None)
    sim.schedule(Event(1000, EventKind.MOBILITY_UPDATE, "x"))
    sim.run_until(2000)
    with pytest.raises(SchedulingError):
        sim.schedule(Event(500, EventKind.MOBILITY_UPDATE, "late"))


def test_clock_never_decreases_and_jumps_to_end():
    sim = Simulator()
    stamps = []
    sim.on(EventKind.MOBILITY_UPDATE, lambda ev: stamps.append(sim.clock_ms))
    for t in (400, 100, 900, 100):
        sim.schedule(Event(t, EventKind.MOBILITY_UPDATE, "d"))
    summary = sim.run_until(5000)
    assert stamps == sorted(stamps)
    assert summary.clock_ms == 5000
    assert summary.processed == 4
    assert summary.scheduled == 4


def test_empty_run_reaches_end():
    sim = Simulator()
    summary = sim.run_until(86_400_000)
    assert summary.clock_ms == 86_400_000
    assert summary.processed == 0


def test_events_beyond_end_left_unprocessed():
    sim = Simulator()
    seen = collect_order(sim)
    sim.schedule(Event(1000, EventKind.MOBILITY_UPDATE, "in"))
    sim.schedule(Event(9000, EventKind.MOBILITY_UPDATE, "out"))
    summary = sim.run_until(5000)
    assert seen == [(1000, "in")]
    assert summary.processed == 1


def test_rng_same_label_same_seed_reproduces():
    a = RngRegistry(42).stream("shadowing")
    b = RngRegistry(42).stream("shadowing")
    assert a.uniform(size=8).tolist() == b.uniform(size=8).tolist()


def test_rng_labels_are_independent():
    reg = RngRegistry(42)
    a = reg.stream("shadowing").uniform(size=8).tolist()
    b = reg.stream("jitter").uniform(size=8).tolist()
    assert a != b


def test_rng_duplicate_label_rejected():
    reg = RngRegistry(7)
    reg.stream("shadowing")
    with pytest.raises(SchedulingError):
        reg.stream("shadowing")


def test_rng_uniform_draws_in_unit_interval():
    draws = RngRegistry(0).stream("u").uniform(size=1000)
    assert ((draws >= 0.0) & (draws < 1.0)).all()


def test_time_conversions():
    assert ms(1.5) == 1500
    assert ms(0.0001) == 0
    assert ms_ceil(0.1026560) == 103
    assert ms_ceil(0.103) == 103
    assert seconds(1500) == 1.5
