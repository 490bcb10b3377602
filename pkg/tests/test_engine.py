import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radcom_platoon.engine import (
    Engine, EventKind, Purpose, RngStreams, SchedulingError, derive_seed, to_ns, to_s,
)


def collect(engine):
    seen = []
    for kind in EventKind:
        engine.on(kind, lambda ev: seen.append((ev.time, ev.seq, int(ev.kind), ev.node)))
    return seen


def test_time_conversion_is_integer_ns():
    assert to_ns(0.5) == 500_000_000
    assert to_ns(120.0) == 120 * 10**9
    assert to_s(1_500_000_000) == 1.5


def test_event_at_now_runs_before_later_events():
    eng = Engine()
    seen = collect(eng)
    eng.schedule(10, EventKind.GENERIC, 1)
    eng.schedule(0, EventKind.GENERIC, 2)
    eng.run_until(20)
    assert [s[3] for s in seen] == [2, 1]


def test_identical_times_keep_insertion_order():
    eng = Engine()
    seen = collect(eng)
    for node in (5, 3, 9, 1):
        eng.schedule(7, EventKind.GENERIC, node)
    eng.run_until(7)
    assert [s[3] for s in seen] == [5, 3, 9, 1]


def test_scheduling_in_the_past_is_fatal():
    eng = Engine()
    eng.run_until(100)
    with pytest.raises(SchedulingError):
        eng.schedule(99, EventKind.GENERIC)


def test_empty_queue_advances_clock():
    eng = Engine()
    eng.run_until(to_ns(3.0))
    assert eng.now == to_ns(3.0)
    assert eng.processed == 0


def test_events_after_horizon_stay_queued():
    eng = Engine()
    collect(eng)
    eng.schedule(50, EventKind.GENERIC)
    eng.schedule(51, EventKind.GENERIC)
    eng.run_until(50)
    assert eng.pending == 1 and eng.now == 50


def _ticker(eng, period):
    def tick(ev):
        eng.schedule(ev.time + period, EventKind.PCM_TICK, ev.node)
    eng.on(EventKind.PCM_TICK, tick)
    for node in range(3):
        eng.schedule(node * 7, EventKind.PCM_TICK, node)


def test_run_until_is_compositional():
    one, two = Engine(), Engine()
    _ticker(one, 1000)
    _ticker(two, 1000)
    one.run_until(120_000)
    one.run_until(150_000)
    two.run_until(150_000)
    assert one.trace_hash() == two.trace_hash()
    assert one.now == two.now and one.processed == two.processed


def test_trace_dump_format():
    buf = io.StringIO()
    eng = Engine(trace=buf)
    collect(eng)
    eng.schedule(5, EventKind.TX_START, 3)
    eng.run_until(5)
    assert buf.getvalue() == "5\t0\tTX_START\t3\n"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=60))
def test_dequeue_order_is_time_then_seq(times):
    eng = Engine()
    seen = collect(eng)
    for t in times:
        eng.schedule(t, EventKind.GENERIC)
    eng.run_until(10_000)
    keys = [(s[0], s[1]) for s in seen]
    assert keys == sorted(keys)
    assert len(keys) == len(times)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=30), st.integers(1, 500))
def test_clock_never_decreases(times, chunk):
    eng = Engine()
    stamps = []
    for kind in EventKind:
        eng.on(kind, lambda ev: stamps.append(eng.now))
    for t in times:
        eng.schedule(t, EventKind.GENERIC)
    t = 0
    while t < 1000:
        t = min(t + chunk, 1000)
        eng.run_until(t)
        stamps.append(eng.now)
    assert stamps == sorted(stamps)


def test_streams_are_reproducible_and_distinct():
    a, b = RngStreams(42), RngStreams(42)
    x = a.stream(3, Purpose.BACKOFF).integers(0, 1 << 30, 5)
    y = b.stream(3, Purpose.BACKOFF).integers(0, 1 << 30, 5)
    z = a.stream(3, Purpose.JITTER).integers(0, 1 << 30, 5)
    w = a.stream(4, Purpose.BACKOFF).integers(0, 1 << 30, 5)
    assert np.array_equal(x, y)
    assert not np.array_equal(x, z) and not np.array_equal(x, w)


def test_draws_for_one_purpose_do_not_shift_another():
    a, b = RngStreams(7), RngStreams(7)
    a.stream(0, Purpose.RADCOM_LOSS).random(100)
    assert a.stream(0, Purpose.BACKOFF).random() == b.stream(0, Purpose.BACKOFF).random()


def test_derive_seed():
    assert derive_seed(1, 0) == derive_seed(1, 0)
    assert derive_seed(1, 0) != derive_seed(1, 1) != derive_seed(2, 0)
    assert 0 <= derive_seed(123, 4) < 2**64
