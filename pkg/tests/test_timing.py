"""Clock and throttle behavior, including the stall rule's edge cases."""

import time

import pytest

from twopc.timing import (
    RealClock,
    StepTimings,
    ThrottleConfig,
    VirtualClock,
    apply_throttle,
    busy_spin_ms,
    virtual_exchange_stall,
)


class TestStall:
    def test_receiver_early(self):
        # Sender ready at 41, latency 5, receiver ready at 5: waits 41.
        assert virtual_exchange_stall(41.0, 5.0, 5.0) == 41.0

    def test_receiver_late(self):
        # Data already buffered when the receiver shows up.
        assert virtual_exchange_stall(5.0, 41.0, 5.0) == 0.0

    def test_simultaneous(self):
        assert virtual_exchange_stall(10.0, 10.0, 5.0) == 5.0

    def test_zero_latency(self):
        assert virtual_exchange_stall(0.0, 0.0, 0.0) == 0.0


class TestThrottleConfig:
    def test_defaults(self):
        cfg = ThrottleConfig()
        assert cfg.factor == 1.0
        assert cfg.local_arith_units == 1.0
        assert cfg.local_bool_units == 0.25
        assert cfg.prepare_units == 2.0
        assert cfg.finish_units == 3.0

    def test_rejects_speedup(self):
        with pytest.raises(ValueError):
            ThrottleConfig(factor=0.5)
        with pytest.raises(ValueError):
            ThrottleConfig(factor=0.0)

    def test_identity_factor(self):
        assert apply_throttle(7.5, ThrottleConfig(factor=1.0), "virtual") == 7.5

    def test_virtual_scales_exactly(self):
        assert apply_throttle(7.5, ThrottleConfig(factor=3.0), "virtual") == 22.5

    def test_real_spins_extra(self):
        cfg = ThrottleConfig(factor=3.0)
        t0 = time.perf_counter()
        out = apply_throttle(5.0, cfg, "real")
        wall = (time.perf_counter() - t0) * 1000.0
        assert out == 15.0
        assert wall >= 9.0  # burned at least the extra 2x (10ms), minus timer slack

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            apply_throttle(1.0, ThrottleConfig(), "both")


def test_busy_spin_accuracy():
    t0 = time.perf_counter()
    busy_spin_ms(3.0)
    wall = (time.perf_counter() - t0) * 1000.0
    assert 2.9 <= wall <= 20.0


class TestRealClock:
    def test_measures_elapsed(self):
        clk = RealClock()
        t0 = clk.start()
        busy_spin_ms(2.0)
        ms = clk.end_compute(t0)
        assert ms >= 1.9
        assert clk.ready_ts is None

    def test_throttled_step(self):
        clk = RealClock(ThrottleConfig(factor=2.0))
        t0 = clk.start()
        busy_spin_ms(2.0)
        ms = clk.end_compute(t0)
        assert ms >= 3.8


class TestVirtualClock:
    def test_charge_advances(self):
        clk = VirtualClock(latency_ms=0.1, unit_ms=0.001)
        dt = clk.charge(100)
        assert dt == pytest.approx(0.1)
        assert clk.t == pytest.approx(0.1)
        assert clk.ready_ts == clk.t

    def test_charge_throttled(self):
        clk = VirtualClock(ThrottleConfig(factor=3.0), latency_ms=0.1)
        clk.charge(100)
        assert clk.t == pytest.approx(0.3)

    def test_exchange_barrier_aligns_clocks(self):
        # Fast party at t=10, slow at t=50, latency 1: both land on 51.
        fast = VirtualClock(latency_ms=1.0)
        slow = VirtualClock(latency_ms=1.0)
        fast.t = 10.0
        slow.t = 50.0
        stall_fast = fast.exchange(peer_ready_t=50.0)
        stall_slow = slow.exchange(peer_ready_t=10.0)
        assert stall_fast == pytest.approx(41.0)
        assert stall_slow == pytest.approx(1.0)  # latency floor, not zero
        assert fast.t == pytest.approx(51.0)
        assert slow.t == pytest.approx(51.0)

    def test_exchange_equal_parties(self):
        a = VirtualClock(latency_ms=0.5)
        b = VirtualClock(latency_ms=0.5)
        a.t = b.t = 7.0
        assert a.exchange(7.0) == pytest.approx(0.5)
        assert b.exchange(7.0) == pytest.approx(0.5)
        assert a.t == b.t == pytest.approx(7.5)

    def test_reset(self):
        clk = VirtualClock()
        clk.charge(5)
        clk.reset()
        assert clk.t == 0.0

    def test_negative_latency_rejected(self):
        with pytest.raises(ValueError):
            VirtualClock(latency_ms=-1.0)


def test_step_timings_sum():
    t = StepTimings(party=0)
    t.local_gates_ms = 1.0
    t.interactive_gate_ms = 2.0
    t.layer_finish_ms = 3.0
    t.communication_ms = 4.0
    t.online_phase_ms = 10.0
    assert t.component_sum() == 10.0
    d = t.as_dict()
    assert d["party"] == 0
    assert d["online_phase_ms"] == 10.0
    assert set(d) == {
        "party",
        "local_gates_ms",
        "interactive_gate_ms",
        "layer_finish_ms",
        "communication_ms",
        "online_phase_ms",
    }
