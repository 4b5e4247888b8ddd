"""Clocks, throttling, and the per-step time ledger of one online run.

Each online execution attributes its time to four buckets: local gate
evaluation, interactive-gate preparation (masking plus serialization),
layer finish (opening masked values, completing products, deserialization),
and communication (waiting for the peer's layer frame).

Real mode measures wall time per step and emulates a slower machine by
busy-spinning factor-1 times the measured step after it runs.  Virtual
mode never looks at wall time: steps cost fixed units per gate scaled by
unit_ms and the party's factor, and an exchange advances both parties to
max(ready) + latency, so results are exact and identical across machines.
A party whose peer data arrived early still pays the link latency on its
own clock; that keeps the two clocks aligned at every layer barrier and
makes the accounting exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field


@dataclass
class StepTimings:
    """Accumulated milliseconds per pipeline step for one party's run."""

    party: int
    local_gates_ms: float = 0.0
    interactive_gate_ms: float = 0.0
    layer_finish_ms: float = 0.0
    communication_ms: float = 0.0
    online_phase_ms: float = 0.0

    def component_sum(self) -> float:
        return (
            self.local_gates_ms
            + self.interactive_gate_ms
            + self.layer_finish_ms
            + self.communication_ms
        )

    def as_dict(self) -> dict:
        return {
            "party": self.party,
            "local_gates_ms": self.local_gates_ms,
            "interactive_gate_ms": self.interactive_gate_ms,
            "layer_finish_ms": self.layer_finish_ms,
            "communication_ms": self.communication_ms,
            "online_phase_ms": self.online_phase_ms,
        }


@dataclass(frozen=True)
class ThrottleConfig:
    """Slow-down factor plus the unit-cost calibration for virtual mode.

    factor 1.0 means run at full speed; factor 3.0 models a machine three
    times slower.  Unit costs are charged per gate: local arithmetic gates
    cost more than local Boolean ones (word arithmetic vs single-word bit
    ops), interactive gates pay a preparation and a finish charge.
    """

    factor: float = 1.0
    local_arith_units: float = 1.0
    local_bool_units: float = 0.25
    prepare_units: float = 2.0
    finish_units: float = 3.0

    def __post_init__(self) -> None:
        if not self.factor >= 1.0:
            raise ValueError(f"throttle factor must be >= 1.0, got {self.factor}")


DEFAULT_UNIT_MS = 0.001
DEFAULT_LATENCY_MS = 0.1


def virtual_exchange_stall(sender_ready_t: float, receiver_ready_t: float, latency: float) -> float:
    """Wait the receiver sees for data sent at sender_ready_t.

    The frame lands at sender_ready_t + latency; a receiver that shows up
    later finds it already buffered and stalls zero.
    """
    return max(0.0, sender_ready_t + latency - receiver_ready_t)


def busy_spin_ms(ms: float) -> None:
    """Burn CPU (not sleep) for the given number of milliseconds."""
    deadline = time.perf_counter() + ms / 1000.0
    while time.perf_counter() < deadline:
        pass


def apply_throttle(base_cost_units: float, cfg: ThrottleConfig, mode: str = "virtual") -> float:
    """Scale one step's cost by the throttle factor.

    Virtual mode is pure arithmetic: returns base * factor.  Real mode
    treats base_cost_units as measured milliseconds, burns the extra
    (factor - 1) share on a calibrated busy loop, and returns the total.
    """
    if mode == "virtual":
        return base_cost_units * cfg.factor
    if mode == "real":
        extra = base_cost_units * (cfg.factor - 1.0)
        if extra > 0:
            busy_spin_ms(extra)
        return base_cost_units * cfg.factor
    raise ValueError(f"unknown throttle mode {mode!r}")


class RealClock:
    """Wall-clock measurement with busy-loop throttling of compute steps."""

    mode = "real"

    def __init__(self, throttle: ThrottleConfig | None = None):
        self.throttle = throttle or ThrottleConfig()

    def start(self) -> float:
        return time.perf_counter()

    def end_compute(self, t_start: float, units: float = 0.0) -> float:
        """Milliseconds for the step that began at t_start, throttled."""
        measured = (time.perf_counter() - t_start) * 1000.0
        return apply_throttle(measured, self.throttle, "real")

    @property
    def ready_ts(self) -> None:
        return None


class VirtualClock:
    """Deterministic simulated clock; communication is a layer barrier."""

    mode = "virtual"

    def __init__(
        self,
        throttle: ThrottleConfig | None = None,
        latency_ms: float = DEFAULT_LATENCY_MS,
        unit_ms: float = DEFAULT_UNIT_MS,
    ):
        if latency_ms < 0:
            raise ValueError("latency must be nonnegative")
        self.throttle = throttle or ThrottleConfig()
        self.latency_ms = latency_ms
        self.unit_ms = unit_ms
        self.t = 0.0

    def reset(self) -> None:
        self.t = 0.0

    def charge(self, units: float) -> float:
        """Advance for a compute step of `units` gate-units; returns ms."""
        dt = apply_throttle(units * self.unit_ms, self.throttle, "virtual")
        self.t += dt
        return dt

    @property
    def ready_ts(self) -> float:
        return self.t

    def exchange(self, peer_ready_t: float) -> float:
        """Advance through one layer exchange; returns the stall in ms.

        Both parties land on max(ready) + latency.  The stall is at least
        the link latency even when the peer sent early, so the barrier
        cost is always attributed and the two clocks stay aligned.
        """
        stall = max(
            virtual_exchange_stall(peer_ready_t, self.t, self.latency_ms),
            self.latency_ms,
        )
        self.t += stall
        return stall
