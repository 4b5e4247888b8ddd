"""Per-step reports, the repetition engine, and size sweeps.

A report aggregates repeated runs cell by cell: mean and sample standard
deviation per (step, party).  The warmup repetition runs the same code
path but is never recorded, so jit compilation and allocator warmup stay
out of the numbers.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field

from . import _kernels as kernels
from .circuit import (
    Circuit,
    WORLD_ARITH,
    WORLD_BOOL,
    build_inner_product,
    build_millionaire,
    eval_plaintext,
)
from .runtime import (
    ExecPlan,
    PartyResult,
    SessionParams,
    build_exec_plan,
    params_for,
    run_lockstep,
    run_threaded_pair,
)
from .sharing import RingSpec, SeededRng, subseed, unpack_bits
from .timing import (
    DEFAULT_LATENCY_MS,
    StepTimings,
    ThrottleConfig,
    VirtualClock,
    RealClock,
)
from .triples import deal_arith_triples, deal_bool_triples

METRIC_KEYS = (
    "local_gates_ms",
    "interactive_gate_ms",
    "layer_finish_ms",
    "communication_ms",
    "online_phase_ms",
)

_FIXED_LABELS = (
    "Interactive gate(ms)",
    "Layer finish(ms)",
    "Communication(ms)",
    "Online phase(ms)",
)


def metric_labels(world: str) -> tuple[str, ...]:
    first = "Arithmetic local gates(ms)" if world == WORLD_ARITH else "Boolean local gates(ms)"
    return (first,) + _FIXED_LABELS


@dataclass
class OnlineReport:
    """Cellwise mean and sample stddev over repetitions, plus run metadata."""

    meta: dict
    parties: list[int]
    means: list[list[float]]    # [party][metric], metric order = METRIC_KEYS
    stddevs: list[list[float]]
    reps: int

    def labels(self) -> tuple[str, ...]:
        return metric_labels(self.meta["world"])

    def cell(self, party: int, key: str) -> float:
        return self.means[self.parties.index(party)][METRIC_KEYS.index(key)]

    def cell_std(self, party: int, key: str) -> float:
        return self.stddevs[self.parties.index(party)][METRIC_KEYS.index(key)]


def aggregate(per_rep: list[list[StepTimings]], meta: dict) -> OnlineReport:
    """Fold one StepTimings list per repetition into a report."""
    if not per_rep:
        raise ValueError("no repetitions to aggregate")
    parties = [t.party for t in per_rep[0]]
    for rep in per_rep:
        if [t.party for t in rep] != parties:
            raise ValueError("inconsistent party lists across repetitions")
    means = []
    stds = []
    for idx in range(len(parties)):
        row_means = []
        row_stds = []
        for key in METRIC_KEYS:
            samples = [getattr(rep[idx], key) for rep in per_rep]
            row_means.append(statistics.fmean(samples))
            row_stds.append(statistics.stdev(samples) if len(samples) > 1 else 0.0)
        means.append(row_means)
        stds.append(row_stds)
    return OnlineReport(meta=dict(meta), parties=parties, means=means, stddevs=stds, reps=len(per_rep))


# ---------------------------------------------------------------------------
# rendering

def _meta_line(meta: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in meta.items())


def render_table(report: OnlineReport) -> str:
    labels = report.labels()
    width = max(len(s) for s in labels) + 2
    head = [f"P{p} mean" for p in report.parties]
    for i, p in enumerate(report.parties):
        head.insert(2 * i + 1, f"P{p} stddev")
    lines = [f"# {_meta_line(report.meta)} reps={report.reps}"]
    lines.append("step".ljust(width) + "".join(h.rjust(12) for h in head))
    for m, label in enumerate(labels):
        cells = []
        for i in range(len(report.parties)):
            cells.append(f"{report.means[i][m]:.3f}".rjust(12))
            cells.append(f"{report.stddevs[i][m]:.3f}".rjust(12))
        lines.append(label.ljust(width) + "".join(cells))
    return "\n".join(lines) + "\n"


def render_table_pair(small: OnlineReport, large: OnlineReport) -> str:
    """Two sizes side by side, means only."""
    if small.meta["world"] != large.meta["world"]:
        raise ValueError("reports compare different worlds")
    labels = small.labels()
    width = max(len(s) for s in labels) + 2
    cols = []
    for rep in (small, large):
        for p in rep.parties:
            cols.append((rep, rep.parties.index(p), f"P{p} n={rep.meta['size']}"))
    lines = [
        f"# small: {_meta_line(small.meta)} reps={small.reps}",
        f"# large: {_meta_line(large.meta)} reps={large.reps}",
        "step".ljust(width) + "".join(c[2].rjust(14) for c in cols),
    ]
    for m, label in enumerate(labels):
        cells = [f"{rep.means[i][m]:.3f}".rjust(14) for rep, i, _ in cols]
        lines.append(label.ljust(width) + "".join(cells))
    return "\n".join(lines) + "\n"


def render_csv(report: OnlineReport) -> str:
    lines = [f"# {k}={v}" for k, v in report.meta.items()]
    lines.append(f"# reps={report.reps}")
    head = ["metric"]
    for p in report.parties:
        head += [f"party{p}_mean", f"party{p}_stddev"]
    lines.append(",".join(head))
    for m, label in enumerate(report.labels()):
        row = [label]
        for i in range(len(report.parties)):
            row += [repr(report.means[i][m]), repr(report.stddevs[i][m])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_json(report: OnlineReport) -> str:
    doc = {
        "meta": report.meta,
        "reps": report.reps,
        "parties": report.parties,
        "labels": list(report.labels()),
        "metric_keys": list(METRIC_KEYS),
        "means": report.means,
        "stddevs": report.stddevs,
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def report_from_json(text: str) -> OnlineReport:
    doc = json.loads(text)
    return OnlineReport(
        meta=doc["meta"],
        parties=doc["parties"],
        means=doc["means"],
        stddevs=doc["stddevs"],
        reps=doc["reps"],
    )


def render_report(report: OnlineReport, fmt: str) -> str:
    if fmt == "table":
        return render_table(report)
    if fmt == "csv":
        return render_csv(report)
    if fmt == "json":
        return render_json(report)
    raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# experiment engine

def build_app_circuit(app: str, size: int, bitlen: int, variant: str | None) -> Circuit:
    if app == "innerproduct":
        return build_inner_product(size, RingSpec(bitlen))
    if app == "millionaire":
        return build_millionaire(size, variant or "tree")
    raise ValueError(f"unknown app {app!r}")


def default_inputs(circuit: Circuit, seed: int) -> tuple[list[int], list[int]]:
    """Deterministic pseudo-random inputs; each party draws its own stream."""
    out = []
    for party, ids in ((0, circuit.inputs0), (1, circuit.inputs1)):
        rng = SeededRng(subseed(seed, "inputs", party))
        n = len(ids)
        if circuit.world == WORLD_ARITH:
            out.append([int(v) for v in rng.ring_elements(n, circuit.ring)])
        else:
            out.append([int(v) for v in unpack_bits(rng.bits(n), n)])
    return out[0], out[1]


def deal_pools(plan: ExecPlan, seed: int, rep: int):
    """Fresh correlated randomness for one repetition, both parties."""
    triple_seed = subseed(seed, "triples.rep", rep)
    if plan.circuit.world == WORLD_ARITH:
        return deal_arith_triples(plan.n_mul, plan.circuit.ring, triple_seed)
    return deal_bool_triples(plan.n_and, triple_seed)


def _clock_pair(clock: str, throttles, latency_ms: float):
    cfg0 = ThrottleConfig(factor=throttles[0])
    cfg1 = ThrottleConfig(factor=throttles[1])
    if clock == "virtual":
        return VirtualClock(cfg0, latency_ms), VirtualClock(cfg1, latency_ms)
    return RealClock(cfg0), RealClock(cfg1)


@dataclass
class RunInfo:
    outputs: list[int]
    expected: list[int]
    verified: bool
    transcripts: tuple[bytes, bytes] | None = None
    frames_per_direction: int = 0
    payload_bytes_per_direction: int = 0


def run_loopback_experiment(
    app: str,
    size: int,
    *,
    bitlen: int = 16,
    variant: str | None = None,
    throttles=(1.0, 1.0),
    clock: str = "real",
    latency_ms: float = DEFAULT_LATENCY_MS,
    seed: int = 1,
    reps: int = 10,
    time_input_sharing: bool = False,
    pools_override=None,
    record_transcript: bool = False,
    warmup: bool = True,
) -> tuple[OnlineReport, RunInfo]:
    """Run both parties in-process for `reps` timed repetitions.

    Virtual-clock runs are driven in deterministic lockstep; real-clock
    runs use two threads so the parties genuinely overlap.  One untimed
    warmup repetition always runs first.  Returns the aggregated report
    and details of the final repetition.
    """
    circuit = build_app_circuit(app, size, bitlen, variant)
    plan = build_exec_plan(circuit)
    params = params_for(app, circuit, size, variant, seed)
    inputs0, inputs1 = default_inputs(circuit, seed)
    expected = eval_plaintext(circuit, inputs0, inputs1)
    if warmup:
        kernels.warmup()
    driver = run_lockstep if clock == "virtual" else run_threaded_pair

    def one_rep(rep_idx: int, record: bool) -> tuple[PartyResult, PartyResult]:
        if pools_override is not None:
            pool0, pool1 = pools_override
            pool0.reset()
            pool1.reset()
        else:
            pool0, pool1 = deal_pools(plan, seed, rep_idx)
        clk0, clk1 = _clock_pair(clock, throttles, latency_ms)
        return driver(
            plan, params, inputs0, inputs1,
            pool0=pool0, pool1=pool1, clock0=clk0, clock1=clk1,
            record_transcript=record, time_input_sharing=time_input_sharing,
        )

    if warmup:
        one_rep(-1, False)

    per_rep = []
    last = None
    for rep in range(reps):
        r0, r1 = one_rep(rep, record_transcript)
        if r0.outputs != expected or r1.outputs != expected:
            raise RuntimeError(
                f"outputs diverged from the reference on repetition {rep}: "
                f"{r0.outputs} / {r1.outputs} vs {expected}"
            )
        per_rep.append([r0.timings, r1.timings])
        last = (r0, r1)

    meta = {
        "app": app,
        "world": circuit.world,
        "size": size,
        "l": circuit.ring.bit_length if circuit.ring else 1,
        "variant": variant or "-",
        "clock": clock,
        "latency_ms": latency_ms if clock == "virtual" else "-",
        "throttle0": throttles[0],
        "throttle1": throttles[1],
        "seed": seed,
        "backend": kernels.BACKEND,
    }
    report = aggregate(per_rep, meta)
    s0, s1 = last[0].session, last[1].session
    info = RunInfo(
        outputs=last[0].outputs,
        expected=expected,
        verified=last[0].outputs == expected and last[1].outputs == expected,
        transcripts=(
            (b"".join(s0.sent_log), b"".join(s1.sent_log)) if record_transcript else None
        ),
        frames_per_direction=s0.frames_sent,
        payload_bytes_per_direction=s0.payload_bytes_sent,
    )
    return report, info


# ---------------------------------------------------------------------------
# size sweeps

SWEEP_HEADER = "size,party0_comm_ms,party1_comm_ms,party0_online_ms,party1_online_ms"


@dataclass
class SweepRow:
    size: int
    party0_comm_ms: float
    party1_comm_ms: float
    party0_online_ms: float
    party1_online_ms: float


class SweepError(RuntimeError):
    """A sweep size failed; .rows holds what completed before it."""

    def __init__(self, message: str, rows: list):
        super().__init__(message)
        self.rows = rows


def sweep(
    app: str,
    lo_exp: int,
    hi_exp: int,
    *,
    bitlen: int = 16,
    variant: str | None = None,
    throttles=(1.0, 1.0),
    clock: str = "virtual",
    latency_ms: float = DEFAULT_LATENCY_MS,
    seed: int = 1,
    reps: int = 10,
) -> list[SweepRow]:
    """One experiment per power-of-two size from 2**lo_exp to 2**hi_exp."""
    if lo_exp > hi_exp or lo_exp < 0:
        raise ValueError("sweep range must satisfy 0 <= LO <= HI")
    rows: list[SweepRow] = []
    for exp in range(lo_exp, hi_exp + 1):
        size = 1 << exp
        try:
            report, _ = run_loopback_experiment(
                app, size, bitlen=bitlen, variant=variant, throttles=throttles,
                clock=clock, latency_ms=latency_ms, seed=seed, reps=reps,
            )
        except Exception as exc:
            raise SweepError(f"sweep failed at size {size}: {exc}", rows) from exc
        rows.append(
            SweepRow(
                size=size,
                party0_comm_ms=report.cell(0, "communication_ms"),
                party1_comm_ms=report.cell(1, "communication_ms"),
                party0_online_ms=report.cell(0, "online_phase_ms"),
                party1_online_ms=report.cell(1, "online_phase_ms"),
            )
        )
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(
            f"{r.size},{r.party0_comm_ms!r},{r.party1_comm_ms!r},"
            f"{r.party0_online_ms!r},{r.party1_online_ms!r}"
        )
    return "\n".join(lines) + "\n"
