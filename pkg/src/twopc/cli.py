"""Command-line benchmark front end.

Three roles: `--role loopback` runs both parties in one process,
`--role 1` listens for a peer, `--role 0` dials one.  The virtual clock
is only meaningful when both parties share a process, so it is loopback
only; two-host runs always measure wall time.
"""

from __future__ import annotations

import argparse
import sys

from .circuit import dump_circuit
from .profiling import (
    SweepError,
    aggregate,
    build_app_circuit,
    default_inputs,
    deal_pools,
    render_report,
    run_loopback_experiment,
    sweep,
    sweep_csv,
    SWEEP_HEADER,
)
from .runtime import (
    HandshakeError,
    ProtocolError,
    Session,
    TcpTransport,
    build_exec_plan,
    params_for,
)
from .circuit import eval_plaintext
from . import _kernels as kernels
from .sharing import RingSpec
from .timing import DEFAULT_LATENCY_MS, RealClock, ThrottleConfig
from .triples import TripleExhausted, load_pool

RIPPLE_WARN_BITS = 1024


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="twopc-bench",
        description="Benchmark the two-party online phase on one box or across two.",
    )
    p.add_argument("--role", required=True, choices=["0", "1", "loopback"],
                   help="party index for two-host runs, or loopback for both in-process")
    p.add_argument("--app", choices=["innerproduct", "millionaire"],
                   default="innerproduct")
    p.add_argument("--size", type=int, default=None,
                   help="vector length (innerproduct) or comparison width (millionaire)")
    p.add_argument("--bitlen", type=int, default=None,
                   help="ring bit length for innerproduct; for millionaire this is "
                        "the comparison width, same knob as --size")
    p.add_argument("--variant", choices=["ripple", "tree"], default="tree",
                   help="comparison circuit shape (millionaire only)")
    p.add_argument("--connect", metavar="HOST:PORT", default=None,
                   help="peer address (role 0)")
    p.add_argument("--listen", metavar="PORT", type=int, default=None,
                   help="port to accept the peer on (role 1)")
    p.add_argument("--throttle", default=None, metavar="F|F0,F1",
                   help="slow-down factor >= 1; loopback takes a pair F0,F1")
    p.add_argument("--clock", choices=["real", "virtual"], default="real")
    p.add_argument("--latency-ms", type=float, default=None,
                   help="simulated one-way latency (virtual clock only)")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--format", dest="fmt", choices=["table", "csv", "json"],
                   default="table")
    p.add_argument("--sweep", metavar="LO:HI", default=None,
                   help="run sizes 2**LO .. 2**HI (loopback only)")
    p.add_argument("--time-input-sharing", action="store_true",
                   help="include input-share distribution in the timed region")
    p.add_argument("--dump-circuit", metavar="PATH", default=None,
                   help="write the built circuit as text before running")
    p.add_argument("--triples", metavar="PATH", default=None,
                   help="load correlated randomness from files instead of dealing "
                        "(loopback reads PATH.p0 and PATH.p1)")
    return p


class RunConfig:
    """Validated, normalized run settings."""

    def __init__(self, ns: argparse.Namespace, parser: argparse.ArgumentParser):
        err = parser.error
        self.role = ns.role
        self.app = ns.app
        self.variant = ns.variant if ns.app == "millionaire" else None
        self.clock = ns.clock
        self.reps = ns.reps
        self.seed = ns.seed
        self.fmt = ns.fmt
        self.time_input_sharing = ns.time_input_sharing
        self.dump_path = ns.dump_circuit
        self.triples_path = ns.triples

        if self.reps < 1:
            err("--reps must be at least 1")
        if self.seed < 0:
            err("--seed must be nonnegative")

        # connection flags must match the role
        if self.role == "0":
            if ns.connect is None:
                err("role 0 requires --connect HOST:PORT")
            if ns.listen is not None:
                err("--listen belongs to role 1")
        elif self.role == "1":
            if ns.listen is None:
                err("role 1 requires --listen PORT")
            if ns.connect is not None:
                err("--connect belongs to role 0")
        else:
            if ns.connect is not None or ns.listen is not None:
                err("loopback mode takes neither --connect nor --listen")
        self.connect = None
        if ns.connect is not None:
            host, sep, port = ns.connect.rpartition(":")
            if not sep or not host or not port.isdigit():
                err("--connect must look like HOST:PORT")
            self.connect = (host, int(port))
        self.listen = ns.listen

        if self.clock == "virtual" and self.role != "loopback":
            err("--clock virtual needs --role loopback; two-host runs measure wall time")
        if ns.latency_ms is not None and self.clock != "virtual":
            err("--latency-ms only applies to --clock virtual")
        self.latency_ms = ns.latency_ms if ns.latency_ms is not None else DEFAULT_LATENCY_MS

        self.throttles = self._parse_throttle(ns.throttle, err)

        # one size knob per app
        if self.app == "millionaire":
            if ns.size is not None and ns.bitlen is not None and ns.size != ns.bitlen:
                err("--size and --bitlen are the same knob for millionaire; "
                    f"got {ns.size} and {ns.bitlen}")
            self.size = ns.size if ns.size is not None else (
                ns.bitlen if ns.bitlen is not None else 32)
            self.bitlen = 1
            if self.size < 1:
                err("comparison width must be at least 1")
        else:
            self.size = ns.size if ns.size is not None else 128
            self.bitlen = ns.bitlen if ns.bitlen is not None else 16
            if self.size < 1:
                err("--size must be at least 1")
            if not 1 <= self.bitlen <= 64:
                err("--bitlen must be in 1..64")

        self.sweep = None
        if ns.sweep is not None:
            if self.role != "loopback":
                err("--sweep runs in loopback mode only")
            lo, sep, hi = ns.sweep.partition(":")
            if not sep or not lo.isdigit() or not hi.isdigit():
                err("--sweep must look like LO:HI with integer exponents")
            self.sweep = (int(lo), int(hi))
            if self.sweep[0] > self.sweep[1]:
                err("--sweep range must satisfy LO <= HI")

        if (self.app == "millionaire" and self.variant == "ripple"
                and self.size >= RIPPLE_WARN_BITS):
            print(
                f"warning: ripple comparison at width {self.size} needs "
                f"{self.size + 1} communication rounds; tree needs far fewer",
                file=sys.stderr,
            )

    @staticmethod
    def _parse_throttle(raw, err):
        if raw is None:
            return (1.0, 1.0)
        parts = raw.split(",")
        if len(parts) > 2:
            err("--throttle takes one factor or a pair F0,F1")
        try:
            factors = [float(x) for x in parts]
        except ValueError:
            err(f"--throttle must be numeric, got {raw!r}")
        if any(f < 1.0 for f in factors):
            err("--throttle factors must be >= 1.0")
        return tuple(factors)


def parse_config(argv) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = RunConfig(ns, parser)
    # pair/single throttle shape depends on the role
    if cfg.role == "loopback":
        if len(cfg.throttles) == 1:
            parser.error("loopback needs a pair: --throttle F0,F1")
    else:
        if len(cfg.throttles) == 2 and cfg.throttles[0] != cfg.throttles[1]:
            parser.error("two-host mode takes a single --throttle for this party")
        cfg.throttles = (cfg.throttles[0], cfg.throttles[0])
    return cfg


def _maybe_dump(cfg) -> None:
    if cfg.dump_path:
        c = build_app_circuit(cfg.app, cfg.size, cfg.bitlen, cfg.variant)
        with open(cfg.dump_path, "w") as fh:
            fh.write(dump_circuit(c))


def _load_pool_pair(cfg, plan):
    p0 = load_pool(cfg.triples_path + ".p0")
    p1 = load_pool(cfg.triples_path + ".p1")
    need = plan.n_mul if plan.circuit.world == "arithmetic" else plan.n_and
    for pool in (p0, p1):
        if pool.size < need:
            raise TripleExhausted(
                f"pool holds {pool.size} triples, one run needs {need}"
            )
    return p0, p1


def run_loopback_cmd(cfg: RunConfig) -> int:
    _maybe_dump(cfg)
    pools = None
    if cfg.triples_path:
        plan = build_exec_plan(build_app_circuit(cfg.app, cfg.size, cfg.bitlen, cfg.variant))
        pools = _load_pool_pair(cfg, plan)
    report, info = run_loopback_experiment(
        cfg.app, cfg.size, bitlen=cfg.bitlen, variant=cfg.variant,
        throttles=cfg.throttles, clock=cfg.clock, latency_ms=cfg.latency_ms,
        seed=cfg.seed, reps=cfg.reps, time_input_sharing=cfg.time_input_sharing,
        pools_override=pools,
    )
    sys.stdout.write(render_report(report, cfg.fmt))
    if not info.verified:
        print("outputs did not match the plaintext reference", file=sys.stderr)
        return 1
    return 0


def run_sweep_cmd(cfg: RunConfig) -> int:
    lo, hi = cfg.sweep
    try:
        rows = sweep(
            cfg.app, lo, hi, bitlen=cfg.bitlen, variant=cfg.variant,
            throttles=cfg.throttles, clock=cfg.clock, latency_ms=cfg.latency_ms,
            seed=cfg.seed, reps=cfg.reps,
        )
    except SweepError as exc:
        if exc.rows:
            sys.stdout.write(sweep_csv(exc.rows))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if cfg.fmt == "json":
        import json
        cols = SWEEP_HEADER.split(",")
        doc = [{c: getattr(r, c) for c in cols} for r in rows]
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        sys.stdout.write(sweep_csv(rows))
    return 0


def run_tcp_cmd(cfg: RunConfig) -> int:
    _maybe_dump(cfg)
    party = int(cfg.role)
    circuit = build_app_circuit(cfg.app, cfg.size, cfg.bitlen, cfg.variant)
    plan = build_exec_plan(circuit)
    params = params_for(cfg.app, circuit, cfg.size, cfg.variant, cfg.seed)
    inputs0, inputs1 = default_inputs(circuit, cfg.seed)
    own_inputs = (inputs0, inputs1)[party]
    expected = eval_plaintext(circuit, inputs0, inputs1)
    kernels.warmup()

    file_pool = load_pool(cfg.triples_path) if cfg.triples_path else None

    if party == 1:
        transport = TcpTransport.listen(cfg.listen)
    else:
        transport = TcpTransport.connect(*cfg.connect)
    try:
        per_rep = []
        ok = True
        for rep in range(-1, cfg.reps):
            if file_pool is not None:
                file_pool.reset()
                pool = file_pool
            else:
                pool = deal_pools(plan, cfg.seed, rep)[party]
            clock = RealClock(ThrottleConfig(factor=cfg.throttles[party]))
            s = Session(party, transport, plan, params, pool=pool, clock=clock,
                        time_input_sharing=cfg.time_input_sharing)
            s.handshake()
            s.distribute_inputs(own_inputs)
            outputs, timings = s.run_online()
            if rep < 0:
                continue  # warmup repetition stays out of the numbers
            if outputs != expected:
                ok = False
            per_rep.append([timings])
        meta = {
            "app": cfg.app, "world": circuit.world, "size": cfg.size,
            "l": circuit.ring.bit_length if circuit.ring else 1,
            "variant": cfg.variant or "-", "clock": cfg.clock, "latency_ms": "-",
            "throttle0": cfg.throttles[0], "throttle1": cfg.throttles[1],
            "seed": cfg.seed, "backend": kernels.BACKEND, "party": party,
        }
        report = aggregate(per_rep, meta)
        sys.stdout.write(render_report(report, cfg.fmt))
    finally:
        transport.close()
    if not ok:
        print("outputs did not match the plaintext reference", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    cfg = parse_config(argv)
    try:
        if cfg.sweep is not None:
            return run_sweep_cmd(cfg)
        if cfg.role == "loopback":
            return run_loopback_cmd(cfg)
        return run_tcp_cmd(cfg)
    except (ProtocolError, HandshakeError, TripleExhausted, ConnectionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
