#!/usr/bin/env python3
"""Compare the jit and pure-numpy gate kernels on protocol-shaped workloads.

Runs itself twice as a subprocess, once per TWOPC_BACKEND value, because the
backend is fixed at import time. Each worker times the same workloads and the
parent prints a side-by-side table with speedups.

Usage: python3 benchmarks/kernel_bench.py [--iters N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, iters: int) -> float:
    """Median seconds per call over iters runs, after two warmup calls."""
    fn()
    fn()
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    samples.sort()
    return samples[len(samples) // 2]


def run_workloads(iters: int) -> dict:
    from twopc import _kernels as K
    from twopc.circuit import build_millionaire, build_inner_product
    from twopc.runtime import build_exec_plan, params_for, run_lockstep
    from twopc.sharing import RingSpec
    from twopc.triples import deal_arith_triples, deal_bool_triples

    K.warmup()
    mask = np.uint64((1 << 16) - 1)
    results = {}

    # one flat layer of adds: the friendly case for vectorization
    n = 1 << 17
    wires = np.zeros(2 + n, dtype=np.uint64)
    wires[0], wires[1] = 5, 9
    kind = np.full(2 + n, 4, dtype=np.uint8)
    in0 = np.zeros(2 + n, dtype=np.int64)
    in1 = np.ones(2 + n, dtype=np.int64)
    ids = np.arange(2, 2 + n, dtype=np.int64)
    groups = [ids]
    results["arith local, 131072-wide add layer"] = _time(
        lambda: K.local_eval_arith(wires, kind, in0, in1, ids, groups, mask, np.uint64(1)),
        iters)

    # a dependency chain: every gate is its own depth group
    n = 1 << 14
    wires = np.zeros(1 + n, dtype=np.uint64)
    kind = np.full(1 + n, 4, dtype=np.uint8)
    in0 = np.arange(-1, n, dtype=np.int64)
    in0[0] = 0
    in1 = np.zeros(1 + n, dtype=np.int64)
    ids = np.arange(1, 1 + n, dtype=np.int64)
    chain_groups = [np.array([g], dtype=np.int64) for g in ids]
    results["arith local, 16384-deep add chain"] = _time(
        lambda: K.local_eval_arith(wires, kind, in0, in1, ids, chain_groups, mask, np.uint64(1)),
        max(3, iters // 4))

    # packed-wire boolean layer, alternating xor and not
    n = 1 << 17
    bwires = np.zeros(2 + n, dtype=np.uint8)
    bkind = np.empty(2 + n, dtype=np.uint8)
    bkind[::2] = 6
    bkind[1::2] = 8
    bin0 = np.zeros(2 + n, dtype=np.int64)
    bin1 = np.ones(2 + n, dtype=np.int64)
    bids = np.arange(2, 2 + n, dtype=np.int64)
    results["bool local, 131072-wide xor/not layer"] = _time(
        lambda: K.local_eval_bool(bwires, bkind, bin0, bin1, bids, [bids], np.uint8(1)),
        iters)

    # product finish: mask opening plus the triple combination
    n = 1 << 16
    wires = np.zeros(2 * n, dtype=np.uint64)
    src0 = np.arange(n, dtype=np.int64)
    src1 = np.arange(n, 2 * n, dtype=np.int64)
    a = np.arange(n, dtype=np.uint64) & mask
    b = (a * np.uint64(3)) & mask
    c = (a * a) & mask

    def beaver():
        d, e = K.masks_arith(wires, src0, src1, a, b, mask)
        K.finish_arith(d, e, a, b, c, 1, mask)

    results["beaver masks+finish, 65536 products"] = _time(beaver, iters)

    # whole-protocol runs, loopback in one thread
    plan = build_exec_plan(build_inner_product(4096, RingSpec(16)))
    params = params_for("innerproduct", plan.circuit, 4096, None, 1)
    reps = max(5, iters // 2)
    p0, p1 = deal_arith_triples(plan.n_mul * (reps + 2), plan.circuit.ring, seed=3)
    xs, ys = [7] * 4096, [9] * 4096

    results["end to end, inner product n=4096"] = _time(
        lambda: run_lockstep(plan, params, xs, ys, pool0=p0, pool1=p1),
        reps)

    plan = build_exec_plan(build_millionaire(1024, variant="tree"))
    params = params_for("millionaire", plan.circuit, 1024, "tree", 1)
    b0, b1 = deal_bool_triples(plan.n_and * (reps + 2), seed=3)
    xb, yb = [1] * 1024, [0] * 1024
    results["end to end, millionaire 1024 bits"] = _time(
        lambda: run_lockstep(plan, params, xb, yb, pool0=b0, pool1=b1),
        reps)

    return results


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=20)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        from twopc import _kernels
        payload = {"backend": _kernels.BACKEND, "results": run_workloads(args.iters)}
        json.dump(payload, sys.stdout)
        return 0

    columns = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, TWOPC_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--iters", str(args.iters)],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{backend} worker failed:\n{proc.stderr}", file=sys.stderr)
            return 1
        payload = json.loads(proc.stdout)
        if payload["backend"] != backend:
            print(f"wanted backend {backend}, got {payload['backend']} "
                  "(is numba installed?)", file=sys.stderr)
            return 1
        columns[backend] = payload["results"]

    names = list(columns["numba"])
    width = max(len(n) for n in names)
    print(f"{'workload':<{width}}  {'numba ms':>10}  {'numpy ms':>10}  {'speedup':>8}")
    for name in names:
        t_nb = columns["numba"][name] * 1000
        t_np = columns["numpy"][name] * 1000
        print(f"{name:<{width}}  {t_nb:10.3f}  {t_np:10.3f}  {t_np / t_nb:7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
