"""Hot share-evaluation kernels.

Two interchangeable backends produce bit-identical wire values:

* numba: one jitted loop per task.  Local gates inside a layer can feed
  each other (addition trees, XOR chains ride their producers' layer), so
  the loop walks gate ids in order and needs no grouping.
* numpy: pure vectorized fallback.  Same-layer dependencies are handled
  by evaluating depth groups (precomputed by the execution plan) one at a
  time, each group being internally independent.

Selection, once at import: TWOPC_BACKEND=numpy forces the fallback and
never imports numba; TWOPC_BACKEND=numba requires numba and fails loudly
without it; unset picks numba when importable.
"""

from __future__ import annotations

import os

import numpy as np

# gate kind codes, kept in sync with circuit.GateKind (asserted in tests)
K_CONST_ZERO = 2
K_CONST_ONE = 3
K_ADD = 4
K_XOR = 6
K_NOT = 8


def _pick_backend() -> str:
    choice = os.environ.get("TWOPC_BACKEND", "").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"TWOPC_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise ImportError("TWOPC_BACKEND=numba but numba is not importable")
        return "numpy"
    return "numba"


BACKEND = _pick_backend()
USING_NUMBA = BACKEND == "numba"


def local_eval_arith_numpy(wires, kind, in0, in1, groups, mask, c_one):
    for ids in groups:
        k = kind[ids]
        adds = ids[k == K_ADD]
        if adds.size:
            wires[adds] = (wires[in0[adds]] + wires[in1[adds]]) & mask
        zs = ids[k == K_CONST_ZERO]
        if zs.size:
            wires[zs] = 0
        os_ = ids[k == K_CONST_ONE]
        if os_.size:
            wires[os_] = c_one


def local_eval_bool_numpy(wires, kind, in0, in1, groups, c_one):
    for ids in groups:
        k = kind[ids]
        xors = ids[k == K_XOR]
        if xors.size:
            wires[xors] = wires[in0[xors]] ^ wires[in1[xors]]
        nots = ids[k == K_NOT]
        if nots.size:
            # flipping is party 0's job; party 1 passes its share through
            wires[nots] = wires[in0[nots]] ^ c_one
        zs = ids[k == K_CONST_ZERO]
        if zs.size:
            wires[zs] = 0
        os_ = ids[k == K_CONST_ONE]
        if os_.size:
            wires[os_] = c_one


def masks_arith_numpy(wires, src0, src1, a, b, mask):
    d = (wires[src0] - a) & mask
    e = (wires[src1] - b) & mask
    return d, e


def masks_bool_numpy(wires, src0, src1, a, b):
    return wires[src0] ^ a, wires[src1] ^ b


def finish_arith_numpy(d, e, a, b, c, party, mask):
    z = (d * b + e * a + c) & mask
    if party == 1:
        z = (z + d * e) & mask
    return z


def finish_bool_numpy(d, e, a, b, c, party):
    z = (d & b) ^ (e & a) ^ c
    if party == 1:
        z ^= d & e
    return z


if USING_NUMBA:
    from numba import njit

    @njit(cache=True, nogil=True)
    def _local_arith_nb(wires, kind, in0, in1, ids, mask, c_one):
        for t in range(ids.size):
            g = ids[t]
            k = kind[g]
            if k == 4:
                wires[g] = (wires[in0[g]] + wires[in1[g]]) & mask
            elif k == 2:
                wires[g] = 0
            elif k == 3:
                wires[g] = c_one

    @njit(cache=True, nogil=True)
    def _local_bool_nb(wires, kind, in0, in1, ids, c_one):
        for t in range(ids.size):
            g = ids[t]
            k = kind[g]
            if k == 6:
                wires[g] = wires[in0[g]] ^ wires[in1[g]]
            elif k == 8:
                wires[g] = wires[in0[g]] ^ c_one
            elif k == 2:
                wires[g] = 0
            elif k == 3:
                wires[g] = c_one

    @njit(cache=True, nogil=True)
    def _masks_arith_nb(wires, src0, src1, a, b, mask):
        n = src0.size
        d = np.empty(n, dtype=np.uint64)
        e = np.empty(n, dtype=np.uint64)
        for i in range(n):
            d[i] = (wires[src0[i]] - a[i]) & mask
            e[i] = (wires[src1[i]] - b[i]) & mask
        return d, e

    @njit(cache=True, nogil=True)
    def _masks_bool_nb(wires, src0, src1, a, b):
        n = src0.size
        d = np.empty(n, dtype=np.uint8)
        e = np.empty(n, dtype=np.uint8)
        for i in range(n):
            d[i] = wires[src0[i]] ^ a[i]
            e[i] = wires[src1[i]] ^ b[i]
        return d, e

    @njit(cache=True, nogil=True)
    def _finish_arith_nb(d, e, a, b, c, party, mask):
        n = d.size
        z = np.empty(n, dtype=np.uint64)
        for i in range(n):
            v = (d[i] * b[i] + e[i] * a[i] + c[i]) & mask
            if party == 1:
                v = (v + d[i] * e[i]) & mask
            z[i] = v
        return z

    @njit(cache=True, nogil=True)
    def _finish_bool_nb(d, e, a, b, c, party):
        n = d.size
        z = np.empty(n, dtype=np.uint8)
        for i in range(n):
            v = (d[i] & b[i]) ^ (e[i] & a[i]) ^ c[i]
            if party == 1:
                v ^= d[i] & e[i]
            z[i] = v
        return z

    def local_eval_arith(wires, kind, in0, in1, ids, groups, mask, c_one):
        _local_arith_nb(wires, kind, in0, in1, ids, mask, c_one)

    def local_eval_bool(wires, kind, in0, in1, ids, groups, c_one):
        _local_bool_nb(wires, kind, in0, in1, ids, c_one)

    def masks_arith(wires, src0, src1, a, b, mask):
        return _masks_arith_nb(wires, src0, src1, a, b, mask)

    def masks_bool(wires, src0, src1, a, b):
        return _masks_bool_nb(wires, src0, src1, a, b)

    def finish_arith(d, e, a, b, c, party, mask):
        return _finish_arith_nb(d, e, a, b, c, party, mask)

    def finish_bool(d, e, a, b, c, party):
        return _finish_bool_nb(d, e, a, b, c, party)

    def warmup():
        """Force jit compilation so timed regions never pay for it."""
        w = np.zeros(4, dtype=np.uint64)
        k = np.array([4, 4, 2, 3], dtype=np.uint8)
        idx = np.array([0, 0, 0, 0], dtype=np.int64)
        ids = np.arange(4, dtype=np.int64)
        one = np.uint64(1)
        _local_arith_nb(w, k, idx, idx, ids, np.uint64(15), one)
        _masks_arith_nb(w, ids, ids, w, w, np.uint64(15))
        _finish_arith_nb(w, w, w, w, w, 1, np.uint64(15))
        wb = np.zeros(4, dtype=np.uint8)
        kb = np.array([6, 8, 2, 3], dtype=np.uint8)
        _local_bool_nb(wb, kb, idx, idx, ids, np.uint8(1))
        _masks_bool_nb(wb, ids, ids, wb, wb)
        _finish_bool_nb(wb, wb, wb, wb, wb, 1)

else:

    def local_eval_arith(wires, kind, in0, in1, ids, groups, mask, c_one):
        local_eval_arith_numpy(wires, kind, in0, in1, groups, mask, c_one)

    def local_eval_bool(wires, kind, in0, in1, ids, groups, c_one):
        local_eval_bool_numpy(wires, kind, in0, in1, groups, c_one)

    masks_arith = masks_arith_numpy
    masks_bool = masks_bool_numpy
    finish_arith = finish_arith_numpy
    finish_bool = finish_bool_numpy

    def warmup():
        pass
