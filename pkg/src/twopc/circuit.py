"""Layered gate circuits over an arithmetic or a Boolean world.

Gates are either local (evaluated on shares without talking to the peer)
or interactive (one round of communication per layer).  The layering rule:
inputs and constants sit at layer 0, an interactive gate sits one layer
above its deepest input, and a local gate rides the layer of its deepest
input so chains of local gates never cost a round.  round_count is the
number of layers holding at least one interactive gate; reconstruction of
outputs is itself a round, so it always adds one.

Two circuit families are built here: an inner product (multiply pairwise,
sum with an addition tree, open the total) and a greater-than comparison
of two private integers, in a bit-serial "ripple" form (one AND per bit,
one round per bit) and a divide-and-conquer "tree" form (3n-2 ANDs, depth
logarithmic in the bit width).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .sharing import RingSpec

WORLD_ARITH = "arithmetic"
WORLD_BOOL = "boolean"


class CircuitError(ValueError):
    """Raised for structurally invalid circuits."""


class GateKind(IntEnum):
    INPUT_P0 = 0
    INPUT_P1 = 1
    CONST_ZERO = 2
    CONST_ONE = 3
    ADD = 4
    MUL = 5
    XOR = 6
    AND = 7
    NOT = 8
    OUTPUT = 9


INTERACTIVE_KINDS = frozenset({GateKind.MUL, GateKind.AND, GateKind.OUTPUT})
SOURCE_KINDS = frozenset(
    {GateKind.INPUT_P0, GateKind.INPUT_P1, GateKind.CONST_ZERO, GateKind.CONST_ONE}
)

_ARITY = {
    GateKind.INPUT_P0: 0,
    GateKind.INPUT_P1: 0,
    GateKind.CONST_ZERO: 0,
    GateKind.CONST_ONE: 0,
    GateKind.ADD: 2,
    GateKind.MUL: 2,
    GateKind.XOR: 2,
    GateKind.AND: 2,
    GateKind.NOT: 1,
    GateKind.OUTPUT: 1,
}

_WORLD_KINDS = {
    WORLD_ARITH: SOURCE_KINDS | {GateKind.ADD, GateKind.MUL, GateKind.OUTPUT},
    WORLD_BOOL: SOURCE_KINDS | {GateKind.XOR, GateKind.AND, GateKind.NOT, GateKind.OUTPUT},
}


@dataclass(frozen=True)
class Gate:
    gate_id: int
    kind: GateKind
    inputs: tuple[int, ...] = ()


@dataclass
class Circuit:
    world: str
    ring: RingSpec | None
    gates: list[Gate]
    inputs0: list[int]
    inputs1: list[int]
    outputs: list[int]
    name: str = ""

    @property
    def n_gates(self) -> int:
        return len(self.gates)

    def validate(self) -> None:
        if self.world not in _WORLD_KINDS:
            raise CircuitError(f"unknown world {self.world!r}")
        if (self.world == WORLD_ARITH) != (self.ring is not None):
            raise CircuitError("arithmetic circuits need a ring, Boolean ones must not have one")
        allowed = _WORLD_KINDS[self.world]
        in0, in1, outs = [], [], []
        for idx, g in enumerate(self.gates):
            if g.gate_id != idx:
                raise CircuitError(f"gate ids must be consecutive from 0, got {g.gate_id} at {idx}")
            if g.kind not in allowed:
                raise CircuitError(f"gate {idx}: kind {g.kind.name} not valid in {self.world} world")
            if len(g.inputs) != _ARITY[g.kind]:
                raise CircuitError(
                    f"gate {idx}: {g.kind.name} takes {_ARITY[g.kind]} inputs, got {len(g.inputs)}"
                )
            for src in g.inputs:
                if not 0 <= src < idx:
                    raise CircuitError(f"gate {idx} references {src}; inputs must be earlier gates")
            if g.kind == GateKind.INPUT_P0:
                in0.append(idx)
            elif g.kind == GateKind.INPUT_P1:
                in1.append(idx)
            elif g.kind == GateKind.OUTPUT:
                outs.append(idx)
        if in0 != self.inputs0 or in1 != self.inputs1:
            raise CircuitError("input id lists must match INPUT gates in id order")
        if outs != self.outputs:
            raise CircuitError("output id list must match OUTPUT gates in id order")
        if not self.outputs:
            raise CircuitError("circuit has no outputs")
        # every output must see at least one input gate through its ancestors
        input_ids = set(self.inputs0) | set(self.inputs1)
        reaches_input = [False] * len(self.gates)
        for g in self.gates:
            if g.gate_id in input_ids:
                reaches_input[g.gate_id] = True
            else:
                reaches_input[g.gate_id] = any(reaches_input[s] for s in g.inputs)
        for o in self.outputs:
            if not reaches_input[o]:
                raise CircuitError(f"output gate {o} is not reachable from any input")


@dataclass
class LayerPlan:
    """Per-gate layer numbers plus, per layer, the gate ids split by kind.

    layers[k] = (local_ids, interactive_ids) with both lists in id order.
    Layer 0 never has interactive gates; layers 1..round_count each have
    at least one.
    """

    layer_of: list[int]
    layers: list[tuple[list[int], list[int]]]
    round_count: int


def assign_layers(c: Circuit) -> LayerPlan:
    layer_of = [0] * len(c.gates)
    for g in c.gates:
        if g.kind in SOURCE_KINDS:
            layer_of[g.gate_id] = 0
        else:
            deepest = max(layer_of[s] for s in g.inputs)
            layer_of[g.gate_id] = deepest + 1 if g.kind in INTERACTIVE_KINDS else deepest
    n_layers = max(layer_of) + 1
    layers: list[tuple[list[int], list[int]]] = [([], []) for _ in range(n_layers)]
    for g in c.gates:
        bucket = 1 if g.kind in INTERACTIVE_KINDS else 0
        layers[layer_of[g.gate_id]][bucket].append(g.gate_id)
    round_count = sum(1 for _, inter in layers if inter)
    # interactive layers must be exactly 1..round_count with no gaps
    for k, (_, inter) in enumerate(layers):
        if bool(inter) != (k > 0):
            raise CircuitError(f"layer {k} breaks the consecutive interactive-layer structure")
    return LayerPlan(layer_of, layers, round_count)


def count_interactive(c: Circuit) -> tuple[int, int, int]:
    """(MUL count, AND count, OUTPUT count)."""
    n_mul = sum(1 for g in c.gates if g.kind == GateKind.MUL)
    n_and = sum(1 for g in c.gates if g.kind == GateKind.AND)
    n_out = sum(1 for g in c.gates if g.kind == GateKind.OUTPUT)
    return n_mul, n_and, n_out


class _Builder:
    def __init__(self, world: str, ring: RingSpec | None, name: str):
        self.c = Circuit(world, ring, [], [], [], [], name)

    def add(self, kind: GateKind, *inputs: int) -> int:
        gid = len(self.c.gates)
        self.c.gates.append(Gate(gid, kind, tuple(inputs)))
        if kind == GateKind.INPUT_P0:
            self.c.inputs0.append(gid)
        elif kind == GateKind.INPUT_P1:
            self.c.inputs1.append(gid)
        elif kind == GateKind.OUTPUT:
            self.c.outputs.append(gid)
        return gid

    def finish(self) -> Circuit:
        self.c.validate()
        return self.c


def build_inner_product(n: int, spec: RingSpec) -> Circuit:
    """<x, y> over Z_{2**l}: n MULs, an ADD tree, one opened output.

    The sum accumulates in the same ring as the products, wrapping mod 2**l;
    use a wider ring if overflow matters for the workload.
    """
    if n < 1:
        raise CircuitError("inner product needs at least one element")
    b = _Builder(WORLD_ARITH, spec, f"innerproduct n={n} l={spec.bit_length}")
    xs = [b.add(GateKind.INPUT_P0) for _ in range(n)]
    ys = [b.add(GateKind.INPUT_P1) for _ in range(n)]
    level = [b.add(GateKind.MUL, x, y) for x, y in zip(xs, ys)]
    while len(level) > 1:
        nxt = [b.add(GateKind.ADD, level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    b.add(GateKind.OUTPUT, level[0])
    return b.finish()


def build_millionaire(n_bits: int, variant: str = "tree") -> Circuit:
    """GT(x, y) on two private n_bits-bit integers, bits shared LSB first.

    ripple: scan LSB to MSB keeping a running verdict; n_bits AND gates,
    each on its own layer, so n_bits + 1 rounds.
    tree: per-bit greater/equal flags merged pairwise; 3*n_bits - 2 AND
    gates, ceil(log2 n_bits) + 2 rounds for n_bits >= 2.
    """
    if n_bits < 1:
        raise CircuitError("comparison needs at least one bit")
    if variant not in ("ripple", "tree"):
        raise CircuitError(f"unknown variant {variant!r}")
    b = _Builder(WORLD_BOOL, None, f"millionaire n_bits={n_bits} variant={variant}")
    xs = [b.add(GateKind.INPUT_P0) for _ in range(n_bits)]
    ys = [b.add(GateKind.INPUT_P1) for _ in range(n_bits)]
    one = b.add(GateKind.CONST_ONE)

    if variant == "ripple":
        # gt' = x_i ^ ((x_i ^ gt) & (y_i ^ gt)); equal bits keep gt, else x_i wins
        gt = b.add(GateKind.CONST_ZERO)
        for x, y in zip(xs, ys):
            tx = b.add(GateKind.XOR, x, gt)
            ty = b.add(GateKind.XOR, y, gt)
            t = b.add(GateKind.AND, tx, ty)
            gt = b.add(GateKind.XOR, x, t)
        b.add(GateKind.OUTPUT, gt)
        return b.finish()

    # tree: leaf flags gt_i = x_i & ~y_i, eq_i = ~(x_i ^ y_i); NOT is XOR with 1
    segs = []
    for x, y in zip(xs, ys):
        ny = b.add(GateKind.XOR, y, one)
        gt = b.add(GateKind.AND, x, ny)
        xy = b.add(GateKind.XOR, x, y)
        eq = b.add(GateKind.XOR, xy, one)
        segs.append((gt, eq))
    while len(segs) > 1:
        merged = []
        for j in range(0, len(segs) - 1, 2):
            (gt_lo, eq_lo), (gt_hi, eq_hi) = segs[j], segs[j + 1]
            carry = b.add(GateKind.AND, eq_hi, gt_lo)
            gt = b.add(GateKind.XOR, gt_hi, carry)
            eq = b.add(GateKind.AND, eq_hi, eq_lo)
            merged.append((gt, eq))
        if len(segs) % 2:
            merged.append(segs[-1])
        segs = merged
    b.add(GateKind.OUTPUT, segs[0][0])
    return b.finish()


def eval_plaintext(c: Circuit, inputs0, inputs1) -> list[int]:
    """Reference evaluation on plain values, no sharing involved.

    Deliberately plain Python over ints so it shares nothing with the
    vectorized share evaluation it is used to check.
    """
    if len(inputs0) != len(c.inputs0) or len(inputs1) != len(c.inputs1):
        raise ValueError("input count mismatch")
    if c.world == WORLD_ARITH:
        mask = c.ring.mask
        for v in list(inputs0) + list(inputs1):
            if not 0 <= v <= mask:
                raise ValueError(f"{v} outside the ring")
    else:
        mask = 1
        for v in list(inputs0) + list(inputs1):
            if v not in (0, 1):
                raise ValueError("Boolean inputs must be bits")
    w = [0] * len(c.gates)
    for gid, v in zip(c.inputs0, inputs0):
        w[gid] = int(v)
    for gid, v in zip(c.inputs1, inputs1):
        w[gid] = int(v)
    for g in c.gates:
        k = g.kind
        if k in (GateKind.INPUT_P0, GateKind.INPUT_P1):
            continue
        if k == GateKind.CONST_ZERO:
            w[g.gate_id] = 0
        elif k == GateKind.CONST_ONE:
            w[g.gate_id] = 1
        elif k == GateKind.ADD:
            w[g.gate_id] = (w[g.inputs[0]] + w[g.inputs[1]]) & mask
        elif k == GateKind.MUL:
            w[g.gate_id] = (w[g.inputs[0]] * w[g.inputs[1]]) & mask
        elif k == GateKind.XOR:
            w[g.gate_id] = w[g.inputs[0]] ^ w[g.inputs[1]]
        elif k == GateKind.AND:
            w[g.gate_id] = w[g.inputs[0]] & w[g.inputs[1]]
        elif k == GateKind.NOT:
            w[g.gate_id] = 1 - w[g.inputs[0]]
        else:
            w[g.gate_id] = w[g.inputs[0]]
    return [w[o] for o in c.outputs]


def dump_circuit(c: Circuit) -> str:
    """One-line-per-gate text form: `<id> <KIND> [<in1> [<in2>]]`."""
    world = "A" if c.world == WORLD_ARITH else "B"
    l = c.ring.bit_length if c.ring is not None else 1
    lines = [
        f"world={world} l={l} inputs0={len(c.inputs0)} inputs1={len(c.inputs1)}"
        f" outputs={len(c.outputs)}"
    ]
    for g in c.gates:
        lines.append(" ".join([str(g.gate_id), g.kind.name, *map(str, g.inputs)]))
    return "\n".join(lines) + "\n"
