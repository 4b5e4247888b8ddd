import math
import random

import pytest

from twopc.circuit import (
    Circuit,
    CircuitError,
    Gate,
    GateKind,
    WORLD_ARITH,
    WORLD_BOOL,
    assign_layers,
    build_inner_product,
    build_millionaire,
    count_interactive,
    dump_circuit,
    eval_plaintext,
)
from twopc.sharing import RingSpec

L16 = RingSpec(16)


def _bits(x, n):
    return [(x >> i) & 1 for i in range(n)]


def _eval_millionaire(n_bits, variant, x, y):
    c = build_millionaire(n_bits, variant)
    return eval_plaintext(c, _bits(x, n_bits), _bits(y, n_bits))[0]


class TestInnerProduct:
    def test_gate_counts_n2(self):
        c = build_inner_product(2, L16)
        kinds = [g.kind for g in c.gates]
        assert kinds.count(GateKind.INPUT_P0) == 2
        assert kinds.count(GateKind.INPUT_P1) == 2
        assert kinds.count(GateKind.MUL) == 2
        assert kinds.count(GateKind.ADD) == 1
        assert kinds.count(GateKind.OUTPUT) == 1

    def test_gate_counts_n128(self):
        c = build_inner_product(128, L16)
        assert count_interactive(c) == (128, 0, 1)
        assert sum(1 for g in c.gates if g.kind == GateKind.ADD) == 127

    def test_n1_has_no_adds(self):
        c = build_inner_product(1, L16)
        assert sum(1 for g in c.gates if g.kind == GateKind.ADD) == 0
        assert assign_layers(c).round_count == 2

    def test_eval(self):
        c = build_inner_product(2, L16)
        assert eval_plaintext(c, [3, 5], [7, 11]) == [76]

    def test_eval_wraps(self):
        c = build_inner_product(2, L16)
        # oracle: plain big-int dot product reduced mod 2^16
        assert eval_plaintext(c, [60000, 60000], [2, 2]) == [(60000 * 2 * 2) % 65536]

    @pytest.mark.parametrize("n", [1, 2, 3, 7, 128])
    def test_eval_random_against_bigint(self, n):
        c = build_inner_product(n, L16)
        rng = random.Random(n)
        for _ in range(20):
            xs = [rng.getrandbits(16) for _ in range(n)]
            ys = [rng.getrandbits(16) for _ in range(n)]
            want = sum(a * b for a, b in zip(xs, ys)) % 65536
            assert eval_plaintext(c, xs, ys) == [want]

    @pytest.mark.parametrize("n", [1, 2, 5, 64, 1000])
    def test_always_two_rounds(self, n):
        assert assign_layers(build_inner_product(n, L16)).round_count == 2

    def test_layer_placement(self):
        c = build_inner_product(4, L16)
        plan = assign_layers(c)
        for g in c.gates:
            if g.kind == GateKind.MUL:
                assert plan.layer_of[g.gate_id] == 1
            elif g.kind == GateKind.ADD:
                assert plan.layer_of[g.gate_id] == 1
            elif g.kind == GateKind.OUTPUT:
                assert plan.layer_of[g.gate_id] == 2

    def test_bad_size(self):
        with pytest.raises(CircuitError):
            build_inner_product(0, L16)


class TestMillionaire:
    @pytest.mark.parametrize("variant", ["ripple", "tree"])
    def test_examples(self, variant):
        assert _eval_millionaire(3, variant, 5, 3) == 1
        assert _eval_millionaire(3, variant, 3, 5) == 0
        assert _eval_millionaire(3, variant, 7, 7) == 0

    @pytest.mark.parametrize("variant", ["ripple", "tree"])
    def test_exhaustive_small_widths(self, variant):
        for n in range(1, 6):
            c = build_millionaire(n, variant)
            for x in range(1 << n):
                for y in range(1 << n):
                    got = eval_plaintext(c, _bits(x, n), _bits(y, n))[0]
                    assert got == int(x > y), (variant, n, x, y)

    @pytest.mark.parametrize("n", [8, 9, 32, 200])
    def test_variants_agree_random(self, n):
        rip = build_millionaire(n, "ripple")
        tre = build_millionaire(n, "tree")
        rng = random.Random(n)
        for _ in range(100):
            x, y = rng.getrandbits(n), rng.getrandbits(n)
            bx, by = _bits(x, n), _bits(y, n)
            want = int(x > y)
            assert eval_plaintext(rip, bx, by)[0] == want
            assert eval_plaintext(tre, bx, by)[0] == want

    def test_lsb_first_input_order(self):
        # x=2 is bits [0,1]; the builder must read position i as bit i
        assert _eval_millionaire(2, "tree", 2, 1) == 1
        assert _eval_millionaire(2, "ripple", 1, 2) == 0

    @pytest.mark.parametrize("n", [1, 2, 5, 8, 32])
    def test_ripple_counts_and_rounds(self, n):
        c = build_millionaire(n, "ripple")
        assert count_interactive(c) == (0, n, 1)
        assert assign_layers(c).round_count == n + 1

    @pytest.mark.parametrize("n", [2, 3, 5, 6, 7, 8, 32, 100])
    def test_tree_counts_and_rounds(self, n):
        c = build_millionaire(n, "tree")
        assert count_interactive(c) == (0, 3 * n - 2, 1)
        assert assign_layers(c).round_count == math.ceil(math.log2(n)) + 2

    def test_tree_n1(self):
        c = build_millionaire(1, "tree")
        assert count_interactive(c) == (0, 1, 1)
        assert assign_layers(c).round_count == 2

    def test_tree_and_depth(self):
        for n in (2, 5, 8, 32):
            c = build_millionaire(n, "tree")
            plan = assign_layers(c)
            deepest_and = max(
                plan.layer_of[g.gate_id] for g in c.gates if g.kind == GateKind.AND
            )
            assert deepest_and == 1 + math.ceil(math.log2(n))

    def test_bad_variant(self):
        with pytest.raises(CircuitError):
            build_millionaire(4, "magic")
        with pytest.raises(CircuitError):
            build_millionaire(0, "tree")


class TestLayering:
    def test_sources_at_zero(self):
        for c in (build_inner_product(3, L16), build_millionaire(5, "tree")):
            plan = assign_layers(c)
            for g in c.gates:
                if not g.inputs:
                    assert plan.layer_of[g.gate_id] == 0

    def test_layer_rule_holds_everywhere(self):
        from twopc.circuit import INTERACTIVE_KINDS

        for c in (
            build_inner_product(9, L16),
            build_millionaire(11, "tree"),
            build_millionaire(6, "ripple"),
        ):
            plan = assign_layers(c)
            for g in c.gates:
                if not g.inputs:
                    continue
                deepest = max(plan.layer_of[s] for s in g.inputs)
                if g.kind in INTERACTIVE_KINDS:
                    assert plan.layer_of[g.gate_id] == deepest + 1
                else:
                    assert plan.layer_of[g.gate_id] == deepest

    def test_layers_partition_gates(self):
        c = build_millionaire(8, "tree")
        plan = assign_layers(c)
        seen = sorted(g for loc, inter in plan.layers for g in loc + inter)
        assert seen == list(range(c.n_gates))

    def test_deterministic(self):
        a = build_millionaire(13, "tree")
        b = build_millionaire(13, "tree")
        assert a.gates == b.gates
        assert assign_layers(a).layers == assign_layers(b).layers


class TestValidation:
    def test_forward_reference(self):
        g = [Gate(0, GateKind.INPUT_P0), Gate(1, GateKind.OUTPUT, (2,)), Gate(2, GateKind.INPUT_P1)]
        c = Circuit(WORLD_ARITH, L16, g, [0], [2], [1])
        with pytest.raises(CircuitError):
            c.validate()

    def test_bad_arity(self):
        g = [Gate(0, GateKind.INPUT_P0), Gate(1, GateKind.ADD, (0,)), Gate(2, GateKind.OUTPUT, (1,))]
        c = Circuit(WORLD_ARITH, L16, g, [0], [], [2])
        with pytest.raises(CircuitError):
            c.validate()

    def test_world_kind_mismatch(self):
        g = [
            Gate(0, GateKind.INPUT_P0),
            Gate(1, GateKind.INPUT_P1),
            Gate(2, GateKind.XOR, (0, 1)),
            Gate(3, GateKind.OUTPUT, (2,)),
        ]
        c = Circuit(WORLD_ARITH, L16, g, [0], [1], [3])
        with pytest.raises(CircuitError):
            c.validate()

    def test_output_must_touch_inputs(self):
        g = [
            Gate(0, GateKind.INPUT_P0),
            Gate(1, GateKind.CONST_ONE),
            Gate(2, GateKind.OUTPUT, (1,)),
        ]
        c = Circuit(WORLD_BOOL, None, g, [0], [], [2])
        with pytest.raises(CircuitError):
            c.validate()

    def test_ring_world_coupling(self):
        g = [Gate(0, GateKind.INPUT_P0), Gate(1, GateKind.OUTPUT, (0,))]
        with pytest.raises(CircuitError):
            Circuit(WORLD_ARITH, None, g, [0], [], [1]).validate()
        with pytest.raises(CircuitError):
            Circuit(WORLD_BOOL, L16, g, [0], [], [1]).validate()


class TestEvalPlaintext:
    def test_input_count_checked(self):
        c = build_inner_product(2, L16)
        with pytest.raises(ValueError):
            eval_plaintext(c, [1], [2, 3])

    def test_input_range_checked(self):
        c = build_inner_product(1, L16)
        with pytest.raises(ValueError):
            eval_plaintext(c, [65536], [0])
        m = build_millionaire(2, "tree")
        with pytest.raises(ValueError):
            eval_plaintext(m, [0, 2], [0, 0])


class TestDump:
    def test_inner_product_dump(self):
        text = dump_circuit(build_inner_product(1, L16))
        lines = text.strip().split("\n")
        assert lines[0] == "world=A l=16 inputs0=1 inputs1=1 outputs=1"
        assert lines[1] == "0 INPUT_P0"
        assert lines[2] == "1 INPUT_P1"
        assert lines[3] == "2 MUL 0 1"
        assert lines[4] == "3 OUTPUT 2"

    def test_boolean_header(self):
        text = dump_circuit(build_millionaire(2, "ripple"))
        assert text.startswith("world=B l=1 inputs0=2 inputs1=2 outputs=1")

    def test_every_gate_listed(self):
        c = build_millionaire(5, "tree")
        lines = dump_circuit(c).strip().split("\n")
        assert len(lines) == c.n_gates + 1
