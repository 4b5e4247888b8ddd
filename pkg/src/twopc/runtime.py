"""Wire protocol and the two-party online execution engine.

Frame layout: a 9-byte header (payload length u32, message type u8,
layer id u32, all little-endian) followed by the payload.  One run
exchanges, per direction: HELLO, INPUT_SHARE, one LAYER_DATA per
interactive layer, DONE.  The conversation is fully symmetric, so both
parties always send the same number of frames and payload bytes.

A layer frame carries, for each product gate of the layer in gate-id
order, the party's shares of the two masked openings (d = x - a,
e = y - b) interleaved, then its bare shares for any output gates of the
layer.  Arithmetic values travel as byte_width-byte little-endian words;
Boolean values as packed bits, low bit first, zero-padded to a byte.

The engine splits a round into four steps so time can be attributed:
evaluate local gates that became computable after the previous layer,
mask and serialize this layer's product inputs, exchange frames, then
open the masked values and complete the products.  Local gates sitting
at the deepest layer feed nothing and are never evaluated.

Sessions expose one method per protocol phase (hello_send, hello_recv,
inputs_send, ... round_send, round_recv) so a pair can be driven either
by two threads over a real socket or deterministically interleaved on a
single thread for bulk correctness runs.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .circuit import (
    Circuit,
    GateKind,
    WORLD_ARITH,
    WORLD_BOOL,
    assign_layers,
    count_interactive,
)
from .sharing import (
    RingSpec,
    SeededRng,
    pack_bits,
    ring_from_bytes,
    ring_to_bytes,
    unpack_bits,
)
from .timing import RealClock, StepTimings, VirtualClock
from .triples import ArithTriplePool, BoolTriplePool

PROTOCOL_VERSION = 1

MSG_HELLO = 0x01
MSG_INPUT_SHARE = 0x02
MSG_LAYER_DATA = 0x03
MSG_OUTPUT_SHARE = 0x04
MSG_DONE = 0x05

_MSG_NAMES = {
    MSG_HELLO: "HELLO",
    MSG_INPUT_SHARE: "INPUT_SHARE",
    MSG_LAYER_DATA: "LAYER_DATA",
    MSG_OUTPUT_SHARE: "OUTPUT_SHARE",
    MSG_DONE: "DONE",
}

APP_CODES = {"custom": 0, "innerproduct": 1, "millionaire": 2}
WORLD_CODES = {WORLD_ARITH: 0, WORLD_BOOL: 1}
VARIANT_CODES = {None: 0, "": 0, "ripple": 1, "tree": 2}

_HEADER = struct.Struct("<IBI")
_HELLO_BODY = struct.Struct("<HBBHQBQ")

# refuse absurd frame lengths before allocating
_MAX_PAYLOAD = 1 << 30


class ProtocolError(RuntimeError):
    """Peer sent something the protocol does not allow here."""


class HandshakeError(ProtocolError):
    """The two parties disagree about what they are computing."""


def encode_frame(msg_type: int, layer_id: int, payload: bytes) -> bytes:
    return _HEADER.pack(len(payload), msg_type, layer_id) + payload


@dataclass(frozen=True)
class Frame:
    msg_type: int
    layer_id: int
    payload: bytes


def decode_frame(data: bytes) -> Frame:
    if len(data) < _HEADER.size:
        raise ProtocolError(f"frame shorter than header: {len(data)} bytes")
    length, msg_type, layer_id = _HEADER.unpack_from(data)
    if len(data) != _HEADER.size + length:
        raise ProtocolError(
            f"frame length mismatch: header says {length}, got {len(data) - _HEADER.size}"
        )
    return Frame(msg_type, layer_id, data[_HEADER.size:])


@dataclass(frozen=True)
class SessionParams:
    """Everything both parties must agree on before sharing anything.

    size is the application's size knob: vector length for the inner
    product, comparison width for the comparison circuit.  l is the ring
    bit length, 1 for Boolean circuits.
    """

    app: int
    world: int
    l: int
    size: int
    variant: int
    seed: int
    version: int = PROTOCOL_VERSION

    _FIELDS = ("version", "app", "world", "l", "size", "variant", "seed")

    def encode(self) -> bytes:
        return _HELLO_BODY.pack(
            self.version, self.app, self.world, self.l, self.size, self.variant, self.seed
        )

    @staticmethod
    def decode(payload: bytes) -> "SessionParams":
        if len(payload) != _HELLO_BODY.size:
            raise HandshakeError(
                f"hello payload must be {_HELLO_BODY.size} bytes, got {len(payload)}"
            )
        version, app, world, l, size, variant, seed = _HELLO_BODY.unpack(payload)
        return SessionParams(app, world, l, size, variant, seed, version=version)

    def check_against(self, peer: "SessionParams") -> None:
        for name in self._FIELDS:
            ours, theirs = getattr(self, name), getattr(peer, name)
            if ours != theirs:
                raise HandshakeError(
                    f"handshake mismatch on {name}: ours={ours} peer={theirs}"
                )


def params_for(app: str, circuit: Circuit, size: int, variant: str | None, seed: int) -> SessionParams:
    if app not in APP_CODES:
        raise ValueError(f"unknown app {app!r}")
    if variant not in VARIANT_CODES:
        raise ValueError(f"unknown variant {variant!r}")
    l = circuit.ring.bit_length if circuit.ring is not None else 1
    return SessionParams(
        app=APP_CODES[app],
        world=WORLD_CODES[circuit.world],
        l=l,
        size=size,
        variant=VARIANT_CODES[variant],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# transports

_CLOSED = object()


class LoopbackTransport:
    """One end of an in-memory duplex channel.

    Messages carry the sender's virtual ready timestamp alongside the
    frame bytes; the timestamp never appears in the frame itself, so the
    bytes on a loopback channel match what a socket would carry.
    """

    def __init__(self, inbox: queue.SimpleQueue, outbox: queue.SimpleQueue, timeout_s: float = 60.0):
        self._inbox = inbox
        self._outbox = outbox
        self._timeout_s = timeout_s

    @staticmethod
    def pair(timeout_s: float = 60.0) -> tuple["LoopbackTransport", "LoopbackTransport"]:
        a_to_b: queue.SimpleQueue = queue.SimpleQueue()
        b_to_a: queue.SimpleQueue = queue.SimpleQueue()
        return (
            LoopbackTransport(b_to_a, a_to_b, timeout_s),
            LoopbackTransport(a_to_b, b_to_a, timeout_s),
        )

    def send(self, data: bytes, ready_ts: float | None = None) -> None:
        self._outbox.put((data, ready_ts))

    def receive(self) -> tuple[bytes, float | None, float]:
        t0 = time.perf_counter()
        try:
            item = self._inbox.get(timeout=self._timeout_s)
        except queue.Empty:
            raise ConnectionError("timed out waiting for peer") from None
        wait_s = time.perf_counter() - t0
        if item is _CLOSED:
            raise ConnectionError("peer closed the channel")
        data, ready_ts = item
        return data, ready_ts, wait_s

    def close(self) -> None:
        self._outbox.put(_CLOSED)


class TcpTransport:
    """Length-prefixed frames over a TCP stream; party 1 listens, party 0 dials."""

    def __init__(self, sock: socket.socket):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock

    @classmethod
    def listen(cls, port: int, host: str = "") -> "TcpTransport":
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(1)
        conn, _ = srv.accept()
        srv.close()
        return cls(conn)

    @classmethod
    def connect(cls, host: str, port: int, timeout_s: float = 10.0) -> "TcpTransport":
        deadline = time.monotonic() + timeout_s
        while True:
            try:
                return cls(socket.create_connection((host, port)))
            except ConnectionRefusedError:
                if time.monotonic() >= deadline:
                    raise
                time.sleep(0.05)

    def _recv_exactly(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            chunk = self._sock.recv(min(n - got, 1 << 20))
            if not chunk:
                raise ConnectionError("peer closed the connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def send(self, data: bytes, ready_ts: float | None = None) -> None:
        self._sock.sendall(data)

    def receive(self) -> tuple[bytes, float | None, float]:
        t0 = time.perf_counter()
        header = self._recv_exactly(_HEADER.size)
        length = _HEADER.unpack(header)[0]
        if length > _MAX_PAYLOAD:
            raise ProtocolError(f"frame payload of {length} bytes exceeds the limit")
        payload = self._recv_exactly(length) if length else b""
        wait_s = time.perf_counter() - t0
        return header + payload, None, wait_s

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


# ---------------------------------------------------------------------------
# execution plan

@dataclass
class RoundExec:
    """Precomputed gate sets for one interactive layer."""

    layer: int
    local_ids: np.ndarray          # locals of layer-1, ready after the previous round
    local_groups: list[np.ndarray]  # same ids split by intra-layer depth
    inter_ids: np.ndarray          # MUL/AND gates of this layer, id order
    src0: np.ndarray
    src1: np.ndarray
    out_ids: np.ndarray            # OUTPUT gates of this layer, id order
    out_src: np.ndarray
    payload_len: int

    @property
    def n_local(self) -> int:
        return len(self.local_ids)

    @property
    def n_inter(self) -> int:
        return len(self.inter_ids)

    @property
    def n_out(self) -> int:
        return len(self.out_ids)


@dataclass
class ExecPlan:
    """A validated circuit lowered to flat arrays, shared by both parties."""

    circuit: Circuit
    kind: np.ndarray
    in0: np.ndarray
    in1: np.ndarray
    rounds: list[RoundExec]
    round_count: int
    n_mul: int
    n_and: int


_LOCAL_EVAL_KINDS = frozenset(
    {GateKind.ADD, GateKind.XOR, GateKind.NOT, GateKind.CONST_ZERO, GateKind.CONST_ONE}
)


def _depth_groups(ids: list[int], gates) -> list[np.ndarray]:
    """Split same-layer local gates by dependency depth within the set."""
    depth: dict[int, int] = {}
    groups: dict[int, list[int]] = {}
    id_set = set(ids)
    for g in ids:
        d = 0
        for s in gates[g].inputs:
            if s in id_set:
                d = max(d, depth[s] + 1)
        depth[g] = d
        groups.setdefault(d, []).append(g)
    return [np.array(groups[d], dtype=np.int64) for d in sorted(groups)]


def build_exec_plan(c: Circuit) -> ExecPlan:
    c.validate()
    plan = assign_layers(c)
    n = c.n_gates
    kind = np.zeros(n, dtype=np.uint8)
    in0 = np.zeros(n, dtype=np.int64)
    in1 = np.zeros(n, dtype=np.int64)
    for g in c.gates:
        kind[g.gate_id] = int(g.kind)
        if len(g.inputs) >= 1:
            in0[g.gate_id] = g.inputs[0]
        if len(g.inputs) == 2:
            in1[g.gate_id] = g.inputs[1]

    if c.world == WORLD_ARITH:
        value_bytes = c.ring.byte_width
    rounds = []
    for r in range(1, plan.round_count + 1):
        prev_locals = [g for g in plan.layers[r - 1][0] if c.gates[g].kind in _LOCAL_EVAL_KINDS]
        inter = [g for g in plan.layers[r][1] if c.gates[g].kind != GateKind.OUTPUT]
        outs = [g for g in plan.layers[r][1] if c.gates[g].kind == GateKind.OUTPUT]
        n_vals = 2 * len(inter) + len(outs)
        if c.world == WORLD_ARITH:
            payload_len = n_vals * value_bytes
        else:
            payload_len = (n_vals + 7) // 8
        rounds.append(
            RoundExec(
                layer=r,
                local_ids=np.array(prev_locals, dtype=np.int64),
                local_groups=_depth_groups(prev_locals, c.gates),
                inter_ids=np.array(inter, dtype=np.int64),
                src0=in0[inter].copy() if inter else np.empty(0, dtype=np.int64),
                src1=in1[inter].copy() if inter else np.empty(0, dtype=np.int64),
                out_ids=np.array(outs, dtype=np.int64),
                out_src=in0[outs].copy() if outs else np.empty(0, dtype=np.int64),
                payload_len=payload_len,
            )
        )
    n_mul, n_and, _ = count_interactive(c)
    return ExecPlan(c, kind, in0, in1, rounds, plan.round_count, n_mul, n_and)


# ---------------------------------------------------------------------------
# session

class Session:
    """One party's state for a single protocol execution."""

    def __init__(
        self,
        party: int,
        transport,
        plan: ExecPlan,
        params: SessionParams,
        *,
        pool=None,
        clock=None,
        record_transcript: bool = False,
        time_input_sharing: bool = False,
    ):
        if party not in (0, 1):
            raise ValueError("party must be 0 or 1")
        self.party = party
        self.transport = transport
        self.plan = plan
        self.params = params
        self.circuit = plan.circuit
        self.world = self.circuit.world
        self.ring = self.circuit.ring
        self.clock = clock if clock is not None else RealClock()
        self.pool = pool
        self.time_input_sharing = time_input_sharing
        self.timings = StepTimings(party)

        if self.world == WORLD_ARITH:
            if pool is not None and not isinstance(pool, ArithTriplePool):
                raise TypeError("arithmetic circuits need an ArithTriplePool")
            self.wires = np.zeros(self.circuit.n_gates, dtype=np.uint64)
            self._mask = np.uint64(self.ring.mask)
            self._c_one = np.uint64(1 if party == 0 else 0)
        else:
            if pool is not None and not isinstance(pool, BoolTriplePool):
                raise TypeError("Boolean circuits need a BoolTriplePool")
            self.wires = np.zeros(self.circuit.n_gates, dtype=np.uint8)
            self._c_one = np.uint8(1 if party == 0 else 0)

        ids = self.circuit.inputs0, self.circuit.inputs1
        self._my_input_ids = np.array(ids[party], dtype=np.int64)
        self._peer_input_ids = np.array(ids[1 - party], dtype=np.int64)

        self._mask_rng = SeededRng(params.seed).derive("inputs.mask", party)
        self._pending = None
        self._inputs_done = False
        self._rounds_done = 0
        self._outputs: dict[int, int] = {}
        self._t_run_start: float | None = None
        self._t_run_end: float | None = None

        self.frames_sent = 0
        self.frames_received = 0
        self.payload_bytes_sent = 0
        self.payload_bytes_received = 0
        self.sent_log: list[bytes] | None = [] if record_transcript else None

    # -- framing helpers

    def _send(self, msg_type: int, layer_id: int, payload: bytes) -> None:
        data = encode_frame(msg_type, layer_id, payload)
        ts = self.clock.t if isinstance(self.clock, VirtualClock) else None
        self.transport.send(data, ts)
        self.frames_sent += 1
        self.payload_bytes_sent += len(payload)
        if self.sent_log is not None:
            self.sent_log.append(data)

    def _recv(self, expect_type: int, expect_layer: int, timed: bool) -> bytes:
        data, peer_ts, wait_s = self.transport.receive()
        frame = decode_frame(data)
        if frame.msg_type != expect_type:
            got = _MSG_NAMES.get(frame.msg_type, hex(frame.msg_type))
            raise ProtocolError(f"expected {_MSG_NAMES[expect_type]}, got {got}")
        if frame.layer_id != expect_layer:
            raise ProtocolError(
                f"expected layer {expect_layer}, got {frame.layer_id}"
            )
        self.frames_received += 1
        self.payload_bytes_received += len(frame.payload)
        if timed:
            if isinstance(self.clock, VirtualClock):
                if peer_ts is None:
                    raise ProtocolError("virtual clock needs an in-process channel")
                self.timings.communication_ms += self.clock.exchange(peer_ts)
            else:
                self.timings.communication_ms += wait_s * 1000.0
        return frame.payload

    # -- handshake

    def hello_send(self) -> None:
        self._send(MSG_HELLO, 0, self.params.encode())

    def hello_recv(self) -> None:
        payload = self._recv(MSG_HELLO, 0, timed=False)
        self.params.check_against(SessionParams.decode(payload))

    def handshake(self) -> None:
        self.hello_send()
        self.hello_recv()

    # -- input distribution

    def inputs_send(self, values) -> None:
        n_own = len(self._my_input_ids)
        values = list(values)
        if len(values) != n_own:
            raise ValueError(f"expected {n_own} input values, got {len(values)}")
        timed = self.time_input_sharing
        if timed and not isinstance(self.clock, VirtualClock):
            self._t_run_start = time.perf_counter()
            t0 = self.clock.start()
        if self.world == WORLD_ARITH:
            for v in values:
                if not 0 <= v <= self.ring.mask:
                    raise ValueError(f"input {v} outside the ring")
            vals = np.array(values, dtype=np.uint64)
            r = self._mask_rng.ring_elements(n_own, self.ring)
            self.wires[self._my_input_ids] = (vals - r) & self._mask
            payload = ring_to_bytes(r, self.ring)
        else:
            for v in values:
                if v not in (0, 1):
                    raise ValueError("Boolean inputs must be 0 or 1")
            bits = np.array(values, dtype=np.uint8)
            r_packed = self._mask_rng.bits(n_own)
            r_bits = unpack_bits(r_packed, n_own)
            self.wires[self._my_input_ids] = bits ^ r_bits
            payload = r_packed.tobytes()
        if timed:
            units = self.clock.throttle.prepare_units * n_own
            if isinstance(self.clock, VirtualClock):
                self.timings.interactive_gate_ms += self.clock.charge(units)
            else:
                self.timings.interactive_gate_ms += self.clock.end_compute(t0, units)
        self._send(MSG_INPUT_SHARE, 0, payload)

    def inputs_recv(self) -> None:
        n_peer = len(self._peer_input_ids)
        if self.world == WORLD_ARITH:
            expect = n_peer * self.ring.byte_width
        else:
            expect = (n_peer + 7) // 8
        timed = self.time_input_sharing
        payload = self._recv(MSG_INPUT_SHARE, 0, timed=timed)
        if len(payload) != expect:
            raise ProtocolError(
                f"input share payload must be {expect} bytes, got {len(payload)}"
            )
        if timed and not isinstance(self.clock, VirtualClock):
            t0 = self.clock.start()
        if self.world == WORLD_ARITH:
            self.wires[self._peer_input_ids] = ring_from_bytes(payload, self.ring)
        else:
            packed = np.frombuffer(payload, dtype=np.uint8)
            if n_peer % 8 and packed.size and packed[-1] >> (n_peer % 8):
                raise ProtocolError("nonzero pad bits in input share")
            self.wires[self._peer_input_ids] = unpack_bits(packed, n_peer)
        if timed:
            units = self.clock.throttle.finish_units * n_peer
            if isinstance(self.clock, VirtualClock):
                self.timings.layer_finish_ms += self.clock.charge(units)
            else:
                self.timings.layer_finish_ms += self.clock.end_compute(t0, units)
        elif isinstance(self.clock, VirtualClock):
            # the timed region starts at the first layer
            self.clock.reset()
        self._inputs_done = True

    def distribute_inputs(self, values) -> None:
        self.inputs_send(values)
        self.inputs_recv()

    # -- online rounds

    def _local_units(self, n: int) -> float:
        cfg = self.clock.throttle
        per = cfg.local_arith_units if self.world == WORLD_ARITH else cfg.local_bool_units
        return per * n

    def round_send(self, r: int) -> None:
        if not self._inputs_done:
            raise ProtocolError("inputs were never distributed")
        if r != self._rounds_done + 1:
            raise ProtocolError(f"round {r} out of order, expected {self._rounds_done + 1}")
        rx = self.plan.rounds[r - 1]
        virtual = isinstance(self.clock, VirtualClock)
        if r == 1 and not self.time_input_sharing and not virtual:
            self._t_run_start = time.perf_counter()

        # step 1: locals that became ready after the previous exchange
        if not virtual:
            t0 = self.clock.start()
        if rx.n_local:
            if self.world == WORLD_ARITH:
                kernels.local_eval_arith(
                    self.wires, self.plan.kind, self.plan.in0, self.plan.in1,
                    rx.local_ids, rx.local_groups, self._mask, self._c_one,
                )
            else:
                kernels.local_eval_bool(
                    self.wires, self.plan.kind, self.plan.in0, self.plan.in1,
                    rx.local_ids, rx.local_groups, self._c_one,
                )
        if virtual:
            self.timings.local_gates_ms += self.clock.charge(self._local_units(rx.n_local))
        else:
            self.timings.local_gates_ms += self.clock.end_compute(t0)

        # step 2: mask product inputs, stage output shares, serialize
        if not virtual:
            t0 = self.clock.start()
        k = rx.n_inter
        if self.world == WORLD_ARITH:
            a, b, c3 = self.pool.take(k) if k else (None, None, None)
            if k:
                d, e = kernels.masks_arith(self.wires, rx.src0, rx.src1, a, b, self._mask)
            else:
                d = e = np.empty(0, dtype=np.uint64)
            vals = np.empty(2 * k + rx.n_out, dtype=np.uint64)
            vals[0 : 2 * k : 2] = d
            vals[1 : 2 * k : 2] = e
            vals[2 * k :] = self.wires[rx.out_src]
            payload = ring_to_bytes(vals, self.ring)
        else:
            a, b, c3 = self.pool.take(k) if k else (None, None, None)
            if k:
                d, e = kernels.masks_bool(self.wires, rx.src0, rx.src1, a, b)
            else:
                d = e = np.empty(0, dtype=np.uint8)
            bits = np.empty(2 * k + rx.n_out, dtype=np.uint8)
            bits[0 : 2 * k : 2] = d
            bits[1 : 2 * k : 2] = e
            bits[2 * k :] = self.wires[rx.out_src]
            payload = pack_bits(bits).tobytes()
        self._pending = (d, e, a, b, c3)
        prep_units = self.clock.throttle.prepare_units * (k + rx.n_out)
        if virtual:
            self.timings.interactive_gate_ms += self.clock.charge(prep_units)
        else:
            self.timings.interactive_gate_ms += self.clock.end_compute(t0)

        # step 3a: hand our frame to the peer before blocking on theirs
        self._send(MSG_LAYER_DATA, r, payload)

    def round_recv(self, r: int) -> None:
        if r != self._rounds_done + 1 or self._pending is None:
            raise ProtocolError(f"round {r} received out of order")
        rx = self.plan.rounds[r - 1]
        d_own, e_own, a, b, c3 = self._pending
        self._pending = None
        virtual = isinstance(self.clock, VirtualClock)

        # step 3b: blocking receive; the wait is the communication cost
        payload = self._recv(MSG_LAYER_DATA, r, timed=True)
        if len(payload) != rx.payload_len:
            raise ProtocolError(
                f"layer {r} payload must be {rx.payload_len} bytes, got {len(payload)}"
            )

        # step 4: open masked values, finish products, reconstruct outputs
        if not virtual:
            t0 = self.clock.start()
        k = rx.n_inter
        if self.world == WORLD_ARITH:
            try:
                vals = ring_from_bytes(payload, self.ring)
            except ValueError as exc:
                raise ProtocolError(f"bad layer {r} payload: {exc}") from None
            if k:
                d_open = (d_own + vals[0 : 2 * k : 2]) & self._mask
                e_open = (e_own + vals[1 : 2 * k : 2]) & self._mask
                z = kernels.finish_arith(d_open, e_open, a, b, c3, self.party, self._mask)
                self.wires[rx.inter_ids] = z
            if rx.n_out:
                peer_out = vals[2 * k :]
                own_out = self.wires[rx.out_src]
                opened = (own_out + peer_out) & self._mask
                for gid, v in zip(rx.out_ids, opened):
                    self._outputs[int(gid)] = int(v)
        else:
            packed = np.frombuffer(payload, dtype=np.uint8)
            n_vals = 2 * k + rx.n_out
            if n_vals % 8 and packed.size and packed[-1] >> (n_vals % 8):
                raise ProtocolError(f"nonzero pad bits in layer {r} payload")
            bits = unpack_bits(packed, n_vals)
            if k:
                d_open = d_own ^ bits[0 : 2 * k : 2]
                e_open = e_own ^ bits[1 : 2 * k : 2]
                z = kernels.finish_bool(d_open, e_open, a, b, c3, self.party)
                self.wires[rx.inter_ids] = z
            if rx.n_out:
                opened = self.wires[rx.out_src] ^ bits[2 * k :]
                for gid, v in zip(rx.out_ids, opened):
                    self._outputs[int(gid)] = int(v)
        fin_units = self.clock.throttle.finish_units * (k + rx.n_out)
        if virtual:
            self.timings.layer_finish_ms += self.clock.charge(fin_units)
        else:
            self.timings.layer_finish_ms += self.clock.end_compute(t0)

        self._rounds_done = r
        if r == self.plan.round_count and not virtual:
            self._t_run_end = time.perf_counter()

    # -- teardown

    def done_send(self) -> None:
        self._send(MSG_DONE, 0, b"")

    def done_recv(self) -> None:
        payload = self._recv(MSG_DONE, 0, timed=False)
        if payload:
            raise ProtocolError("DONE carries no payload")

    def finalize(self) -> tuple[list[int], StepTimings]:
        if self._rounds_done != self.plan.round_count:
            raise ProtocolError(
                f"only {self._rounds_done} of {self.plan.round_count} rounds ran"
            )
        if isinstance(self.clock, VirtualClock):
            self.timings.online_phase_ms = self.clock.t
        else:
            start = self._t_run_start if self._t_run_start is not None else self._t_run_end
            self.timings.online_phase_ms = (self._t_run_end - start) * 1000.0
        outputs = [self._outputs[g] for g in self.circuit.outputs]
        return outputs, self.timings

    def run_online(self) -> tuple[list[int], StepTimings]:
        for r in range(1, self.plan.round_count + 1):
            self.round_send(r)
            self.round_recv(r)
        self.done_send()
        self.done_recv()
        return self.finalize()


# ---------------------------------------------------------------------------
# drivers

@dataclass
class PartyResult:
    outputs: list[int]
    timings: StepTimings
    session: Session


def run_lockstep(
    plan: ExecPlan,
    params: SessionParams,
    inputs0,
    inputs1,
    *,
    pool0=None,
    pool1=None,
    clock0=None,
    clock1=None,
    record_transcript: bool = False,
    time_input_sharing: bool = False,
) -> tuple[PartyResult, PartyResult]:
    """Drive both parties on one thread, alternating phase by phase.

    Every receive happens strictly after the matching send, so the
    interleaving is deterministic; with virtual clocks the timings are
    exact, with real clocks they are not meaningful.
    """
    t0, t1 = LoopbackTransport.pair()
    s0 = Session(0, t0, plan, params, pool=pool0, clock=clock0,
                 record_transcript=record_transcript, time_input_sharing=time_input_sharing)
    s1 = Session(1, t1, plan, params, pool=pool1, clock=clock1,
                 record_transcript=record_transcript, time_input_sharing=time_input_sharing)
    s0.hello_send()
    s1.hello_send()
    s0.hello_recv()
    s1.hello_recv()
    s0.inputs_send(inputs0)
    s1.inputs_send(inputs1)
    s0.inputs_recv()
    s1.inputs_recv()
    for r in range(1, plan.round_count + 1):
        s0.round_send(r)
        s1.round_send(r)
        s0.round_recv(r)
        s1.round_recv(r)
    s0.done_send()
    s1.done_send()
    s0.done_recv()
    s1.done_recv()
    out0, tm0 = s0.finalize()
    out1, tm1 = s1.finalize()
    return PartyResult(out0, tm0, s0), PartyResult(out1, tm1, s1)


def run_threaded_pair(
    plan: ExecPlan,
    params: SessionParams,
    inputs0,
    inputs1,
    *,
    pool0=None,
    pool1=None,
    clock0=None,
    clock1=None,
    record_transcript: bool = False,
    time_input_sharing: bool = False,
) -> tuple[PartyResult, PartyResult]:
    """Run both parties concurrently over a loopback channel.

    The two sessions synchronize on a barrier after input distribution so
    neither starts its timed region while the other is still setting up.
    """
    t0, t1 = LoopbackTransport.pair()
    transports = (t0, t1)
    pools = (pool0, pool1)
    clocks = (clock0, clock1)
    inputs = (inputs0, inputs1)
    barrier = threading.Barrier(2)
    results: list = [None, None]

    def worker(party: int) -> None:
        try:
            s = Session(
                party, transports[party], plan, params,
                pool=pools[party], clock=clocks[party],
                record_transcript=record_transcript,
                time_input_sharing=time_input_sharing,
            )
            s.handshake()
            s.distribute_inputs(inputs[party])
            barrier.wait()
            outputs, timings = s.run_online()
            results[party] = PartyResult(outputs, timings, s)
        except BaseException as exc:  # propagate to the caller, unblock the peer
            results[party] = exc
            barrier.abort()
            transports[party].close()

    threads = [threading.Thread(target=worker, args=(p,), daemon=True) for p in (0, 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for party in (0, 1):
        r = results[party]
        if isinstance(r, threading.BrokenBarrierError):
            continue
        if isinstance(r, BaseException):
            raise r
    for party in (0, 1):
        if isinstance(results[party], BaseException):
            raise results[party]
    return results[0], results[1]
