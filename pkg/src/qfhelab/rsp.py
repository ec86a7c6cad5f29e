"""Remote preparation of hidden Bell pairs and teleportation gadgets.

A gadget for an alternating branching program P is laid out over the program
W = P, CT bridge, P^-1, SK tail. Layer j = 1..M (M = L+1) owns registers
``a_j_in`` and ``a_j_out`` for tracks a = 1..5. The SK instruction of layer j
pairs ``a_j_in`` with ``sigma(a)_j_out`` where sigma depends on one sk bit
(hidden from the evaluator); the CT instruction of layer j tells the evaluator
to Bell-measure ``a_{j-1}_out`` with ``sigma(a)_j_in``. The data qubit enters
as ``1_0_out`` and leaves from ``1_M_out``. Registers ``a_{L/2}_out`` for a != 1
carry an extra P^dagger, so the data picks it up iff P outputs 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .barrington import DUMMY, E, Instruction, Perm, PermBP, bp_invert, is_alternating
from .dtf import Family, RefFamily, four_to_two, four_to_two_trapdoor_from_bits, phase_sign
from .he import CT, SK, CircuitBuilder, HECiphertext, HEScheme, xor_circuit
from .simcore import StateBag, WireId

TRACKS = (1, 2, 3, 4, 5)
_TOL = 1e-9


class RSPError(Exception):
    pass


class ShapeViolation(RSPError):
    pass


class NotAlternating(RSPError):
    pass


class LayoutMismatch(RSPError):
    pass


class RSPFailure(RSPError):
    def __init__(self, q, msg: str = ""):
        super().__init__(msg or f"hidden Bell pair failed at register {q}")
        self.q = q


def reg(a: int, j: int, side: str) -> str:
    return f"{a}_{j}_{side}"


# layout


@dataclass
class GadgetLayout:
    Q: list[str]
    Q1: list[str]
    Q2: list[str]
    P: list[str]
    pi0: dict[str, str]
    pi1: dict[str, str]
    key_bit_index: dict[str, int | None]
    nu: list[dict]  # per layer: {"layer", "var", "on1", "on0", "sources"}
    layers: int
    half: int
    data_in: str = "1_0_out"
    data_out: str = ""
    sk_layers: list[dict] = field(default_factory=list)  # per layer: {"var", "on1", "on0"}

    def partner(self, q: str, sk: Sequence[int]) -> str:
        i = self.key_bit_index[q]
        return self.pi1[q] if i is not None and sk[i] else self.pi0[q]

    def plan(self, ct_bits: Sequence[int]) -> list[tuple[str, str]]:
        """Ordered Bell measurements (source, partner) for ciphertext bits ``ct_bits``."""
        out = []
        for row in self.nu:
            perm = _select(row, ct_bits)
            for a in row["sources"]:
                out.append((reg(a, row["layer"] - 1, "out"), reg(perm(a), row["layer"], "in")))
        return out

    def check(self) -> None:
        q2 = set(self.Q2)
        for q in self.Q1:
            if self.pi0[q] not in q2 or self.pi1[q] not in q2:
                raise ValueError(f"partner of {q} outside Q2")
        nbits = max([i for i in self.key_bit_index.values() if i is not None], default=-1) + 1
        for i in range(nbits):
            for bit in (0, 1):
                sk = [0] * nbits
                sk[i] = bit
                images = [self.partner(q, sk) for q in self.Q1]
                if len(set(images)) != len(images):
                    raise ValueError("pi^sk is not injective")

    def to_json(self) -> dict:
        return {
            "Q": self.Q,
            "Q1": self.Q1,
            "Q2": self.Q2,
            "P": self.P,
            "pi0": self.pi0,
            "pi1": self.pi1,
            "key_bit_index": self.key_bit_index,
            "nu": self.nu,
            "sk_layers": self.sk_layers,
            "layers": self.layers,
            "half": self.half,
            "data_in": self.data_in,
            "data_out": self.data_out,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GadgetLayout":
        return cls(
            Q=list(obj["Q"]),
            Q1=list(obj["Q1"]),
            Q2=list(obj["Q2"]),
            P=list(obj["P"]),
            pi0=dict(obj["pi0"]),
            pi1=dict(obj["pi1"]),
            key_bit_index={k: (None if v is None else int(v)) for k, v in obj["key_bit_index"].items()},
            nu=[dict(r) for r in obj["nu"]],
            layers=int(obj["layers"]),
            half=int(obj["half"]),
            data_in=obj.get("data_in", "1_0_out"),
            data_out=obj["data_out"],
            sk_layers=[dict(r) for r in obj.get("sk_layers", [])],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def _select(row: dict, bits: Sequence[int]) -> Perm:
    var = row["var"]
    bit = 0 if var is None else bits[var]
    return Perm(tuple(row["on1"] if bit else row["on0"]))


def layout_from_bp(bp: PermBP) -> GadgetLayout:
    if not is_alternating(bp):
        raise NotAlternating("program must alternate CT, SK and have even length")
    L = len(bp)
    bridge = Instruction(DUMMY, CT, E, E)
    tail = Instruction(DUMMY, SK, E, E)
    W = list(bp.instrs) + [bridge] + bp_invert(bp).instrs + [tail]
    M = len(W) // 2
    half = L // 2

    def pos(ins: Instruction) -> int | None:
        return None if ins.var == DUMMY else bp.class_position(ins.var)

    Q, Q1, Q2, P = [], [], [], []
    pi0, pi1, kbi = {}, {}, {}
    nu, sk_layers = [], []
    for j in range(1, M + 1):
        ct_ins, sk_ins = W[2 * j - 2], W[2 * j - 1]
        nu.append({
            "layer": j,
            "var": pos(ct_ins),
            "on1": list(ct_ins.on1.img),
            "on0": list(ct_ins.on0.img),
            "sources": [1] if j == 1 else list(TRACKS),
        })
        sk_layers.append({"var": pos(sk_ins), "on1": list(sk_ins.on1.img), "on0": list(sk_ins.on0.img)})
        for a in TRACKS:
            q = reg(a, j, "in")
            Q.append(q)
            Q1.append(q)
            pi0[q] = reg(sk_ins.on0(a), j, "out")
            pi1[q] = reg(sk_ins.on1(a), j, "out")
            kbi[q] = None if pi0[q] == pi1[q] else pos(sk_ins)
        for a in TRACKS:
            Q.append(reg(a, j, "out"))
            Q2.append(reg(a, j, "out"))
            if half and j == half and a != 1:
                P.append(reg(a, j, "out"))
    lay = GadgetLayout(Q, Q1, Q2, P, pi0, pi1, kbi, nu, M, half, "1_0_out", reg(1, M, "out"), sk_layers)
    lay.check()
    return lay


# keys


@dataclass
class GadgetKeys:
    family: Family
    scheme: HEScheme
    entries: list  # (FourToTwoKey, [HECiphertext] trapdoor bits)
    trapdoors: list = field(default_factory=list, repr=False)  # plaintext, test builds only

    def __len__(self):
        return len(self.entries)


def gadget_keygen(sk: Sequence[int], pk, family: Family, rng, scheme: HEScheme) -> GadgetKeys:
    entries, tds = [], []
    for bit in sk:
        k4, td = four_to_two(family, int(bit), rng)
        enc_t = [scheme.enc(pk, b, rng) for b in td.to_bits()]
        entries.append((k4, enc_t))
        tds.append(td)
    return GadgetKeys(family, scheme, entries, tds)


# hidden Bell pair


@dataclass
class HBPResult:
    success: bool
    enc_r0: HECiphertext
    enc_r1: HECiphertext
    enc_r2: HECiphertext
    enc_ok: HECiphertext
    y: int
    d: int


def _bell_secret(F: Family, k4, y: int, d: int):
    """Pad update computed under encryption: bits -> [z0^s, z1^s, a, ok]."""

    def fn(bits):
        tbits, z0, z1 = bits[:-2], bits[-2], bits[-1]
        td = four_to_two_trapdoor_from_bits(F, k4, tbits)
        B1, B2 = td.sets(y)
        if len(B1) == 1 and len(B2) == 2:
            a = next(iter(B1))
            beta = [td.alpha(y, d, a, a ^ v) for v in (0, 1)]
        elif len(B1) == 2 and len(B2) == 1:
            a = next(iter(B2))
            beta = [td.alpha(y, d, a ^ v, a) for v in (0, 1)]
        else:
            return [z0, z1, 0, 0]
        s = phase_sign(beta[0], beta[1])
        if s is None:
            return [z0, z1, a, 0]
        return [z0 ^ s, z1 ^ s, a, 1]

    return fn


def _check_shape(bag: StateBag, regs) -> None:
    r0, r1, r2 = regs
    if len({r0, r1, r2}) != 3:
        raise ShapeViolation("registers must be distinct")
    for w in regs:
        if w not in bag or w.width != 1:
            raise ShapeViolation(f"wire {w} is not a live qubit")
    st = bag._blobs[bag._bid(r2)]
    amps = st.amps
    if len(st.wires) != 1 or len(amps) != 2 or abs(abs(amps.get(0, 0)) - abs(amps.get(1, 0))) > _TOL or abs(
        amps[0] - amps[1]
    ) > _TOL * 10:
        raise ShapeViolation("role-2 register must be an unentangled |+>")
    for w in (r0, r1):
        p = bag.marginal([w])
        if abs(p.get(0, 0.0) - 0.5) > _TOL:
            raise ShapeViolation(f"wire {w.id} is not balanced in the computational basis")


def hidden_bell_pair(
    bag: StateBag,
    regs: Sequence[WireId],
    k4,
    enc_t: Sequence[HECiphertext],
    enc_z0: HECiphertext,
    enc_z1: HECiphertext,
    pk,
    evk,
    rng,
    scheme: HEScheme,
    family: Family,
    transcript: list | None = None,
    labels: Sequence[str] | None = None,
) -> HBPResult:
    r0, r1, r2 = regs
    _check_shape(bag, regs)
    # controls ordered (u, v, w) = (role 2, role 0, role 1)
    xw = bag.prepare_conditional([r2, r0, r1], lambda c: k4.dist(c[0] ^ c[1], c[0] ^ c[2]), k4.t)

    def f(v: int) -> int:
        u, vv, w, x = v & 1, (v >> 1) & 1, (v >> 2) & 1, v >> 3
        return k4.eval(u ^ vv, u ^ w, x)

    yw = bag.apply_classical_function([r2, r0, r1, xw], f, k4.y_bits)
    y = bag.measure_standard(yw, rng)
    d = bag.measure_hadamard(xw, rng)
    if transcript is not None:
        names = list(labels) if labels else [r0.id, r1.id, r2.id]
        transcript.append({"step": len(transcript), "registers": names, "basis": "standard", "outcome": y})
        transcript.append({"step": len(transcript), "registers": names, "basis": "hadamard", "outcome": d})
    # lab-side flag: after a good run v xor w is uniform
    par = bag.marginal([r0, r1])
    even = par.get(0, 0.0) + par.get(3, 0.0)
    success = abs(even - 0.5) < 1e-6
    out = scheme.eval_function(evk, _bell_secret(family, k4, y, d), list(enc_t) + [enc_z0, enc_z1], rng)
    return HBPResult(success, out[0], out[1], out[2], out[3], y, d)


# gadget preparation


@dataclass
class GadgetState:
    bag: StateBag
    layout: GadgetLayout
    wires: dict[str, WireId]
    pads: dict[str, list]  # label -> [enc_x, enc_z]
    enc_sk: list
    scheme: HEScheme
    transcript: list = field(default_factory=list)
    attempts: int = 1


def _direct_pair(bag: StateBag, q: WireId, t: WireId) -> None:
    bag.apply_gate("H", t)
    bag.apply_cnot(q, t)


def rsp_gen_gadget(
    gk: GadgetKeys,
    enc_sk: Sequence[HECiphertext],
    pk,
    evk,
    layout: GadgetLayout,
    rng,
    bag: StateBag | None = None,
    retries: int = 3,
) -> GadgetState:
    bag = bag if bag is not None else StateBag()
    scheme, F = gk.scheme, gk.family
    used = [i for i in layout.key_bit_index.values() if i is not None]
    if used and max(used) >= len(gk):
        raise LayoutMismatch(f"layout needs sk bit {max(used)}, gadget key has {len(gk)}")
    last = None
    for attempt in range(1, retries + 2):
        wires = dict(zip(layout.Q, bag.alloc_plus(len(layout.Q))))
        zero = scheme.enc(pk, 0, rng)
        pads = {q: [zero, zero] for q in layout.Q}
        transcript: list = []
        failed = None
        for q in layout.Q1:
            i = layout.key_bit_index[q]
            p0, p1 = layout.pi0[q], layout.pi1[q]
            if i is None:
                _direct_pair(bag, wires[q], wires[p0])
                continue
            k4, enc_t = gk.entries[i]
            res = hidden_bell_pair(
                bag,
                (wires[p0], wires[p1], wires[q]),
                k4,
                enc_t,
                pads[p0][1],
                pads[p1][1],
                pk,
                evk,
                rng,
                scheme,
                F,
                transcript,
                (p0, p1, q),
            )
            if not res.success:
                failed = q
                break
            pads[p0][1], pads[p1][1], pads[q][0] = res.enc_r0, res.enc_r1, res.enc_r2
        if failed is None:
            for r in layout.P:
                bag.apply_gate("Pdg", wires[r])
                x, z = pads[r]
                pads[r][1] = scheme.eval(evk, xor_circuit(), [x, z], rng)
            return GadgetState(bag, layout, wires, pads, list(enc_sk), scheme, transcript, attempt)
        last = failed
        _drop(bag, wires.values())
    raise RSPFailure(last)


def _drop(bag: StateBag, wires) -> None:
    live = [w for w in wires if w in bag]
    if live:
        bag.discard(live)


# gadget execution


def newkeys_circuits(layout: GadgetLayout, ct_bits: Sequence[int], outcomes: Sequence[tuple[int, int]]):
    """Boolean circuits for the output pads (x', z') of the teleported data.

    Inputs are named "sk<i>" (SK), "px:<reg>" and "pz:<reg>" (CT). The data
    frame (U, V) starts at (0, 0); each Bell outcome (a, b) on the data path
    adds (b, a), each traversed register adds its pads, and a P^dagger hit
    maps V to V xor U.
    """
    b = CircuitBuilder()
    P = set(layout.P)
    U = V = 0
    onehot = {1: 1}
    k = 0
    for j, (row, skrow) in enumerate(zip(layout.nu, layout.sk_layers), start=1):
        perm = _select(row, ct_bits)
        onehot_in = {}
        for a in row["sources"]:
            ma, mb = outcomes[k]
            k += 1
            h = onehot.get(a, 0)
            dst = reg(perm(a), j, "in")
            px, pz = b.input(f"px:{dst}"), b.input(f"pz:{dst}")
            U = b.xor(U, b.and_(h, b.xor(mb, px)))
            V = b.xor(V, b.and_(h, b.xor(ma, pz)))
            onehot_in[perm(a)] = h
        on1, on0 = Perm(tuple(skrow["on1"])), Perm(tuple(skrow["on0"]))
        s = b.input(f"sk{skrow['var']}", SK) if skrow["var"] is not None and on1 != on0 else None
        out = {}
        for a, h in onehot_in.items():
            t1, t0 = on1(a), on0(a)
            if t1 == t0:
                out[t1] = b.xor(out.get(t1, 0), h)
            else:
                out[t1] = b.xor(out.get(t1, 0), b.and_(h, s))
                out[t0] = b.xor(out.get(t0, 0), b.and_(h, b.not_(s)))
        hit = 0
        for m, h in out.items():
            if reg(m, j, "out") in P:
                hit = b.xor(hit, h)
        V = b.xor(V, b.and_(hit, U))
        for m, h in out.items():
            r = reg(m, j, "out")
            U = b.xor(U, b.and_(h, b.input(f"px:{r}")))
            V = b.xor(V, b.and_(h, b.input(f"pz:{r}")))
        onehot = out
    return b, b.build(U), b.build(V)


@dataclass
class GadgetOutput:
    wire: WireId
    enc_x: HECiphertext
    enc_z: HECiphertext
    outcomes: list


def gadget_apply(gs: GadgetState, data_wire: WireId, x_ct: HECiphertext, layout: GadgetLayout, evk, rng) -> GadgetOutput:
    if gs.layout is not layout and gs.layout.to_json() != layout.to_json():
        raise LayoutMismatch("gadget was prepared for a different layout")
    ct_bits = list(x_ct.bits)
    need = [r["var"] for r in layout.nu if r["var"] is not None]
    if need and max(need) >= len(ct_bits):
        raise LayoutMismatch(f"layout reads ciphertext bit {max(need)}, ciphertext has {len(ct_bits)}")
    bag = gs.bag
    wires = dict(gs.wires)
    wires[layout.data_in] = data_wire
    outcomes = []
    for src, dst in layout.plan(ct_bits):
        m = bag.bell_measure(wires[src], wires[dst], rng)
        outcomes.append(m)
        gs.transcript.append({"step": len(gs.transcript), "registers": [src, dst], "basis": "bell", "outcome": list(m)})
    b, cx, cz = newkeys_circuits(layout, ct_bits, outcomes)
    cts = []
    for inp in b.inputs:
        kind, _, name = inp.name.partition(":")
        if kind == "px":
            cts.append(gs.pads[name][0])
        elif kind == "pz":
            cts.append(gs.pads[name][1])
        else:
            cts.append(gs.enc_sk[int(inp.name[2:])])
    ex = gs.scheme.eval(evk, cx, cts, rng)
    ez = gs.scheme.eval(evk, cz, cts, rng)
    out = wires[layout.data_out]
    rest = [w for lab, w in gs.wires.items() if lab != layout.data_out and w in bag]
    if rest:
        bag.factorize(out)
        bag.discard(rest)
    return GadgetOutput(out, ex, ez, outcomes)


def write_transcript(records: list, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def default_family() -> Family:
    return RefFamily(2)


def bell_goal(mu: int) -> np.ndarray:
    """Unpadded hidden-pair target over (r0, r1, r2): r2 Bell-paired with r_mu, the other role |+>."""
    v = np.zeros(8, dtype=complex)
    for a in (0, 1):
        for b in (0, 1):
            v[a | (b << 1) | ((a if mu == 0 else b) << 2)] = 0.5
    return v
