"""Leveled quantum FHE: Pauli one-time pads, Clifford key updates, T via gadgets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .barrington import bp_alternate, bp_compile
from .dtf import AmpFamily, AmpKey, Family, FourToTwoKey, RefFamily, RefKey, four_to_two_trapdoor_from_bits
from .gadtf import GAFamily, GAKey
from .he import (
    SK,
    BoolCircuit,
    CircuitInput,
    Gate,
    HECiphertext,
    HEKeySet,
    HEScheme,
    SecretKey,
    scheme_from_name,
    xor_circuit,
)
from .rsp import GadgetKeys, GadgetLayout, gadget_apply, gadget_keygen, layout_from_bp, rsp_gen_gadget
from .simcore import GATES, StateBag, WireId


class QFHEError(Exception):
    pass


class TDepthExceeded(QFHEError):
    pass


class CircuitError(QFHEError, ValueError):
    pass


ARITY = {"H": 1, "P": 1, "X": 1, "Z": 1, "T": 1, "CNOT": 2}
CLIFFORDS = ("H", "P", "X", "Z", "CNOT")


# circuits


@dataclass
class QCircuit:
    wires: int
    gates: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)

    def __post_init__(self):
        if not isinstance(self.wires, int) or self.wires < 1:
            raise CircuitError("a circuit needs at least one wire")
        norm = []
        for g in self.gates:
            name, tg = g[0], tuple(int(t) for t in g[1])
            if name not in ARITY:
                raise CircuitError(f"unknown gate {name!r}")
            if len(tg) != ARITY[name]:
                raise CircuitError(f"{name} takes {ARITY[name]} targets, got {len(tg)}")
            if any(not 0 <= t < self.wires for t in tg):
                raise CircuitError(f"{name} target out of range in {tg}")
            if len(set(tg)) != len(tg):
                raise CircuitError(f"{name} targets must differ")
            norm.append((name, tg))
        self.gates = norm

    def levels_after(self, start: Sequence[int] | None = None) -> list[int]:
        """Per-wire key level after evaluation (T bumps its wire, CNOT syncs)."""
        lv = list(start) if start is not None else [0] * self.wires
        for name, tg in self.gates:
            if name == "T":
                lv[tg[0]] += 1
            elif name == "CNOT":
                m = max(lv[tg[0]], lv[tg[1]])
                lv[tg[0]] = lv[tg[1]] = m
        return lv

    def t_depth(self) -> int:
        return max(self.levels_after())

    def t_count(self) -> int:
        return sum(1 for name, _ in self.gates if name == "T")

    def to_json(self) -> dict:
        return {"wires": self.wires, "gates": [{"g": n, "targets": list(t)} for n, t in self.gates]}

    @classmethod
    def from_json(cls, obj) -> "QCircuit":
        try:
            return cls(obj["wires"], [(g["g"], g["targets"]) for g in obj["gates"]])
        except (KeyError, TypeError) as e:
            raise CircuitError(f"malformed circuit JSON: {e}") from None


def random_circuit(n_wires: int, n_cliffords: int, n_t: int, rng) -> QCircuit:
    gates: list[tuple[str, tuple[int, ...]]] = []
    kinds = ["H", "P", "X", "Z"] + (["CNOT"] if n_wires > 1 else [])
    for _ in range(n_cliffords):
        g = kinds[int(rng.integers(len(kinds)))]
        if g == "CNOT":
            c, t = (int(v) for v in rng.choice(n_wires, 2, replace=False))
            gates.append((g, (c, t)))
        else:
            gates.append((g, (int(rng.integers(n_wires)),)))
    for _ in range(n_t):
        gates.insert(int(rng.integers(len(gates) + 1)), ("T", (int(rng.integers(n_wires)),)))
    return QCircuit(n_wires, gates)


def simulate(circuit: QCircuit, vec) -> np.ndarray:
    """Plain dense simulation; qubit j is bit j of the basis index."""
    v = np.asarray(vec, dtype=complex).copy()
    n = circuit.wires
    idx = np.arange(1 << n)
    for name, tg in circuit.gates:
        if name == "CNOT":
            c, t = tg
            v = v[np.where((idx >> c) & 1, idx ^ (1 << t), idx)]
            continue
        U = GATES[name]
        j = tg[0]
        b = (idx >> j) & 1
        v = U[b, 0] * v[idx & ~(1 << j)] + U[b, 1] * v[idx | (1 << j)]
    return v


# Clifford pad table on plaintext bits; X and Z are pure bookkeeping


def pad_rule(name: str, pads: tuple[int, ...]) -> tuple[int, ...]:
    if name == "H":
        x, z = pads
        return z, x
    if name == "P":
        x, z = pads
        return x, x ^ z
    if name == "X":
        x, z = pads
        return x ^ 1, z
    if name == "Z":
        x, z = pads
        return x, z ^ 1
    if name == "CNOT":
        xc, zc, xt, zt = pads
        return xc, zc ^ zt, xt ^ xc, zt
    raise ValueError(name)


PHYSICAL = {"H", "P", "CNOT", "T"}


# keys


@dataclass
class QFHEKeys:
    scheme: HEScheme
    family: Family
    L: int
    levels: list[HEKeySet]
    gadget: list[GadgetKeys]
    enc_sk: list[list[HECiphertext]]  # enc_sk[i] = Enc_{pk_{i+1}}(sk_i)

    @property
    def pk(self):
        return [k.pk for k in self.levels]

    @property
    def sk(self):
        return [k.sk for k in self.levels]

    @property
    def evk(self):
        return [k.evk for k in self.levels]


def qfhe_keygen(L: int, scheme: HEScheme, family: Family, rng) -> QFHEKeys:
    if L < 0:
        raise ValueError("L must be >= 0")
    levels = [scheme.keygen(rng, i) for i in range(L + 1)]
    gadget, enc_sk = [], []
    for i in range(L):
        nxt = levels[i + 1].pk
        gadget.append(gadget_keygen(levels[i].sk.bits, nxt, family, rng, scheme))
        enc_sk.append([scheme.enc(nxt, b, rng) for b in levels[i].sk.bits])
    return QFHEKeys(scheme, family, L, levels, gadget, enc_sk)


_LAYOUTS: dict[str, GadgetLayout] = {}


def gadget_layout(scheme: HEScheme) -> GadgetLayout:
    lay = _LAYOUTS.get(scheme.name)
    if lay is None:
        lay = _LAYOUTS[scheme.name] = layout_from_bp(bp_alternate(bp_compile(scheme.dec_circuit())))
    return lay


# ciphertexts


@dataclass
class QCiphertext:
    bag: StateBag
    wires: list[WireId]
    enc_x: list[HECiphertext]
    enc_z: list[HECiphertext]
    levels: list[int]
    recryptions: int = 0
    log: list = field(default_factory=list)

    @property
    def level(self) -> int:
        return max(self.levels) if self.levels else 0

    def pads_json(self) -> list[dict]:
        return [
            {"level": lv, "x": cx.to_json(), "z": cz.to_json()}
            for lv, cx, cz in zip(self.levels, self.enc_x, self.enc_z)
        ]


def qfhe_enc(pk, bag: StateBag, wires: Sequence[WireId], rng, scheme: HEScheme | None = None) -> QCiphertext:
    scheme = scheme or scheme_from_name(pk.scheme)
    ex, ez = [], []
    for w in wires:
        x, z = (int(v) for v in rng.integers(0, 2, 2))
        bag.apply_pauli(w, x, z)
        ex.append(scheme.enc(pk, x, rng))
        ez.append(scheme.enc(pk, z, rng))
    return QCiphertext(bag, list(wires), ex, ez, [pk.level] * len(wires))


def qfhe_dec(sk, ct: QCiphertext, scheme: HEScheme | None = None) -> list[WireId]:
    """Undo the pads in place. ``sk`` is the key chain, or one SecretKey used for every wire."""
    chain = [sk] if isinstance(sk, SecretKey) else list(sk)
    scheme = scheme or scheme_from_name(chain[0].scheme)
    for j, w in enumerate(ct.wires):
        key = chain[0] if isinstance(sk, SecretKey) else chain[ct.levels[j]]
        ct.bag.undo_pauli(w, scheme.dec(key, ct.enc_x[j]), scheme.dec(key, ct.enc_z[j]))
    return list(ct.wires)


_NOT = BoolCircuit([CircuitInput("a")], [Gate("NOT", (0,))], 1)


def recrypt(keys: QFHEKeys, c: HECiphertext, rng) -> HECiphertext:
    """Move c from level i to i+1 by evaluating Dec under Enc_{pk_{i+1}}(sk_i)."""
    s, i = keys.scheme, c.level
    if i >= keys.L:
        raise TDepthExceeded(f"no key above level {i}")
    circ = s.dec_circuit()
    nxt = keys.levels[i + 1]
    sk_cts, bits = iter(keys.enc_sk[i]), iter(c.bits)
    ins = [next(sk_cts) if inp.cls == SK else s.enc(nxt.pk, next(bits), rng) for inp in circ.inputs]
    return s.eval(nxt.evk, circ, ins, rng)


def _raise_wire(keys, ct: QCiphertext, j: int, target: int, rng) -> None:
    while ct.levels[j] < target:
        ct.enc_x[j] = recrypt(keys, ct.enc_x[j], rng)
        ct.enc_z[j] = recrypt(keys, ct.enc_z[j], rng)
        ct.levels[j] += 1
        ct.recryptions += 1


def _apply_t(keys: QFHEKeys, ct: QCiphertext, j: int, rng) -> None:
    s, i = keys.scheme, ct.levels[j]
    nxt = keys.levels[i + 1]
    lay = gadget_layout(s)
    # T X^x Z^z = P^x X^x Z^z T up to phase; the gadget removes P^x
    ct.bag.apply_gate("T", ct.wires[j])
    gs = rsp_gen_gadget(keys.gadget[i], keys.enc_sk[i], nxt.pk, nxt.evk, lay, rng, bag=ct.bag)
    out = gadget_apply(gs, ct.wires[j], ct.enc_x[j], lay, nxt.evk, rng)
    _raise_wire(keys, ct, j, i + 1, rng)
    ct.enc_x[j] = s.eval(nxt.evk, xor_circuit(), [ct.enc_x[j], out.enc_x], rng)
    ct.enc_z[j] = s.eval(nxt.evk, xor_circuit(), [ct.enc_z[j], out.enc_z], rng)
    ct.wires[j] = out.wire
    ct.log.append({"gate": "T", "wire": j, "level": i + 1, "gadget_attempts": gs.attempts})


def qfhe_eval(keys: QFHEKeys, ct: QCiphertext, circuit: QCircuit, rng) -> QCiphertext:
    """Evaluate in place. Uses only public material: pk, evk, gadget keys, Enc(sk_i)."""
    if circuit.wires != len(ct.wires):
        raise CircuitError(f"circuit has {circuit.wires} wires, ciphertext {len(ct.wires)}")
    need = max(circuit.levels_after(ct.levels))
    if need > keys.L:
        raise TDepthExceeded(f"circuit needs level {need}, keys stop at L={keys.L}")
    s, bag = keys.scheme, ct.bag
    xor = xor_circuit()
    for name, tg in circuit.gates:
        if name == "T":
            _apply_t(keys, ct, tg[0], rng)
            continue
        if name == "CNOT":
            c, t = tg
            top = max(ct.levels[c], ct.levels[t])
            _raise_wire(keys, ct, c, top, rng)
            _raise_wire(keys, ct, t, top, rng)
            evk = keys.levels[top].evk
            bag.apply_cnot(ct.wires[c], ct.wires[t])
            ct.enc_z[c] = s.eval(evk, xor, [ct.enc_z[c], ct.enc_z[t]], rng)
            ct.enc_x[t] = s.eval(evk, xor, [ct.enc_x[t], ct.enc_x[c]], rng)
        else:
            j = tg[0]
            evk = keys.levels[ct.levels[j]].evk
            if name == "H":
                bag.apply_gate("H", ct.wires[j])
                ct.enc_x[j], ct.enc_z[j] = ct.enc_z[j], ct.enc_x[j]
            elif name == "P":
                bag.apply_gate("P", ct.wires[j])
                ct.enc_z[j] = s.eval(evk, xor, [ct.enc_x[j], ct.enc_z[j]], rng)
            elif name == "X":
                ct.enc_x[j] = s.eval(evk, _NOT, [ct.enc_x[j]], rng)
            else:
                ct.enc_z[j] = s.eval(evk, _NOT, [ct.enc_z[j]], rng)
        ct.log.append({"gate": name, "targets": list(tg)})
    top = ct.level
    for j in range(len(ct.wires)):
        _raise_wire(keys, ct, j, top, rng)
    return ct


# key storage: public, eval and secret parts in separate files


def family_from_name(name: str) -> Family:
    parts = name.split(":")
    if parts[0] == "ref" and len(parts) == 2:
        return RefFamily(int(parts[1]))
    if parts[0] == "ga" and len(parts) == 4:
        N, n, B = (int(v) for v in parts[1:])
        return GAFamily(N, n, B)
    if parts[0] == "amp" and len(parts) >= 3:
        return AmpFamily(family_from_name(":".join(parts[2:])), int(parts[1]))
    raise ValueError(f"unknown dTF family {name!r}")


def key_from_json(obj: dict):
    fam = obj.get("family")
    if fam == "ref":
        return RefKey.from_json(obj)
    if fam == "ga":
        return GAKey.from_json(obj)
    if fam == "amp":
        return AmpKey(key_from_json(obj["base"]), int(obj["ell"]))
    if fam == "4to2":
        return FourToTwoKey(key_from_json(obj["k1"]), key_from_json(obj["k2"]))
    raise ValueError(f"unknown key family {fam!r}")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def save_keys(keys: QFHEKeys, root) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    _dump(root / "meta.json", {"scheme": keys.scheme.name, "family": keys.family.name, "L": keys.L})
    for i, ks in enumerate(keys.levels):
        d = root / f"level_{i}"
        d.mkdir(exist_ok=True)
        _dump(d / "public.json", {"scheme": ks.pk.scheme, "level": i})
        _dump(d / "secret.json", {"scheme": ks.sk.scheme, "level": i, "bits": list(ks.sk.bits)})
    for i, gk in enumerate(keys.gadget):
        d = root / f"gadget_{i}"
        d.mkdir(exist_ok=True)
        _dump(d / "keys.json", [k4.to_json() for k4, _ in gk.entries])
        _dump(d / "enc_trapdoors.json", [[c.to_json() for c in enc] for _, enc in gk.entries])
        _dump(d / "enc_sk.json", [c.to_json() for c in keys.enc_sk[i]])
        _dump(d / "trapdoors.json", [td.to_bits() for td in gk.trapdoors])
    return root


def load_keys(root) -> QFHEKeys:
    root = Path(root)
    meta = json.loads((root / "meta.json").read_text())
    scheme, family, L = scheme_from_name(meta["scheme"]), family_from_name(meta["family"]), int(meta["L"])
    levels = []
    for i in range(L + 1):
        sec = json.loads((root / f"level_{i}" / "secret.json").read_text())
        levels.append(scheme.keyset_from_secret(SecretKey(sec["scheme"], i, tuple(sec["bits"]))))
    gadget, enc_sk = [], []
    for i in range(L):
        d = root / f"gadget_{i}"
        k4s = [key_from_json(o) for o in json.loads((d / "keys.json").read_text())]
        encs = [[HECiphertext.from_json(c) for c in row] for row in json.loads((d / "enc_trapdoors.json").read_text())]
        tpath = d / "trapdoors.json"
        tds = []
        if tpath.exists():
            tds = [four_to_two_trapdoor_from_bits(family, k, bits) for k, bits in zip(k4s, json.loads(tpath.read_text()))]
        gadget.append(GadgetKeys(family, scheme, list(zip(k4s, encs)), tds))
        enc_sk.append([HECiphertext.from_json(c) for c in json.loads((d / "enc_sk.json").read_text())])
    return QFHEKeys(scheme, family, L, levels, gadget, enc_sk)
