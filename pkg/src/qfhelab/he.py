"""Boolean circuits and two functional classical HE mocks.

ClearHE is transparent. MaskHE(kappa) encrypts m as (r, m ^ <r, sk>) and
evaluates by decrypt/evaluate/re-encrypt behind the evaluation key. Neither
is secure; both are exactly correct, which is all the quantum layer needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SK, CT = "sk", "ct"
OPS = {"XOR": 2, "AND": 2, "NOT": 1}


class HEError(Exception):
    pass


class SchemeMismatch(HEError):
    pass


class ArityMismatch(HEError):
    pass


@dataclass(frozen=True)
class CircuitInput:
    name: str
    cls: str = CT


@dataclass(frozen=True)
class Gate:
    op: str
    ins: tuple[int, ...]


@dataclass
class BoolCircuit:
    """Fan-in-2 circuit. Wires 0..n-1 are inputs, gate k drives wire n+k."""

    inputs: list[CircuitInput]
    gates: list[Gate] = field(default_factory=list)
    output: int = 0

    def __post_init__(self):
        n = len(self.inputs)
        for k, g in enumerate(self.gates):
            if g.op not in OPS:
                raise ValueError(f"unsupported gate {g.op}")
            if len(g.ins) != OPS[g.op]:
                raise ValueError(f"{g.op} takes {OPS[g.op]} inputs")
            if any(i < 0 or i >= n + k for i in g.ins):
                raise ValueError(f"gate {k} reads a wire that is not yet defined")
        if not 0 <= self.output < n + len(self.gates):
            raise ValueError("output wire out of range")

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    def evaluate(self, bits: Sequence[int]) -> int:
        if len(bits) != len(self.inputs):
            raise ArityMismatch(f"circuit takes {len(self.inputs)} inputs, got {len(bits)}")
        vals = [b & 1 for b in bits]
        for g in self.gates:
            a = vals[g.ins[0]]
            if g.op == "NOT":
                vals.append(a ^ 1)
            elif g.op == "XOR":
                vals.append(a ^ vals[g.ins[1]])
            else:
                vals.append(a & vals[g.ins[1]])
        return vals[self.output]

    def depths(self) -> list[int]:
        d = [0] * len(self.inputs)
        for g in self.gates:
            d.append(1 + max(d[i] for i in g.ins))
        return d

    def depth(self) -> int:
        return self.depths()[self.output]

    def to_json(self) -> dict:
        n = len(self.inputs)
        return {
            "inputs": [{"name": i.name, "class": i.cls} for i in self.inputs],
            "gates": [{"op": g.op, "in": list(g.ins), "out": n + k} for k, g in enumerate(self.gates)],
            "output": self.output,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoolCircuit":
        inputs = [CircuitInput(str(i["name"]), str(i.get("class", CT))) for i in obj["inputs"]]
        n = len(inputs)
        gates = []
        for k, g in enumerate(obj["gates"]):
            if "out" in g and int(g["out"]) != n + k:
                raise ValueError("gate outputs must be numbered consecutively after the inputs")
            gates.append(Gate(str(g["op"]).upper(), tuple(int(i) for i in g["in"])))
        return cls(inputs, gates, int(obj["output"]))


class CircuitBuilder:
    """Builds a BoolCircuit with constant folding and structural sharing.

    Values are Python ints 0/1 (constants) or Ref handles. Inputs may be
    declared at any time; numbering is fixed in ``build``.
    """

    def __init__(self):
        self.inputs: list[CircuitInput] = []
        self._gates: list[tuple[str, tuple["Ref", ...]]] = []
        self._names: dict[str, Ref] = {}
        self._memo: dict[tuple, Ref] = {}

    def input(self, name: str, cls: str = CT) -> "Ref":
        if name not in self._names:
            self.inputs.append(CircuitInput(name, cls))
            self._names[name] = Ref(True, len(self.inputs) - 1)
        return self._names[name]

    def _gate(self, op: str, *ins: "Ref") -> "Ref":
        key = (op, *sorted(ins)) if op != "NOT" else (op, *ins)
        if key not in self._memo:
            self._gates.append((op, ins))
            self._memo[key] = Ref(False, len(self._gates) - 1)
        return self._memo[key]

    def xor(self, a, b):
        if isinstance(a, int):
            a, b = b, a
        if isinstance(b, int):
            if isinstance(a, int):
                return a ^ b
            return self.not_(a) if b else a
        if a == b:
            return 0
        return self._gate("XOR", a, b)

    def and_(self, a, b):
        if isinstance(a, int):
            a, b = b, a
        if isinstance(b, int):
            if isinstance(a, int):
                return a & b
            return a if b else 0
        if a == b:
            return a
        return self._gate("AND", a, b)

    def not_(self, a):
        if isinstance(a, int):
            return a ^ 1
        if not a.is_input:
            op, ins = self._gates[a.k]
            if op == "NOT":
                return ins[0]
        return self._gate("NOT", a)

    def build(self, out) -> BoolCircuit:
        """Finish with output ``out``; a constant output is realized as v^v (or its negation)."""
        if isinstance(out, int):
            if not self.inputs:
                raise ValueError("a constant output needs at least one input wire")
            v = Ref(True, 0)
            zero = self._gate("XOR", v, v)
            out = self._gate("NOT", zero) if out else zero
        n = len(self.inputs)
        # keep only gates feeding the output
        need = set()
        stack = [out]
        while stack:
            r = stack.pop()
            if r.is_input or r.k in need:
                continue
            need.add(r.k)
            stack.extend(self._gates[r.k][1])
        order = sorted(need)
        pos = {k: n + i for i, k in enumerate(order)}

        def wire(r: Ref) -> int:
            return r.k if r.is_input else pos[r.k]

        gates = [Gate(self._gates[k][0], tuple(wire(r) for r in self._gates[k][1])) for k in order]
        return BoolCircuit(list(self.inputs), gates, wire(out))


@dataclass(frozen=True, order=True)
class Ref:
    is_input: bool
    k: int


# schemes


@dataclass(frozen=True)
class HECiphertext:
    scheme: str
    level: int
    bits: tuple[int, ...]

    def to_json(self) -> dict:
        return {"scheme": self.scheme, "level": self.level, "bits": list(self.bits)}

    @classmethod
    def from_json(cls, obj: dict) -> "HECiphertext":
        return cls(str(obj["scheme"]), int(obj["level"]), tuple(int(b) for b in obj["bits"]))


class _Sealed:
    """Opaque holder of key material; only scheme methods look inside."""

    __slots__ = ("_v",)

    def __init__(self, v):
        self._v = v

    def __repr__(self):
        return "<sealed>"


@dataclass(frozen=True)
class PublicKey:
    scheme: str
    level: int
    sealed: _Sealed | None = None


@dataclass(frozen=True)
class EvalKey:
    scheme: str
    level: int
    sealed: _Sealed | None = None


@dataclass(frozen=True)
class SecretKey:
    scheme: str
    level: int
    bits: tuple[int, ...]


@dataclass(frozen=True)
class HEKeySet:
    pk: PublicKey
    sk: SecretKey
    evk: EvalKey


class HEScheme:
    name = "abstract"
    kappa = 0
    ct_len = 0

    def keygen(self, rng: np.random.Generator, level: int = 0) -> HEKeySet:
        raise NotImplementedError

    def _encrypt(self, key_bits, m: int, rng) -> tuple[int, ...]:
        raise NotImplementedError

    def _decrypt(self, key_bits, bits) -> int:
        raise NotImplementedError

    def dec_circuit(self) -> BoolCircuit:
        raise NotImplementedError

    def keyset_from_secret(self, sk: SecretKey) -> HEKeySet:
        """Rebuild pk and evk from stored secret bits (the mock evk is the key itself)."""
        raise NotImplementedError

    def _check(self, obj) -> None:
        if obj.scheme != self.name:
            raise SchemeMismatch(f"{obj.scheme} object used with {self.name}")

    def enc(self, pk: PublicKey, m: int, rng) -> HECiphertext:
        self._check(pk)
        key = pk.sealed._v if pk.sealed else ()
        return HECiphertext(self.name, pk.level, self._encrypt(key, m & 1, rng))

    def dec(self, sk: SecretKey, ct: HECiphertext) -> int:
        self._check(sk)
        self._check(ct)
        if len(ct.bits) != self.ct_len:
            raise SchemeMismatch("ciphertext length does not match scheme")
        return self._decrypt(sk.bits, ct.bits)

    def eval(self, evk: EvalKey, circuit: BoolCircuit, cts: Sequence[HECiphertext], rng) -> HECiphertext:
        if len(cts) != circuit.n_inputs:
            raise ArityMismatch(f"circuit takes {circuit.n_inputs} ciphertexts, got {len(cts)}")
        self._check(evk)
        key = evk.sealed._v if evk.sealed else ()
        plain = [self._open(key, c) for c in cts]
        return HECiphertext(self.name, evk.level, self._encrypt(key, circuit.evaluate(plain), rng))

    def eval_function(
        self,
        evk: EvalKey,
        fn: Callable[[list[int]], Sequence[int]],
        cts: Sequence[HECiphertext],
        rng,
    ) -> list[HECiphertext]:
        """Homomorphically apply a multi-output function of the encrypted bits."""
        self._check(evk)
        key = evk.sealed._v if evk.sealed else ()
        plain = [self._open(key, c) for c in cts]
        return [HECiphertext(self.name, evk.level, self._encrypt(key, b & 1, rng)) for b in fn(plain)]

    def _open(self, key, ct: HECiphertext) -> int:
        self._check(ct)
        return self._decrypt(key, ct.bits)


class ClearHE(HEScheme):
    name = "clear"
    kappa = 0
    ct_len = 1

    def keygen(self, rng, level: int = 0) -> HEKeySet:
        return HEKeySet(PublicKey(self.name, level), SecretKey(self.name, level, ()), EvalKey(self.name, level))

    def keyset_from_secret(self, sk: SecretKey) -> HEKeySet:
        self._check(sk)
        return HEKeySet(PublicKey(self.name, sk.level), sk, EvalKey(self.name, sk.level))

    def _encrypt(self, key_bits, m, rng):
        return (m,)

    def _decrypt(self, key_bits, bits):
        return bits[0] & 1

    def dec_circuit(self) -> BoolCircuit:
        return BoolCircuit([CircuitInput("c", CT)], [], 0)


class MaskHE(HEScheme):
    def __init__(self, kappa: int):
        if kappa < 1:
            raise ValueError("MaskHE needs kappa >= 1")
        self.kappa = kappa
        self.ct_len = kappa + 1
        self.name = f"mask:{kappa}"

    def keygen(self, rng, level: int = 0) -> HEKeySet:
        sk = tuple(int(b) for b in rng.integers(0, 2, self.kappa))
        sealed = _Sealed(sk)
        return HEKeySet(
            PublicKey(self.name, level, sealed), SecretKey(self.name, level, sk), EvalKey(self.name, level, sealed)
        )

    def keyset_from_secret(self, sk: SecretKey) -> HEKeySet:
        self._check(sk)
        if len(sk.bits) != self.kappa:
            raise SchemeMismatch("secret key length does not match scheme")
        sealed = _Sealed(tuple(sk.bits))
        return HEKeySet(PublicKey(self.name, sk.level, sealed), sk, EvalKey(self.name, sk.level, sealed))

    def _encrypt(self, key_bits, m, rng):
        r = [int(b) for b in rng.integers(0, 2, self.kappa)]
        par = sum(a & b for a, b in zip(r, key_bits)) & 1
        return (*r, m ^ par)

    def _decrypt(self, key_bits, bits):
        par = sum(a & b for a, b in zip(bits[: self.kappa], key_bits)) & 1
        return bits[self.kappa] ^ par

    def dec_circuit(self) -> BoolCircuit:
        """AND layer r_i & sk_i, balanced XOR tree, final XOR with c."""
        k = self.kappa
        inputs = [CircuitInput(f"sk{i}", SK) for i in range(k)]
        inputs += [CircuitInput(f"r{i}", CT) for i in range(k)]
        inputs.append(CircuitInput("c", CT))
        gates: list[Gate] = []

        def add(op, *ins):
            gates.append(Gate(op, ins))
            return len(inputs) + len(gates) - 1

        layer = [add("AND", k + i, i) for i in range(k)]
        while len(layer) > 1:
            nxt = [add("XOR", layer[i], layer[i + 1]) for i in range(0, len(layer) - 1, 2)]
            if len(layer) % 2:
                nxt.append(layer[-1])
            layer = nxt
        out = add("XOR", layer[0], 2 * k)
        return BoolCircuit(inputs, gates, out)


def scheme_from_name(name: str) -> HEScheme:
    if name == "clear":
        return ClearHE()
    if name.startswith("mask:"):
        try:
            return MaskHE(int(name.split(":", 1)[1]))
        except ValueError:
            raise ValueError(f"bad MaskHE parameter in {name!r}") from None
    raise ValueError(f"unknown HE scheme {name!r}")


# module-level API mirroring the operation names


def he_keygen(scheme: HEScheme, rng, level: int = 0) -> HEKeySet:
    return scheme.keygen(rng, level)


def he_enc(scheme: HEScheme, pk: PublicKey, m: int, rng) -> HECiphertext:
    return scheme.enc(pk, m, rng)


def he_dec(scheme: HEScheme, sk: SecretKey, ct: HECiphertext) -> int:
    return scheme.dec(sk, ct)


def he_eval(scheme: HEScheme, evk: EvalKey, circuit: BoolCircuit, cts, rng) -> HECiphertext:
    return scheme.eval(evk, circuit, cts, rng)


def he_eval_function(scheme: HEScheme, evk: EvalKey, fn, cts, rng) -> list[HECiphertext]:
    return scheme.eval_function(evk, fn, cts, rng)


def dec_as_circuit(scheme: HEScheme) -> BoolCircuit:
    return scheme.dec_circuit()


def enc_bits(scheme: HEScheme, pk: PublicKey, bits: Sequence[int], rng) -> list[HECiphertext]:
    return [scheme.enc(pk, b, rng) for b in bits]


def dec_bits(scheme: HEScheme, sk: SecretKey, cts: Sequence[HECiphertext]) -> list[int]:
    return [scheme.dec(sk, c) for c in cts]


def xor_circuit() -> BoolCircuit:
    return BoolCircuit([CircuitInput("a"), CircuitInput("b")], [Gate("XOR", (0, 1))], 2)


def expected_dec_depth(kappa: int) -> int:
    return math.ceil(math.log2(kappa)) + 2 if kappa > 1 else 2
