"""Sparse, factored state-vector simulator.

A StateBag holds independent blobs. Each blob is a SparseState: an ordered
list of wires plus a dict from integer label to complex amplitude. Wire k of
a blob occupies the label bits [offset_k, offset_k + width_k), little-endian,
so a t-bit wire holding x contributes ``x << offset_k``.

Global phase is never tracked; compare states with ``fidelity``.
"""
from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

PRUNE = 1e-14
NORM_TOL = 1e-10
_FACTOR_TOL = 1e-11
_FACTOR_MAX_ENTRIES = 1 << 12


class SimError(Exception):
    pass


class NonNormalized(SimError):
    pass


class UnknownWire(SimError):
    pass


class PartialFunction(SimError):
    pass


class WireMismatch(SimError):
    pass


_R = 1 / math.sqrt(2)
_W = cmath.exp(1j * math.pi / 4)

GATES: dict[str, np.ndarray] = {
    "H": np.array([[_R, _R], [_R, -_R]], dtype=complex),
    "P": np.diag([1, 1j]).astype(complex),
    "Pdg": np.diag([1, -1j]).astype(complex),
    "T": np.diag([1, _W]).astype(complex),
    "Tdg": np.diag([1, _W.conjugate()]).astype(complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
}
_DIAG = {g: complex(m[1, 1]) for g, m in GATES.items() if m[0, 1] == 0 and m[1, 0] == 0}


def self_test() -> None:
    for name, m in GATES.items():
        if not np.allclose(m @ m.conj().T, np.eye(2), atol=1e-14):
            raise AssertionError(f"gate {name} is not unitary")


self_test()


@dataclass(frozen=True)
class WireId:
    id: int
    width: int = 1

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("wire width must be >= 1")


def _drop_bits(label: int, off: int, width: int) -> int:
    low = label & ((1 << off) - 1)
    return low | ((label >> (off + width)) << off)


class SparseState:
    """Amplitudes over the concatenated bits of ``wires``."""

    __slots__ = ("wires", "amps")

    def __init__(self, wires: Sequence[WireId], amps: Mapping[int, complex]):
        self.wires = list(wires)
        self.amps = dict(amps)

    @property
    def nbits(self) -> int:
        return sum(w.width for w in self.wires)

    def offset(self, wire: WireId) -> int:
        off = 0
        for w in self.wires:
            if w == wire:
                return off
            off += w.width
        raise UnknownWire(wire)

    def field(self, label: int, wire: WireId) -> int:
        return (label >> self.offset(wire)) & ((1 << wire.width) - 1)

    def norm2(self) -> float:
        return sum(abs(a) ** 2 for a in self.amps.values())

    def copy(self) -> "SparseState":
        return SparseState(self.wires, self.amps)

    def normalize(self) -> "SparseState":
        amps = {k: a for k, a in self.amps.items() if abs(a) >= PRUNE}
        n = math.sqrt(sum(abs(a) ** 2 for a in amps.values()))
        if n == 0:
            raise NonNormalized("state has zero norm")
        self.amps = {k: a / n for k, a in amps.items()}
        return self

    def tensor(self, other: "SparseState") -> "SparseState":
        shift = self.nbits
        amps = {}
        for la, a in self.amps.items():
            for lb, b in other.amps.items():
                amps[la | (lb << shift)] = a * b
        return SparseState(self.wires + other.wires, amps)

    def reorder(self, wires: Sequence[WireId]) -> "SparseState":
        if sorted(w.id for w in wires) != sorted(w.id for w in self.wires):
            raise WireMismatch("reorder needs the same wire set")
        offs = [self.offset(w) for w in wires]
        amps = {}
        for lab, a in self.amps.items():
            new, pos = 0, 0
            for w, off in zip(wires, offs):
                new |= ((lab >> off) & ((1 << w.width) - 1)) << pos
                pos += w.width
            amps[new] = a
        return SparseState(wires, amps)

    def dense(self) -> np.ndarray:
        vec = np.zeros(1 << self.nbits, dtype=complex)
        for lab, a in self.amps.items():
            vec[lab] = a
        return vec

    @classmethod
    def from_dense(cls, wires: Sequence[WireId], vec) -> "SparseState":
        vec = np.asarray(vec, dtype=complex)
        if len(vec) != 1 << sum(w.width for w in wires):
            raise ValueError("vector length does not match wire widths")
        st = cls(wires, {i: complex(a) for i, a in enumerate(vec) if abs(a) >= PRUNE})
        if abs(st.norm2() - 1) > NORM_TOL:
            raise NonNormalized("vector is not normalized")
        return st

    def label_str(self, label: int) -> str:
        return "".join(str((label >> i) & 1) for i in range(self.nbits))

    def to_json(self) -> dict:
        return {
            "wires": [{"id": w.id, "width": w.width} for w in self.wires],
            "amps": {
                self.label_str(k): [float(f"{a.real:.17g}"), float(f"{a.imag:.17g}")]
                for k, a in sorted(self.amps.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SparseState":
        wires = [WireId(int(w["id"]), int(w["width"])) for w in obj["wires"]]
        amps = {}
        for s, (re, im) in obj["amps"].items():
            amps[sum(int(c) << i for i, c in enumerate(s))] = complex(re, im)
        return cls(wires, amps)


def fidelity(s1: SparseState, s2: SparseState) -> float:
    """|<s1|s2>|^2 after putting s2 in s1's wire order."""
    if sorted((w.id, w.width) for w in s1.wires) != sorted((w.id, w.width) for w in s2.wires):
        raise WireMismatch("fidelity needs identical wire sets")
    s2 = s2.reorder(s1.wires)
    ov = sum(a.conjugate() * s2.amps.get(k, 0) for k, a in s1.amps.items())
    return min(1.0, abs(ov) ** 2)


def _pick(probs: Sequence[tuple[int, float]], rng: np.random.Generator) -> int:
    total = sum(p for _, p in probs)
    u = rng.random() * total
    acc = 0.0
    for k, p in probs:
        acc += p
        if u < acc:
            return k
    return probs[-1][0]


def _split(state: SparseState, group: Sequence[WireId]):
    """Return (state_group, state_rest) if ``state`` is a product across the cut."""
    rest = [w for w in state.wires if w not in group]
    st = state.reorder(list(group) + rest)
    gbits = sum(w.width for w in group)
    mask = (1 << gbits) - 1
    rows: dict[int, dict[int, complex]] = {}
    for lab, a in st.amps.items():
        rows.setdefault(lab & mask, {})[lab >> gbits] = a
    cols = {b for r in rows.values() for b in r}
    if len(rows) * len(cols) != len(st.amps):
        return None
    (k0, a0) = max(st.amps.items(), key=lambda kv: abs(kv[1]))
    g0, r0 = k0 & mask, k0 >> gbits
    for g, row in rows.items():
        ratio = row[r0] / a0
        for r, a in row.items():
            if abs(a - ratio * rows[g0][r]) > _FACTOR_TOL:
                return None
    ga = {g: row[r0] for g, row in rows.items()}
    ra = dict(rows[g0])
    return SparseState(group, ga).normalize(), SparseState(rest, ra).normalize()


@dataclass
class PauliFrame:
    """Plain (unencrypted) Pauli pads: state is X^x Z^z applied to the logical one."""

    pads: dict[WireId, tuple[int, int]] = field(default_factory=dict)

    def get(self, w: WireId) -> tuple[int, int]:
        return self.pads.get(w, (0, 0))

    def set(self, w: WireId, x: int, z: int) -> None:
        if w.width != 1:
            raise ValueError("Pauli frames only apply to 1-bit wires")
        self.pads[w] = (x & 1, z & 1)

    def gate(self, g: str, w: WireId) -> None:
        x, z = self.get(w)
        if g == "H":
            x, z = z, x
        elif g in ("P", "Pdg"):
            z ^= x
        elif g == "X":
            x ^= 1
        elif g == "Z":
            z ^= 1
        else:
            raise ValueError(f"no Pauli update rule for {g}")
        self.set(w, x, z)

    def cnot(self, c: WireId, t: WireId) -> None:
        xc, zc = self.get(c)
        xt, zt = self.get(t)
        self.set(c, xc, zc ^ zt)
        self.set(t, xt ^ xc, zt)

    def apply(self, bag: "StateBag") -> None:
        for w, (x, z) in self.pads.items():
            bag.apply_pauli(w, x, z)

    def undo(self, bag: "StateBag") -> None:
        for w, (x, z) in self.pads.items():
            bag.undo_pauli(w, x, z)


class StateBag:
    """Collection of blobs with disjoint wire sets."""

    def __init__(self, autofactor: bool = True):
        self._blobs: dict[int, SparseState] = {}
        self._owner: dict[WireId, int] = {}
        self._next_wire = 0
        self._next_blob = 0
        self.autofactor = autofactor

    # bookkeeping

    def wires(self) -> list[WireId]:
        return sorted(self._owner, key=lambda w: w.id)

    def __contains__(self, wire: WireId) -> bool:
        return wire in self._owner

    def blob_count(self) -> int:
        return len(self._blobs)

    def blob_sizes(self) -> list[int]:
        return [len(b.wires) for b in self._blobs.values()]

    def _new_wire(self, width: int) -> WireId:
        w = WireId(self._next_wire, width)
        self._next_wire += 1
        return w

    def _add(self, state: SparseState) -> int:
        bid = self._next_blob
        self._next_blob += 1
        self._blobs[bid] = state
        for w in state.wires:
            self._owner[w] = bid
        return bid

    def _bid(self, wire: WireId) -> int:
        try:
            return self._owner[wire]
        except KeyError:
            raise UnknownWire(wire) from None

    def _merge(self, wires: Iterable[WireId]) -> int:
        bids: list[int] = []
        for w in wires:
            b = self._bid(w)
            if b not in bids:
                bids.append(b)
        if len(bids) == 1:
            return bids[0]
        st = self._blobs.pop(bids[0])
        for b in bids[1:]:
            st = st.tensor(self._blobs.pop(b))
        return self._add(st)

    def _replace(self, bid: int, st: SparseState) -> None:
        if not st.wires:
            del self._blobs[bid]
            return
        self._blobs[bid] = st
        if self.autofactor and len(st.wires) > 2 and len(st.amps) <= _FACTOR_MAX_ENTRIES:
            self.factorize(st.wires[0])

    def _require_qubit(self, w: WireId) -> None:
        self._bid(w)
        if w.width != 1:
            raise ValueError(f"wire {w.id} is not a qubit")

    # preparation

    def alloc_plus(self, n: int) -> list[WireId]:
        out = []
        for _ in range(n):
            w = self._new_wire(1)
            self._add(SparseState([w], {0: _R, 1: _R}))
            out.append(w)
        return out

    def alloc_zero(self, n: int) -> list[WireId]:
        out = []
        for _ in range(n):
            w = self._new_wire(1)
            self._add(SparseState([w], {0: 1.0}))
            out.append(w)
        return out

    def load(self, vec, widths: Sequence[int] | None = None) -> list[WireId]:
        """Add a new blob holding ``vec``; one qubit wire per bit unless widths given."""
        vec = np.asarray(vec, dtype=complex)
        nb = int(round(math.log2(len(vec))))
        if widths is None:
            widths = [1] * nb
        wires = [self._new_wire(w) for w in widths]
        self._add(SparseState.from_dense(wires, vec))
        return wires

    def prepare_superposition(self, dist: Mapping[int, float], width: int | None = None) -> WireId:
        total = sum(dist.values())
        if abs(total - 1) > NORM_TOL:
            raise NonNormalized(f"distribution sums to {total}")
        if width is None:
            width = max(1, max(dist).bit_length())
        w = self._new_wire(width)
        amps = {x: math.sqrt(p) for x, p in dist.items() if p > 0}
        if any(x >> width for x in amps):
            raise ValueError("label exceeds wire width")
        self._add(SparseState([w], amps))
        return w

    def prepare_conditional(
        self,
        controls: Sequence[WireId],
        dist_for: Callable[[tuple[int, ...]], Mapping[int, float]],
        width: int,
    ) -> WireId:
        """Append a ``width``-bit wire holding sum_x sqrt(D_c(x))|x> controlled on c."""
        bid = self._merge(controls)
        st = self._blobs[bid]
        offs = [(st.offset(c), (1 << c.width) - 1) for c in controls]
        shift = st.nbits
        cache: dict[tuple[int, ...], list[tuple[int, float]]] = {}
        amps = {}
        for lab, a in st.amps.items():
            key = tuple((lab >> o) & m for o, m in offs)
            rows = cache.get(key)
            if rows is None:
                dist = dist_for(key)
                if abs(sum(dist.values()) - 1) > NORM_TOL:
                    raise NonNormalized(f"conditional distribution for {key} not normalized")
                rows = [(x << shift, math.sqrt(p)) for x, p in dist.items() if p > 0]
                cache[key] = rows
            for xs, r in rows:
                amps[lab | xs] = a * r
        w = self._new_wire(width)
        self._blobs[bid] = SparseState(st.wires + [w], amps)
        self._owner[w] = bid
        return w

    # unitaries

    def apply_gate(self, gate: str, wire: WireId) -> None:
        self._require_qubit(wire)
        if gate not in GATES:
            raise ValueError(f"unknown gate {gate}")
        bid = self._bid(wire)
        st = self._blobs[bid]
        bit = 1 << st.offset(wire)
        if gate in _DIAG:
            ph = _DIAG[gate]
            st.amps = {k: (a * ph if k & bit else a) for k, a in st.amps.items()}
        elif gate == "X":
            st.amps = {k ^ bit: a for k, a in st.amps.items()}
        else:
            m = GATES[gate]
            new: dict[int, complex] = {}
            for k, a in st.amps.items():
                b = 1 if k & bit else 0
                k0 = k & ~bit
                new[k0] = new.get(k0, 0) + m[0, b] * a
                new[k0 | bit] = new.get(k0 | bit, 0) + m[1, b] * a
            st.amps = {k: a for k, a in new.items() if abs(a) >= PRUNE}

    def apply_pauli(self, wire: WireId, x: int, z: int) -> None:
        """Apply X^x Z^z (Z first)."""
        if z:
            self.apply_gate("Z", wire)
        if x:
            self.apply_gate("X", wire)

    def undo_pauli(self, wire: WireId, x: int, z: int) -> None:
        if x:
            self.apply_gate("X", wire)
        if z:
            self.apply_gate("Z", wire)

    def apply_cnot(self, control: WireId, target: WireId) -> None:
        self._require_qubit(control)
        self._require_qubit(target)
        if control == target:
            raise ValueError("CNOT needs distinct wires")
        bid = self._merge([control, target])
        st = self._blobs[bid]
        cb, tb = 1 << st.offset(control), 1 << st.offset(target)
        st.amps = {(k ^ tb if k & cb else k): a for k, a in st.amps.items()}

    def apply_classical_function(
        self,
        in_wires: WireId | Sequence[WireId],
        f: Mapping[int, int] | Callable[[int], int],
        out_width: int,
    ) -> WireId:
        """New wire holding f(x) where x concatenates ``in_wires`` little-endian."""
        if isinstance(in_wires, WireId):
            in_wires = [in_wires]
        bid = self._merge(in_wires)
        st = self._blobs[bid]
        offs = [(st.offset(w), (1 << w.width) - 1, w.width) for w in in_wires]
        shift = st.nbits
        lookup = f.__getitem__ if isinstance(f, Mapping) else f
        cache: dict[int, int] = {}
        amps = {}
        for lab, a in st.amps.items():
            x, pos = 0, 0
            for o, m, wd in offs:
                x |= ((lab >> o) & m) << pos
                pos += wd
            y = cache.get(x)
            if y is None:
                try:
                    y = int(lookup(x))
                except KeyError:
                    raise PartialFunction(f"function undefined on label {x}") from None
                if y < 0 or y >> out_width:
                    raise ValueError(f"output {y} does not fit {out_width} bits")
                cache[x] = y
            amps[lab | (y << shift)] = a
        w = self._new_wire(out_width)
        self._blobs[bid] = SparseState(st.wires + [w], amps)
        self._owner[w] = bid
        return w

    # measurement

    def _remove_wire(self, bid: int, wire: WireId, amps: dict[int, complex]) -> None:
        st = self._blobs[bid]
        rest = [w for w in st.wires if w != wire]
        del self._owner[wire]
        self._replace(bid, SparseState(rest, amps).normalize() if rest else SparseState([], {}))

    def measure_standard(self, wire: WireId, rng: np.random.Generator) -> int:
        bid = self._bid(wire)
        st = self._blobs[bid]
        off, mask = st.offset(wire), (1 << wire.width) - 1
        probs: dict[int, float] = {}
        for k, a in st.amps.items():
            v = (k >> off) & mask
            probs[v] = probs.get(v, 0.0) + abs(a) ** 2
        out = _pick(sorted(probs.items()), rng)
        kept = {
            _drop_bits(k, off, wire.width): a
            for k, a in st.amps.items()
            if (k >> off) & mask == out
        }
        self._remove_wire(bid, wire, kept)
        return out

    def measure_hadamard(self, wire: WireId, rng: np.random.Generator) -> int:
        """Measure every bit of ``wire`` in the Hadamard basis; returns d."""
        bid = self._bid(wire)
        st = self._blobs[bid]
        off = st.offset(wire)
        amps = st.amps
        d = 0
        for j in range(wire.width):
            bit = 1 << off
            br = ({}, {})
            for k, a in amps.items():
                base = _drop_bits(k, off, 1)
                s = a * _R
                br[0][base] = br[0].get(base, 0) + s
                br[1][base] = br[1].get(base, 0) + (-s if k & bit else s)
            p = [sum(abs(v) ** 2 for v in b.values()) for b in br]
            o = _pick([(0, p[0]), (1, p[1])], rng)
            amps = {k: v for k, v in br[o].items() if abs(v) >= PRUNE}
            d |= o << j
        self._remove_wire(bid, wire, amps)
        return d

    def bell_measure(self, a: WireId, b: WireId, rng: np.random.Generator) -> tuple[int, int]:
        """Outcome (m_a, m_b) identifies (I (x) X^m_b Z^m_a)|Phi+>."""
        self._merge([a, b])
        self.apply_cnot(a, b)
        self.apply_gate("H", a)
        ma = self.measure_standard(a, rng)
        mb = self.measure_standard(b, rng)
        return ma, mb

    # inspection

    def factorize(self, wire: WireId, max_group: int = 3) -> None:
        """Split the blob holding ``wire`` into product factors where possible."""
        todo = [self._bid(wire)]
        while todo:
            bid = todo.pop()
            st = self._blobs[bid]
            if len(st.wires) < 2:
                continue
            found = None
            for size in range(1, min(max_group, len(st.wires) // 2) + 1):
                for group in itertools.combinations(st.wires, size):
                    found = _split(st, list(group))
                    if found:
                        break
                if found:
                    break
            if not found:
                continue
            del self._blobs[bid]
            for part in found:
                todo.append(self._add(part))

    def state_of(self, wires: Sequence[WireId]) -> SparseState:
        """Copy of the joint state of ``wires`` (which must not be entangled with others)."""
        wanted = set(wires)
        parts: list[SparseState] = []
        seen: set[int] = set()
        for w in wires:
            bid = self._bid(w)
            if bid in seen:
                continue
            if not set(self._blobs[bid].wires) <= wanted:
                self.factorize(w, max_group=4)
                bid = self._bid(w)
            if bid in seen:
                continue
            st = self._blobs[bid]
            if not set(st.wires) <= wanted:
                raise WireMismatch(f"wire {w.id} is entangled with wires outside the request")
            seen.add(bid)
            parts.append(st)
        out = parts[0].copy()
        for p in parts[1:]:
            out = out.tensor(p)
        return out.reorder(list(wires))

    def marginal(self, wires: Sequence[WireId]) -> dict[int, float]:
        """Joint computational-basis distribution of ``wires`` (non-destructive)."""
        by_blob: dict[int, list[WireId]] = {}
        for w in wires:
            by_blob.setdefault(self._bid(w), []).append(w)
        dist = {0: 1.0}
        pos = {w: i for i, w in enumerate(wires)}
        for bid, ws in by_blob.items():
            st = self._blobs[bid]
            offs = [(st.offset(w), pos[w]) for w in ws]
            local: dict[int, float] = {}
            for k, a in st.amps.items():
                v = 0
                for o, p in offs:
                    v |= ((k >> o) & 1) << p
                local[v] = local.get(v, 0.0) + abs(a) ** 2
            dist = {x | y: px * py for x, px in dist.items() for y, py in local.items()}
        return dist

    def discard(self, wires: Iterable[WireId]) -> None:
        """Drop wires whose blobs are not entangled with anything kept."""
        gone = set(wires)
        for w in list(gone):
            if w not in self._owner:
                continue
            bid = self._owner[w]
            if not set(self._blobs[bid].wires) <= gone:
                self.factorize(w, max_group=4)
                bid = self._owner[w]
                if not set(self._blobs[bid].wires) <= gone:
                    raise WireMismatch(f"wire {w.id} is entangled with kept wires")
            for x in self._blobs.pop(bid).wires:
                del self._owner[x]

    def dump(self, wire: WireId) -> dict:
        return self._blobs[self._bid(wire)].to_json()
