"""Dual-mode trapdoor functions: interface, reference family, 4-to-2 and XOR amplification.

Domain elements and images are integers. A domain element is a t-bit
little-endian encoding; images are packed into ``y_bits`` bits so they can
live in a simulator wire. ``alpha`` values are exact sums
sum_x (-1)^{d.x} sqrt(D_b(x)) over the b-preimages of y.
"""
from __future__ import annotations

import math
from functools import cached_property
from typing import Sequence

import numpy as np

SIGN_TOL = 1e-9


class DTFError(Exception):
    pass


class NotInvertible(DTFError):
    pass


def parity(v: int) -> int:
    return bin(v).count("1") & 1


def bits_of(v: int, n: int) -> list[int]:
    return [(v >> i) & 1 for i in range(n)]


def int_of(bits: Sequence[int]) -> int:
    return sum((b & 1) << i for i, b in enumerate(bits))


class DTFKey:
    """Public evaluation key. Subclasses set ``family``, ``t`` and ``y_bits``."""

    family = "abstract"
    t = 0
    y_bits = 0

    def eval(self, b: int, x: int) -> int:
        raise NotImplementedError

    def prob(self, b: int, x: int) -> float:
        raise NotImplementedError

    def dist(self, b: int) -> dict[int, float]:
        raise NotImplementedError

    def sample(self, b: int, rng: np.random.Generator) -> int:
        d = self.dist(b)
        xs = list(d)
        return xs[int(rng.choice(len(xs), p=[d[x] for x in xs]))]

    def to_json(self) -> dict:
        raise NotImplementedError


class DTFTrapdoor:
    invertible = True

    def __init__(self, key: DTFKey, mode: int):
        self.key = key
        self.mode = mode

    def invert(self, y: int) -> frozenset[tuple[int, int]]:
        raise NotInvertible(f"{type(self).__name__} has no full inversion")

    def partial_invert(self, y: int) -> frozenset[int]:
        return frozenset(b for b, _ in self.invert(y))

    def alpha(self, y: int, d: int, b: int) -> float:
        tot = 0.0
        for bb, x in self.invert(y):
            if bb == b:
                tot += (-1) ** parity(d & x) * math.sqrt(self.key.prob(b, x))
        return tot

    def to_bits(self) -> list[int]:
        raise NotImplementedError

    @classmethod
    def from_bits(cls, key: DTFKey, bits: Sequence[int]) -> "DTFTrapdoor":
        raise NotImplementedError

    @classmethod
    def bit_length(cls, key: DTFKey) -> int:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


def phase_sign(a0: float, a1: float, tol: float = SIGN_TOL) -> int | None:
    """s with a1 = (-1)^s a0, or None when |a0| != |a1| (no phase relation)."""
    if abs(abs(a0) - abs(a1)) > tol or abs(a0) <= tol:
        return None
    return 0 if (a0 > 0) == (a1 > 0) else 1


# reference family


class RefKey(DTFKey):
    family = "ref"

    def __init__(self, t: int, tables: tuple[Sequence[int], Sequence[int]], mode: int | None = None):
        self.t = t
        self.y_bits = t + 1
        self.tables = (tuple(tables[0]), tuple(tables[1]))
        self.mode = mode  # exposed for test builds only

    def eval(self, b: int, x: int) -> int:
        return self.tables[b][x]

    def prob(self, b: int, x: int) -> float:
        return 2.0 ** -self.t if 0 <= x < (1 << self.t) else 0.0

    @cached_property
    def _uniform(self) -> dict[int, float]:
        p = 2.0 ** -self.t
        return {x: p for x in range(1 << self.t)}

    def dist(self, b: int) -> dict[int, float]:
        return self._uniform

    def sample(self, b, rng) -> int:
        return int(rng.integers(1 << self.t))

    def to_json(self) -> dict:
        return {
            "family": "ref",
            "mode-hidden": False,
            "mode": self.mode,
            "key": {"t": self.t, "f0": list(self.tables[0]), "f1": list(self.tables[1])},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RefKey":
        k = obj["key"]
        return cls(int(k["t"]), (k["f0"], k["f1"]), obj.get("mode"))


class RefTrapdoor(DTFTrapdoor):
    def __init__(self, key: RefKey, mode: int, perm: Sequence[int], delta: int):
        super().__init__(key, mode)
        self.perm = tuple(perm)
        self.delta = delta
        inv = [0] * len(self.perm)
        for i, p in enumerate(self.perm):
            inv[p] = i
        self.inv = tuple(inv)

    def invert(self, y: int) -> frozenset[tuple[int, int]]:
        if not 0 <= y < len(self.inv):
            return frozenset()
        z = self.inv[y]
        if self.mode == 0:
            return frozenset({(z & 1, z >> 1)})
        if z & 1:
            return frozenset()
        x = z >> 1
        return frozenset({(0, x), (1, x ^ self.delta)})

    def to_bits(self) -> list[int]:
        t = self.key.t
        out = [self.mode] + bits_of(self.delta, t)
        for p in self.perm:
            out += bits_of(p, t + 1)
        return out

    @classmethod
    def bit_length(cls, key: RefKey) -> int:
        return 1 + key.t + (key.t + 1) * (1 << (key.t + 1))

    @classmethod
    def from_bits(cls, key: RefKey, bits: Sequence[int]) -> "RefTrapdoor":
        t = key.t
        mode = bits[0] & 1
        delta = int_of(bits[1 : 1 + t])
        perm, pos = [], 1 + t
        for _ in range(1 << (t + 1)):
            perm.append(int_of(bits[pos : pos + t + 1]))
            pos += t + 1
        return cls(key, mode, perm, delta)

    def to_json(self) -> dict:
        return {"family": "ref", "t": self.key.t, "mode": self.mode, "perm": list(self.perm), "delta": self.delta}

    @classmethod
    def from_json(cls, key: RefKey, obj: dict) -> "RefTrapdoor":
        return cls(key, int(obj["mode"]), obj["perm"], int(obj["delta"]))


class Family:
    name = "abstract"

    def gen(self, mu: int, rng: np.random.Generator) -> tuple[DTFKey, DTFTrapdoor]:
        raise NotImplementedError

    def trapdoor_from_bits(self, key: DTFKey, bits: Sequence[int]) -> DTFTrapdoor:
        raise NotImplementedError

    def trapdoor_bit_length(self, key: DTFKey) -> int:
        raise NotImplementedError


class RefFamily(Family):
    """Exact (epsilon = 0) oracle family on t-bit domains."""

    def __init__(self, t: int):
        if not 1 <= t <= 12:
            raise ValueError("reference family needs 1 <= t <= 12")
        self.t = t
        self.name = f"ref:{t}"

    def gen(self, mu: int, rng) -> tuple[RefKey, RefTrapdoor]:
        return ref_gen(mu, self.t, rng)

    def trapdoor_from_bits(self, key, bits):
        return RefTrapdoor.from_bits(key, bits)

    def trapdoor_bit_length(self, key):
        return RefTrapdoor.bit_length(key)


def ref_gen(mu: int, t: int, rng: np.random.Generator) -> tuple[RefKey, RefTrapdoor]:
    if not 1 <= t <= 12:
        raise ValueError("reference family needs 1 <= t <= 12")
    perm = [int(p) for p in rng.permutation(1 << (t + 1))]
    delta = int(rng.integers(1, 1 << t))
    xs = range(1 << t)
    if mu == 0:
        f0 = [perm[x << 1] for x in xs]
        f1 = [perm[(x << 1) | 1] for x in xs]
    else:
        f0 = [perm[x << 1] for x in xs]
        f1 = [perm[(x ^ delta) << 1] for x in xs]
    key = RefKey(t, (f0, f1), mu)
    return key, RefTrapdoor(key, mu, perm, delta)


# module-level operation names


def dtf_eval(key: DTFKey, b: int, x: int) -> int:
    return key.eval(b, x)


def dtf_partial_invert(td: DTFTrapdoor, y: int) -> frozenset[int]:
    return td.partial_invert(y)


def dtf_invert(td: DTFTrapdoor, y: int) -> frozenset[tuple[int, int]]:
    return td.invert(y)


def dtf_alpha(td: DTFTrapdoor, y: int, d: int, b: int) -> float:
    return td.alpha(y, d, b)


# 4-to-2 transform


class FourToTwoKey:
    family = "4to2"

    def __init__(self, k1: DTFKey, k2: DTFKey):
        self.k1, self.k2 = k1, k2
        self.t = k1.t + k2.t
        self.y_bits = k1.y_bits + k2.y_bits
        self._cache: dict[tuple[int, int], dict[int, float]] = {}

    def split_x(self, x: int) -> tuple[int, int]:
        return x & ((1 << self.k1.t) - 1), x >> self.k1.t

    def split_y(self, y: int) -> tuple[int, int]:
        return y & ((1 << self.k1.y_bits) - 1), y >> self.k1.y_bits

    def eval(self, b1: int, b2: int, x: int) -> int:
        x1, x2 = self.split_x(x)
        return self.k1.eval(b1, x1) | (self.k2.eval(b2, x2) << self.k1.y_bits)

    def prob(self, b1: int, b2: int, x: int) -> float:
        x1, x2 = self.split_x(x)
        return self.k1.prob(b1, x1) * self.k2.prob(b2, x2)

    def dist(self, b1: int, b2: int) -> dict[int, float]:
        key = (b1, b2)
        if key not in self._cache:
            d1, d2 = self.k1.dist(b1), self.k2.dist(b2)
            sh = self.k1.t
            self._cache[key] = {x1 | (x2 << sh): p1 * p2 for x2, p2 in d2.items() for x1, p1 in d1.items()}
        return self._cache[key]

    def sample(self, b1: int, b2: int, rng) -> int:
        return self.k1.sample(b1, rng) | (self.k2.sample(b2, rng) << self.k1.t)

    def to_json(self) -> dict:
        return {"family": "4to2", "k1": self.k1.to_json(), "k2": self.k2.to_json()}


class FourToTwoTrapdoor:
    def __init__(self, key: FourToTwoKey, t1: DTFTrapdoor, t2: DTFTrapdoor):
        self.key, self.t1, self.t2 = key, t1, t2

    @property
    def mode(self) -> int:
        return self.t1.mode

    def partial_invert(self, y: int) -> frozenset[tuple[int, int]]:
        y1, y2 = self.key.split_y(y)
        b1s, b2s = self.t1.partial_invert(y1), self.t2.partial_invert(y2)
        return frozenset((a, b) for a in b1s for b in b2s)

    def sets(self, y: int) -> tuple[frozenset[int], frozenset[int]]:
        y1, y2 = self.key.split_y(y)
        return self.t1.partial_invert(y1), self.t2.partial_invert(y2)

    def alpha(self, y: int, d: int, b1: int, b2: int) -> float:
        y1, y2 = self.key.split_y(y)
        d1, d2 = self.key.split_x(d)
        return self.t1.alpha(y1, d1, b1) * self.t2.alpha(y2, d2, b2)

    def to_bits(self) -> list[int]:
        return self.t1.to_bits() + self.t2.to_bits()


def four_to_two(F: Family, mu: int, rng) -> tuple[FourToTwoKey, FourToTwoTrapdoor]:
    k1, t1 = F.gen(mu, rng)
    k2, t2 = F.gen(1 - mu, rng)
    key = FourToTwoKey(k1, k2)
    return key, FourToTwoTrapdoor(key, t1, t2)


def four_to_two_trapdoor_from_bits(F: Family, key: FourToTwoKey, bits: Sequence[int]) -> FourToTwoTrapdoor:
    n1 = F.trapdoor_bit_length(key.k1)
    return FourToTwoTrapdoor(
        key, F.trapdoor_from_bits(key.k1, bits[:n1]), F.trapdoor_from_bits(key.k2, bits[n1:])
    )


def g_eval(key: FourToTwoKey, b1: int, b2: int, x: int) -> int:
    return key.eval(b1, b2, x)


def g_partial_invert(td: FourToTwoTrapdoor, y: int) -> frozenset[tuple[int, int]]:
    return td.partial_invert(y)


def g_alpha(td: FourToTwoTrapdoor, y: int, d: int, b1: int, b2: int) -> float:
    return td.alpha(y, d, b1, b2)


# XOR amplification


class AmpKey(DTFKey):
    family = "amp"

    def __init__(self, base: DTFKey, ell: int):
        self.base = base
        self.ell = ell
        self.t = ell * base.t + (ell - 1)
        self.y_bits = ell * base.y_bits
        self._cache: dict[int, dict[int, float]] = {}

    def split(self, x: int) -> tuple[list[int], list[int]]:
        bt = self.base.t
        xs = [(x >> (i * bt)) & ((1 << bt) - 1) for i in range(self.ell)]
        rs = bits_of(x >> (self.ell * bt), self.ell - 1)
        return xs, rs

    def join(self, xs: Sequence[int], rs: Sequence[int]) -> int:
        bt = self.base.t
        out = 0
        for i, xi in enumerate(xs):
            out |= xi << (i * bt)
        return out | (int_of(rs) << (self.ell * bt))

    def split_y(self, y: int) -> list[int]:
        yb = self.base.y_bits
        return [(y >> (i * yb)) & ((1 << yb) - 1) for i in range(self.ell)]

    def _rs(self, b: int, rs: Sequence[int]) -> list[int]:
        last = b
        for r in rs:
            last ^= r
        return list(rs) + [last]

    def eval(self, b: int, x: int) -> int:
        xs, rs = self.split(x)
        yb = self.base.y_bits
        out = 0
        for i, (xi, ri) in enumerate(zip(xs, self._rs(b, rs))):
            out |= self.base.eval(ri, xi) << (i * yb)
        return out

    def prob(self, b: int, x: int) -> float:
        xs, rs = self.split(x)
        p = 2.0 ** -(self.ell - 1)
        for xi, ri in zip(xs, self._rs(b, rs)):
            p *= self.base.prob(ri, xi)
        return p

    def dist(self, b: int) -> dict[int, float]:
        if b not in self._cache:
            supp = [list(self.base.dist(r).items()) for r in (0, 1)]
            out = {}
            for rs in np.ndindex(*([2] * (self.ell - 1))):
                full = self._rs(b, rs)
                for combo in _product([supp[r] for r in full]):
                    xs = [c[0] for c in combo]
                    p = 2.0 ** -(self.ell - 1)
                    for c in combo:
                        p *= c[1]
                    out[self.join(xs, rs)] = p
            self._cache[b] = out
        return self._cache[b]

    def sample(self, b: int, rng) -> int:
        rs = [int(r) for r in rng.integers(0, 2, self.ell - 1)]
        xs = [self.base.sample(r, rng) for r in self._rs(b, rs)]
        return self.join(xs, rs)

    def to_json(self) -> dict:
        return {"family": "amp", "ell": self.ell, "base": self.base.to_json()}


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head, *tail)


class AmpTrapdoor(DTFTrapdoor):
    def __init__(self, key: AmpKey, base: DTFTrapdoor):
        super().__init__(key, base.mode)
        self.base = base

    def partial_invert(self, y: int) -> frozenset[int]:
        rsets = [self.base.partial_invert(yi) for yi in self.key.split_y(y)]
        if any(not r for r in rsets):
            return frozenset()
        if all(len(r) == 1 for r in rsets):
            b = 0
            for r in rsets:
                b ^= next(iter(r))
            return frozenset({b})
        return frozenset({0, 1})

    def invert(self, y: int) -> frozenset[tuple[int, int]]:
        per = [sorted(self.base.invert(yi)) for yi in self.key.split_y(y)]
        out = set()
        for combo in _product(per):
            rs = [c[0] for c in combo]
            b = 0
            for r in rs:
                b ^= r
            out.add((b, self.key.join([c[1] for c in combo], rs[:-1])))
        return frozenset(out)

    def alpha(self, y: int, d: int, b: int) -> float:
        key = self.key
        ell = key.ell
        ds, ss = key.split(d)
        ys = key.split_y(y)
        gamma = None
        for i in range(ell):
            pre = {bb: x for bb, x in self.base.invert(ys[i])}
            c = []
            for r in (0, 1):
                if r in pre:
                    x = pre[r]
                    v = (-1) ** parity(ds[i] & x) * math.sqrt(key.base.prob(r, x))
                    if i < ell - 1 and r and ss[i]:
                        v = -v
                    c.append(v)
                else:
                    c.append(0.0)
            if gamma is None:
                gamma = c
            else:
                gamma = [c[0] * gamma[bb] + c[1] * gamma[1 - bb] for bb in (0, 1)]
        return gamma[b] * 2.0 ** (-(ell - 1) / 2)

    def to_bits(self) -> list[int]:
        return self.base.to_bits()


class AmpFamily(Family):
    def __init__(self, base: Family, ell: int):
        if ell < 1:
            raise ValueError("amplification needs ell >= 1")
        self.base = base
        self.ell = ell
        self.name = f"amp:{ell}:{base.name}"

    def gen(self, mu: int, rng) -> tuple[AmpKey, AmpTrapdoor]:
        k, t = self.base.gen(mu, rng)
        if not t.invertible:
            raise NotInvertible(f"{self.base.name} is not injective and invertible")
        key = AmpKey(k, self.ell)
        return key, AmpTrapdoor(key, t)

    def trapdoor_from_bits(self, key: AmpKey, bits):
        return AmpTrapdoor(key, self.base.trapdoor_from_bits(key.base, bits))

    def trapdoor_bit_length(self, key: AmpKey):
        return self.base.trapdoor_bit_length(key.base)


def amplify(F: Family, ell: int) -> AmpFamily:
    if not getattr(F, "invertible", True):
        raise NotInvertible(f"{F.name} is not injective and invertible")
    return AmpFamily(F, ell)


def claw_event(td, y: int) -> bool:
    """True when y has preimages under both b (the lossy-mode success event)."""
    return td.partial_invert(y) == frozenset({0, 1})


def claw_miss_count(key: DTFKey, td: DTFTrapdoor, trials: int, rng) -> int:
    """Monte Carlo count of lossy-mode samples that land outside the claw set."""
    miss = 0
    for _ in range(trials):
        b = int(rng.integers(2))
        miss += not claw_event(td, key.eval(b, key.sample(b, rng)))
    return miss
