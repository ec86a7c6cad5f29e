"""Group-action dual-mode trapdoor functions over a toy Z_N action.

G = X = Z_N acting by addition, with x0 = 0. Domain vectors r live in
[B]^n = {0..B-1}^n and are encoded little-endian, ``w`` bits per coordinate.
Images (z, z') are packed as 2n elements of ``element_bits`` each.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .dtf import DTFKey, DTFTrapdoor, Family, bits_of, int_of


class GAError(Exception):
    pass


class OrderCheckFailed(GAError):
    pass


class DomainViolation(GAError):
    pass


class AmbiguousPreimage(GAError):
    pass


class ZNAction:
    """Z_N acting on itself by addition."""

    def __init__(self, N: int):
        if N < 2:
            raise ValueError("N must be at least 2")
        self.N = N
        self.x0 = 0
        self.element_bits = (N - 1).bit_length()

    @property
    def order(self) -> int:
        return self.N

    def add(self, g: int, h: int) -> int:
        return (g + h) % self.N

    def neg(self, g: int) -> int:
        return -g % self.N

    def mul(self, a: int, g: int) -> int:
        return a * g % self.N

    def act(self, g: int, x: int) -> int:
        return (g + x) % self.N

    def sample_uniform(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.N))

    def element_order(self, g: int) -> int:
        return self.N // math.gcd(g % self.N, self.N)

    def to_json(self) -> dict:
        return {"action": "ZN", "N": self.N}


def largest_prime_factor(N: int) -> int:
    if N < 2:
        return 1
    best, p = 1, 2
    while p * p <= N:
        while N % p == 0:
            best, N = p, N // p
        p += 1 if p == 2 else 2
    return max(best, N) if N > 1 else best


@dataclass(frozen=True)
class OrderCheck:
    passed: bool
    witness: int  # largest prime factor of the group order

    def __bool__(self):
        return self.passed


def order_check(action, bound: int) -> OrderCheck:
    N = action if isinstance(action, int) else action.order
    p = largest_prime_factor(N)
    return OrderCheck(p > bound, p)


# ELHS


def _vec(action, n, rng):
    return tuple(action.sample_uniform(rng) for _ in range(n))


def _matvec(action, M, r):
    return tuple(sum(mij * rj for mij, rj in zip(row, r)) % action.N for row in M)


def _act_vec(action, g, x):
    return tuple(action.act(a, b) for a, b in zip(g, x))


def _add_vec(action, *vs):
    return tuple(sum(c) % action.N for c in zip(*vs))


def elhs_sample(action, n: int, which: int, rng: np.random.Generator):
    """One sample (M, m, ((x0, y0), (x1, y1))) from D_0 or D_1, plus the witness (s, t) for D_1."""
    M = tuple(_vec(action, n, rng) for _ in range(n))
    m = _vec(action, n, rng)
    if which == 0:
        pairs = tuple((_vec(action, n, rng), _vec(action, n, rng)) for _ in range(2))
        return M, m, pairs, None
    s = tuple(int(v) for v in rng.integers(0, 2, n))
    t = _vec(action, n, rng)
    x0 = _vec(action, n, rng)
    y0 = _act_vec(action, t, x0)
    Ms = _matvec(action, M, s)
    x1 = _act_vec(action, Ms, x0)
    ms = tuple(mj * sj % action.N for mj, sj in zip(m, s))
    y1 = _act_vec(action, _add_vec(action, Ms, ms), y0)
    return M, m, ((x0, y0), (x1, y1)), (s, t)


# the dTF


class GAKey(DTFKey):
    family = "ga"

    def __init__(self, action: ZNAction, n: int, B: int, M, m, x0, y0, x1, y1):
        self.action = action
        self.n, self.B = n, B
        self.M = tuple(tuple(int(v) for v in row) for row in M)
        self.m = tuple(int(v) for v in m)
        self.xs = (tuple(x0), tuple(x1))
        self.ys = (tuple(y0), tuple(y1))
        self.w = max(1, (B - 1).bit_length())
        self.t = n * self.w
        self.eb = action.element_bits
        self.y_bits = 2 * n * self.eb
        self._evals: dict[tuple[int, int], int] = {}

    def decode(self, x: int) -> tuple[int, ...]:
        mask = (1 << self.w) - 1
        return tuple((x >> (j * self.w)) & mask for j in range(self.n))

    def encode(self, r: Sequence[int]) -> int:
        return sum(int(rj) << (j * self.w) for j, rj in enumerate(r))

    def in_domain(self, r: Sequence[int]) -> bool:
        return len(r) == self.n and all(0 <= rj < self.B for rj in r)

    def ga_eval(self, b: int, r: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if not self.in_domain(r):
            raise DomainViolation(f"r={tuple(r)} not in [{self.B}]^{self.n}")
        N = self.action.N
        Mr = _matvec(self.action, self.M, r)
        z = _act_vec(self.action, Mr, self.xs[b])
        zp = _act_vec(self.action, tuple((a + mj * rj) % N for a, mj, rj in zip(Mr, self.m, r)), self.ys[b])
        return z, zp

    def pack(self, z, zp) -> int:
        out = 0
        for i, e in enumerate(tuple(z) + tuple(zp)):
            out |= int(e) << (i * self.eb)
        return out

    def unpack(self, y: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        mask = (1 << self.eb) - 1
        els = [(y >> (i * self.eb)) & mask for i in range(2 * self.n)]
        return tuple(els[: self.n]), tuple(els[self.n :])

    def eval(self, b: int, x: int) -> int:
        y = self._evals.get((b, x))
        if y is None:
            y = self._evals[(b, x)] = self.pack(*self.ga_eval(b, self.decode(x)))
        return y

    def prob(self, b: int, x: int) -> float:
        if x >> self.t or not self.in_domain(self.decode(x)):
            return 0.0
        return float(self.B) ** -self.n

    @cached_property
    def _uniform(self) -> dict[int, float]:
        p = float(self.B) ** -self.n
        return {self.encode(r): p for r in np.ndindex(*([self.B] * self.n))}

    def dist(self, b: int) -> dict[int, float]:
        return self._uniform

    def sample(self, b: int, rng) -> int:
        return self.encode([int(v) for v in rng.integers(0, self.B, self.n)])

    def to_json(self) -> dict:
        return {
            "family": "ga",
            "mode-hidden": True,
            "key": {
                "N": self.action.N,
                "n": self.n,
                "B": self.B,
                "M": [list(r) for r in self.M],
                "m": list(self.m),
                "x0": list(self.xs[0]),
                "y0": list(self.ys[0]),
                "x1": list(self.xs[1]),
                "y1": list(self.ys[1]),
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GAKey":
        k = obj["key"]
        return cls(ZNAction(int(k["N"])), int(k["n"]), int(k["B"]), k["M"], k["m"], k["x0"], k["y0"], k["x1"], k["y1"])


class GATrapdoor(DTFTrapdoor):
    def __init__(self, key: GAKey, mode: int, s, t, w):
        super().__init__(key, mode)
        self.s = tuple(int(v) for v in s)
        self.t = tuple(int(v) for v in t)
        self.w = tuple(int(v) for v in w)
        self._inv: dict[int, frozenset] = {}

    def invert_b(self, y, b: int) -> tuple[int, ...] | None:
        """The unique r with f_b(r) = y, or None."""
        key = self.key
        N, B = key.action.N, key.B
        z, zp = key.unpack(y) if isinstance(y, int) else y
        r = []
        for j in range(key.n):
            target = (zp[j] - self.t[j] + b * self.w[j] - z[j]) % N
            sols = [a for a in range(B + 1) if a * key.m[j] % N == target]
            if len(sols) > 1:
                raise AmbiguousPreimage(f"coordinate {j} has solutions {sols}")
            if not sols:
                return None
            r.append(sols[0] - b * self.s[j])
        r = tuple(r)
        if not key.in_domain(r) or key.ga_eval(b, r) != (tuple(z), tuple(zp)):
            return None
        return r

    def invert(self, y: int) -> frozenset[tuple[int, int]]:
        hit = self._inv.get(y)
        if hit is not None:
            return hit
        out = set()
        for b in (0, 1):
            r = self.invert_b(y, b)
            if r is not None:
                out.add((b, self.key.encode(r)))
        hit = self._inv[y] = frozenset(out)
        return hit

    @classmethod
    def bit_length(cls, key: GAKey) -> int:
        return 1 + key.n + 2 * key.n * key.eb

    def to_bits(self) -> list[int]:
        eb = self.key.eb
        out = [self.mode] + list(self.s)
        for v in self.t + self.w:
            out += bits_of(v, eb)
        return out

    @classmethod
    def from_bits(cls, key: GAKey, bits: Sequence[int]) -> "GATrapdoor":
        n, eb = key.n, key.eb
        mode = bits[0] & 1
        s = [b & 1 for b in bits[1 : 1 + n]]
        vals = [int_of(bits[1 + n + i * eb : 1 + n + (i + 1) * eb]) for i in range(2 * n)]
        return cls(key, mode, s, vals[:n], vals[n:])

    def to_json(self) -> dict:
        return {"family": "ga", "mode": self.mode, "s": list(self.s), "t": list(self.t), "w": list(self.w)}

    @classmethod
    def from_json(cls, key: GAKey, obj: dict) -> "GATrapdoor":
        return cls(key, int(obj["mode"]), obj["s"], obj["t"], obj["w"])


def ga_gen(
    action: ZNAction,
    n: int,
    B: int,
    mu: int,
    rng: np.random.Generator,
    check_params: bool = True,
    force_uv_zero: bool = False,
) -> tuple[GAKey, GATrapdoor]:
    if check_params and B <= 2 * n * n:
        raise ValueError(f"need B > 2n^2, got B={B}, n={n}")
    oc = order_check(action, B + 1)
    if not oc:
        raise OrderCheckFailed(f"largest prime factor {oc.witness} <= {B + 1}")
    N = action.N
    M = tuple(_vec(action, n, rng) for _ in range(n))
    m = []
    for _ in range(n):
        g = action.sample_uniform(rng)
        while action.element_order(g) <= B:
            g = action.sample_uniform(rng)
        m.append(g)
    m = tuple(m)
    s = tuple(int(v) for v in rng.integers(0, 2, n))
    t = _vec(action, n, rng)
    u, v = _vec(action, n, rng), _vec(action, n, rng)
    if force_uv_zero:
        u = v = (0,) * n
    x0 = _vec(action, n, rng)
    lossy = 1 - mu
    Ms = _matvec(action, M, s)
    y0 = _act_vec(action, t, x0)
    x1 = _act_vec(action, _add_vec(action, Ms, tuple(lossy * a for a in u)), x0)
    ms = tuple(mj * sj % N for mj, sj in zip(m, s))
    y1 = _act_vec(action, _add_vec(action, Ms, ms, tuple(lossy * a for a in v)), y0)
    w = tuple(lossy * (a - b) % N for a, b in zip(u, v))
    key = GAKey(action, n, B, M, m, x0, y0, x1, y1)
    return key, GATrapdoor(key, mu, s, t, w)


def ga_eval(key: GAKey, b: int, r: Sequence[int]):
    return key.ga_eval(b, r)


def ga_invert(td: GATrapdoor, key: GAKey, y, b: int):
    if td.key is not key:
        td = GATrapdoor(key, td.mode, td.s, td.t, td.w)
    return td.invert_b(y, b)


def ga_alpha(td: GATrapdoor, key: GAKey, y, d: int, b: int) -> float:
    if not isinstance(y, int):
        y = key.pack(*y)
    return td.alpha(y, d, b)


def claw_fraction(td: GATrapdoor) -> float:
    """Exact fraction of r in [B]^n with r - s also in [B]^n."""
    B = td.key.B
    frac = 1.0
    for sj in td.s:
        frac *= (B - sj) / B
    return frac


class GAFamily(Family):
    def __init__(self, N: int = 10007, n: int = 2, B: int = 9, check_params: bool = True):
        self.action = ZNAction(N)
        self.n, self.B = n, B
        self.check_params = check_params
        self.name = f"ga:{N}:{n}:{B}"

    def gen(self, mu: int, rng) -> tuple[GAKey, GATrapdoor]:
        return ga_gen(self.action, self.n, self.B, mu, rng, check_params=self.check_params)

    def trapdoor_from_bits(self, key, bits):
        return GATrapdoor.from_bits(key, bits)

    def trapdoor_bit_length(self, key):
        return GATrapdoor.bit_length(key)
