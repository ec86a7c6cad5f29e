"""Width-5 permutation branching programs (Barrington).

Programs are sequences of instructions <var, on1, on0>; evaluating runs the
selected permutations left to right as position updates. Output is 1 iff the
product tau moves 1, and a compiled program always yields tau = e on output 0.

The default compiler picks, per circuit node, the cheapest achievable target
permutation (AND as a commutator, NOT folded into the last instruction, XOR
directly for involutions). ``strategy="classic"`` keeps the textbook fixed
5-cycle construction with XOR lowered to AND/NOT.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .he import CT, SK, BoolCircuit, CircuitInput

DUMMY = -1


class BPError(Exception):
    pass


class UnboundVariable(BPError):
    pass


class UnsupportedGate(BPError):
    pass


@dataclass(frozen=True, order=True)
class Perm:
    img: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.img) != [1, 2, 3, 4, 5]:
            raise ValueError(f"not a permutation of 1..5: {self.img}")

    def __call__(self, i: int) -> int:
        return self.img[i - 1]

    def then(self, other: "Perm") -> "Perm":
        """Apply self, then other."""
        return Perm(tuple(other(self(i)) for i in range(1, 6)))

    def inverse(self) -> "Perm":
        inv = [0] * 5
        for i, j in enumerate(self.img, 1):
            inv[j - 1] = i
        return Perm(tuple(inv))

    @property
    def is_identity(self) -> bool:
        return self.img == (1, 2, 3, 4, 5)

    @classmethod
    def identity(cls) -> "Perm":
        return cls((1, 2, 3, 4, 5))

    @classmethod
    def parse(cls, s: str) -> "Perm":
        """Cycle notation such as "(12345)", "(12)(34)" or "e"."""
        img = list(range(1, 6))
        s = s.strip()
        if s in ("e", "()", ""):
            return cls(tuple(img))
        for cyc in s.strip("()").split(")("):
            pts = [int(c) for c in cyc]
            for a, b in zip(pts, pts[1:] + pts[:1]):
                img[a - 1] = b
        return cls(tuple(img))

    def cycles(self) -> str:
        seen, out = set(), []
        for i in range(1, 6):
            if i in seen or self(i) == i:
                continue
            cyc, j = [], i
            while j not in seen:
                seen.add(j)
                cyc.append(str(j))
                j = self(j)
            out.append("(" + "".join(cyc) + ")")
        return "".join(out) or "e"

    def __repr__(self):
        return f"Perm({self.cycles()})"


E = Perm.identity()
CYCLE5 = Perm.parse("(12345)")

# group tables over S5, indexed in lexicographic image order
PERMS = [Perm(p) for p in itertools.permutations(range(1, 6))]
INDEX = {p: i for i, p in enumerate(PERMS)}
ID = INDEX[E]
THEN = np.array([[INDEX[a.then(b)] for b in PERMS] for a in PERMS], dtype=np.int64)
INV = np.array([INDEX[p.inverse()] for p in PERMS], dtype=np.int64)
COMM = THEN[THEN[THEN[np.arange(120)[:, None], np.arange(120)[None, :]], INV[:, None]], INV[None, :]]
INVOLUTION = np.array([THEN[i, i] == ID and i != ID for i in range(120)])


@dataclass(frozen=True)
class Instruction:
    var: int
    cls: str
    on1: Perm
    on0: Perm

    def select(self, bit: int) -> Perm:
        return self.on1 if bit else self.on0


@dataclass
class PermBP:
    instrs: list[Instruction]
    inputs: list[CircuitInput] = field(default_factory=list)

    def __len__(self):
        return len(self.instrs)

    def class_position(self, var: int) -> int:
        """Index of ``var`` among inputs of the same class."""
        cls = self.inputs[var].cls
        return sum(1 for i in self.inputs[:var] if i.cls == cls)

    def to_json(self) -> dict:
        return {
            "instrs": [
                {"var": i.var, "class": i.cls, "on1": list(i.on1.img), "on0": list(i.on0.img)}
                for i in self.instrs
            ],
            "convention": "on1-first",
            "inputs": [{"name": i.name, "class": i.cls} for i in self.inputs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PermBP":
        if obj.get("convention", "on1-first") != "on1-first":
            raise ValueError("only the on1-first convention is supported")
        instrs = [
            Instruction(int(i["var"]), str(i["class"]), Perm(tuple(i["on1"])), Perm(tuple(i["on0"])))
            for i in obj["instrs"]
        ]
        inputs = [CircuitInput(str(i["name"]), str(i["class"])) for i in obj.get("inputs", [])]
        return cls(instrs, inputs)


def bp_eval(bp: PermBP, assignment: Sequence[int] | Mapping[int, int]) -> tuple[Perm, int]:
    tau = E
    for ins in bp.instrs:
        if ins.var == DUMMY:
            bit = 0
        else:
            try:
                bit = assignment[ins.var]
            except (KeyError, IndexError):
                raise UnboundVariable(f"variable {ins.var} has no value") from None
        tau = tau.then(ins.select(bit))
    return tau, int(tau(1) != 1)


# compilation


class _Node:
    __slots__ = ("kind", "kids", "var", "cost", "lowered", "direct")

    def __init__(self, kind, kids=(), var=None):
        self.kind = kind
        self.kids = kids
        self.var = var
        self.cost = None
        self.lowered = None
        self.direct = None


INF = np.inf


def _cost_var() -> np.ndarray:
    c = np.ones(120)
    c[ID] = INF
    return c


def _cost_not(c: np.ndarray) -> np.ndarray:
    return c[INV]


def _cost_and(ca: np.ndarray, cb: np.ndarray) -> np.ndarray:
    total = 2 * ca[:, None] + 2 * cb[None, :]
    out = np.full(120, INF)
    np.minimum.at(out, COMM.ravel(), total.ravel())
    out[ID] = INF
    return out


class _Compiler:
    def __init__(self, circuit: BoolCircuit, strategy: str):
        if strategy not in ("min", "classic"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.circuit = circuit
        self.strategy = strategy
        n = circuit.n_inputs
        self.nodes: list[_Node] = [_Node("var", var=i) for i in range(n)]
        for g in circuit.gates:
            if g.op not in ("AND", "XOR", "NOT"):
                raise UnsupportedGate(g.op)
            self.nodes.append(_Node(g.op, tuple(self.nodes[i] for i in g.ins)))
        self._memo: dict[tuple[int, int], list[Instruction]] = {}

    def cost(self, node: _Node) -> np.ndarray:
        if node.cost is not None:
            return node.cost
        # iterative post-order to avoid deep recursion
        stack = [(node, False)]
        while stack:
            nd, ready = stack.pop()
            if nd.cost is not None:
                continue
            if nd.kind == "XOR" and nd.lowered is None:
                a, b = nd.kids
                x = _Node("AND", (a, _Node("NOT", (b,))))
                y = _Node("AND", (_Node("NOT", (a,)), b))
                nd.lowered = _Node("NOT", (_Node("AND", (_Node("NOT", (x,)), _Node("NOT", (y,)))),))
            deps = (nd.lowered,) if nd.kind == "XOR" else nd.kids
            if not ready:
                stack.append((nd, True))
                stack.extend((k, False) for k in deps if k.cost is None)
                continue
            if nd.kind == "var":
                nd.cost = _cost_var()
            elif nd.kind == "NOT":
                nd.cost = _cost_not(nd.kids[0].cost)
            elif nd.kind == "AND":
                nd.cost = _cost_and(nd.kids[0].cost, nd.kids[1].cost)
            else:
                low = nd.lowered.cost
                if self.strategy == "min":
                    direct = np.where(INVOLUTION, nd.kids[0].cost + nd.kids[1].cost, INF)
                    nd.direct = direct <= low
                    nd.cost = np.minimum(direct, low)
                else:
                    nd.direct = np.zeros(120, dtype=bool)
                    nd.cost = low
        return node.cost

    def emit(self, node: _Node, g: int) -> list[Instruction]:
        key = (id(node), g)
        if key in self._memo:
            return self._memo[key]
        if not np.isfinite(node.cost[g]):
            raise BPError("target permutation not achievable")
        if node.kind == "var":
            cls = self.circuit.inputs[node.var].cls
            out = [Instruction(node.var, cls, PERMS[g], E)]
        elif node.kind == "NOT":
            inner = self.emit(node.kids[0], int(INV[g]))
            last = inner[-1]
            gp = PERMS[g]
            out = inner[:-1] + [Instruction(last.var, last.cls, last.on1.then(gp), last.on0.then(gp))]
        elif node.kind == "AND":
            a, b = node.kids
            total = 2 * a.cost[:, None] + 2 * b.cost[None, :]
            masked = np.where(COMM == g, total, INF)
            flat = int(np.argmin(masked))
            al, be = divmod(flat, 120)
            out = (
                self.emit(a, al)
                + self.emit(b, be)
                + self.emit(a, int(INV[al]))
                + self.emit(b, int(INV[be]))
            )
        else:
            if node.direct[g]:
                out = self.emit(node.kids[0], g) + self.emit(node.kids[1], g)
            else:
                out = self.emit(node.lowered, g)
        self._memo[key] = out
        return out

    def root_target(self, node: _Node) -> int:
        cost = self.cost(node)
        if self.strategy == "classic":
            return INDEX[CYCLE5]
        best = None
        for i, p in enumerate(PERMS):
            if p(1) == 1 or not np.isfinite(cost[i]):
                continue
            rank = (cost[i], p != CYCLE5, p.img)
            if best is None or rank < best[0]:
                best = (rank, i)
        if best is None:
            raise BPError("no accepting target is achievable")
        return best[1]


def bp_compile(circuit: BoolCircuit, strategy: str = "min") -> PermBP:
    comp = _Compiler(circuit, strategy)
    root = comp.nodes[circuit.output]
    g = comp.root_target(root)
    return PermBP(list(comp.emit(root, g)), list(circuit.inputs))


def lowered_depth(circuit: BoolCircuit) -> int:
    """AND-depth after lowering XOR to AND/NOT (NOT is free in Barrington's count)."""
    d = [0] * circuit.n_inputs
    for g in circuit.gates:
        if g.op == "NOT":
            d.append(d[g.ins[0]])
        elif g.op == "AND":
            d.append(1 + max(d[i] for i in g.ins))
        else:
            d.append(2 + max(d[i] for i in g.ins))
    return d[circuit.output]


def bp_alternate(bp: PermBP) -> PermBP:
    """Pad with identity instructions on always-0 dummies so classes run CT, SK, CT, ... with even length."""
    out: list[Instruction] = []
    want = CT
    for ins in bp.instrs:
        if ins.cls != want:
            out.append(Instruction(DUMMY, want, E, E))
        out.append(ins)
        want = SK if ins.cls == CT else CT
    if len(out) % 2:
        out.append(Instruction(DUMMY, SK, E, E))
    return PermBP(out, list(bp.inputs))


def is_alternating(bp: PermBP) -> bool:
    return len(bp) % 2 == 0 and all(
        ins.cls == (CT if k % 2 == 0 else SK) for k, ins in enumerate(bp.instrs)
    )


def bp_invert(bp: PermBP) -> PermBP:
    out = [Instruction(i.var, i.cls, i.on1.inverse(), i.on0.inverse()) for i in reversed(bp.instrs)]
    return PermBP(out, list(bp.inputs))


def or_example() -> PermBP:
    """The 4-instruction OR program, variables x (ciphertext side) and sk, read as <i, on1, on0>."""
    p = Perm.parse
    inputs = [CircuitInput("x", CT), CircuitInput("sk", SK)]
    instrs = [
        Instruction(0, CT, p("e"), p("(12345)")),
        Instruction(1, SK, p("e"), p("(12453)")),
        Instruction(0, CT, p("e"), p("(54321)")),
        Instruction(1, SK, p("(14235)"), p("(15243)")),
    ]
    return PermBP(instrs, inputs)
