import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfhelab.barrington import (
    CYCLE5,
    DUMMY,
    E,
    PERMS,
    Instruction,
    Perm,
    PermBP,
    UnboundVariable,
    UnsupportedGate,
    bp_alternate,
    bp_compile,
    bp_eval,
    bp_invert,
    is_alternating,
    lowered_depth,
    or_example,
)
from qfhelab.he import CT, SK, BoolCircuit, CircuitInput, Gate, MaskHE


def random_formula(rng, n, depth, ops=("AND", "XOR", "NOT", "OR")):
    inputs = [CircuitInput(f"v{i}", CT if i % 2 == 0 else SK) for i in range(n)]
    gates = []

    def build(d):
        if d == 0 or rng.random() < .15:
            return int(rng.integers(n))
        op = str(rng.choice(ops))
        if op == "NOT":
            a = build(d - 1)
            gates.append(Gate("NOT", (a,)))
        elif op == "OR":
            a, b = build(d - 1), build(d - 1)
            gates.append(Gate("NOT", (a,)))
            gates.append(Gate("NOT", (b,)))
            gates.append(Gate("AND", (n + len(gates) - 2, n + len(gates) - 1)))
            gates.append(Gate("NOT", (n + len(gates) - 1,)))
        else:
            a, b = build(d - 1), build(d - 1)
            gates.append(Gate(op, (a, b)))
        return n + len(gates) - 1

    out = build(depth)
    return BoolCircuit(inputs, gates, out)


def exhaustive_agree(bp, circuit):
    for bits in itertools.product((0, 1), repeat=circuit.n_inputs):
        tau, out = bp_eval(bp, list(bits))
        want = circuit.evaluate(list(bits))
        if out != want or (want == 0 and not tau.is_identity):
            return False
    return True


def or_circuit():
    ins = [CircuitInput("a", CT), CircuitInput("b", SK)]
    gates = [Gate("NOT", (0,)), Gate("NOT", (1,)), Gate("AND", (2, 3)), Gate("NOT", (4,))]
    return BoolCircuit(ins, gates, 5)


def test_perm_basics():
    c = Perm.parse("(12345)")
    assert c.img == (2, 3, 4, 5, 1)
    assert c.then(c.inverse()) == E
    assert Perm.parse("(54321)") == c.inverse()
    assert Perm.parse("(12)(34)").img == (2, 1, 4, 3, 5)
    assert c.cycles() == "(12345)"
    assert len(set(PERMS)) == 120
    with pytest.raises(ValueError):
        Perm((1, 1, 2, 3, 4))


def test_then_is_left_to_right():
    a, b = Perm.parse("(12)"), Perm.parse("(23)")
    # 1 -> 2 under a, then 2 -> 3 under b
    assert a.then(b)(1) == 3


def test_or_example_program():
    bp = or_example()
    assert len(bp) == 4
    tau, out = bp_eval(bp, [0, 0])
    assert tau == E and out == 0
    for a in [(1, 0), (0, 1), (1, 1)]:
        tau, out = bp_eval(bp, list(a))
        assert out == 1 and tau(1) == 4


def test_or_example_cycle_1243():
    # on (0,0) position 1 walks 1->2->4->3->1
    bp = or_example()
    pos, trail = 1, [1]
    for ins in bp.instrs:
        pos = ins.on0(pos)
        trail.append(pos)
    assert trail == [1, 2, 4, 3, 1]


def test_empty_program():
    tau, out = bp_eval(PermBP([]), [])
    assert tau == E and out == 0


def test_unbound_variable():
    with pytest.raises(UnboundVariable):
        bp_eval(or_example(), [1])


def test_single_variable():
    c = BoolCircuit([CircuitInput("v")], [], 0)
    bp = bp_compile(c)
    assert bp.instrs == [Instruction(0, CT, CYCLE5, E)]


@pytest.mark.parametrize("strategy", ["min", "classic"])
def test_compiled_or(strategy):
    c = or_circuit()
    bp = bp_compile(c, strategy)
    assert len(bp) <= 16
    assert exhaustive_agree(bp, c)
    if strategy == "min":
        assert len(bp) == 4


def test_unsupported_gate():
    c = BoolCircuit([CircuitInput("a")], [Gate("NOT", (0,))], 1)
    object.__setattr__(c.gates[0], "op", "NAND")
    with pytest.raises(UnsupportedGate):
        bp_compile(c)


def test_random_formulas_depth4():
    rng = np.random.default_rng(44)
    for _ in range(50):
        c = random_formula(rng, 5, 4)
        bp = bp_compile(c)
        assert exhaustive_agree(bp, c)
        assert len(bp) <= 4 ** lowered_depth(c)
        assert len(bp) <= 4 ** c.depth()


def test_classic_strategy_random():
    rng = np.random.default_rng(45)
    for _ in range(20):
        c = random_formula(rng, 4, 3, ops=("AND", "NOT", "OR"))
        bp = bp_compile(c, "classic")
        assert exhaustive_agree(bp, c)
        assert len(bp) <= 4 ** lowered_depth(c)
        _, out = bp_eval(bp, [1] * 4)
        if out:
            assert bp_eval(bp, [1] * 4)[0] == CYCLE5


@pytest.mark.parametrize("kappa", [1, 2, 3, 4])
def test_mask_decryption_programs(kappa):
    c = MaskHE(kappa).dec_circuit()
    bp = bp_compile(c)
    assert exhaustive_agree(bp, c)
    assert len(bp) == 4 * kappa + 1


def test_alternate_examples():
    bp = or_example()
    assert is_alternating(bp)
    assert bp_alternate(bp).instrs == bp.instrs
    two_ct = PermBP([Instruction(0, CT, CYCLE5, E), Instruction(0, CT, CYCLE5, E)], [CircuitInput("x")])
    alt = bp_alternate(two_ct)
    assert [i.cls for i in alt.instrs] == [CT, SK, CT, SK]
    assert alt.instrs[1] == Instruction(DUMMY, SK, E, E)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_alternate_preserves_function(seed):
    rng = np.random.default_rng(seed)
    c = random_formula(rng, 4, 3)
    bp = bp_compile(c)
    alt = bp_alternate(bp)
    assert is_alternating(alt)
    for bits in itertools.product((0, 1), repeat=4):
        assert bp_eval(alt, list(bits)) == bp_eval(bp, list(bits))


def test_invert_examples():
    bp = or_example()
    inv = bp_invert(bp)
    tau, _ = bp_eval(inv, [1, 0])
    assert tau(4) == 1
    for bits in itertools.product((0, 1), repeat=2):
        both = PermBP(bp.instrs + inv.instrs, bp.inputs)
        assert bp_eval(both, list(bits))[0] == E
        assert bp_eval(inv, list(bits))[0] == bp_eval(bp, list(bits))[0].inverse()
    assert bp_invert(inv).instrs == bp.instrs


def test_json_round_trip():
    bp = bp_compile(MaskHE(2).dec_circuit())
    obj = bp.to_json()
    assert obj["convention"] == "on1-first"
    assert PermBP.from_json(obj) == bp
