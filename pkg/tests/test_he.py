import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfhelab.he import (
    SK,
    ArityMismatch,
    BoolCircuit,
    CircuitBuilder,
    CircuitInput,
    ClearHE,
    Gate,
    MaskHE,
    SchemeMismatch,
    dec_as_circuit,
    he_dec,
    he_enc,
    he_eval,
    he_keygen,
    scheme_from_name,
    xor_circuit,
)


def random_circuit(rng, n_in, n_gates, ops=("XOR", "AND", "NOT")):
    inputs = [CircuitInput(f"v{i}") for i in range(n_in)]
    gates = []
    for k in range(n_gates):
        op = str(rng.choice(ops))
        avail = n_in + k
        ins = (int(rng.integers(avail)),) if op == "NOT" else tuple(int(i) for i in rng.integers(avail, size=2))
        gates.append(Gate(op, ins))
    return BoolCircuit(inputs, gates, n_in + n_gates - 1)


def test_clear_keys_are_empty(rng):
    keys = he_keygen(ClearHE(), rng)
    assert keys.sk.bits == ()
    assert keys.pk.sealed is None
    ct = he_enc(ClearHE(), keys.pk, 1, rng)
    assert ct.bits == (1,)
    assert he_dec(ClearHE(), keys.sk, ct) == 1


def test_mask_keygen_seeded():
    s = MaskHE(4)
    a = he_keygen(s, np.random.default_rng(5)).sk.bits
    b = he_keygen(s, np.random.default_rng(5)).sk.bits
    assert a == b and len(a) == 4
    # frozen golden value for seed 5
    assert a == tuple(int(x) for x in np.random.default_rng(5).integers(0, 2, 4))


def test_mask_exhaustive_kappa3():
    s = MaskHE(3)
    for sk in itertools.product((0, 1), repeat=3):
        for r in itertools.product((0, 1), repeat=3):
            for m in (0, 1):
                par = sum(a & b for a, b in zip(r, sk)) & 1
                ct_bits = (*r, m ^ par)
                assert s._decrypt(sk, ct_bits) == m


def test_round_trip_many():
    rng = np.random.default_rng(11)
    for scheme in (ClearHE(), MaskHE(4)):
        for _ in range(1000):
            keys = scheme.keygen(rng)
            m = int(rng.integers(2))
            assert scheme.dec(keys.sk, scheme.enc(keys.pk, m, rng)) == m


def test_scheme_mismatch(rng):
    k4 = MaskHE(4).keygen(rng)
    ct = ClearHE().enc(ClearHE().keygen(rng).pk, 1, rng)
    with pytest.raises(SchemeMismatch):
        MaskHE(4).dec(k4.sk, ct)


def test_eval_xor_and(rng):
    s = MaskHE(4)
    keys = s.keygen(rng)
    one, zero = s.enc(keys.pk, 1, rng), s.enc(keys.pk, 0, rng)
    assert s.dec(keys.sk, he_eval(s, keys.evk, xor_circuit(), [one, zero], rng)) == 1
    andc = BoolCircuit([CircuitInput("a"), CircuitInput("b")], [Gate("AND", (0, 1))], 2)
    assert s.dec(keys.sk, he_eval(s, keys.evk, andc, [one, one], rng)) == 1
    with pytest.raises(ArityMismatch):
        he_eval(s, keys.evk, andc, [one], rng)


def test_eval_random_circuits():
    rng = np.random.default_rng(3)
    s = MaskHE(4)
    keys = s.keygen(rng)
    for _ in range(200):
        c = random_circuit(rng, 6, 12)
        bits = [int(b) for b in rng.integers(0, 2, 6)]
        cts = [s.enc(keys.pk, b, rng) for b in bits]
        assert s.dec(keys.sk, s.eval(keys.evk, c, cts, rng)) == c.evaluate(bits)


def test_eval_rerandomizes(rng):
    s = MaskHE(8)
    keys = s.keygen(rng)
    ct = s.enc(keys.pk, 1, rng)
    ident = BoolCircuit([CircuitInput("a")], [Gate("NOT", (0,)), Gate("NOT", (1,))], 2)
    outs = {s.eval(keys.evk, ident, [ct], rng).bits for _ in range(20)}
    assert len(outs) > 1


def test_dec_circuit_clear():
    c = dec_as_circuit(ClearHE())
    assert c.depth() == 0 and c.gates == []
    assert c.evaluate([1]) == 1


@pytest.mark.parametrize("kappa", [1, 2, 3, 4, 5, 6])
def test_dec_circuit_exhaustive(kappa):
    s = MaskHE(kappa)
    c = dec_as_circuit(s)
    assert c.depth() <= math.ceil(math.log2(kappa)) + 2
    assert [i.cls for i in c.inputs[:kappa]] == [SK] * kappa
    for bits in itertools.product((0, 1), repeat=2 * kappa + 1):
        sk, ct = bits[:kappa], bits[kappa:]
        assert c.evaluate(list(bits)) == s._decrypt(sk, ct)


def test_dec_circuit_kappa4_shape():
    c = dec_as_circuit(MaskHE(4))
    ops = [g.op for g in c.gates]
    assert ops.count("AND") == 4 and ops.count("XOR") == 4
    assert c.depth() == 4


def test_dec_circuit_kappa8_sampled():
    s = MaskHE(8)
    c = dec_as_circuit(s)
    assert c.depth() == 5
    rng = np.random.default_rng(8)
    for _ in range(1000):
        bits = [int(b) for b in rng.integers(0, 2, 17)]
        assert c.evaluate(bits) == s._decrypt(bits[:8], bits[8:])


def test_circuit_json_round_trip():
    c = dec_as_circuit(MaskHE(3))
    obj = c.to_json()
    assert set(obj) == {"inputs", "gates", "output"}
    assert set(obj["gates"][0]) == {"op", "in", "out"}
    back = BoolCircuit.from_json(obj)
    assert back == c


def test_circuit_rejects_bad_gates():
    with pytest.raises(ValueError):
        BoolCircuit([CircuitInput("a")], [Gate("OR", (0, 0))], 1)
    with pytest.raises(ValueError):
        BoolCircuit([CircuitInput("a")], [Gate("AND", (0, 1))], 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_builder_folds_and_agrees(seed):
    rng = np.random.default_rng(seed)
    b = CircuitBuilder()
    vals = [b.input(f"x{i}") for i in range(4)] + [0, 1]
    exprs = list(vals)
    for _ in range(10):
        op = rng.integers(3)
        u, v = (exprs[int(i)] for i in rng.integers(len(exprs), size=2))
        exprs.append(b.xor(u, v) if op == 0 else b.and_(u, v) if op == 1 else b.not_(u))
    out = exprs[-1]
    c = b.build(out)

    def ref(bits):
        env = list(bits) + [0, 1]
        r = np.random.default_rng(seed)
        for _ in range(10):
            op = r.integers(3)
            i, j = r.integers(len(env), size=2)
            u, v = env[int(i)], env[int(j)]
            env.append(u ^ v if op == 0 else u & v if op == 1 else 1 - u)
        return env[-1]

    for bits in itertools.product((0, 1), repeat=4):
        assert c.evaluate(list(bits)) == ref(bits)


def test_scheme_names():
    assert scheme_from_name("clear").name == "clear"
    assert scheme_from_name("mask:4").kappa == 4
    with pytest.raises(ValueError):
        scheme_from_name("rsa")
