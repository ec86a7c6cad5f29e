import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_state
from qfhelab.simcore import (
    GATES,
    NonNormalized,
    PartialFunction,
    PauliFrame,
    SparseState,
    StateBag,
    UnknownWire,
    WireId,
    WireMismatch,
    fidelity,
)


def dense_apply(vec, n, gate, q):
    """Apply a 1-qubit matrix to qubit q (little-endian) of an n-qubit vector."""
    m = GATES[gate]
    out = np.zeros_like(vec)
    for i in range(1 << n):
        b = (i >> q) & 1
        for nb in (0, 1):
            out[(i & ~(1 << q)) | (nb << q)] += m[nb, b] * vec[i]
    return out


def dense_cnot(vec, n, c, t):
    out = np.zeros_like(vec)
    for i in range(1 << n):
        out[i ^ (1 << t) if (i >> c) & 1 else i] += vec[i]
    return out


def test_alloc_plus_shapes():
    bag = StateBag()
    assert bag.alloc_plus(0) == []
    assert bag.blob_count() == 0
    (w,) = bag.alloc_plus(1)
    st_ = bag.state_of([w])
    assert st_.amps == pytest.approx({0: 1 / math.sqrt(2), 1: 1 / math.sqrt(2)})
    ws = bag.alloc_plus(3)
    assert bag.blob_count() == 4
    joint = bag.state_of(ws)
    assert len(joint.amps) == 8
    assert all(abs(a - 1 / math.sqrt(8)) < 1e-15 for a in joint.amps.values())


def test_prepare_superposition():
    bag = StateBag()
    w = bag.prepare_superposition({0: .25, 1: .25, 2: .25, 3: .25}, 2)
    assert all(abs(a - .5) < 1e-15 for a in bag.state_of([w]).amps.values())
    w = bag.prepare_superposition({5: 1.0}, 3)
    s = bag.state_of([w])
    assert s.amps == {5: 1.0}
    assert s.label_str(5) == "101"
    w = bag.prepare_superposition({0: .5, 1: .25, 2: .25}, 2)
    amps = bag.state_of([w]).amps
    assert amps[0] == pytest.approx(1 / math.sqrt(2))
    assert amps[1] == pytest.approx(.5) and amps[2] == pytest.approx(.5)
    with pytest.raises(NonNormalized):
        bag.prepare_superposition({0: .5, 1: .4}, 1)


def test_gates_match_dense(rng):
    for _ in range(20):
        n = 3
        vec = random_state(rng, n)
        bag = StateBag(autofactor=False)
        ws = bag.load(vec)
        ref = vec.copy()
        for _ in range(15):
            if rng.random() < .3:
                c, t = rng.choice(n, 2, replace=False)
                bag.apply_cnot(ws[c], ws[t])
                ref = dense_cnot(ref, n, c, t)
            else:
                g = str(rng.choice(list(GATES)))
                q = int(rng.integers(n))
                bag.apply_gate(g, ws[q])
                ref = dense_apply(ref, n, g, q)
        got = bag.state_of(ws).dense()
        assert np.allclose(got, ref, atol=1e-12)


def test_h_and_cnot_basics():
    bag = StateBag()
    (a,) = bag.alloc_zero(1)
    bag.apply_gate("H", a)
    assert fidelity(bag.state_of([a]), SparseState([a], {0: 2**-.5, 1: 2**-.5})) == pytest.approx(1)
    (b,) = bag.alloc_zero(1)
    bag.apply_cnot(a, b)
    bell = SparseState([a, b], {0: 2**-.5, 3: 2**-.5})
    assert fidelity(bag.state_of([a, b]), bell) == pytest.approx(1)


def test_t_tdg_identity(rng):
    bag = StateBag()
    vec = random_state(rng, 1)
    (w,) = bag.load(vec)
    bag.apply_gate("T", w)
    bag.apply_gate("Tdg", w)
    assert np.allclose(bag.state_of([w]).dense(), vec, atol=1e-12)


def test_unknown_wire():
    bag = StateBag()
    with pytest.raises(UnknownWire):
        bag.apply_gate("H", WireId(99))


def test_classical_function():
    bag = StateBag()
    (w,) = bag.alloc_plus(1)
    y = bag.apply_classical_function(w, {0: 0, 1: 1}, 1)
    bell = SparseState([w, y], {0: 2**-.5, 3: 2**-.5})
    assert fidelity(bag.state_of([w, y]), bell) == pytest.approx(1)

    bag = StateBag()
    (w,) = bag.alloc_plus(1)
    y = bag.apply_classical_function(w, lambda x: 1, 1)
    bag.factorize(w)
    assert bag.state_of([y]).amps == pytest.approx({1: 1.0})

    bag = StateBag()
    two = bag.prepare_superposition({i: .25 for i in range(4)}, 2)
    par = bag.apply_classical_function(two, lambda x: (x & 1) ^ (x >> 1), 1)
    assert bag.marginal([par]) == pytest.approx({0: .5, 1: .5})
    out = bag.measure_standard(par, np.random.default_rng(1))
    kept = bag.state_of([two]).amps
    assert len(kept) == 2
    assert all(((x & 1) ^ (x >> 1)) == out for x in kept)

    bag = StateBag()
    (w,) = bag.alloc_plus(1)
    with pytest.raises(PartialFunction):
        bag.apply_classical_function(w, {0: 1}, 1)


def test_measure_standard_frequencies():
    rng = np.random.default_rng(7)
    ones = 0
    for _ in range(10_000):
        bag = StateBag()
        (w,) = bag.alloc_plus(1)
        ones += bag.measure_standard(w, rng)
    assert .485 <= ones / 10_000 <= .515
    bag = StateBag()
    (w,) = bag.alloc_zero(1)
    assert bag.measure_standard(w, rng) == 0
    assert w not in bag


def test_measure_standard_reproducible():
    def run(seed):
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(50):
            bag = StateBag()
            w = bag.prepare_superposition({i: 1 / 8 for i in range(8)}, 3)
            out.append(bag.measure_standard(w, rng))
        return out

    assert run(3) == run(3)


def test_measure_hadamard():
    rng = np.random.default_rng(2)
    bag = StateBag()
    ws = bag.alloc_plus(1)
    w = bag.prepare_superposition({i: 1 / 8 for i in range(8)}, 3)
    assert bag.measure_hadamard(w, rng) == 0

    seen = set()
    for _ in range(200):
        bag = StateBag()
        w = bag.prepare_superposition({0: 1.0}, 2)
        seen.add(bag.measure_hadamard(w, rng))
    assert seen == {0, 1, 2, 3}

    # control c entangled with |x0>/|x1>: phase (-1)^{d.(x0^x1)} lands on c
    x0, x1 = 0b011, 0b110
    for _ in range(20):
        bag = StateBag()
        (c,) = bag.alloc_plus(1)
        reg = bag.apply_classical_function(c, {0: x0, 1: x1}, 3)
        d = bag.measure_hadamard(reg, rng)
        sign = (-1) ** bin(d & (x0 ^ x1)).count("1")
        target = SparseState([c], {0: 2**-.5, 1: sign * 2**-.5})
        assert fidelity(bag.state_of([c]), target) == pytest.approx(1, abs=1e-12)
    del ws


def test_measure_hadamard_matches_dense(rng):
    for _ in range(10):
        vec = random_state(rng, 4)
        bag = StateBag(autofactor=False)
        ws = bag.load(vec, widths=[1, 3])
        seed = int(rng.integers(1 << 30))
        d = bag.measure_hadamard(ws[1], np.random.default_rng(seed))
        # oracle: project bits 1..3 onto H^{(x)3}|d>
        post = np.zeros(2, dtype=complex)
        for i in range(16):
            x = i >> 1
            post[i & 1] += vec[i] * (-1) ** bin(x & d).count("1")
        post /= np.linalg.norm(post)
        got = bag.state_of([ws[0]]).dense()
        assert abs(np.vdot(post, got)) ** 2 == pytest.approx(1, abs=1e-12)


def test_bell_measure_fresh_pair(rng):
    for _ in range(20):
        bag = StateBag()
        a, b = bag.alloc_zero(2)
        bag.apply_gate("H", a)
        bag.apply_cnot(a, b)
        assert bag.bell_measure(a, b, rng) == (0, 0)


@pytest.mark.parametrize("pa,pb", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_bell_outcome_labels(pa, pb, rng):
    # (I (x) X^b Z^a)|Phi+> must read as (a, b)
    bag = StateBag()
    a, b = bag.alloc_zero(2)
    bag.apply_gate("H", a)
    bag.apply_cnot(a, b)
    bag.apply_pauli(b, pb, pa)
    assert bag.bell_measure(a, b, rng) == (pa, pb)


def test_teleportation_identity(rng):
    for _ in range(100):
        vec = random_state(rng, 1)
        bag = StateBag()
        (d,) = bag.load(vec)
        a, b = bag.alloc_zero(2)
        bag.apply_gate("H", a)
        bag.apply_cnot(a, b)
        ma, mb = bag.bell_measure(d, a, rng)
        bag.undo_pauli(b, mb, ma)
        got = bag.state_of([b])
        assert fidelity(got, SparseState.from_dense([b], vec)) > 1 - 1e-12


def test_entanglement_swap(rng):
    bag = StateBag()
    a, b, c, d = bag.alloc_zero(4)
    for x, y in ((a, b), (c, d)):
        bag.apply_gate("H", x)
        bag.apply_cnot(x, y)
    ma, mb = bag.bell_measure(b, c, rng)
    bag.undo_pauli(d, mb, ma)
    bell = SparseState([a, d], {0: 2**-.5, 3: 2**-.5})
    assert fidelity(bag.state_of([a, d]), bell) == pytest.approx(1, abs=1e-12)


def test_fidelity_examples():
    w = WireId(0)
    zero = SparseState([w], {0: 1})
    one = SparseState([w], {1: 1})
    plus = SparseState([w], {0: 2**-.5, 1: 2**-.5})
    assert fidelity(zero, zero) == 1
    assert fidelity(zero, one) == 0
    assert fidelity(zero, plus) == pytest.approx(.5)
    with pytest.raises(WireMismatch):
        fidelity(zero, SparseState([WireId(1)], {0: 1}))


def test_json_round_trip(rng):
    bag = StateBag()
    ws = bag.load(random_state(rng, 2))
    obj = bag.dump(ws[0])
    assert set(obj) == {"wires", "amps"}
    assert all(len(k) == 2 for k in obj["amps"])
    back = SparseState.from_json(obj)
    assert fidelity(back, bag.state_of(ws)) == pytest.approx(1, abs=1e-15)


def test_little_endian_labels():
    bag = StateBag()
    a = bag.prepare_superposition({1: 1.0}, 1)
    b = bag.prepare_superposition({2: 1.0}, 2)
    joint = bag.state_of([a, b])
    assert list(joint.amps) == [1 | (2 << 1)]
    assert joint.label_str(1 | (2 << 1)) == "101"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(6)))
def test_merge_order_independent(seed, order):
    rng = np.random.default_rng(seed)
    vecs = [random_state(rng, 1) for _ in range(6)]
    bag1, bag2 = StateBag(autofactor=False), StateBag(autofactor=False)
    w1 = [bag1.load(v)[0] for v in vecs]
    w2 = [bag2.load(v)[0] for v in vecs]
    for i in range(5):
        bag1.apply_cnot(w1[i], w1[i + 1])
    for i in order[:-1]:
        bag2._merge([w2[i], w2[order[-1]]])
    for i in range(5):
        bag2.apply_cnot(w2[i], w2[i + 1])
    s1 = bag1.state_of(w1)
    s2 = bag2.state_of(w2)
    assert np.allclose(s1.dense(), s2.dense(), atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normalization_preserved(seed):
    rng = np.random.default_rng(seed)
    bag = StateBag()
    ws = bag.load(random_state(rng, 3))
    for _ in range(300):
        if rng.random() < .3:
            c, t = rng.choice(3, 2, replace=False)
            bag.apply_cnot(ws[c], ws[t])
        else:
            bag.apply_gate(str(rng.choice(list(GATES))), ws[int(rng.integers(3))])
    assert abs(bag.state_of(ws).norm2() - 1) < 1e-10


def test_factorize_splits_bell_pairs(rng):
    bag = StateBag()
    ws = bag.alloc_zero(6)
    for i in range(0, 6, 2):
        bag.apply_gate("H", ws[i])
        bag.apply_cnot(ws[i], ws[i + 1])
    bag._merge(ws)
    assert bag.blob_count() == 1
    bag.factorize(ws[0])
    assert sorted(bag.blob_sizes()) == [2, 2, 2]


def test_pauli_frame_rules():
    # physical(G) X^x Z^z = X^x' Z^z' G up to phase; X and Z never touch the state
    def mat(x, z):
        return np.linalg.matrix_power(GATES["X"], x) @ np.linalg.matrix_power(GATES["Z"], z)

    for g in ("H", "P", "Pdg", "X", "Z"):
        for x in (0, 1):
            for z in (0, 1):
                f = PauliFrame()
                w = WireId(0)
                f.set(w, x, z)
                f.gate(g, w)
                x2, z2 = f.get(w)
                phys = np.eye(2) if g in ("X", "Z") else GATES[g]
                lhs = phys @ mat(x, z)
                rhs = mat(x2, z2) @ GATES[g]
                ph = np.vdot(rhs.ravel(), lhs.ravel()) / 2
                assert abs(abs(ph) - 1) < 1e-12 and np.allclose(lhs, ph * rhs)
    cn = np.eye(4)[[0, 3, 2, 1]]  # control bit0, target bit1
    X, Z, I = GATES["X"], GATES["Z"], np.eye(2)
    for bits in range(16):
        xc, zc, xt, zt = [(bits >> i) & 1 for i in range(4)]
        f = PauliFrame()
        c, t = WireId(0), WireId(1)
        f.set(c, xc, zc)
        f.set(t, xt, zt)
        f.cnot(c, t)
        def pad(fr):
            (a, b), (e, g) = fr.get(c), fr.get(t)
            pc = np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)
            pt = np.linalg.matrix_power(X, e) @ np.linalg.matrix_power(Z, g)
            return np.kron(pt, pc)
        old = np.kron(np.linalg.matrix_power(X, xt) @ np.linalg.matrix_power(Z, zt),
                      np.linalg.matrix_power(X, xc) @ np.linalg.matrix_power(Z, zc))
        lhs = cn @ old
        rhs = pad(f) @ cn
        ph = np.vdot(rhs.ravel(), lhs.ravel()) / 4
        assert np.allclose(lhs, ph * rhs)
    del I
