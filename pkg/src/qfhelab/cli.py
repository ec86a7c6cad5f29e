"""Command-line front door. Every command prints JSON."""
from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .barrington import BPError, PermBP, bp_alternate, bp_compile, or_example
from .dtf import AmpFamily, RefFamily, amplify, claw_miss_count, four_to_two, phase_sign
from .gadtf import GAError, GAFamily, claw_fraction
from .he import CT, SK, BoolCircuit, CircuitInput, Gate, HEError, scheme_from_name
from .qfhe import (
    CircuitError,
    QCircuit,
    TDepthExceeded,
    family_from_name,
    gadget_layout,
    pad_rule,
    qfhe_dec,
    qfhe_enc,
    qfhe_eval,
    qfhe_keygen,
    simulate,
)
from .rsp import (
    LayoutMismatch,
    NotAlternating,
    RSPFailure,
    ShapeViolation,
    bell_goal,
    gadget_apply,
    gadget_keygen,
    hidden_bell_pair,
    layout_from_bp,
    rsp_gen_gadget,
    write_transcript,
)
from .simcore import GATES, SparseState, StateBag, fidelity
from .streams import stream

EXIT_OK, EXIT_INPUT, EXIT_CONTRACT, EXIT_INTERNAL = 0, 2, 3, 4
CONTRACT_ERRORS = (TDepthExceeded, NotAlternating, LayoutMismatch, ShapeViolation, RSPFailure)
INPUT_ERRORS = (json.JSONDecodeError, OSError, CircuitError, BPError, HEError, GAError, KeyError, TypeError, ValueError)
TOL = 1e-9


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def emit(obj, out: str | None) -> None:
    text = dumps(obj) + "\n"
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def read_json(path: str):
    return json.loads(Path(path).read_text())


def parse_family(spec: str):
    """ref:t | ga[:n,B,N] | amp:l[:base] | any internal family name."""
    head, _, rest = spec.partition(":")
    if (head == "ga" and "," in rest) or spec == "ga":
        n, B, N = (int(v) for v in rest.split(",")) if rest else (2, 9, 10007)
        return GAFamily(N, n, B)
    if head == "amp":
        ell, _, base = rest.partition(":")
        return amplify(parse_family(base or "ga"), int(ell))
    return family_from_name(spec)


def exact_epsilon(family, td) -> float | None:
    if isinstance(family, RefFamily):
        return 0.0
    if isinstance(family, GAFamily):
        return 1.0 - claw_fraction(td)
    if isinstance(family, AmpFamily):
        base = exact_epsilon(family.base, td.base)
        return None if base is None else base**family.ell
    return None


def epsilon_bound(family) -> float | None:
    if isinstance(family, RefFamily):
        return 0.0
    if isinstance(family, GAFamily):
        return family.n / (family.B - 1)
    if isinstance(family, AmpFamily):
        b = epsilon_bound(family.base)
        return None if b is None else b**family.ell
    return None


# commands


def cmd_demo_qfhe(a) -> int:
    if a.circuit:
        circ = QCircuit.from_json(read_json(a.circuit))
    else:
        circ = QCircuit.from_json(json.loads(resources.files("qfhelab").joinpath("data/bell_t.json").read_text()))
    scheme, family = scheme_from_name(a.he), parse_family(a.dtf)
    if circ.t_depth() > a.levels:
        raise TDepthExceeded(f"circuit T-depth {circ.t_depth()} exceeds L={a.levels}")
    keys = qfhe_keygen(a.levels, scheme, family, stream(a.seed, "cli", "demo", "keygen"))
    rng = stream(a.seed, "cli", "demo", "run")
    v = np.zeros(1 << circ.wires, dtype=complex)
    v[0] = 1
    bag = StateBag()
    ws = bag.load(v)
    ct = qfhe_enc(keys.pk[0], bag, ws, rng)
    stages = [{"stage": "keygen", "L": keys.L, "he": scheme.name, "dtf": family.name}, {"stage": "enc", "level": 0}]
    qfhe_eval(keys, ct, circ, rng)
    stages += [{"stage": "eval", **e} for e in ct.log]
    stages.append({"stage": "recrypt", "count": ct.recryptions, "level": ct.level})
    out = qfhe_dec(keys.sk, ct)
    f = fidelity(bag.state_of(out), SparseState.from_dense(out, simulate(circ, v)))
    stages.append({"stage": "dec", "level": ct.level})
    emit({"command": "demo-qfhe", "circuit": circ.to_json(), "stages": stages, "fidelity": f"{f:.9f}"}, a.out)
    return EXIT_OK if f >= 1 - TOL else EXIT_INTERNAL


def cmd_dtf_check(a) -> int:
    family = parse_family(a.dtf)
    report = []
    for mu in (0, 1):
        rng = stream(a.seed, "cli", "dtf-check", mu)
        key, td = family.gen(mu, rng)
        failures = 0
        if mu == 0:
            for _ in range(a.trials):
                b = int(rng.integers(2))
                if td.partial_invert(key.eval(b, key.sample(b, rng))) != {b}:
                    failures += 1
            row = {"epsilon_hat": None, "epsilon_bound": None, "epsilon_exact": None}
        else:
            miss = claw_miss_count(key, td, a.trials, rng)
            # phase relation on claw points
            for _ in range(min(a.trials, 200)):
                y = key.eval(0, key.sample(0, rng))
                if td.partial_invert(y) == {0, 1}:
                    d = int(rng.integers(1 << key.t))
                    if phase_sign(td.alpha(y, d, 0), td.alpha(y, d, 1)) is None:
                        failures += 1
            eps = miss / a.trials
            ex = exact_epsilon(family, td)
            row = {
                "epsilon_hat": eps,
                "epsilon_bound": epsilon_bound(family),
                "epsilon_exact": ex,
                "sigma": math.sqrt(ex * (1 - ex) / a.trials) if ex is not None else None,
            }
        report.append({"family": family.name, "mode": mu, "trials": a.trials, "failures": failures, **row})
    emit({"command": "dtf-check", "results": report}, a.out)
    return EXIT_OK if all(r["failures"] == 0 for r in report) else EXIT_INTERNAL


def _load_bool_circuit(a) -> BoolCircuit:
    if a.source == "or":
        # ct OR sk = NOT(NOT ct AND NOT sk)
        ins = [CircuitInput("x", CT), CircuitInput("sk", SK)]
        gates = [Gate("NOT", (0,)), Gate("NOT", (1,)), Gate("AND", (2, 3)), Gate("NOT", (4,))]
        return BoolCircuit(ins, gates, 5)
    if a.source.startswith("dec:"):
        return scheme_from_name(a.source[4:]).dec_circuit()
    return BoolCircuit.from_json(read_json(a.source))


def cmd_bp_compile(a) -> int:
    circ = _load_bool_circuit(a)
    bp = bp_compile(circ, a.strategy)
    alt = bp_alternate(bp)
    emit(
        {"command": "bp-compile", "length": len(bp), "program": bp.to_json(),
         "alternated_length": len(alt), "alternated": alt.to_json()},
        a.out,
    )
    return EXIT_OK


def cmd_gadget_layout(a) -> int:
    if a.bp == "or-example":
        bp = or_example()
    else:
        obj = read_json(a.bp)
        bp = PermBP.from_json(obj.get("alternated", obj))
    lay = layout_from_bp(bp)
    text = lay.dumps() + "\n"
    if a.out:
        Path(a.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _hbp_campaign(scheme, family, trials, seed):
    rows = []
    for mu in (0, 1):
        rng = stream(seed, "cli", "rsp-bell", mu)
        keys = scheme.keygen(rng)
        ok, fmin, side_ok = 0, 1.0, 0
        for _ in range(trials):
            k4, td = four_to_two(family, mu, rng)
            enc_t = [scheme.enc(keys.pk, b, rng) for b in td.to_bits()]
            zero = scheme.enc(keys.pk, 0, rng)
            bag = StateBag()
            regs = bag.alloc_plus(3)
            res = hidden_bell_pair(bag, regs, k4, enc_t, zero, zero, keys.pk, keys.evk, rng, scheme, family)
            if not res.success:
                continue
            ok += 1
            p = [scheme.dec(keys.sk, c) for c in (res.enc_r0, res.enc_r1, res.enc_r2)]
            bag.undo_pauli(regs[0], 0, p[0])
            bag.undo_pauli(regs[1], 0, p[1])
            bag.undo_pauli(regs[2], p[2], 0)
            st = bag.state_of(regs)
            fs = [fidelity(st, SparseState.from_dense(regs, bell_goal(s))) for s in (0, 1)]
            fmin = min(fmin, fs[mu])
            side_ok += int(fs[mu] > fs[1 - mu])
        rows.append({"mode": mu, "trials": trials, "successes": ok, "min_fidelity": fmin, "pair_side_matches": side_ok})
    return rows


def cmd_rsp_bell(a) -> int:
    rows = _hbp_campaign(scheme_from_name(a.he), parse_family(a.dtf), a.trials, a.seed)
    emit({"command": "rsp-bell", "results": rows}, a.out)
    return EXIT_OK if all(r["min_fidelity"] >= 1 - TOL for r in rows) else EXIT_INTERNAL


def cmd_gadget_run(a) -> int:
    scheme, family = scheme_from_name(a.he), parse_family(a.dtf)
    rng = stream(a.seed, "cli", "gadget-run")
    k, k2 = scheme.keygen(rng, 0), scheme.keygen(rng, 1)
    lay = gadget_layout(scheme)
    gk = gadget_keygen(k.sk.bits, k2.pk, family, rng, scheme)
    enc_sk = [scheme.enc(k2.pk, b, rng) for b in k.sk.bits]
    fmin, counts, records = 1.0, [0, 0], []
    for i in range(a.trials):
        gs = rsp_gen_gadget(gk, enc_sk, k2.pk, k2.evk, lay, rng)
        x = i % 2
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        (w,) = gs.bag.load(v)
        out = gadget_apply(gs, w, scheme.enc(k.pk, x, rng), lay, k2.evk, rng)
        gs.bag.undo_pauli(out.wire, scheme.dec(k2.sk, out.enc_x), scheme.dec(k2.sk, out.enc_z))
        want = GATES["Pdg"] @ v if x else v
        fmin = min(fmin, fidelity(gs.bag.state_of([out.wire]), SparseState.from_dense([out.wire], want)))
        counts[x] += 1
        records += [{**r, "trial": i} for r in gs.transcript]
    if a.transcript:
        write_transcript(records, a.transcript)
    emit(
        {"command": "gadget-run", "he": scheme.name, "dtf": family.name, "registers": len(lay.Q),
         "layers": lay.layers, "trials": a.trials, "x_counts": counts, "min_fidelity": fmin},
        a.out,
    )
    return EXIT_OK if fmin >= 1 - TOL else EXIT_INTERNAL


def cmd_emit_vectors(a) -> int:
    root = Path(a.out or "vectors")
    root.mkdir(parents=True, exist_ok=True)
    rng = stream(a.seed, "cli", "emit-vectors")
    files = {}

    def put(name, obj):
        (root / name).write_text(dumps(obj) + "\n")
        files[name] = sorted(obj) if isinstance(obj, dict) else len(obj)

    ref = []
    for mu in (0, 1):
        key, td = RefFamily(2).gen(mu, rng)
        ys = sorted({key.eval(b, x) for b in (0, 1) for x in range(4)})
        alpha = [[y, d, b, td.alpha(y, d, b)] for y in ys for d in range(4) for b in (0, 1)]
        ref.append({"key": key.to_json(), "trapdoor": td.to_json(), "alpha": alpha})
    put("ref_dtf.json", ref)
    put("or_example.json", or_example().to_json())
    put("pad_table.json", {
        g: {"".join(map(str, p)): list(pad_rule(g, p)) for p in np.ndindex(*([2] * (4 if g == "CNOT" else 2)))}
        for g in ("H", "P", "X", "Z", "CNOT")
    })
    put("layout_mask2.json", gadget_layout(scheme_from_name("mask:2")).to_json())
    put("hbp_ref3.json", _hbp_campaign(scheme_from_name("mask:4"), RefFamily(3), 5, a.seed))
    emit({"command": "emit-vectors", "dir": str(root), "files": sorted(files)}, None)
    return EXIT_OK


# wiring


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfhelab", description="QFHE simulation lab")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add(name, fn, seed=True, he="mask:4", dtf="ref:2", trials=None):
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        if seed:
            sp.add_argument("--seed", type=int, required=True)
        if he:
            sp.add_argument("--he", default=he, help="clear | mask:k")
        if dtf:
            sp.add_argument("--dtf", default=dtf, help="ref:t | ga[:n,B,N] | amp:l[:base]")
        if trials is not None:
            sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--out", default=None)
        return sp

    sp = add("demo-qfhe", cmd_demo_qfhe)
    sp.add_argument("circuit", nargs="?", default=None)
    sp.add_argument("--levels", "-L", type=int, default=2)
    add("dtf-check", cmd_dtf_check, he=None, trials=1000)
    sp = add("bp-compile", cmd_bp_compile, seed=False, he=None, dtf=None)
    sp.add_argument("source", help="circuit JSON path, 'or', or 'dec:<scheme>'")
    sp.add_argument("--strategy", choices=["min", "classic"], default="min")
    sp = add("gadget-layout", cmd_gadget_layout, seed=False, he=None, dtf=None)
    sp.add_argument("bp", help="BP JSON path (bp-compile output accepted) or 'or-example'")
    add("rsp-bell", cmd_rsp_bell, dtf="ref:3", trials=20)
    sp = add("gadget-run", cmd_gadget_run, he="mask:2", trials=10)
    sp.add_argument("--transcript", default=None)
    add("emit-vectors", cmd_emit_vectors, he=None, dtf=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", 1) is not None and getattr(args, "trials", 1) < 1:
        return _fail(EXIT_INPUT, ValueError("--trials must be positive"))
    try:
        return args.fn(args)
    except CONTRACT_ERRORS as e:
        return _fail(EXIT_CONTRACT, e)
    except INPUT_ERRORS as e:
        return _fail(EXIT_INPUT, e)
    except Exception as e:  # noqa: BLE001
        return _fail(EXIT_INTERNAL, e)


def _fail(code: int, e: Exception) -> int:
    sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e), "exit": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
