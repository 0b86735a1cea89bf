"""The ten acceptance criteria; each prints one "criterion N: PASS/FAIL" line."""
import itertools
import json
import random
import time
from contextlib import contextmanager

import numpy as np
from conftest import CRITERIA
from oracles import forbidden_oracle

from workbench import games
from workbench import rainbow as rb
from workbench.blowblur import (
    blur_structure,
    embed_monk_in_cm,
    evenly_distributed,
    fincof_sample,
    monk_sequence_experiment,
    rep_map_check,
    saturate_graph,
)
from workbench.core import (
    WITNESSES,
    SetAlgebra,
    check_witness_inequality,
    generated_subalgebra,
    two_atom_ra,
    validate_ra_atom_structure,
)
from workbench.netgraph import graph_of_network, network_of_graph, validate_network
from workbench.repsearch import (
    SquareRepresentation,
    find_square_representation,
    verify_representation,
)


@contextmanager
def criterion(n, budget):
    info = {}
    t0 = time.perf_counter()
    try:
        yield info
        took = time.perf_counter() - t0
        assert took < budget, f"took {took:.1f}s, budget {budget}s"
    except BaseException as e:
        line = f"criterion {n}: FAIL ({e})"
        CRITERIA[n] = line
        print(line)
        raise
    detail = ", ".join(f"{k}={v}" for k, v in info.items())
    line = f"criterion {n}: PASS ({took:.2f}s{', ' + detail if detail else ''})"
    CRITERIA[n] = line
    print(line)


def test_criterion_1_forbidden_triples():
    with criterion(1, 5) as info:
        cols = rb.ColourSignature(3, 2, 2).edge_colours
        bad = 0
        for a, b, c in itertools.product(cols, repeat=3):
            got = rb.is_forbidden_triple(a, b, c)[0]
            assert got == forbidden_oracle(a, b, c), (a, b, c)
            bad += got
        info.update(triples=len(cols) ** 3, forbidden=bad)


def test_criterion_2_network_round_trip():
    with criterion(2, 10) as info:
        rules = rb.rainbow_rules(3)
        sig = rb.ColourSignature(3, 2, 2)
        for seed in range(200):
            rng = random.Random(seed)
            G = rb.random_J_graph(sig, rng.randint(1, 5), rng)
            N = network_of_graph(G, 3)
            assert validate_network(N, rules) == []
            assert graph_of_network(N) == G, seed
        info.update(graphs=200)


def test_criterion_3_forall_wins_F():
    with criterion(3, 90) as info:
        rounds = []
        for nmax in (4, 6, 8):
            t0 = time.perf_counter()
            o = games.play("F", rb.ColourSignature(3, nmax + 3, nmax), max_rounds=60, seed=1)
            assert time.perf_counter() - t0 < 30
            assert o.winner == "ForAll", (nmax, o.reason)
            reds = games.forced_red_indices(o)
            assert reds and all(a > b for a, b in itertools.pairwise(reds)), reds
            rounds.append(o.rounds)
        assert all(a < b for a, b in itertools.pairwise(rounds)), rounds
        info.update(rounds=rounds)


def test_criterion_4_exists_survives_H():
    with criterion(4, 300) as info:
        tally = {}
        for k in range(1, 5):
            sig = games.h_signature(3, k)
            wins = {"ForAll": 0, "Exists": 0, None: 0}
            for seed in range(200):
                o = games.play("H", sig, max_rounds=k, seed=seed)
                wins[o.winner] += 1
                for rec in o.transcript:
                    # a truncated final round has no response, hence nothing to audit
                    if rec["audit"] is None:
                        assert rec is o.transcript[-1] and rec.get("outcome") == "truncation", (k, seed)
                        continue
                    assert all(rec["audit"].values()), (k, seed, rec["round"])
            assert wins["ForAll"] == 0, (k, wins)
            tally[k] = f"{wins['Exists']}E/{wins[None]}T"
        info.update(tally=tally)


def test_criterion_5_blur_structure():
    with criterion(5, 60) as info:
        s = blur_structure(6, i_max=30)
        assert validate_ra_atom_structure(s) == []
        assert evenly_distributed(3, 5, 7) and not evenly_distributed(3, 5, 8)
        emb = embed_monk_in_cm(s, margin=3)
        assert (emb["pairs_ok"], emb["pairs"]) == (36, 36)
        info.update(atoms=len(s.atoms), pairs=f"{emb['pairs_ok']}/{emb['pairs']}")


def test_criterion_6_saturation():
    with criterion(6, 120) as info:
        s = blur_structure(6, i_max=30)
        sat = saturate_graph(s, budget=500)
        assert sat.steps == 500 and len(sat.audits) == 500
        assert all(a["ok"] for a in sat.audits)
        rep = rep_map_check(sat, fincof_sample(s, 50))
        assert rep["boolean_ok"] and rep["rep_id_diagonal"] and rep["forward_ok"], rep["failures"][:3]
        b = rep["backward"]
        info.update(nodes=sat.n, backward=f"{b['holds']}/{b['checked']}")


def test_criterion_7_witness_inequality():
    with criterion(7, 120) as info:
        C = SetAlgebra(4, 2)
        gens = np.random.default_rng(0).choice(C.neat_elements(3), 20)
        els = generated_subalgebra(C, gens, dims=3)
        assert len(els) == 256
        res = check_witness_inequality(*WITNESSES["ca-3"], C, elements=els)
        assert res.holds and res.mode == "exhaustive", res.counterexample
        info.update(elements=len(els), mode=res.mode)


def test_criterion_8_monk_sequence():
    with criterion(8, 60) as info:
        rows = monk_sequence_experiment(3, range(5))
        assert [r["chi"] for r in rows] == [3, 4, 5, 6, 7]
        assert [r["blocks"] for r in rows] == [10, 13, 16, 19, 22]
        assert all(r["obstruction"] for r in rows)
        info.update(rows=len(rows))


def test_criterion_9_repsearch():
    with criterion(9, 10) as info:
        s = two_atom_ra()
        found = find_square_representation(s, 2)
        assert found.status == "exists" and verify_representation(s, found.rep) == []
        assert find_square_representation(s, 3).status == "none"
        bad = SquareRepresentation(found.rep.base, dict(found.rep.assign))
        bad.assign[0, 1] = next(a for a in s.atoms if a != found.rep.assign[0, 1])
        fails = verify_representation(s, bad)
        assert fails
        info.update(mutation=fails[0][0])


def test_criterion_10_determinism():
    with criterion(10, 120) as info:
        runs = [("F", rb.ColourSignature(3, 9, 6), 60, 1)] + [("H", games.h_signature(3, 3), 3, s) for s in range(5)]
        for kind, sig, rounds, seed in runs:
            a = games.play(kind, sig, max_rounds=rounds, seed=seed).to_jsonl()
            b = games.play(kind, sig, max_rounds=rounds, seed=seed).to_jsonl()
            assert a.encode() == b.encode(), (kind, seed)
        s = blur_structure(6, i_max=12)
        a = json.dumps(saturate_graph(s, budget=50, seed=3).to_json(), sort_keys=True)
        b = json.dumps(saturate_graph(s, budget=50, seed=3).to_json(), sort_keys=True)
        assert a == b
        info.update(transcripts=len(runs) + 1)
