import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from workbench import rainbow as rb
from workbench.core import SetAlgebra, basic_matrices, neat_hat, two_atom_ra
from workbench.games import (
    LAM0,
    Amalgamation,
    Cylindrifier,
    Initial,
    RhoExhausted,
    Transformation,
    audit_ok,
    audit_properties,
    build_limit_prefix,
    cone_demand,
    extend_rho,
    forced_red_indices,
    graph_audit,
    h_signature,
    initial_network_neat_hat,
    legal_forall_move,
    new_state,
    play,
    rho_violations,
    strategy_exists,
    strategy_exists_greedy,
    strategy_exists_neat_hat,
    strategy_forall_rainbow,
    sweep,
    zeroth_graph,
)
from workbench.netgraph import (
    EXISTS,
    FORALL,
    Hypernetwork,
    OwnershipLedger,
    is_lambda_neat,
    validate_network,
)


def f_sig(nmax):
    return rb.ColourSignature(3, nmax + 3, nmax)


def started(kind, sig, rounds=None):
    """State after the initial zeroth-graph move and the scripted response."""
    state = new_state(kind, sig, rounds=rounds)
    mv = Initial(zeroth_graph(3))
    resp = strategy_exists(state, mv)
    state.history.append(resp.hyper)
    state.ledgers.append(resp.ledger)
    state.rho = resp.rho
    state.rho_history.append(dict(resp.rho))
    state.births = {x: 0 for x in resp.hyper.nodes}
    return state


# ---- the universal player's script --------------------------------------------------------

def test_zeroth_move():
    state = new_state("F", f_sig(4))
    mv = strategy_forall_rainbow(state)
    G = mv.graph
    assert G.edges[0, 1] == rb.W
    assert G.edges[1, 2] == rb.g(1)
    assert G.edges[0, 2] == rb.g0(0)
    assert G.shades[0, 1] == rb.shade(rb.ALL)


def test_second_demand_has_tint_minus_one_on_base():
    state = started("F", f_sig(4))
    mv = strategy_forall_rainbow(state)
    assert mv.face == (0, 1) and mv.k == 3
    assert mv.b.edges[0, 3] == rb.g0(-1) and mv.b.edges[1, 3] == rb.g(1)


@pytest.mark.parametrize("nmax", [4, 6, 8])
def test_forall_wins_F_with_decreasing_reds(nmax):
    out = play("F", f_sig(nmax), max_rounds=60, seed=1)
    assert out.winner == FORALL
    reds = forced_red_indices(out)
    assert reds and all(a > b for a, b in itertools.pairwise(reds))
    assert out.rounds <= nmax + 3


def test_rounds_grow_with_nmax():
    rounds = [play("F", f_sig(m), max_rounds=60, seed=1).rounds for m in (4, 6, 8)]
    assert rounds == sorted(rounds) and len(set(rounds)) == 3


def test_zero_rounds_is_a_vacuous_win():
    out = play("F", f_sig(4), max_rounds=0)
    assert out.winner == EXISTS and out.rounds == 0 and len(out.transcript) == 1


def test_greedy_exists_escapes_with_indexed_white():
    # with w_0 read as the plain white, an empty-domain white between two apexes is allowed,
    # so the forced-red mechanism needs the scripted red choice
    assert not rb.is_forbidden_triple(rb.g0(-1), rb.g0(0), rb.wf(()))[0]
    out = play("F", f_sig(4), strat_exists=strategy_exists_greedy, max_rounds=60, seed=1)
    assert out.winner is None and "truncation" in out.reason
    G = out.state.current.net
    apexes = [x for x in G.nodes if x > 1]
    assert all(G.edges[x, y][0] == "wf" for x, y in itertools.combinations(apexes, 2))


def test_tint_underflow_is_truncation():
    out = play("F", rb.ColourSignature(3, 1, 8), max_rounds=60, seed=1)
    assert out.winner is None and "truncation" in out.reason
    assert out.transcript[-1]["outcome"] == "truncation"


# ---- H_k -------------------------------------------------------------------------------------

def test_H3_survival_over_100_seeds():
    sig = h_signature(3, 3)
    results = sweep("H", sig, range(100), 3)
    assert not [s for s, o in results.items() if o.winner == FORALL]
    for o in results.values():
        for rec in o.transcript:
            if rec.get("audit") is not None:
                assert all(rec["audit"].values()), rec


def test_H_is_lambda_neat_each_round():
    sig = h_signature(3, 3)
    for seed in range(10):
        o = play("H", sig, max_rounds=3, seed=seed)
        for H in o.state.history:
            assert is_lambda_neat(H, LAM0)
            assert rb.in_class_J(H.net, 3)


def test_rho_chain_is_monotone_and_spaced():
    sig = h_signature(3, 4)
    for seed in range(10):
        st_ = play("H", sig, max_rounds=4, seed=seed).state
        for a, b in zip(st_.rho_history, st_.rho_history[1:]):
            assert all(b[t] == v for t, v in a.items())
        assert rho_violations(st_.rho, st_.gap()) == []


def test_forced_move_counting_flag():
    sig = h_signature(3, 3)
    for seed in range(40):
        a = play("H", sig, max_rounds=3, seed=seed)
        if any((r.get("move") or {}).get("type") == "transformation" for r in a.transcript):
            b = play("H", sig, max_rounds=3, seed=seed, forced_counts=False)
            assert len(b.transcript) > len(a.transcript)
            return
    pytest.fail("no transformation move in 40 seeds")


def test_H_needs_round_bound():
    with pytest.raises(ValueError):
        play("H", h_signature(3, 1))


# ---- legality -------------------------------------------------------------------------------

def test_reuse_legal_in_F_illegal_in_H():
    F = started("F", f_sig(4))
    G = F.current.net
    H = started("H", h_signature(3, 3), rounds=3)
    phi = cone_demand(G.restrict((0, 1)), (0, 1), 2, -1)
    assert legal_forall_move(F, Cylindrifier(0, (0, 1), 2, phi)) == (True, "ok")
    ok, why = legal_forall_move(H, Cylindrifier(0, (0, 1), 2, phi))
    assert not ok and "new node" in why


def test_F_pebble_bound():
    F = started("F", f_sig(4))
    phi = cone_demand(F.current.net.restrict((0, 1)), (0, 1), 7, -1)
    ok, why = legal_forall_move(F, Cylindrifier(0, (0, 1), 7, phi))
    assert not ok and "pebbles" in why


def test_face_and_network_checks():
    H = started("H", h_signature(3, 3), rounds=3)
    phi = cone_demand(H.current.net.restrict((0, 1)), (0, 1), 5, -1)
    assert legal_forall_move(H, Cylindrifier(3, (0, 1), 5, phi))[1] == "no such network"
    assert legal_forall_move(H, Cylindrifier(0, (0, 0), 5, phi))[1] == "face must be n-1 distinct nodes"
    assert not legal_forall_move(H, Initial(zeroth_graph(3)))[0]


def test_transformation_must_be_injective():
    H = started("H", h_signature(3, 3), rounds=3)
    assert legal_forall_move(H, Transformation(0, ((5, 0), (6, 1))))[0]
    ok, why = legal_forall_move(H, Transformation(0, ((5, 0), (6, 0))))
    assert not ok and "injective" in why
    assert not legal_forall_move(started("F", f_sig(4)), Transformation(0, ((5, 0),)))[0]


def test_amalgamation_cross_pair_illegal():
    H = started("H", h_signature(3, 3), rounds=3)
    G = H.current.net
    # a copy of N_0 with the apex renamed: the two apexes form a cross pair extending the identity
    copy = G.relabel({0: 0, 1: 1, 2: 9})
    H.history.append(Hypernetwork(copy, {}, 3))
    H.ledgers.append(OwnershipLedger())
    ok, why = legal_forall_move(H, Amalgamation(0, 1))
    assert not ok and "cross pair" in why


# ---- rho ---------------------------------------------------------------------------------------

def test_rho_first_point():
    assert extend_rho({}, [0], r=0, horizon=3) == {0: 0}


def test_rho_insert_below_with_gap():
    assert extend_rho({0: 9}, [-1], gap=9) == {-1: 0, 0: 9}


def test_rho_tight_interval_exhausts():
    with pytest.raises(RhoExhausted) as e:
        extend_rho({-2: 0, 0: 10}, [-1], gap=9)
    assert e.value.tint == -1


def test_rho_negative_range_exhausts():
    with pytest.raises(RhoExhausted):
        extend_rho({0: 3}, [-1], gap=9)


@given(st.sets(st.integers(-6, 6), min_size=1, max_size=6), st.integers(1, 4))
def test_rho_extension_order_preserving(tints, gap):
    rho = extend_rho({}, sorted(tints)[:1], gap=gap, anchor=1000)
    rho2 = extend_rho(rho, tints, gap=gap, anchor=1000)
    assert all(rho2[t] == v for t, v in rho.items())
    assert rho_violations(rho2, gap) == []


# ---- audit ---------------------------------------------------------------------------------------

def test_initial_audit_passes():
    state = started("H", h_signature(3, 3), rounds=3)
    assert audit_ok(audit_properties(state))


def test_green_edge_owned_by_exists_fails_property_I():
    state = started("H", h_signature(3, 3), rounds=3)
    state.ledgers[-1].own(1, 2, EXISTS)
    rep = audit_properties(state)
    assert rep["I"] == [(1, 2, "g:1")]
    assert not audit_ok(rep)


def test_shrinking_rho_fails_property_II():
    st_ = started("H", h_signature(3, 2), rounds=2)
    assert st_.rho
    st_.rho_history.append({})
    assert audit_properties(st_)["II"]


# ---- determinism ----------------------------------------------------------------------------------

def test_transcripts_deterministic():
    sig = h_signature(3, 3)
    assert play("H", sig, max_rounds=3, seed=7).to_jsonl() == play("H", sig, max_rounds=3, seed=7).to_jsonl()
    assert play("F", f_sig(6), max_rounds=60, seed=1).to_jsonl() == play("F", f_sig(6), max_rounds=60, seed=1).to_jsonl()


def test_dot_dumps():
    o = play("F", f_sig(4), max_rounds=60, seed=1, dot_every=2)
    assert o.dots and all(d.startswith("graph round") for d in o.dots)


# ---- network form: neat hat --------------------------------------------------------------------

@pytest.fixture(scope="module")
def two_atom_setup():
    # the two-atom algebra is represented on a two-point base; its 3-dim matrices
    # land in the 3-neat part of the 4-dim set algebra over {0, 1}
    s = two_atom_ra()
    ca = basic_matrices(s, 3, check=False)
    C = SetAlgebra(4, 2)

    def embed(M):
        return C.elem(p for p in C.points
                      if all((p[i] == p[j]) == (M[i][j] in s.identity) for i in range(3) for j in range(3)))
    return ca, C, embed


def test_embedding_is_neat(two_atom_setup):
    ca, C, embed = two_atom_setup
    for M in ca.atoms:
        assert embed(M) and C.cyl(3, embed(M)) == embed(M)


def test_neat_hat_strategy_keeps_hat_nonzero(two_atom_setup):
    ca, C, embed = two_atom_setup
    answered = 0
    for a in ca.atoms:
        N = initial_network_neat_hat(a, 3, C, embed, ca.atoms)
        assert validate_network(N, ca) == []
        hat = neat_hat(C, N, 3, embed)
        assert hat
        for b, l in itertools.product(ca.atoms, range(3)):
            face = (0, 1)
            mv = Cylindrifier(0, face, 3, b, l)
            tup = face[:l] + (3,) + face[l:]
            want = C.cyl(3, hat) & C.subst_map(tup, embed(b))
            if not want:
                with pytest.raises(ValueError):
                    strategy_exists_neat_hat(N, mv, C, embed, ca.atoms)
                continue
            M = strategy_exists_neat_hat(N, mv, C, embed, ca.atoms)
            answered += 1
            assert M.label[tup] == b
            assert validate_network(M, ca) == []
            assert neat_hat(C, M, 3, embed) & want
    assert answered


def test_neat_hat_zero_algebra_rejected(two_atom_setup):
    ca, _, _ = two_atom_setup
    C = SetAlgebra(4, 2)
    C.top = 0
    N = initial_network_neat_hat(ca.atoms[0], 3, SetAlgebra(4, 2), two_atom_setup[2], ca.atoms)
    with pytest.raises(ValueError):
        strategy_exists_neat_hat(N, Cylindrifier(0, (0, 1), 3, ca.atoms[0]), C, lambda a: 0, ca.atoms)


# ---- nested prefix -------------------------------------------------------------------------------

def test_prefix_depth_zero():
    rep = build_limit_prefix(0)
    assert len(rep.networks) == 1 and rep.networks[0] == zeroth_graph(3)
    assert rep.ok


def test_prefix_depth_four():
    rep = build_limit_prefix(4)
    assert graph_audit(rep.networks, 3)
    assert [req for req, _ in rep.discharged if req[0] == "cyl"]
    assert not [q for q in rep.pending if q[1] <= 2]
    for req, when in rep.discharged:
        assert when <= 4 and when == req[1] + 1
    theta = rep.thetas[0]
    assert theta["stage"] == 1
    assert set(rep.networks[1].nodes) <= set(theta["theta_plus"].values())
    final = rep.networks[-1]
    assert set(theta["theta_plus"]) <= set(final.nodes)


@given(st.integers(0, 10 ** 6))
def test_random_forall_never_beats_exists_in_H2(seed):
    o = play("H", h_signature(3, 2), max_rounds=2, seed=seed)
    assert o.winner != FORALL


def test_random_initial_moves_are_legal():
    sig = h_signature(3, 2)
    for seed in range(30):
        o = play("H", sig, max_rounds=2, seed=seed)
        assert not o.reason.startswith("illegal move")
        assert o.transcript[0]["move"]["type"] == "initial"


def test_strategy_rng_is_seeded():
    sig = h_signature(3, 2)
    seqs = {play("H", sig, max_rounds=2, seed=s).to_jsonl() for s in range(8)}
    assert len(seqs) > 1


def test_greedy_response_checks_triangles():
    state = started("F", f_sig(4))
    G = state.current.net
    mv = Cylindrifier(0, (0, 1), 3, cone_demand(G.restrict((0, 1)), (0, 1), 3, -1))
    resp = strategy_exists_greedy(state, mv)
    assert rb.in_class_J(resp.hyper.net, 3)
