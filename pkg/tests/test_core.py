import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from workbench.blowblur import alpha_of_graph, clique_union, monk_algebra
from workbench.core import (
    WITNESSES,
    CaAtomStructure,
    Const,
    Cyl,
    Meet,
    NoBasisError,
    RaAtomStructure,
    SetAlgebra,
    SizeGuardError,
    Sub,
    Swap,
    UnboundVariable,
    Var,
    X,
    basic_matrices,
    ca_term_eval,
    check_complete_additivity,
    check_ra_axioms,
    check_witness_inequality,
    cm_build,
    complete_graph_ra,
    generated_subalgebra,
    identity_ra,
    neat_hat,
    operation,
    structure_from_json,
    structure_to_json,
    two_atom_ra,
    validate_ca_atom_structure,
    validate_ra_atom_structure,
)

# ---- independent oracles ------------------------------------------------------------------

def brute_ra_laws(s):
    """Involution, Peircean and identity laws by plain loops over all triples."""
    bad = []
    for a in s.atoms:
        if s.converse[s.converse[a]] != a:
            bad.append(("involution", a))
    for a, b, c in itertools.product(s.atoms, repeat=3):
        v = s.is_consistent(a, b, c)
        if v != s.is_consistent(s.converse[a], c, b) or v != s.is_consistent(c, s.converse[b], a):
            bad.append(("peircean", a, b, c))
        for e in s.identity:
            if c == e and v != (b == s.converse[a]):
                bad.append(("identity", a, b, c))
    return bad


def brute_matrices(s, n):
    """Every n x n labelling with identity diagonal, converse symmetry and consistent triangles."""
    out = []
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for diag in itertools.product(sorted(s.identity, key=str), repeat=n):
        for upper in itertools.product(s.atoms, repeat=len(pairs)):
            m = {(i, i): diag[i] for i in range(n)}
            for (i, j), a in zip(pairs, upper):
                m[i, j], m[j, i] = a, s.converse[a]
            if all(s.is_consistent(m[x, y], m[y, z], m[x, z]) for x, y, z in itertools.product(range(n), repeat=3)):
                out.append(tuple(tuple(m[i, j] for j in range(n)) for i in range(n)))
    return out


def points_of(C, x):
    return {p for k, p in enumerate(C.points) if x >> k & 1}


def tau4_oracle(C, pts):
    # _3 s(0,1) x read pointwise: coordinates 0 and 1 swapped, coordinate 3 free
    return {s for s in C.points if any((s[1], s[0], s[2], v) in pts for v in range(C.base))}


def tau_oracle(C, pts):
    left = {s for s in C.points if any((s[1], v, s[2], s[3]) in pts for v in range(C.base))}
    right = {s for s in C.points if any((v, s[0], s[2], s[3]) in pts for v in range(C.base))}
    return left & right


# ---- RA atom structures ---------------------------------------------------------------------

def test_monk_six_validates_and_matches_brute_force():
    s = monk_algebra(6)
    assert validate_ra_atom_structure(s) == []
    assert brute_ra_laws(s) == []


def test_identity_only_structure_is_valid():
    assert validate_ra_atom_structure(identity_ra()) == []


def test_non_involutive_converse_is_reported():
    s = RaAtomStructure(["Id", "a", "b"], ["Id"], {"Id": "Id", "a": "b", "b": "b"},
                        consistent=lambda a, b, c: True)
    rep = validate_ra_atom_structure(s)
    assert rep and rep[0].law == "converse-involution"
    assert rep[0].witness[0] == "a"


def test_peircean_violation_has_witness():
    # (a, a, b) consistent but its rotation (b, a, a) is not
    def cons(x, y, z):
        if "Id" in (x, y, z):
            return (x == "Id" and y == z) or (y == "Id" and x == z) or (z == "Id" and x == y)
        return (x, y, z) == ("a", "a", "b")
    s = RaAtomStructure(["Id", "a", "b"], ["Id"], {"Id": "Id", "a": "a", "b": "b"}, consistent=cons)
    rep = validate_ra_atom_structure(s)
    assert rep and rep[0].law.startswith("peircean")
    assert ("peircean", "a", "a", "b") in brute_ra_laws(s)


def test_identity_law_violation_reported():
    s = RaAtomStructure(["Id", "d"], ["Id"], {"Id": "Id", "d": "d"}, consistent=lambda a, b, c: True)
    rep = validate_ra_atom_structure(s)
    assert rep and rep[0].law in ("identity-law", "peircean-converse", "peircean-rotate")


@pytest.mark.parametrize("builder", [two_atom_ra, complete_graph_ra, identity_ra])
def test_small_builtins_valid(builder):
    s = builder()
    assert validate_ra_atom_structure(s) == []
    assert brute_ra_laws(s) == []


def test_alpha_of_cliques_valid():
    s = alpha_of_graph(clique_union(3, 3), 3)
    assert validate_ra_atom_structure(s) == []
    assert brute_ra_laws(s) == []


# ---- complex algebras --------------------------------------------------------------------------

def test_monk_composition_of_atom_with_itself():
    s = monk_algebra(6)
    cm = cm_build(s)
    P = [a for a in s.atoms if a != "Id"]
    got = set(cm.atoms_of(cm.compose(cm.elem([P[0]]), cm.elem([P[0]]))))
    assert got == set(P[1:]) | {"Id"}


def test_two_atom_d_d_is_identity():
    cm = cm_build(two_atom_ra())
    assert cm.atoms_of(cm.compose(cm.elem(["d"]), cm.elem(["d"]))) == ["Id"]


@given(st.integers(0, 127))
def test_empty_composition_is_empty(x):
    cm = cm_build(monk_algebra(6))
    assert cm.compose(0, x) == 0 and cm.compose(x, 0) == 0


@given(st.integers(0, 127), st.integers(0, 127))
def test_composition_matches_definition(x, y):
    s = monk_algebra(6)
    cm = cm_build(s)
    want = {c for a in cm.atoms_of(x) for b in cm.atoms_of(y) for c in s.atoms if s.is_consistent(a, b, c)}
    assert set(cm.atoms_of(cm.compose(x, y))) == want


@pytest.mark.parametrize("builder", [two_atom_ra, complete_graph_ra, identity_ra, lambda: monk_algebra(6)])
def test_ra_axioms_on_complex_algebra(builder):
    assert check_ra_axioms(cm_build(builder())) == []


def test_ra_axioms_catch_broken_associativity():
    # a non-Peircean rule breaks associativity or converse laws in Cm
    def cons(x, y, z):
        if "Id" in (x, y, z):
            return (x == "Id" and y == z) or (y == "Id" and x == z) or (z == "Id" and x == y)
        return (x, y, z) == ("a", "a", "b")
    s = RaAtomStructure(["Id", "a", "b"], ["Id"], {"Id": "Id", "a": "a", "b": "b"}, consistent=cons)
    assert check_ra_axioms(cm_build(s)) != []


def test_cm_build_size_guard():
    s = RaAtomStructure(range(10), [0], {i: i for i in range(10)}, consistent=lambda a, b, c: True)
    with pytest.raises(SizeGuardError):
        cm_build(s, max_atoms=8)


# ---- basic matrices ---------------------------------------------------------------------------

def test_identity_basic_matrix_is_unique():
    ca = basic_matrices(identity_ra(), 3)
    assert ca.atoms == ((("Id",) * 3,) * 3,)


def test_monk_basic_matrices_match_brute_force():
    s = monk_algebra(6)
    ca = basic_matrices(s, 3)
    assert sorted(ca.atoms, key=repr) == sorted(brute_matrices(s, 3), key=repr)
    assert validate_ca_atom_structure(ca) == []


def test_alpha_of_five_triangles_has_matrices():
    s = alpha_of_graph(clique_union(5, 3), 3)
    ca = basic_matrices(s, 3)
    assert len(ca.atoms) > 0
    for M in ca.atoms:
        assert all(s.is_consistent(M[x][y], M[y][z], M[x][z]) for x, y, z in itertools.product(range(3), repeat=3))


@pytest.mark.parametrize("builder", [two_atom_ra, complete_graph_ra])
def test_basic_matrix_count_matches_brute_force(builder):
    s = builder()
    for n in (3, 4):
        try:
            ca = basic_matrices(s, n)
        except NoBasisError:
            ca = basic_matrices(s, n, check=False)
        assert sorted(ca.atoms, key=repr) == sorted(brute_matrices(s, n), key=repr)


def test_matrix_relations():
    s = complete_graph_ra()
    ca = basic_matrices(s, 3)
    for M, N in itertools.product(ca.atoms, repeat=2):
        for i in range(3):
            agree = all(M[a][b] == N[a][b] for a in range(3) for b in range(3) if i not in (a, b))
            assert ca.related(i, M, N) == agree
        for i, j in itertools.combinations(range(3), 2):
            assert ca.diag(i, j, M) == (M[i][j] == "Id")


def test_ca_validator_flags_bad_diagonal():
    ca = CaAtomStructure(2, ["a"], lambda i, j, a: i != j, lambda i, a: 0)
    assert next(v.law for v in validate_ca_atom_structure(ca)) == "E_ii"


# ---- CA terms on set algebras ---------------------------------------------------------------------

def test_tau_zero_and_unit():
    C = SetAlgebra(3, 2)
    tau = Meet(Sub(1, 0, Cyl(1, X)), Sub(0, 1, Cyl(0, X)))
    assert ca_term_eval(tau, C, {"x": 0}) == 0
    assert ca_term_eval(tau, C, {"x": C.top}) == C.top


@given(st.integers(0, 2 ** 16 - 1))
def test_witness_terms_match_pointwise_oracle(x):
    C = SetAlgebra(4, 2)
    small, big = WITNESSES["ca-3"]
    pts = points_of(C, x)
    assert points_of(C, ca_term_eval(small, C, {"x": x})) == tau4_oracle(C, pts)
    assert points_of(C, ca_term_eval(big, C, {"x": x})) == tau_oracle(C, pts)


def test_witness_inequality_on_generated_neat_subalgebra():
    C = SetAlgebra(4, 2)
    rng = np.random.default_rng(0)
    gens = rng.choice(C.neat_elements(3), size=20)
    els = generated_subalgebra(C, gens, dims=3)
    res = check_witness_inequality(*WITNESSES["ca-3"], C, elements=els)
    assert res.holds and res.mode == "exhaustive"
    assert len(els) == 256


def test_witness_inequality_fails_off_neat_elements():
    # frozen from an exhaustive run over Cs_4 base 2; confirmed by the pointwise oracle
    C = SetAlgebra(4, 2)
    x = 4253
    assert not tau4_oracle(C, points_of(C, x)) <= tau_oracle(C, points_of(C, x))
    res = check_witness_inequality(*WITNESSES["ca-3"], C, elements=[x])
    assert not res.holds and res.counterexample == {"x": x}


def test_trivial_inequalities():
    C = SetAlgebra(3, 2)
    assert check_witness_inequality(X, X, C).holds
    res = check_witness_inequality(Const("unit"), Const("zero"), C)
    assert not res.holds and res.counterexample == {}


def test_sampled_mode_above_bound():
    C = SetAlgebra(4, 2)
    res = check_witness_inequality(X, Cyl(0, X), C, samples=500)
    assert res.holds and res.mode == "sampled"


def test_term_errors():
    C = SetAlgebra(3, 2)
    with pytest.raises(UnboundVariable):
        ca_term_eval(Var("y"), C, {"x": 1})
    with pytest.raises(IndexError):
        ca_term_eval(Cyl(3, X), C, {"x": 1})


@given(st.integers(0, 255), st.integers(0, 255))
def test_meet_is_compositional(x, y):
    C = SetAlgebra(3, 2)
    t1, t2 = Cyl(0, X), Sub(0, 2, Var("y"))
    env = {"x": x, "y": y}
    assert ca_term_eval(Meet(t1, t2), C, env) == ca_term_eval(t1, C, env) & ca_term_eval(t2, C, env)


def test_swap_is_the_transposition_on_neat_elements():
    C = SetAlgebra(4, 2)
    for x in C.neat_elements(3)[:64]:
        x = int(x)
        got = points_of(C, ca_term_eval(Swap(3, 0, 1, X), C, {"x": x}))
        assert got == {s for s in C.points if (s[1], s[0], s[2], s[3]) in points_of(C, x)}


# ---- additivity ---------------------------------------------------------------------------

def test_additivity_of_cylindrifier_on_cm():
    ca = basic_matrices(complete_graph_ra(), 3)
    cm = cm_build(ca)
    assert check_complete_additivity(cm, operation(cm, ("c", 0)))


def test_additivity_of_substitution_on_cs3():
    C = SetAlgebra(3, 2)
    assert check_complete_additivity(C, operation(C, ("s", 0, 1)))


def test_additivity_detects_corruption():
    C = SetAlgebra(3, 2)
    op = operation(C, ("c", 0))
    assert not check_complete_additivity(C, lambda x: op(x) if int(x) != 3 else 0)


# ---- neat hat --------------------------------------------------------------------------------

def _fold_hat(cm, labels):
    # s_t{a} = matrices whose pullback along t is a, intersected over all labelled tuples
    keep = set(cm.atoms)
    for t, a in labels.items():
        keep &= {M for M in cm.atoms
                 if tuple(tuple(M[t[i]][t[j]] for j in range(len(t))) for i in range(len(t))) == a}
    return cm.elem(keep)


def _corner(cm):
    # a 3 x 3 label read in dimension 4: all matrices with that top-left corner
    def embed(a):
        return cm.elem([M for M in cm.atoms if tuple(row[:3] for row in M[:3]) == a])
    return embed


def test_neat_hat_single_hyperedge():
    ca = basic_matrices(complete_graph_ra(), 3)
    cm = cm_build(ca)
    a = ca.atoms[-1]
    assert neat_hat(cm, {(0, 1, 2): a}, 3) == cm.elem([a])


def test_neat_hat_inconsistent_labelling_is_zero():
    ca = basic_matrices(complete_graph_ra(), 3)
    cm = cm_build(ca)
    a = next(M for M in ca.atoms if M[0][1] == "d")
    b = next(M for M in ca.atoms if M[0][1] == "Id")
    assert neat_hat(cm, {(0, 1, 2): a, (0, 1, 0): b}, 3) == 0


def test_neat_hat_four_nodes_matches_fold():
    s = complete_graph_ra()
    ca = basic_matrices(s, 4)
    cm = cm_build(ca)
    m3 = brute_matrices(s, 3)
    labels = {(0, 1, 2): m3[-1], (1, 2, 3): m3[-1], (0, 2, 3): m3[-1]}
    assert neat_hat(cm, labels, 3, _corner(cm)) == _fold_hat(cm, labels)
    assert neat_hat(cm, labels, 3, _corner(cm)) != 0


@given(st.lists(st.tuples(st.permutations(range(4)), st.integers(0, 100)), min_size=1, max_size=5))
def test_neat_hat_antitone(entries):
    s = complete_graph_ra()
    ca = basic_matrices(s, 4)
    cm = cm_build(ca)
    m3 = brute_matrices(s, 3)
    labels = {}
    for perm, k in entries:
        labels[tuple(perm[:3])] = m3[k % len(m3)]
    items = list(labels.items())
    small = dict(items[: max(1, len(items) // 2)])
    big = neat_hat(cm, labels, 3, _corner(cm))
    assert big & ~neat_hat(cm, small, 3, _corner(cm)) == 0
    assert big == _fold_hat(cm, labels)


def test_neat_hat_node_out_of_range():
    cm = cm_build(basic_matrices(complete_graph_ra(), 3))
    with pytest.raises(ValueError):
        neat_hat(cm, {(0, 1, 5): cm.atoms[0]}, 3)


# ---- JSON -------------------------------------------------------------------------------------

@pytest.mark.parametrize("builder", [two_atom_ra, complete_graph_ra, lambda: monk_algebra(6)])
def test_ra_json_round_trip(builder):
    s = builder()
    back = structure_from_json(structure_to_json(s))
    assert set(back.consistent_triples()) == {tuple(map(str, t)) for t in s.consistent_triples()}
    assert validate_ra_atom_structure(back) == []


def test_ca_json_round_trip():
    ca = basic_matrices(complete_graph_ra(), 3)
    obj = structure_to_json(ca)
    back = structure_from_json(obj)
    assert len(back.atoms) == len(ca.atoms)
    assert structure_to_json(back)["cyl"].keys() == obj["cyl"].keys()


def test_rule_named_structure_from_json():
    s = structure_from_json({"kind": "ra", "triples": "monk", "params": {"size": 6}})
    assert len(s.atoms) == 7 and validate_ra_atom_structure(s) == []
