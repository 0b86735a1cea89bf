"""Blow-up-and-blur atom structures, their term algebra and the saturation builder."""
import csv
import io
import itertools
import json
import random
import warnings
from collections import deque, namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .core import RaAtomStructure, SizeGuardError, Verdict, cm_build, register_rule

ID = "Id"
ONE = "1'"
MAX_CHROMATIC_NODES = 14        # exact colouring bound per connected component
MAX_BLUR_ATOMS = 20000


# ---------------------------------------------------------------------------
# graphs and colourings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    nodes: tuple
    edges: frozenset = frozenset()

    def __post_init__(self):
        for e in self.edges:
            if len(e) != 2:
                raise ValueError(f"self-loop or malformed edge {set(e)}")
            if not e <= set(self.nodes):
                raise ValueError(f"edge {set(e)} leaves the node set")

    @classmethod
    def from_pairs(cls, nodes, pairs):
        return cls(tuple(nodes), frozenset(frozenset(p) for p in pairs))

    def adjacent(self, u, v):
        return frozenset((u, v)) in self.edges

    def adjacency(self, nodes=None):
        nodes = self.nodes if nodes is None else nodes
        pos = {v: i for i, v in enumerate(nodes)}
        adj = np.zeros((len(nodes), len(nodes)), dtype=bool)
        for e in self.edges:
            u, v = tuple(e)
            if u in pos and v in pos:
                adj[pos[u], pos[v]] = adj[pos[v], pos[u]] = True
        return adj

    def components(self):
        seen, out = set(), []
        nbrs = {v: set() for v in self.nodes}
        for e in self.edges:
            u, v = tuple(e)
            nbrs[u].add(v)
            nbrs[v].add(u)
        for v in self.nodes:
            if v in seen:
                continue
            comp, todo = [], [v]
            seen.add(v)
            while todo:
                x = todo.pop()
                comp.append(x)
                for y in nbrs[x]:
                    if y not in seen:
                        seen.add(y)
                        todo.append(y)
            out.append(tuple(sorted(comp, key=self.nodes.index)))
        return out


def clique_union(count, size):
    """Disjoint union of ``count`` complete graphs on ``size`` nodes."""
    nodes = tuple((c, v) for c in range(count) for v in range(size))
    pairs = [((c, u), (c, v)) for c in range(count) for u in range(size) for v in range(u + 1, size)]
    return Graph.from_pairs(nodes, pairs)


def _component_chi(G, comp, max_nodes):
    if len(comp) > max_nodes:
        raise SizeGuardError(f"component of {len(comp)} nodes exceeds exact bound {max_nodes}")
    adj = G.adjacency(comp)
    if not adj.any():
        return 1 if comp else 0
    k = 2
    while not _accel.colourable(adj, k):
        k += 1
    return k


def chromatic_number(G, max_nodes=MAX_CHROMATIC_NODES):
    """Exact chromatic number, solved per connected component."""
    return max((_component_chi(G, c, max_nodes) for c in G.components()), default=0)


def colouring(G, k=None, max_nodes=MAX_CHROMATIC_NODES):
    """An explicit proper colouring with k (default chi) colours as a node -> colour dict."""
    if k is None:
        k = chromatic_number(G, max_nodes)
    out = {}
    for comp in G.components():
        adj = G.adjacency(comp)
        col = [-1] * len(comp)

        def go(v, top):
            if v == len(comp):
                return True
            for c in range(min(k, top + 2)):
                if all(col[u] != c for u in range(v) if adj[v, u]):
                    col[v] = c
                    if go(v + 1, max(top, c)):
                        return True
            col[v] = -1
            return False

        if not go(0, -1):
            raise ValueError(f"graph is not {k}-colourable")
        out.update(zip(comp, col))
    return out


# ---------------------------------------------------------------------------
# the graph-based structure alpha(G)
# ---------------------------------------------------------------------------

def alpha_of_graph(G, n):
    """Atoms {1'} and G x n, all self-converse, with the three-bullet triple rule."""
    atoms = [ONE] + [(v, c) for c in range(n) for v in G.nodes]

    def consistent(a, b, c):
        t = (a, b, c)
        if ONE in t:
            rest = [x for x in t]
            rest.remove(ONE)
            return rest[0] == rest[1]
        if len({a[1], b[1], c[1]}) > 1:
            return True
        vs = (a[0], b[0], c[0])
        return any(G.adjacent(u, v) for u, v in itertools.combinations(vs, 2) if u != v)

    return RaAtomStructure(atoms, [ONE], {a: a for a in atoms}, consistent=consistent,
                           name=f"alpha({len(G.nodes)} nodes, n={n})")


def monochromatic_partition_check(G, n, col=None):
    """Partition {1'} and (C_j, k) of Cm alpha(G); checks sum = 1 and (P;P).P = 0 per block."""
    s = alpha_of_graph(G, n)
    cm = cm_build(s)
    col = colouring(G) if col is None else col
    N = max(col.values(), default=-1) + 1
    for e in G.edges:
        u, v = tuple(e)
        if col[u] == col[v]:
            raise ValueError(f"not a proper colouring: edge {u}-{v}")
    blocks = {ONE: cm.elem([ONE])}
    for j in range(N):
        C = [v for v in G.nodes if col[v] == j]
        for k in range(n):
            blocks[(j, k)] = cm.elem([(v, k) for v in C])
    union, disjoint = 0, True
    for x in blocks.values():
        disjoint &= (union & x) == 0
        union |= x
    mono = {}
    for key, P in blocks.items():
        if key == ONE or P == 0:
            continue
        mono[key] = cm.meet(cm.compose(P, P), P) == 0
    return {
        "colours": N,
        "blocks": len(blocks),
        "sums_to_unit": union == cm.top,
        "disjoint": disjoint,
        "monochromatic_zero": mono,
        "obstruction": union == cm.top and disjoint and all(mono.values()),
    }


# ---------------------------------------------------------------------------
# the finite Monk-style algebra M and the blurred splitting
# ---------------------------------------------------------------------------

def evenly_distributed(i, j, k, permissive=True):
    """Some ordering of i, j, k is an arithmetic progression.

    With ``permissive`` the constant progression p = q = r counts; otherwise
    the three values must be distinct.
    """
    p, q, r = sorted((i, j, k))
    if p == r:
        return permissive
    return r - q == q - p and p < q


def _e_grid(A, B, C, permissive):
    s = np.sort(np.stack(np.broadcast_arrays(A, B, C)), axis=0)
    p, q, r = s[0], s[1], s[2]
    ap = (r - q) == (q - p)
    return ap & (p < q) | ((p == r) & permissive)


def monk_algebra(I, allow_small=False):
    """Atoms I and Id; P;P = (I - {P}) + Id and P;Q = I (the diversity top) for P != Q."""
    I = tuple(range(I)) if isinstance(I, int) else tuple(I)
    if len(I) < 6:
        msg = f"|I| = {len(I)} is below the required 6"
        if not allow_small:
            raise ValueError(msg)
        warnings.warn(msg)
    atoms = (ID,) + I

    def consistent(a, b, c):
        t = (a, b, c)
        if ID in t:
            rest = list(t)
            rest.remove(ID)
            return rest[0] == rest[1]
        return not (a == b == c)

    s = RaAtomStructure(atoms, [ID], {a: a for a in atoms}, consistent=consistent, name=f"M({len(I)})")
    s.I = I
    return s


def monk_compose(M, P, Q):
    """Atom-level composition P;Q in a finite RA atom structure."""
    return frozenset(c for c in M.atoms if M.is_consistent(P, Q, c))


BlurAtom = namedtuple("BlurAtom", "i P W")


def blur_members(W):
    """Underlying subset of I for a blur: a tuple of points, or (points, copy) in F(l, mu)."""
    return W[0] if W and isinstance(W[0], tuple) else W


def blur_str(W):
    X = blur_members(W)
    s = "{" + ",".join(map(str, X)) + "}"
    return s if X is W else f"{s}#{W[1]}"


def atom_str(a):
    return ID if a == ID else f"a{a.i}^({a.P},{blur_str(a.W)})"


class BlurUniverse:
    """H = {a_i^(P,W) : i <= i_max, P in W in J} with the two partitions H^P and E^W."""

    def __init__(self, I, J=None, i_max=30):
        self.I = tuple(range(I)) if isinstance(I, int) else tuple(I)
        self.J = tuple(J) if J is not None else tuple(itertools.combinations(self.I, 2))
        self.i_max = i_max
        self.bit = {P: 1 << k for k, P in enumerate(self.I)}
        self.mask = {W: sum(self.bit[P] for P in blur_members(W)) for W in self.J}
        self.pw = [(P, W) for W in self.J for P in blur_members(W)]

    def __repr__(self):
        return f"BlurUniverse(|I|={len(self.I)}, |J|={len(self.J)}, i_max={self.i_max})"

    @property
    def size(self):
        return (self.i_max + 1) * len(self.pw)

    def atoms(self):
        return [BlurAtom(i, P, W) for i in range(self.i_max + 1) for P, W in self.pw]

    def H_P(self, P):
        return [a for a in self.atoms() if a.P == P]

    def E_W(self, W):
        return [a for a in self.atoms() if a.W == W]

    def partition_report(self):
        H = set(self.atoms())
        byP = [set(self.H_P(P)) for P in self.I]
        byW = [set(self.E_W(W)) for W in self.J]
        cells_ok = all(
            (P in blur_members(W)) == bool(hp & ew) and
            (not hp & ew or {a.i for a in hp & ew} == set(range(self.i_max + 1)) and len(hp & ew) == self.i_max + 1)
            for P, hp in zip(self.I, byP) for W, ew in zip(self.J, byW))
        return {
            "H_P_cover": set().union(*byP) == H and sum(map(len, byP)) == len(H),
            "E_W_cover": set().union(*byW) == H and sum(map(len, byW)) == len(H),
            "cells_are_rows": cells_ok,
        }

    def to_json(self):
        return {"I": list(self.I), "J": [json.loads(json.dumps(W)) for W in self.J], "i_max": self.i_max}

    @classmethod
    def from_json(cls, obj):
        def tup(x):
            return tuple(tup(y) for y in x) if isinstance(x, list) else x
        return cls(tuple(obj["I"]), [tup(W) for W in obj["J"]], obj["i_max"])


def _blur_ra(U, rule_ii, permissive, name):
    """RA atom structure over Id + H with rule (i) on blurs and ``rule_ii`` on rows and labels."""
    atoms = (ID,) + tuple(U.atoms())
    if len(atoms) > MAX_BLUR_ATOMS:
        raise SizeGuardError(f"{len(atoms)} atoms exceeds the blur bound {MAX_BLUR_ATOMS}")
    Ipos = {P: k for k, P in enumerate(U.I)}
    npw = len(U.pw)
    if npw > 400:
        raise SizeGuardError(f"{npw} (label, blur) cells exceeds the table bound 400")
    lab = np.array([Ipos[P] for P, _ in U.pw], dtype=np.int64)
    msk = np.array([U.mask[W] for _, W in U.pw], dtype=np.int64)
    cell1 = (msk[:, None, None] & msk[None, :, None] & msk[None, None, :]) == 0
    cell2 = np.asarray(rule_ii(lab[:, None, None], lab[None, :, None], lab[None, None, :]), dtype=bool)
    nr = U.i_max + 1
    r = np.arange(nr)
    rowe = _e_grid(r[:, None, None], r[None, :, None], r[None, None, :], permissive).ravel()
    code = (2 * cell1 + cell2).astype(np.uint8).ravel()
    # atom k > 0 sits on row (k-1) // npw in cell (k-1) % npw; Id maps to cell 0 row 0
    k = np.arange(len(atoms)) - 1
    cell_of = np.where(k < 0, 0, k % npw)
    row_of = np.where(k < 0, 0, k // npw)

    def grid(A, B, C):
        A, B, C = np.asarray(A), np.asarray(B), np.asarray(C)
        ci = (cell_of[A] * npw + cell_of[B]) * npw + cell_of[C]
        ri = (row_of[A] * nr + row_of[B]) * nr + row_of[C]
        cd = code[ci]
        val = (cd >= 2) | (rowe[ri] & (cd & 1).astype(bool))
        ia, ib, ic = A == 0, B == 0, C == 0
        if not (ia.any() or ib.any() or ic.any()):
            return val
        anyid = ia | ib | ic
        idrule = np.where(ic, A == B, np.where(ia, B == C, A == C))
        return np.where(anyid, idrule, val)

    def scalar(a, b, c):
        t = (a, b, c)
        if ID in t:
            rest = list(t)
            rest.remove(ID)
            return rest[0] == rest[1]
        if U.mask[a.W] & U.mask[b.W] & U.mask[c.W] == 0:
            return True
        return evenly_distributed(a.i, b.i, c.i, permissive) and bool(rule_ii(Ipos[a.P], Ipos[b.P], Ipos[c.P]))

    s = RaAtomStructure(atoms, [ID], {a: a for a in atoms}, grid=grid, name=name)
    s.factored = {"code": code, "rowe": rowe, "cell_of": cell_of.astype(np.int64),
                  "row_of": row_of.astype(np.int64), "npw": npw, "nr": nr,
                  "conv_cell": np.arange(npw)}
    s.rule = scalar
    s.universe = U
    s.permissive = permissive
    return s


def blur_structure(I=6, J=None, i_max=30, M=None, permissive=True):
    """Truncated blurred splitting of M: rule (i) S.Z.W = 0, or rule (ii) e(i,j,k) and P in Q;R."""
    if i_max < 9:
        raise ValueError("i_max must be at least 9 to leave room for e-triples")
    U = I if isinstance(I, BlurUniverse) else BlurUniverse(I, J, i_max)
    M = monk_algebra(U.I) if M is None else M
    k = len(U.I)
    table = np.zeros((k, k, k), dtype=bool)
    for a, b, c in itertools.product(range(k), repeat=3):
        # P <= Q;R  <=>  (Q, R, P) is consistent in M
        table[a, b, c] = M.is_consistent(U.I[b], U.I[c], U.I[a])
    s = _blur_ra(U, lambda p, q, r: table[p, q, r], permissive, f"blur(|I|={k}, i_max={U.i_max})")
    s.monk = M
    return s


def family_F(l, mu, I, i_max=30, permissive=True):
    """Truncated F(l, mu): blurs (X, n) with |X| = l, n < mu; rule (ii) needs |{P,Q,R}| != 1."""
    I = tuple(range(I)) if isinstance(I, int) else tuple(I)
    if l < 2 or mu < 1:
        raise ValueError("need l >= 2 and mu >= 1")
    if len(I) < 3 * l:
        raise ValueError(f"|I| = {len(I)} is below 3l = {3 * l}")
    J = [(X, m) for X in itertools.combinations(I, l) for m in range(mu)]
    U = BlurUniverse(I, J, i_max)
    return _blur_ra(U, lambda p, q, r: np.logical_not((p == q) & (q == r)), permissive,
                    f"F({l},{mu}; |I|={len(I)}, i_max={i_max})")


def embed_monk_in_cm(s, margin=3):
    """Checks H^P;H^Q = U{H^Z : Z in P;Q} (and Id when Id in P;Q) on rows <= i_max - margin."""
    U, M = s.universe, s.monk
    cm = cm_build(s)
    limit = U.i_max - margin
    inner = cm.elem([a for a in s.atoms[1:] if a.i <= limit] + [ID])
    HP = {P: cm.elem(U.H_P(P)) for P in U.I}
    idm = cm.elem([ID])
    pairs, failures = {}, []
    for P, Q in itertools.product(U.I, repeat=2):
        got = cm.compose(HP[P], HP[Q]) & inner
        want = 0
        for Z in monk_compose(M, P, Q):
            want |= idm if Z == ID else HP[Z]
        want &= inner
        ok = got == want
        pairs[P, Q] = ok
        if not ok:
            diff = got ^ want
            failures.append((P, Q, [atom_str(a) for a in cm.atoms_of(diff)[:3]]))
    union = 0
    disjoint = True
    for x in HP.values():
        disjoint &= (union & x) == 0
        union |= x
    return {
        "margin": margin,
        "rows_checked": limit + 1,
        "boundary_atoms_excluded": sum(1 for a in s.atoms[1:] if a.i > limit),
        "pairs": len(pairs),
        "pairs_ok": sum(pairs.values()),
        "failures": failures,
        "disjoint": disjoint,
        "union_is_diversity": union == cm.complement(idm),
        "id_right_unit": all(cm.compose(x, idm) == x for x in HP.values()),
        "ok": not failures,
    }


def n_complex_blur(n, M=None, J=None, I=6):
    """(**): for all a_1..a_n, b_1..b_n in I some W in J meets every a_t;b_t."""
    M = monk_algebra(I) if M is None else M
    Iset = tuple(a for a in M.atoms if a not in M.identity)
    J = tuple(itertools.combinations(Iset, 2)) if J is None else tuple(J)
    comps = {frozenset(monk_compose(M, a, b)) & frozenset(Iset) for a in Iset for b in Iset}
    for choice in itertools.combinations_with_replacement(sorted(comps, key=sorted), n):
        common = frozenset(Iset).intersection(*choice)
        if not any(common & frozenset(blur_members(W)) for W in J):
            return Verdict(False, [sorted(map(sorted, choice))])
    return Verdict(True)


# ---------------------------------------------------------------------------
# term algebra: blockwise finite or cofinite sets
# ---------------------------------------------------------------------------

class ClosureError(ValueError):
    def __init__(self, msg, block=None, witness=None):
        super().__init__(msg)
        self.block = block
        self.witness = witness


@dataclass(frozen=True)
class Block:
    """Part of a set inside E^W: ``cof`` marks the stored rows as the finite complement."""
    cof: bool
    part: frozenset = frozenset()     # pairs (i, P)


class FinCofSet:
    """Element of the term algebra over the untruncated rows: finite or cofinite in every E^W."""

    __slots__ = ("U", "blocks", "has_id")

    def __init__(self, U, blocks=None, has_id=False):
        self.U = U
        clean = {}
        for W, b in (blocks or {}).items():
            if W not in U.mask:
                raise ValueError(f"unknown blur {W!r}")
            members = set(blur_members(W))
            if any(P not in members or i < 0 for i, P in b.part):
                raise ValueError(f"row outside E^{W!r}")
            if b.cof or b.part:
                clean[W] = Block(b.cof, frozenset(b.part))
        self.blocks = clean
        self.has_id = bool(has_id)

    # -- constructors --
    @classmethod
    def empty(cls, U):
        return cls(U)

    @classmethod
    def atoms(cls, U, atoms):
        blocks, has_id = {}, False
        for a in atoms:
            if a == ID:
                has_id = True
            else:
                blocks.setdefault(a.W, set()).add((a.i, a.P))
        return cls(U, {W: Block(False, frozenset(p)) for W, p in blocks.items()}, has_id)

    @classmethod
    def block(cls, U, W):
        return cls(U, {W: Block(True)})

    @classmethod
    def top(cls, U):
        return cls(U, {W: Block(True) for W in U.J}, True)

    @classmethod
    def from_predicate(cls, U, pred, horizon=64, has_id=False):
        """Build from a membership predicate on atoms; rejects blocks not eventually constant."""
        blocks = {}
        half = horizon // 2
        for W in U.J:
            rows = {(i, P): bool(pred(BlurAtom(i, P, W))) for i in range(horizon) for P in blur_members(W)}
            tail = {v for (i, _), v in rows.items() if i >= half}
            if len(tail) > 1:
                raise ValueError(f"block {blur_str(W)} is neither finite nor cofinite up to row {horizon}")
            if tail == {True}:
                blocks[W] = Block(True, frozenset(k for k, v in rows.items() if not v))
            else:
                blocks[W] = Block(False, frozenset(k for k, v in rows.items() if v))
        return cls(U, blocks, has_id)

    # -- queries --
    def __contains__(self, a):
        if a == ID:
            return self.has_id
        b = self.blocks.get(a.W)
        if b is None:
            return False
        return ((a.i, a.P) in b.part) != b.cof

    def infinite_in(self, W):
        b = self.blocks.get(W)
        return b is not None and b.cof

    def nonempty_in(self, W):
        return W in self.blocks

    def is_empty(self):
        return not self.blocks and not self.has_id

    def max_row(self):
        return max((i for b in self.blocks.values() for i, _ in b.part), default=-1)

    def key(self):
        return (self.has_id, tuple(sorted((self.U.J.index(W), b.cof, tuple(sorted(b.part, key=repr)))
                                          for W, b in self.blocks.items())))

    def __eq__(self, other):
        return isinstance(other, FinCofSet) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        parts = [ID] if self.has_id else []
        for W, b in self.blocks.items():
            rows = ",".join(f"{i}{P}" for i, P in sorted(b.part, key=repr))
            parts.append(f"{blur_str(W)}:{'cof-' if b.cof else ''}{{{rows}}}")
        return "FinCofSet(" + " ".join(parts) + ")"

    def to_json(self):
        return {"id": self.has_id,
                "blocks": [[json.loads(json.dumps(W)), b.cof, sorted([i, P] for i, P in b.part)]
                           for W, b in self.blocks.items()]}

    # -- Boolean operations --
    def _merge(self, other, op):
        out = {}
        for W in self.U.J:
            a = self.blocks.get(W, Block(False))
            b = other.blocks.get(W, Block(False))
            cof = op(a.cof, b.cof)
            rows = {r for r in a.part | b.part
                    if op(((r in a.part) != a.cof), ((r in b.part) != b.cof)) != cof}
            out[W] = Block(cof, frozenset(rows))
        return FinCofSet(self.U, out, op(self.has_id, other.has_id))

    def __or__(self, other):
        return self._merge(other, lambda x, y: x or y)

    def __and__(self, other):
        return self._merge(other, lambda x, y: x and y)

    def complement(self):
        out = {W: Block(not self.blocks.get(W, Block(False)).cof, self.blocks.get(W, Block(False)).part)
               for W in self.U.J}
        return FinCofSet(self.U, out, not self.has_id)

    def __invert__(self):
        return self.complement()

    def __sub__(self, other):
        return self & ~other


def _rows_of(b, W, limit):
    """Concrete (i, P) pairs of a block, cofinite blocks cut at ``limit``."""
    if not b.cof:
        return b.part
    return [(i, P) for i in range(limit + 1) for P in blur_members(W) if (i, P) not in b.part]


def _e_partners(i, k, permissive):
    """All j with e(i, j, k)."""
    out = {2 * k - i, 2 * i - k}
    if (i + k) % 2 == 0:
        out.add((i + k) // 2)
    if i == k and not permissive:
        out.discard(i)
    return [j for j in out if j >= 0 and evenly_distributed(i, j, k, permissive)]


def _comp_member(s, X, Y, c, m):
    """Whether atom c lies in X;Y, searching rows up to a bound derived from c and m."""
    U = s.universe
    if c == ID:
        return not (X & Y).is_empty()
    if X.has_id and c in Y or Y.has_id and c in X:
        return True
    limit = 2 * (c.i + m) + 6
    for S, bx in X.blocks.items():
        for Z, by in Y.blocks.items():
            if U.mask[S] & U.mask[Z] & U.mask[c.W] == 0:
                return True
            for i, P in _rows_of(bx, S, limit):
                a = BlurAtom(i, P, S)
                for j in _e_partners(i, c.i, s.permissive):
                    for Q in blur_members(Z):
                        if ((j, Q) in by.part) != by.cof and s.rule(a, BlurAtom(j, Q, Z), c):
                            return True
    return False


def fincof_compose(s, X, Y, probes=3):
    """X;Y computed blockwise with a closure check beyond the analysed horizon."""
    U = s.universe
    m = max(X.max_row(), Y.max_row())
    T = 2 * m + 3
    out = {}
    for Wr in U.J:
        full = any(U.mask[S] & U.mask[Z] & U.mask[Wr] == 0 for S in X.blocks for Z in Y.blocks)
        if full:
            out[Wr] = Block(True)
            continue
        members = {(k, R) for k in range(T + 1) for R in blur_members(Wr)
                   if _comp_member(s, X, Y, BlurAtom(k, R, Wr), m)}
        tail = {(k, R): _comp_member(s, X, Y, BlurAtom(k, R, Wr), m)
                for k in range(T + 1, T + 1 + probes) for R in blur_members(Wr)}
        if len(set(tail.values())) > 1:
            bad = next(k for k, v in tail.items() if v != tail[T + 1, blur_members(Wr)[0]])
            raise ClosureError(f"block {blur_str(Wr)} is not eventually constant", Wr, bad)
        cof = next(iter(tail.values()))
        rows = {(k, R) for k in range(T + 1) for R in blur_members(Wr)}
        out[Wr] = Block(True, frozenset(rows - members)) if cof else Block(False, frozenset(members))
    res = FinCofSet(U, out, not (X & Y).is_empty())
    if X.has_id:
        res = res | Y
    if Y.has_id:
        res = res | X
    return res


def fincof_ops(s, X, Y):
    """Union, intersection, complements and composition of two term-algebra elements."""
    return {"union": X | Y, "meet": X & Y, "not_x": ~X, "not_y": ~Y, "compose": fincof_compose(s, X, Y)}


def fincof_sample(s, count, seed=0, rows=3):
    """Deterministic sample of term-algebra elements: atoms, blocks and Boolean combinations."""
    rng = random.Random(seed)
    U = s.universe
    atoms = [a for a in s.atoms[1:] if a.i < rows]
    base = [FinCofSet.atoms(U, [ID])]
    base += [FinCofSet.atoms(U, [a]) for a in rng.sample(atoms, min(len(atoms), max(1, count // 3)))]
    base += [FinCofSet.block(U, W) for W in rng.sample(list(U.J), min(len(U.J), max(1, count // 4)))]
    out = list(dict.fromkeys(base))
    while len(out) < count:
        x, y = rng.choice(out), rng.choice(out)
        op = rng.randrange(3)
        z = x | y if op == 0 else (x & ~y if op == 1 else ~x)
        if z not in out:
            out.append(z)
    return out[:count]


# ---------------------------------------------------------------------------
# ultrafilter colours
# ---------------------------------------------------------------------------

class Uf(namedtuple("Uf", "kind ref")):
    """U^a (kind 'atom', ref an atom or Id) or U^W (kind 'blur', ref a blur)."""

    __slots__ = ()

    @property
    def principal(self):
        return self.kind == "atom"

    def __str__(self):
        return f"U^{atom_str(self.ref)}" if self.principal else f"U^{blur_str(self.ref)}"

    def contains(self, X):
        return self.ref in X if self.principal else X.infinite_in(self.ref)

    def to_json(self):
        if self.ref == ID:
            return ["atom", ID]
        if self.principal:
            return ["atom", [self.ref.i, self.ref.P, json.loads(json.dumps(self.ref.W))]]
        return ["blur", json.loads(json.dumps(self.ref))]

    @classmethod
    def from_json(cls, obj):
        def tup(x):
            return tuple(tup(y) for y in x) if isinstance(x, list) else x
        kind, ref = obj
        if kind == "atom" and ref != ID:
            ref = BlurAtom(ref[0], ref[1], tup(ref[2]))
        elif kind == "blur":
            ref = tup(ref)
        return cls(kind, ref)


U_ID = Uf("atom", ID)


def uf_triple_consistent(s, F, G, K):
    """Consistency of ultrafilter colours, decided by rules (i)-(iii) and the atom rule."""
    t = (F, G, K)
    if U_ID in t:
        rest = list(t)
        rest.remove(U_ID)
        return rest[0] == rest[1]
    free = [x for x in t if not x.principal]
    if len(free) >= 2:
        return True                                     # rule (ii)
    if not free:
        return s.is_consistent(F.ref, G.ref, K.ref)
    # one blur: (U^a, U^b, U^W) holds iff a;b meets E^W infinitely, i.e. rule (i) on blurs
    a, b = [x.ref for x in t if x.principal]
    U = s.universe
    return U.mask[a.W] & U.mask[b.W] & U.mask[free[0].ref] == 0


def uf_palette(s, rows=1):
    """Finite colour palette: U^Id, U^a for atoms on the first ``rows`` rows, every U^W."""
    U = s.universe
    return [U_ID] + [Uf("atom", a) for a in s.atoms[1:] if a.i < rows] + [Uf("blur", W) for W in U.J]


def uf_table(s, palette):
    """Dense consistency table over palette indices, filled through uf_triple_consistent."""
    C = len(palette)
    T = np.zeros((C, C, C), dtype=bool)
    for a, b, c in itertools.combinations_with_replacement(range(C), 3):
        v = uf_triple_consistent(s, palette[a], palette[b], palette[c])
        for p in set(itertools.permutations((a, b, c))):
            T[p] = v
    return T


# ---------------------------------------------------------------------------
# saturation: step-by-step complete consistent coloured graph
# ---------------------------------------------------------------------------

class SaturationError(RuntimeError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


@dataclass
class Saturation:
    structure: object
    palette: list
    L: np.ndarray                       # colour indices, n x n
    steps: int = 0
    pair_queue: deque = field(default_factory=deque)
    demands: deque = field(default_factory=deque)
    discharged: list = field(default_factory=list)
    serviced_pairs: set = field(default_factory=set)
    current_pair: tuple = None
    audits: list = field(default_factory=list)
    seed: int = 0

    @property
    def n(self):
        return self.L.shape[0]

    def label(self, u, v):
        return self.palette[self.L[u, v]]

    def report(self):
        return {
            "nodes": self.n,
            "steps": self.steps,
            "demands_discharged": len(self.discharged),
            "demands_pending": len(self.demands),
            "pairs_serviced": len(self.serviced_pairs),
            "pairs_waiting": len(self.pair_queue),
            "laws_ok_every_step": all(a["ok"] for a in self.audits),
        }

    def to_json(self):
        return {
            "palette": [c.to_json() for c in self.palette],
            "L": self.L.tolist(),
            "steps": self.steps,
            "pair_queue": [list(p) for p in self.pair_queue],
            "demands": [list(d) for d in self.demands],
            "discharged": [list(d) for d in self.discharged],
            "serviced_pairs": sorted(list(p) for p in self.serviced_pairs),
            "current_pair": None if self.current_pair is None else list(self.current_pair),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, s, obj):
        return cls(
            structure=s,
            palette=[Uf.from_json(c) for c in obj["palette"]],
            L=np.array(obj["L"], dtype=np.int32).reshape(len(obj["L"]), -1),
            steps=obj["steps"],
            pair_queue=deque(tuple(p) for p in obj["pair_queue"]),
            demands=deque(tuple(d) for d in obj["demands"]),
            discharged=[tuple(d) for d in obj["discharged"]],
            serviced_pairs={tuple(p) for p in obj["serviced_pairs"]},
            current_pair=None if obj["current_pair"] is None else tuple(obj["current_pair"]),
            seed=obj.get("seed", 0),
        )


def graph_laws(L, T, id_index=0, new=None):
    """The three consistent-coloured-graph laws; with ``new`` only triangles through that node."""
    n = L.shape[0]
    diag = np.diag(L) == id_index
    off = L != id_index
    np.fill_diagonal(off, True)
    law1 = bool(diag.all() and off.all())
    law2 = bool((L == L.T).all())
    if new is None:
        law3 = all(T[L[z][:, None], L[z][None, :], L].all() for z in range(n))
    else:
        row = L[new]
        law3 = bool(T[row[:, None], row[None, :], L].all())
    return {"identity": law1, "symmetric": law2, "triangles": law3, "ok": law1 and law2 and law3}


def _expand_pair(sat, T, x, y):
    L = sat.L
    lab = L[x, y]
    ok = T[lab].copy()
    ok[L[:, x], L[:, y]] = False                        # already witnessed
    ok[0, :] = False                                    # F = U^Id is witnessed by x itself
    ok[:, 0] = False
    return [(x, y, int(F), int(K)) for F, K in np.argwhere(ok)]


def saturate_graph(s, budget=500, palette_rows=1, seed=0, resume=None, checkpoint=None,
                   checkpoint_every=100, audit=True):
    """Grow a consistent coloured graph over Uf by fair FIFO demand servicing.

    ``resume`` is a Saturation or a checkpoint path; ``checkpoint`` is a path
    rewritten every ``checkpoint_every`` steps and at the end.
    """
    if isinstance(resume, str):
        with open(resume) as fh:
            resume = Saturation.from_json(s, json.load(fh))
    if resume is None:
        palette = uf_palette(s, palette_rows)
        sat = Saturation(s, palette, np.zeros((1, 1), dtype=np.int32), seed=seed)
        sat.pair_queue.append((0, 0))
    else:
        sat = resume
    T = uf_table(s, sat.palette)
    blur_ids = np.array([k for k, c in enumerate(sat.palette) if not c.principal])
    target = sat.steps + budget
    while sat.steps < target:
        if not sat.demands:
            if sat.current_pair is not None:
                sat.serviced_pairs.add(sat.current_pair)
                sat.current_pair = None
            if not sat.pair_queue:
                break
            x, y = sat.pair_queue.popleft()
            sat.current_pair = (x, y)
            sat.demands.extend(_expand_pair(sat, T, x, y))
            continue
        x, y, F, K = sat.demands.popleft()
        L = sat.L
        if np.any((L[:, x] == F) & (L[:, y] == K)):
            sat.discharged.append((x, y, F, K))
            continue
        n = sat.n
        row = np.zeros(n + 1, dtype=np.int32)
        row[x], row[y] = F, K
        others = np.array([p for p in range(n) if p not in (x, y)], dtype=np.int64)
        if len(others):
            ok = T[blur_ids[:, None], F, L[x, others][None, :]] & T[blur_ids[:, None], K, L[y, others][None, :]]
            if not ok.any(axis=0).all():
                p = int(others[np.flatnonzero(~ok.any(axis=0))[0]])
                raise SaturationError("no admissible blur", {
                    "x": x, "y": y, "F": str(sat.palette[F]), "K": str(sat.palette[K]), "p": p})
            # seeded per step so a resumed run replays the uninterrupted one exactly
            rng = np.random.default_rng([sat.seed, sat.steps])
            pri = rng.random(ok.shape) + ok
            row[others] = blur_ids[pri.argmax(axis=0)]
        row[n] = 0
        grown = np.zeros((n + 1, n + 1), dtype=np.int32)
        grown[:n, :n] = L
        grown[n, :] = row
        grown[:, n] = row
        sat.L = grown
        sat.steps += 1
        sat.discharged.append((x, y, F, K))
        for p in range(n + 1):
            sat.pair_queue.append((p, n))
        if audit:
            rep = graph_laws(sat.L, T, new=n)
            rep["step"] = sat.steps
            sat.audits.append(rep)
            if not rep["ok"]:
                raise SaturationError("coloured-graph law broken", rep)
        if checkpoint and sat.steps % checkpoint_every == 0:
            _write_checkpoint(sat, checkpoint)
    if checkpoint:
        _write_checkpoint(sat, checkpoint)
    return sat


def _write_checkpoint(sat, path):
    with open(path, "w") as fh:
        json.dump(sat.to_json(), fh)


def saturation_to_dot(sat, name="saturation"):
    lines = [f"graph {name} {{"]
    for u in range(sat.n):
        lines.append(f"  {u};")
    for u in range(sat.n):
        for v in range(u + 1, sat.n):
            lines.append(f'  {u} -- {v} [label="{sat.label(u, v)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def rep_map_check(sat, sample, backward=True, backward_cap=20):
    """rep(X) = {(u,v) : X in l(u,v)} checked on a finite sample of term-algebra elements."""
    s, pal, L = sat.structure, sat.palette, sat.L
    n = sat.n
    member = np.array([[c.contains(X) for c in pal] for X in sample], dtype=bool)
    rep = [member[k][L] for k in range(len(sample))]
    failures = []

    def fail(law, *w):
        failures.append((law,) + tuple(map(str, w)))

    for k, X in enumerate(sample):
        if not (rep[k] == rep[k].T).all():
            fail("converse", X)
        rep_not = np.array([c.contains(~X) for c in pal], dtype=bool)[L]
        if not (rep_not == ~rep[k]).all():
            fail("complement", X)
    for (a, X), (b, Y) in itertools.combinations(enumerate(sample), 2):
        if not ((rep[a] | rep[b]) == np.array([c.contains(X | Y) for c in pal])[L]).all():
            fail("union", X, Y)
        if not ((rep[a] & rep[b]) == np.array([c.contains(X & Y) for c in pal])[L]).all():
            fail("meet", X, Y)
    Id = FinCofSet.atoms(s.universe, [ID])
    rep_id = np.array([c.contains(Id) for c in pal])[L]
    diag_ok = bool((rep_id == np.eye(n, dtype=bool)).all())
    # forward inclusion reduces to the distinct labelled triangles (l(u,v), l(v,w), l(u,w))
    tri = set()
    for v in range(n):
        codes = np.unique((L[:, v][:, None].astype(np.int64) * len(pal) + L[v][None, :]) * len(pal) + L)
        tri.update(codes.tolist())
    tri = np.array(sorted(tri), dtype=np.int64)
    tF, tG, tK = tri // (len(pal) ** 2), (tri // len(pal)) % len(pal), tri % len(pal)
    forward_pairs = 0
    comps = {}
    for (a, X), (b, Y) in itertools.product(enumerate(sample), repeat=2):
        Z = fincof_compose(s, X, Y)
        comps[a, b] = Z
        zm = np.array([c.contains(Z) for c in pal])
        bad = member[a][tF] & member[b][tG] & ~zm[tK]
        forward_pairs += 1
        if bad.any():
            t = int(np.flatnonzero(bad)[0])
            fail("forward", X, Y, pal[tF[t]], pal[tG[t]], pal[tK[t]])
    back = {"checked": 0, "holds": 0, "missing": []}
    if backward:
        # only pairs whose demands were all discharged are expected to be complete
        pairs = [p for p in sorted(sat.serviced_pairs)][:backward_cap]
        for u, v in pairs:
            for (a, X), (b, Y) in itertools.product(enumerate(sample), repeat=2):
                Z = comps[a, b]
                if not pal[L[u, v]].contains(Z):
                    continue
                back["checked"] += 1
                if np.any(rep[a][u] & rep[b][:, v]):
                    back["holds"] += 1
                elif len(back["missing"]) < 10:
                    back["missing"].append((u, v, str(X), str(Y)))
    return {
        "sample": len(sample),
        "nodes": n,
        "failures": failures,
        "boolean_ok": not any(f[0] in ("union", "meet", "complement") for f in failures),
        "converse_ok": not any(f[0] == "converse" for f in failures),
        "rep_id_diagonal": diag_ok,
        "forward_ok": not any(f[0] == "forward" for f in failures),
        "forward_pairs": forward_pairs,
        "triangles": len(tri),
        "backward": back,
        "ok": not failures and diag_ok,
    }


# ---------------------------------------------------------------------------
# Monk sequence
# ---------------------------------------------------------------------------

def monk_sequence_experiment(n=3, i_range=range(5), count=2):
    """Rows (i, chi, blocks, obstruction) for G_i = count copies of K_{n(n-1)/2 + i}."""
    rows = []
    for i in i_range:
        G = clique_union(count, n * (n - 1) // 2 + i)
        chi = chromatic_number(G)
        rep = monochromatic_partition_check(G, n)
        rows.append({"i": i, "chi": chi, "blocks": rep["blocks"], "obstruction": rep["obstruction"]})
    return rows


def monk_sequence_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["i", "chi", "blocks", "obstruction"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


# rule-defined structures reachable from JSON
@register_rule("monk")
def _monk_rule(size=6):
    return monk_algebra(size)


@register_rule("blur")
def _blur_rule(size=6, i_max=30, permissive=True):
    return blur_structure(size, i_max=i_max, permissive=permissive)


@register_rule("family_F")
def _family_rule(l=2, mu=1, size=6, i_max=30, permissive=True):
    return family_F(l, mu, size, i_max, permissive)
