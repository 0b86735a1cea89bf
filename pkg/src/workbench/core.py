"""Finite relation and cylindric atom structures, complex algebras and term evaluation."""
import itertools
import random
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from . import _accel

SAMPLE_BOUND = 2 ** 12          # exhaustive below, sampled above
DENSE_LIMIT = 256               # largest atom count with a materialized triple table
MAX_CM_ATOMS = 4096             # refuse complex algebras above this many atoms

Violation = namedtuple("Violation", "law witness")


class Verdict:
    """Boolean outcome carrying the offending items."""

    def __init__(self, ok, items=()):
        self.ok = bool(ok)
        self.items = list(items)

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return f"Verdict({self.ok}, {self.items[:5]!r})"


class SizeGuardError(ValueError):
    pass


class NoBasisError(ValueError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


# ---------------------------------------------------------------------------
# relation algebra atom structures
# ---------------------------------------------------------------------------

class RaAtomStructure:
    """Atoms, identity atoms, converse and the consistent-triple relation.

    The triple relation is given by exactly one of ``table`` (dense bool array
    indexed by atom position), ``grid`` (vectorized rule over index arrays) or
    ``consistent`` (scalar rule over atom identifiers).
    """

    def __init__(self, atoms, identity, converse, consistent=None, grid=None,
                 table=None, name="ra"):
        self.atoms = tuple(atoms)
        self.index = {a: i for i, a in enumerate(self.atoms)}
        self.identity = frozenset(identity)
        self.converse = dict(converse)
        self.name = name
        self._rule = consistent
        self._grid = grid
        self._table = None if table is None else np.asarray(table, dtype=bool)
        # optional lookup form for the compiled kernels: a single identity atom at
        # ``idx`` and, elsewhere, code[cell triple] = 0 never, 1 rowe[row triple], 2 always
        self.factored = None
        if consistent is None and grid is None and table is None:
            raise ValueError("no triple relation given")

    def __len__(self):
        return len(self.atoms)

    def __repr__(self):
        return f"RaAtomStructure({self.name!r}, {len(self.atoms)} atoms)"

    @property
    def conv_index(self):
        return np.array([self.index.get(self.converse.get(a), -1) for a in self.atoms], dtype=np.int64)

    @property
    def ident_mask(self):
        return np.array([a in self.identity for a in self.atoms], dtype=bool)

    def is_consistent(self, a, b, c):
        if self._rule is not None:
            return bool(self._rule(a, b, c))
        ia, ib, ic = self.index[a], self.index[b], self.index[c]
        if self._table is not None:
            return bool(self._table[ia, ib, ic])
        return bool(self._grid(np.array(ia), np.array(ib), np.array(ic)))

    def grid(self, A, B, C):
        """Vectorized consistency over broadcastable index arrays."""
        A, B, C = np.broadcast_arrays(np.asarray(A), np.asarray(B), np.asarray(C))
        if self._table is not None:
            return self._table[A, B, C]
        if self._grid is not None:
            return np.asarray(self._grid(A, B, C), dtype=bool)
        atoms = self.atoms
        out = np.empty(A.shape, dtype=bool)
        for pos in np.ndindex(A.shape):
            out[pos] = self._rule(atoms[A[pos]], atoms[B[pos]], atoms[C[pos]])
        return out

    def table(self):
        n = len(self.atoms)
        if self._table is None:
            if n > DENSE_LIMIT:
                raise SizeGuardError(f"{n} atoms is above the dense table limit {DENSE_LIMIT}")
            r = np.arange(n)
            self._table = self.grid(r[:, None, None], r[None, :, None], r[None, None, :])
        return self._table

    def consistent_triples(self):
        t = self.table()
        return [(self.atoms[a], self.atoms[b], self.atoms[c]) for a, b, c in np.argwhere(t)]


def validate_ra_atom_structure(s):
    """List of violated laws, each with a witness. Empty means valid."""
    report = []
    atoms = s.atoms
    if not atoms:
        return [Violation("nonempty", None)]
    for a in atoms:
        b = s.converse.get(a)
        if b not in s.index:
            report.append(Violation("converse-closed", (a,)))
        elif s.converse.get(b) != a:
            report.append(Violation("converse-involution", (a, b, s.converse.get(b))))
    for e in s.identity:
        if e not in s.index:
            report.append(Violation("identity-subset", (e,)))
    if not s.identity:
        report.append(Violation("identity-nonempty", None))
    if report:
        return report
    conv = s.conv_index
    ident = s.ident_mask
    n = len(atoms)
    laws = {1: "peircean-converse", 2: "peircean-rotate", 3: "identity-law"}
    if n <= DENSE_LIMIT:
        code, a, b, c = _accel.scan_table(s.table(), conv, ident)
        if code:
            report.append(Violation(laws[code], (atoms[a], atoms[b], atoms[c])))
        return report
    if s.factored is not None and len(s.identity) == 1:
        return _scan_factored(s, conv, ident)
    # slab scan for large rule-defined structures
    r = np.arange(n)
    rows, cols = r[:, None], r[None, :]
    for a in range(n):
        slab = s.grid(a, rows, cols)                    # [b, c] = (a, b, c)
        # [b, c] = (conv a, c, b); a transpose when a is self-converse
        other = slab.T if conv[a] == a else s.grid(conv[a], cols, rows)
        bad = slab != other
        if bad.any():
            b, c = np.argwhere(bad)[0]
            report.append(Violation(laws[1], (atoms[a], atoms[b], atoms[c])))
            return report
    for b in range(n):
        mid = s.grid(rows, b, cols)                     # [a, c] = (a, b, c)
        other = mid.T if conv[b] == b else s.grid(cols, conv[b], rows)
        bad = mid != other
        if bad.any():
            a, c = np.argwhere(bad)[0]
            report.append(Violation(laws[2], (atoms[a], atoms[b], atoms[c])))
            return report
    return report + _identity_slab(s, conv, ident)


def _scan_factored(s, conv, ident):
    """Exact Peircean scan for a factored rule, done on the cell and row tables.

    A non-identity triple with cells x and rows r is consistent iff code[x] == 2,
    or code[x] == 1 and rowe[r]. Each law sends (x, r) to (x', pi r) for a fixed
    row permutation pi, so comparing the two small tables decides it exactly.
    """
    f = s.factored
    npw, nr = f["npw"], f["nr"]
    code = f["code"].reshape(npw, npw, npw)
    rowe = f["rowe"].reshape(nr, nr, nr)
    cc = np.asarray(f["conv_cell"])
    e = s.index[next(iter(s.identity))]
    if conv[e] != e:
        return [Violation("identity-self-converse", (s.atoms[e],))]
    at = {(int(f["cell_of"][k]), int(f["row_of"][k])): a for k, a in enumerate(s.atoms) if k != e}
    X = np.indices((npw,) * 3)
    all_true, all_false = bool(rowe.all()), not rowe.any()
    for law, img, perm in (("peircean-converse", (cc[X[0]], X[2], X[1]), (0, 2, 1)),
                           ("peircean-rotate", (X[2], cc[X[1]], X[0]), (2, 1, 0))):
        other = code[img]
        sym = bool((rowe == rowe.transpose(perm)).all())
        one = (code == 1) | (other == 1)
        ok = np.where(~one, code == other,
                      np.where((code == 1) & (other == 1), sym,
                               np.where((code == 2) | (other == 2), all_true, all_false)))
        if not ok.all():
            x = tuple(int(c) for c in np.argwhere(~ok)[0])
            if code[x] == 1 and other[x] == 1:
                rows = np.argwhere(rowe != rowe.transpose(perm))[0]
            elif one[x]:
                rows = np.argwhere(rowe != (2 in (code[x], other[x])))[0]
            else:
                rows = (0, 0, 0)
            return [Violation(law, tuple(at[c, int(i)] for c, i in zip(x, rows)))]
    # triples through the identity atom, as three slabs
    r = np.arange(len(s.atoms))
    Va = s.grid(e, r[:, None], r[None, :])      # (e, b, c)
    Vb = s.grid(r[:, None], e, r[None, :])      # (a, e, c)
    Vc = s.grid(r[:, None], r[None, :], e)      # (a, b, e)
    checks = (("peircean-converse", 0, Va, Va.T), ("peircean-converse", 1, Vb, Vc[conv, :]),
              ("peircean-converse", 2, Vc, Vb[conv, :]), ("peircean-rotate", 0, Va, Vc[:, conv].T),
              ("peircean-rotate", 1, Vb, Vb.T), ("peircean-rotate", 2, Vc, Va[conv, :].T))
    for law, pos, lhs, rhs in checks:
        bad = lhs != rhs
        if bad.any():
            i, j = (int(v) for v in np.argwhere(bad)[0])
            trip = [i, j]
            trip.insert(pos, e)
            return [Violation(law, tuple(s.atoms[t] for t in trip))]
    return _identity_slab(s, conv, ident)


def _identity_slab(s, conv, ident):
    r = np.arange(len(s.atoms))
    expect = conv[:, None] == r[None, :]
    for e in np.flatnonzero(ident):
        bad = s.grid(r[:, None], r[None, :], e) != expect
        if bad.any():
            a, b = np.argwhere(bad)[0]
            return [Violation("identity-law", (s.atoms[a], s.atoms[b], s.atoms[e]))]
    return []


# ---------------------------------------------------------------------------
# cylindric atom structures
# ---------------------------------------------------------------------------

class CaAtomStructure:
    """Atoms of dimension n with diagonals E_ij and cylindrifier relations T_i.

    ``diag(i, j, a)`` decides E_ij; ``cyl_key(i, a)`` returns a hashable key so
    that a T_i b iff the keys agree. ``substitute(a, sigma)``, when present,
    pulls an atom back along a map sigma: n -> n (point-like atoms only).
    """

    def __init__(self, dimension, atoms, diag, cyl_key, substitute=None, name="ca"):
        self.dimension = dimension
        self.atoms = None if atoms is None else tuple(atoms)
        self.index = None if atoms is None else {a: i for i, a in enumerate(self.atoms)}
        self.diag = diag
        self.cyl_key = cyl_key
        self.substitute = substitute
        self.name = name

    def __len__(self):
        return len(self.atoms)

    def __repr__(self):
        size = "rule-defined" if self.atoms is None else f"{len(self.atoms)} atoms"
        return f"CaAtomStructure({self.name!r}, n={self.dimension}, {size})"

    def related(self, i, a, b):
        return self.cyl_key(i, a) == self.cyl_key(i, b)

    @classmethod
    def from_relations(cls, dimension, atoms, diag_sets, cyl_pairs, name="ca"):
        """Build from explicit E_ij sets and T_i pair lists (T_i must be an equivalence)."""
        atoms = tuple(atoms)
        keys = {}
        for i in range(dimension):
            rel = {(a, b) for a, b in cyl_pairs.get(i, ())}
            ok, witness = _is_equivalence(atoms, rel)
            if not ok:
                raise ValueError(f"T_{i} is not an equivalence relation: {witness}")
            cls_of = {}
            for a in atoms:
                if a not in cls_of:
                    k = len(set(cls_of.values()))
                    for b in atoms:
                        if (a, b) in rel:
                            cls_of[b] = k
            keys[i] = cls_of
        diag_sets = {k: frozenset(v) for k, v in diag_sets.items()}

        def diag(i, j, a):
            if i == j:
                return True
            return a in diag_sets.get((i, j), diag_sets.get((j, i), ()))

        return cls(dimension, atoms, diag, lambda i, a: keys[i][a], name=name)


def _is_equivalence(atoms, rel):
    for a in atoms:
        if (a, a) not in rel:
            return False, ("reflexive", a)
    for a, b in rel:
        if (b, a) not in rel:
            return False, ("symmetric", a, b)
    for a, b in rel:
        for c in atoms:
            if (b, c) in rel and (a, c) not in rel:
                return False, ("transitive", a, b, c)
    return True, None


def validate_ca_atom_structure(s):
    report = []
    n = s.dimension
    for a in s.atoms:
        for i in range(n):
            if not s.diag(i, i, a):
                report.append(Violation("E_ii", (i, a)))
                break
        for i, j in itertools.combinations(range(n), 2):
            if s.diag(i, j, a) != s.diag(j, i, a):
                report.append(Violation("E_ij symmetric", (i, j, a)))
    # T_i given by keys is an equivalence by construction; confirm reflexivity
    for i in range(n):
        for a in s.atoms:
            if not s.related(i, a, a):
                report.append(Violation("T_i reflexive", (i, a)))
                break
    return report


# ---------------------------------------------------------------------------
# complex algebras (elements are python int bitmasks over atom positions)
# ---------------------------------------------------------------------------

class _BitAlgebra:
    def __init__(self, n):
        self.n = n
        self.top = (1 << n) - 1
        self.zero = 0

    def elem(self, atoms):
        m = 0
        for a in atoms:
            m |= 1 << self.index[a]
        return m

    def atoms_of(self, x):
        return [self.atoms[i] for i in range(self.n) if x >> i & 1]

    def join(self, x, y):
        return x | y

    def meet(self, x, y):
        return x & y

    def complement(self, x):
        return self.top & ~x

    def leq(self, x, y):
        return x & ~y == 0

    def elements(self):
        return range(1 << self.n)


class RaComplexAlgebra(_BitAlgebra):
    def __init__(self, s):
        super().__init__(len(s.atoms))
        self.structure = s
        self.atoms = s.atoms
        self.index = s.index
        self.identity_element = self.elem(s.identity)
        self._conv = s.conv_index
        self._dense = self.n <= DENSE_LIMIT
        self._cache = {}

    def converse(self, x):
        out = 0
        for i in range(self.n):
            if x >> i & 1:
                out |= 1 << int(self._conv[i])
        return out

    def _bools(self, x):
        return np.array([x >> i & 1 for i in range(self.n)], dtype=bool)

    def compose(self, x, y):
        if x == 0 or y == 0:
            return 0
        key = (x, y)
        if key in self._cache:
            return self._cache[key]
        xb, yb = self._bools(x), self._bools(y)
        f = self.structure.factored
        if self._dense:
            out = _accel.compose(xb, yb, self.structure.table())
        elif f is not None and len(self.structure.identity) == 1 and _accel.factored_available():
            idx = self.index[next(iter(self.structure.identity))]
            out = _accel.compose_factored(xb, yb, f, self._conv, idx)
        else:
            xi, yi = np.flatnonzero(xb), np.flatnonzero(yb)
            r = np.arange(self.n)
            out = np.zeros(self.n, dtype=bool)
            for a in xi:
                out |= self.structure.grid(a, yi[:, None], r[None, :]).any(axis=0)
        res = sum(1 << int(i) for i in np.flatnonzero(out))
        if len(self._cache) < 100000:
            self._cache[key] = res
        return res


class CaComplexAlgebra(_BitAlgebra):
    def __init__(self, s):
        super().__init__(len(s.atoms))
        self.structure = s
        self.dimension = s.dimension
        self.atoms = s.atoms
        self.index = s.index
        self._class_mask = []
        for i in range(s.dimension):
            groups = {}
            for k, a in enumerate(s.atoms):
                groups.setdefault(s.cyl_key(i, a), []).append(k)
            masks = [0] * self.n
            for members in groups.values():
                m = sum(1 << k for k in members)
                for k in members:
                    masks[k] = m
            self._class_mask.append(masks)
        self._diag = {}
        for i in range(s.dimension):
            for j in range(s.dimension):
                self._diag[i, j] = sum(1 << k for k, a in enumerate(s.atoms) if s.diag(i, j, a))

    def cyl(self, i, x):
        out = 0
        masks = self._class_mask[i]
        k = 0
        while x:
            if x & 1:
                out |= masks[k]
            x >>= 1
            k += 1
        return out

    def diag(self, i, j):
        return self._diag[i, j]

    def subst(self, i, j, x):
        """s_i^j x = c_j(d_ij . x): coordinate j takes the value at i."""
        if i == j:
            return x
        return self.cyl(j, self._diag[i, j] & x)

    def subst_map(self, sigma, x):
        """{a : a pulled back along sigma lies in x} for point-like atoms."""
        sub = self.structure.substitute
        if sub is None:
            raise ValueError("atom structure has no substitution action")
        sigma = tuple(sigma) + tuple(range(len(sigma), self.dimension))
        out = 0
        for k, a in enumerate(self.atoms):
            if x >> self.index[sub(a, sigma)] & 1:
                out |= 1 << k
        return out


def cm_build(s, max_atoms=MAX_CM_ATOMS):
    """Full complex algebra of an RA or CA atom structure."""
    if s.atoms is None:
        raise SizeGuardError("rule-defined atom structure has no finite atom list")
    if len(s.atoms) > max_atoms:
        raise SizeGuardError(f"powerset of {len(s.atoms)} atoms exceeds the configured bound 2^{max_atoms}")
    if isinstance(s, RaAtomStructure):
        return RaComplexAlgebra(s)
    return CaComplexAlgebra(s)


def check_ra_axioms(cm, elements=None, seed=0, samples=2000):
    """Associativity, identity and converse laws on Cm; returns list of Violations."""
    report = []
    if elements is None:
        if cm.n <= 4:
            elements = list(cm.elements())
        else:
            rng = random.Random(seed)
            elements = [rng.getrandbits(cm.n) for _ in range(24)] + [1 << i for i in range(cm.n)]
    e = cm.identity_element
    triples = itertools.product(elements, repeat=3)
    if len(elements) ** 3 > SAMPLE_BOUND * 64:
        rng = random.Random(seed)
        triples = ((rng.choice(elements), rng.choice(elements), rng.choice(elements)) for _ in range(samples))
    for x, y, z in triples:
        if cm.compose(cm.compose(x, y), z) != cm.compose(x, cm.compose(y, z)):
            report.append(Violation("associativity", (x, y, z)))
            break
    for x in elements:
        if cm.compose(x, e) != x or cm.compose(e, x) != x:
            report.append(Violation("identity", (x,)))
            break
        if cm.converse(cm.converse(x)) != x:
            report.append(Violation("converse-involution", (x,)))
            break
    for x, y in itertools.product(elements[:40], repeat=2):
        if cm.converse(cm.compose(x, y)) != cm.compose(cm.converse(y), cm.converse(x)):
            report.append(Violation("converse-antidistributive", (x, y)))
            break
    return report


# ---------------------------------------------------------------------------
# basic matrices
# ---------------------------------------------------------------------------

def _basic_matrix_search(s, n):
    atoms = s.atoms
    ids = sorted(s.identity, key=s.index.get)
    pairs = [(i, j) for j in range(n) for i in range(j)]
    found = []
    m = {}

    def ok_upto(j):
        # check every triangle whose entries are all assigned
        for x in range(n):
            for y in range(n):
                for z in range(n):
                    if max(x, y, z) != j:
                        continue
                    if not s.is_consistent(m[x, y], m[y, z], m[x, z]):
                        return False
        return True

    def assign(idx):
        if idx == len(pairs):
            found.append(tuple(tuple(m[i, j] for j in range(n)) for i in range(n)))
            return
        i, j = pairs[idx]
        for a in atoms:
            m[i, j] = a
            m[j, i] = s.converse[a]
            last = idx + 1 == len(pairs) or pairs[idx + 1][1] != j
            if not last or ok_upto(j):
                assign(idx + 1)
        del m[i, j], m[j, i]

    def diag(k):
        if k == n:
            assign(0)
            return
        for e in ids:
            m[k, k] = e
            if s.is_consistent(e, e, e):
                diag(k + 1)
        del m[k, k]

    diag(0)
    return found


def _matrix_ca(s, n, mats):
    ident = s.identity

    def diag(i, j, M):
        return M[i][j] in ident

    def key(i, M):
        return tuple(M[a][b] for a in range(n) for b in range(n) if a != i and b != i)

    def substitute(M, sigma):
        return tuple(tuple(M[sigma[a]][sigma[b]] for b in range(n)) for a in range(n))

    return CaAtomStructure(n, mats, diag, key, substitute=substitute, name=f"basic{n}({s.name})")


def check_basis(ca, s):
    """Extension and commutation properties of a matrix atom structure; None or a witness."""
    n = ca.dimension
    mats = ca.atoms
    for k in range(n):
        classes = {}
        for M in mats:
            classes.setdefault(ca.cyl_key(k, M), []).append(M)
        for members in classes.values():
            M = members[0]
            for i in range(n):
                for j in range(n):
                    if k in (i, j) or i == j:
                        continue
                    have = {(N[i][k], N[k][j]) for N in members}
                    for x in s.atoms:
                        for y in s.atoms:
                            if s.is_consistent(x, y, M[i][j]) and (x, y) not in have:
                                return ("extension", M, (i, j, k), (x, y))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            ci = {M: ca.cyl_key(i, M) for M in mats}
            cj = {M: ca.cyl_key(j, M) for M in mats}
            reach_ij, reach_ji = {}, {}
            for N in mats:
                reach_ij.setdefault(ci[N], set()).add(cj[N])
                reach_ji.setdefault(cj[N], set()).add(ci[N])
            edges = sorted({(ci[N], cj[N]) for N in mats}, key=repr)
            for a, b in edges:
                ra, rb = reach_ij[a], reach_ji[b]
                for g, d in edges:
                    if (d in ra) != (g in rb):
                        return ("commutation", (i, j), (a, b), (g, d))
    return None


def basic_matrices(s, n, max_atoms_n4=12, check=True):
    """All n-dimensional basic matrices of s as a cylindric atom structure."""
    if n < 3:
        raise ValueError("dimension must be at least 3")
    if n > 4 and len(s.atoms) > 1:
        raise SizeGuardError("basis check is only exhaustive for n = 3, 4")
    if n == 4 and len(s.atoms) > max_atoms_n4:
        raise SizeGuardError(f"{len(s.atoms)} atoms is above the n=4 bound {max_atoms_n4}")
    mats = _basic_matrix_search(s, n)
    ca = _matrix_ca(s, n, mats)
    if check:
        witness = check_basis(ca, s)
        if witness is not None:
            raise NoBasisError(f"no {n}-dimensional basis", witness)
    return ca


# ---------------------------------------------------------------------------
# cylindric set algebras over a finite base
# ---------------------------------------------------------------------------

class SetAlgebra:
    """Full cylindric set algebra Cs_n over base {0..b-1}.

    Elements are uint64 bitmasks over the b**n points (numpy arrays or ints).
    """

    def __init__(self, dimension, base):
        self.dimension = dimension
        self.base = base
        self.points = list(itertools.product(range(base), repeat=dimension))
        self.npoints = len(self.points)
        if self.npoints > 64:
            raise SizeGuardError("set algebra needs at most 64 points")
        self.pos = {p: k for k, p in enumerate(self.points)}
        self.top = (1 << self.npoints) - 1
        self.zero = 0
        self._cyl = []
        for i in range(dimension):
            imgs = []
            for p in self.points:
                m = 0
                for v in range(base):
                    m |= 1 << self.pos[p[:i] + (v,) + p[i + 1:]]
                imgs.append(m)
            self._cyl.append(imgs)

    def _u(self, x):
        return np.asarray(x, dtype=np.uint64)

    def _out(self, x, like):
        if isinstance(like, (int, np.integer)):
            return int(x)
        return x

    def elem(self, pts):
        m = 0
        for p in pts:
            m |= 1 << self.pos[tuple(p)]
        return m

    def points_of(self, x):
        return [p for k, p in enumerate(self.points) if int(x) >> k & 1]

    def join(self, x, y):
        return x | y

    def meet(self, x, y):
        return x & y

    def complement(self, x):
        if isinstance(x, (int, np.integer)):
            return self.top & ~int(x)
        return np.uint64(self.top) & ~self._u(x)

    def diag(self, i, j):
        return self.elem(p for p in self.points if p[i] == p[j])

    def _pointwise(self, x, imgs):
        X = self._u(x)
        out = np.zeros_like(X)
        one = np.uint64(1)
        for k, m in enumerate(imgs):
            bit = (X >> np.uint64(k)) & one
            out |= bit * np.uint64(m)
        return self._out(out, x)

    def _pullback(self, x, f):
        # result has point p iff f(p) in x
        X = self._u(x)
        out = np.zeros_like(X)
        one = np.uint64(1)
        for k, p in enumerate(self.points):
            bit = (X >> np.uint64(self.pos[f(p)])) & one
            out |= bit << np.uint64(k)
        return self._out(out, x)

    def cyl(self, i, x):
        return self._pointwise(x, self._cyl[i])

    def subst(self, i, j, x):
        """s_i^j x: coordinate j takes the value at coordinate i."""
        if i == j:
            return x
        return self._pullback(x, lambda p: p[:j] + (p[i],) + p[j + 1:])

    def subst_map(self, sigma, x):
        sigma = tuple(sigma) + tuple(range(len(sigma), self.dimension))
        return self._pullback(x, lambda p: tuple(p[sigma[k]] for k in range(self.dimension)))

    def swap(self, i, j, x):
        def f(p):
            q = list(p)
            q[i], q[j] = q[j], q[i]
            return tuple(q)
        return self._pullback(x, f)

    def elements(self):
        return np.arange(1 << self.npoints, dtype=np.uint64)

    def neat_elements(self, small):
        """Elements fixed by every c_k with small <= k < dimension."""
        el = self.elements()
        keep = np.ones(len(el), dtype=bool)
        for k in range(small, self.dimension):
            keep &= self.cyl(k, el) == el
        return el[keep]


def generated_subalgebra(alg, gens, dims=None, limit=SAMPLE_BOUND * 16):
    """Subalgebra of a set algebra generated by gens under Boolean ops, c_i, d_ij, s_i^j (i, j < dims)."""
    dims = alg.dimension if dims is None else dims
    blocks = [alg.top]

    def refine(blocks, x):
        out = []
        for b in blocks:
            for part in (b & x, b & ~x & alg.top):
                if part:
                    out.append(part)
        return out

    pending = [int(g) for g in gens]
    pending += [alg.diag(i, j) for i in range(dims) for j in range(dims) if i != j]
    seen_blocks = None
    while True:
        for x in pending:
            blocks = refine(blocks, x)
        if seen_blocks == set(blocks):
            break
        seen_blocks = set(blocks)
        pending = []
        for b in blocks:
            for i in range(dims):
                pending.append(int(alg.cyl(i, b)))
                for j in range(dims):
                    if i != j:
                        pending.append(int(alg.subst(i, j, b)))
    blocks.sort()
    if 2 ** len(blocks) > limit:
        raise SizeGuardError(f"generated subalgebra has 2^{len(blocks)} elements")
    out = np.zeros(1 << len(blocks), dtype=np.uint64)
    for k, b in enumerate(blocks):
        idx = np.arange(1 << len(blocks))
        out |= ((idx >> k) & 1).astype(np.uint64) * np.uint64(b)
    return np.unique(out)


# ---------------------------------------------------------------------------
# CA terms
# ---------------------------------------------------------------------------

class Term:
    def __mul__(self, other):
        return Meet(self, other)

    def __add__(self, other):
        return Join(self, other)

    def __neg__(self):
        return Neg(self)


@dataclass(frozen=True)
class Var(Term):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const(Term):
    which: str  # "zero" or "unit"

    def __str__(self):
        return "0" if self.which == "zero" else "1"


@dataclass(frozen=True)
class Cyl(Term):
    i: int
    arg: Term

    def __str__(self):
        return f"c{self.i}({self.arg})"


@dataclass(frozen=True)
class Sub(Term):
    i: int
    j: int
    arg: Term

    def __str__(self):
        return f"s{self.i}^{self.j}({self.arg})"


@dataclass(frozen=True)
class Diag(Term):
    i: int
    j: int

    def __str__(self):
        return f"d{self.i}{self.j}"


@dataclass(frozen=True)
class Meet(Term):
    left: Term
    right: Term

    def __str__(self):
        return f"({self.left} . {self.right})"


@dataclass(frozen=True)
class Join(Term):
    left: Term
    right: Term

    def __str__(self):
        return f"({self.left} + {self.right})"


@dataclass(frozen=True)
class Neg(Term):
    arg: Term

    def __str__(self):
        return f"-({self.arg})"


@dataclass(frozen=True)
class Swap(Term):
    """Merry-go-round _k s(i, j): transposes i and j through the spare coordinate k."""
    k: int
    i: int
    j: int
    arg: Term

    def __str__(self):
        return f"_{self.k}s({self.i},{self.j})({self.arg})"

    def expand(self):
        k, i, j = self.k, self.i, self.j
        return Sub(i, k, Sub(j, i, Sub(k, j, Cyl(k, self.arg))))


def term_vars(t):
    if isinstance(t, Var):
        return {t.name}
    out = set()
    for f in ("arg", "left", "right"):
        if hasattr(t, f):
            out |= term_vars(getattr(t, f))
    return out


def term_max_index(t):
    idx = [getattr(t, f) for f in ("i", "j", "k") if hasattr(t, f)]
    best = max(idx) if idx else -1
    for f in ("arg", "left", "right"):
        if hasattr(t, f):
            best = max(best, term_max_index(getattr(t, f)))
    return best


class UnboundVariable(KeyError):
    pass


def ca_term_eval(t, alg, env):
    """Evaluate a CA term in a set algebra or a CA complex algebra."""
    if term_max_index(t) >= alg.dimension:
        raise IndexError(f"term index {term_max_index(t)} out of dimension {alg.dimension}")
    return _ev(t, alg, env)


def _ev(t, alg, env):
    if isinstance(t, Var):
        if t.name not in env:
            raise UnboundVariable(t.name)
        return env[t.name]
    if isinstance(t, Const):
        return alg.zero if t.which == "zero" else alg.top
    if isinstance(t, Cyl):
        return alg.cyl(t.i, _ev(t.arg, alg, env))
    if isinstance(t, Sub):
        return alg.subst(t.i, t.j, _ev(t.arg, alg, env))
    if isinstance(t, Diag):
        return alg.diag(t.i, t.j)
    if isinstance(t, Meet):
        return alg.meet(_ev(t.left, alg, env), _ev(t.right, alg, env))
    if isinstance(t, Join):
        return alg.join(_ev(t.left, alg, env), _ev(t.right, alg, env))
    if isinstance(t, Neg):
        return alg.complement(_ev(t.arg, alg, env))
    if isinstance(t, Swap):
        return _ev(t.expand(), alg, env)
    raise TypeError(f"not a term: {t!r}")


X, Y = Var("x"), Var("y")

WITNESSES = {
    # unary cylindric witness: _3 s(0,1) x <= s_1^0 c_1 x . s_0^1 c_0 x
    "ca-3": (Swap(3, 0, 1, X), Meet(Sub(1, 0, Cyl(1, X)), Sub(0, 1, Cyl(0, X)))),
    # binary polyadic witness
    "pa-3": (Cyl(3, Meet(Sub(3, 1, Cyl(3, X)), Sub(3, 0, Cyl(3, Y)))),
             Meet(Meet(Cyl(1, Meet(Cyl(0, X), Sub(1, 0, Cyl(1, Y)))), Cyl(1, X)), Cyl(0, Y))),
}

WitnessResult = namedtuple("WitnessResult", "holds counterexample mode checked")


def check_witness_inequality(t_small, t_big, alg, elements=None, seed=0,
                             bound=SAMPLE_BOUND, samples=SAMPLE_BOUND):
    """t_small(X) <= t_big(X) for every assignment drawn from ``elements``."""
    names = sorted(term_vars(t_small) | term_vars(t_big))
    if elements is None:
        elements = alg.elements() if hasattr(alg, "npoints") else np.arange(1 << alg.n)
    elements = np.asarray(elements, dtype=np.uint64)
    total = len(elements) ** len(names)
    if total <= bound:
        mode = "exhaustive"
        if names:
            grids = np.meshgrid(*([elements] * len(names)), indexing="ij")
            cols = [g.ravel() for g in grids]
        else:
            cols = []
    else:
        mode = "sampled"
        rng = np.random.default_rng(seed)
        cols = [elements[rng.integers(0, len(elements), samples)] for _ in names]
    if hasattr(alg, "npoints"):
        env = dict(zip(names, cols))
        small = np.asarray(ca_term_eval(t_small, alg, env), dtype=np.uint64)
        big = np.asarray(ca_term_eval(t_big, alg, env), dtype=np.uint64)
        small, big = np.broadcast_arrays(small, big)
        bad = np.flatnonzero((small & ~big) != 0)
        checked = int(small.size)
        if bad.size:
            k = int(bad[0])
            cex = {nm: int(np.broadcast_to(c, small.shape)[k]) for nm, c in zip(names, cols)} if names else {}
            return WitnessResult(False, cex, mode, checked)
        return WitnessResult(True, None, mode, checked)
    rows = list(zip(*cols)) if names else [()]
    for row in rows:
        env = {nm: int(v) for nm, v in zip(names, row)}
        if ca_term_eval(t_small, alg, env) & ~ca_term_eval(t_big, alg, env):
            return WitnessResult(False, env, mode, len(rows))
    return WitnessResult(True, None, mode, len(rows))


# ---------------------------------------------------------------------------
# neat hat and additivity
# ---------------------------------------------------------------------------

def neat_hat(C, N, n, embed=None):
    """Product over all labelled n-tuples of s_{tuple} N(tuple) in C.

    N maps n-tuples of nodes (naturals below C.dimension) to labels; ``embed``
    turns a label into an element of C (default: the singleton atom).
    """
    if embed is None:
        def embed(a):
            return C.elem([a])
    labels = N.label if hasattr(N, "label") else N
    out = C.top
    for tup, lab in labels.items():
        if len(tup) != n:
            raise ValueError(f"tuple {tup} is not of length {n}")
        if any(x >= C.dimension or x < 0 for x in tup):
            raise ValueError(f"node out of range in {tup}")
        out &= C.subst_map(tup, embed(lab))
        if not out:
            break
    return out


def check_complete_additivity(alg, op, elements=None, seed=0):
    """op distributes over sums of atoms: op(X) = union of op({a}) for a in X."""
    n = alg.npoints if hasattr(alg, "npoints") else alg.n
    if op(alg.zero) != 0:
        return False
    singles = [int(op(1 << k)) for k in range(n)]
    if elements is None:
        if 2 ** n <= SAMPLE_BOUND * 16:
            elements = range(1 << n)
        else:
            rng = random.Random(seed)
            elements = [rng.getrandbits(n) for _ in range(SAMPLE_BOUND)]
    for x in elements:
        x = int(x)
        want = 0
        for k in range(n):
            if x >> k & 1:
                want |= singles[k]
        if int(op(x)) != want:
            return False
    return True


def operation(alg, spec):
    """Look up an operation by tuple spec: ('c', i) or ('s', i, j)."""
    if spec[0] == "c":
        return lambda x: alg.cyl(spec[1], x)
    if spec[0] == "s":
        return lambda x: alg.subst(spec[1], spec[2], x)
    raise ValueError(f"unknown operation {spec}")


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------

def structure_to_json(s):
    if isinstance(s, RaAtomStructure):
        return {
            "kind": "ra",
            "atoms": [str(a) for a in s.atoms],
            "identity": sorted(str(a) for a in s.identity),
            "converse": {str(a): str(s.converse[a]) for a in s.atoms},
            "triples": [[str(x) for x in t] for t in s.consistent_triples()],
        }
    return {
        "kind": "ca",
        "dimension": s.dimension,
        "atoms": [str(a) for a in s.atoms],
        "diag": {f"{i},{j}": [str(a) for a in s.atoms if s.diag(i, j, a)]
                 for i in range(s.dimension) for j in range(s.dimension) if i < j},
        "cyl": {str(i): _classes(s, i) for i in range(s.dimension)},
    }


def _classes(s, i):
    groups = {}
    for a in s.atoms:
        groups.setdefault(s.cyl_key(i, a), []).append(str(a))
    return list(groups.values())


RULES = {}


def register_rule(name):
    def deco(fn):
        RULES[name] = fn
        return fn
    return deco


def structure_from_json(obj):
    if obj.get("kind") == "ra":
        triples = obj["triples"]
        if isinstance(triples, str):
            if triples not in RULES:
                from . import blowblur  # noqa: F401  registers builders
            return RULES[triples](**obj.get("params", {}))
        atoms = obj["atoms"]
        cons = {tuple(t) for t in triples}
        return RaAtomStructure(atoms, obj["identity"], obj["converse"],
                               consistent=lambda a, b, c: (a, b, c) in cons, name=obj.get("name", "json"))
    if obj.get("kind") == "ca":
        n = obj["dimension"]
        atoms = obj["atoms"]
        diag_sets = {tuple(int(v) for v in k.split(",")): v for k, v in obj.get("diag", {}).items()}
        pairs = {}
        for i, classes in obj.get("cyl", {}).items():
            pairs[int(i)] = [(a, b) for cl in classes for a in cl for b in cl]
        return CaAtomStructure.from_relations(n, atoms, diag_sets, pairs, name=obj.get("name", "json"))
    raise ValueError("kind must be 'ra' or 'ca'")


def two_atom_ra():
    """{Id, d} with d self-converse and d;d = {Id}."""
    def cons(a, b, c):
        if c == "Id":
            return a == b
        if a == "Id":
            return b == c
        if b == "Id":
            return a == c
        return False
    return RaAtomStructure(["Id", "d"], ["Id"], {"Id": "Id", "d": "d"}, consistent=cons, name="two-atom")


def complete_graph_ra():
    """{Id, d} with d;d = {Id, d}: the complete graph on three or more points."""
    def cons(a, b, c):
        if c == "Id":
            return a == b
        if a == "Id":
            return b == c
        if b == "Id":
            return a == c
        return True
    return RaAtomStructure(["Id", "d"], ["Id"], {"Id": "Id", "d": "d"}, consistent=cons, name="complete-graph")


def identity_ra():
    return RaAtomStructure(["Id"], ["Id"], {"Id": "Id"}, consistent=lambda a, b, c: True, name="identity")
