"""Rainbow colours, forbidden triples, class J, cones and the truncated rainbow atom structure."""
import functools
import itertools
import json
from collections import namedtuple

from .core import CaAtomStructure, SizeGuardError, Verdict
from .netgraph import ColouredGraph, atom_graph, graph_atom, restrict_atom

ALL = "ALL"
KIND_ORDER = {"g": 0, "g0": 1, "w": 2, "wf": 3, "y": 4, "b": 5, "r": 6, "yS": 7}
GREENS = ("g", "g0")

Cone = namedtuple("Cone", "tint base apex")


# ---- colour constructors ---------------------------------------------------

def g(i):
    return ("g", i)


def g0(i):
    return ("g0", i)


W = ("w",)
Y = ("y",)
B = ("b",)


def wf(f):
    """White indexed by a partial map given as a dict or pair list."""
    items = f.items() if isinstance(f, dict) else f
    return ("wf", tuple(sorted(items)))


def r(i, j):
    return ("r", i, j)


def shade(S):
    return ("yS", ALL if S == ALL else frozenset(S))


def converse(c):
    if c[0] == "r":
        return ("r", c[2], c[1])
    return c


def is_green(c):
    return c is not None and c[0] in GREENS


def shade_contains(s, i):
    return s[1] == ALL or i in s[1]


def is_order_preserving(pairs):
    """A set of (dom, value) pairs is an order-preserving partial function."""
    pairs = list(pairs)
    for (a, x), (b, y) in itertools.combinations(pairs, 2):
        if a == b and x != y:
            return False
        if a < b and not x < y:
            return False
        if a > b and not x > y:
            return False
    return True


def colour_key(c):
    kind = c[0]
    if kind == "yS":
        S = c[1]
        return (KIND_ORDER[kind], (1, ()) if S == ALL else (0, tuple(sorted(S))))
    return (KIND_ORDER[kind], c[1:])


def fmt(c):
    kind = c[0]
    if kind == "g":
        return f"g:{c[1]}"
    if kind == "g0":
        return f"g0:{c[1]}"
    if kind == "wf":
        return "wf:{" + ",".join(f"{a}:{b}" for a, b in c[1]) + "}"
    if kind == "r":
        return f"r:{c[1]},{c[2]}"
    if kind == "yS":
        if c[1] == ALL:
            return "yS:ALL"
        return "yS:{" + ",".join(str(i) for i in sorted(c[1])) + "}"
    return kind


def parse(text):
    if text in ("w", "y", "b"):
        return (text,)
    kind, _, rest = text.partition(":")
    if kind == "g":
        return g(int(rest))
    if kind == "g0":
        return g0(int(rest))
    if kind == "r":
        i, j = rest.split(",")
        return r(int(i), int(j))
    if kind == "wf":
        body = rest.strip("{}")
        pairs = [tuple(int(v) for v in p.split(":")) for p in body.split(",") if p]
        return wf(pairs)
    if kind == "yS":
        if rest == ALL:
            return shade(ALL)
        body = rest.strip("{}")
        return shade(int(v) for v in body.split(",") if v)
    raise ValueError(f"unknown colour {text!r}")


# ---- signature -------------------------------------------------------------

class ColourSignature:
    """Truncated colour inventory for dimension n."""

    def __init__(self, n, zmax, nmax, shades=None, max_shades=64, max_colours=200000):
        if n < 3:
            raise ValueError("rainbow colours need n >= 3")
        self.n, self.zmax, self.nmax = n, zmax, nmax
        self.tints = list(range(-zmax, zmax + 1))
        self.max_shades, self.max_colours = max_shades, max_colours
        self._edge = None
        self._shades = sorted(shades, key=colour_key) if shades is not None else None

    @property
    def edge_colours(self):
        """All edge colours in serialization order (materialized on first use)."""
        if self._edge is None:
            t, v = len(self.tints), self.nmax + 1
            count = (self.n - 2) + t + 1 + 1 + t * v + t * (t - 1) // 2 * v * (v - 1) // 2 + 2 + v * v
            if count > self.max_colours:
                raise SizeGuardError(f"{count} edge colours exceed guard {self.max_colours}")
            edge = [g(i) for i in range(1, self.n - 1)]
            edge += [g0(i) for i in self.tints]
            edge.append(W)
            edge += [wf(f) for f in self.partial_maps()]
            edge += [Y, B]
            edge += [r(i, j) for i in range(v) for j in range(v)]
            self._edge = sorted(edge, key=colour_key)
        return self._edge

    @property
    def shades(self):
        if self._shades is None:
            if 2 ** len(self.tints) > self.max_shades:
                raise SizeGuardError(f"{2 ** len(self.tints)} finite shades; pass an explicit shade list")
            subsets = itertools.chain.from_iterable(itertools.combinations(self.tints, k)
                                                    for k in range(len(self.tints) + 1))
            self._shades = sorted([shade(s) for s in subsets] + [shade(ALL)], key=colour_key)
        return self._shades

    def in_bounds(self, c):
        """Colour c belongs to this truncation."""
        kind = c[0]
        if kind == "g":
            return 1 <= c[1] <= self.n - 2
        if kind == "g0":
            return -self.zmax <= c[1] <= self.zmax
        if kind == "wf":
            return (len(c[1]) <= 2 and is_order_preserving(c[1])
                    and all(-self.zmax <= a <= self.zmax and 0 <= x <= self.nmax for a, x in c[1]))
        if kind == "r":
            return 0 <= c[1] <= self.nmax and 0 <= c[2] <= self.nmax
        if kind == "yS":
            return c[1] == ALL or all(-self.zmax <= i <= self.zmax for i in c[1])
        return kind in ("w", "y", "b")

    def partial_maps(self):
        out = [()]
        vals = range(self.nmax + 1)
        for a in self.tints:
            for x in vals:
                out.append(((a, x),))
        for a, b in itertools.combinations(self.tints, 2):
            for x, y in itertools.combinations(vals, 2):
                out.append(((a, x), (b, y)))
        return out

    def __repr__(self):
        return f"ColourSignature(n={self.n}, zmax={self.zmax}, nmax={self.nmax})"


# ---- forbidden triples -------------------------------------------------------

def orientations(a, b, c):
    """The six readings (G(p,q), G(q,r), G(p,r)) of a triangle with G(0,1)=a, G(1,2)=b, G(0,2)=c."""
    E = {(0, 1): a, (1, 2): b, (0, 2): c}
    for (x, y), col in list(E.items()):
        E[y, x] = converse(col)
    for p, q, s in itertools.permutations(range(3)):
        yield E[p, q], E[q, s], E[p, s]


def _oriented_rule(x, y, z):
    kx, ky, kz = x[0], y[0], z[0]
    if kx in GREENS and ky in GREENS and kz in GREENS:
        return "forb:green"
    if kx == "g" and x == y and kz == "w":
        return "forb:gw"
    if kx == "g0" and ky == "y" and kz == "wf" and x[1] not in dict(z[1]):
        return "forb:gyw"
    if kx == "g0" and ky == "g0" and kz == "w":
        return "forb:ggw"
    if kx == "g0" and ky == "g0" and kz == "r":
        if not is_order_preserving([(x[1], z[1]), (y[1], z[2])]):
            return "forb:pim"
    if kx == "y" and ky == "y" and kz in ("y", "b"):
        return "forb:black"
    if kx == "r" and ky == "r" and kz == "r":
        if not (x[1] == z[1] and x[2] == y[1] and y[2] == z[2]):
            return "forb:match"
    return None


@functools.lru_cache(maxsize=1 << 18)
def is_forbidden_triple(c1, c2, c3):
    """(forbidden, rule name) for the triangle read as (G(p,q), G(q,r), G(p,r))."""
    for o in orientations(c1, c2, c3):
        rule = _oriented_rule(*o)
        if rule:
            return True, rule
    return False, None


# ---- cones and class J -------------------------------------------------------

def detect_cone(G, D, n):
    """Cone(tint, base, apex) if G restricted to D is a cone, else None."""
    D = list(D)
    if len(D) != n:
        return None
    for z in D:
        rest = [x for x in D if x != z]
        cols = {x: G.edge(x, z) for x in rest}
        if not all(is_green(c) for c in cols.values()):
            continue
        zeros = [x for x in rest if cols[x][0] == "g0"]
        if len(zeros) != 1:
            continue
        base = [zeros[0]]
        ok = True
        for j in range(1, n - 1):
            hit = [x for x in rest if cols[x] == g(j)]
            if len(hit) != 1:
                ok = False
                break
            base.append(hit[0])
        if not ok or len(set(base)) != n - 1:
            continue
        if any(is_green(G.edge(x, y)) for x, y in itertools.combinations(rest, 2)):
            continue
        return Cone(cols[zeros[0]][1], tuple(base), z)
    return None


def has_green(G, nodes):
    return any(is_green(G.edge(x, y)) for x, y in itertools.combinations(nodes, 2))


def in_class_J(G, n):
    """Membership in J with a list of (rule, witness) failures."""
    bad = []
    nodes = G.nodes
    for x, y in itertools.permutations(nodes, 2):
        if (x, y) not in G.edges:
            bad.append(("complete", (x, y)))
        elif (y, x) in G.edges and G.edges[x, y] != converse(G.edges[y, x]):
            bad.append(("converse", (x, y)))
    if bad:
        return Verdict(False, bad)
    for p, q, s in itertools.combinations(nodes, 3):
        hit, rule = is_forbidden_triple(G.edges[p, q], G.edges[q, s], G.edges[p, s])
        if hit:
            bad.append((rule, (p, q, s)))
    for t in G.shades:
        if len(t) != n - 1 or len(set(t)) != n - 1 or not set(t) <= set(nodes):
            bad.append(("shade-domain", t))
    for t in itertools.permutations(nodes, n - 1):
        green = has_green(G, t)
        if green and t in G.shades:
            bad.append(("shade-on-green", t))
        if not green and t not in G.shades:
            bad.append(("shade-missing", t))
    for D in itertools.combinations(nodes, n):
        cone = detect_cone(G, D, n)
        if cone is not None:
            s = G.shades.get(cone.base)
            if s is None or not shade_contains(s, cone.tint):
                bad.append(("cone-shade", cone))
    return Verdict(not bad, bad)


def cones_on(G, base, n):
    """All cones in G whose base (in order) is the given tuple."""
    out = []
    for z in G.nodes:
        if z in base:
            continue
        c = detect_cone(G, tuple(base) + (z,), n)
        if c is not None and c.base == tuple(base):
            out.append(c)
    return out


def required_tints(G, base, n):
    return {c.tint for c in cones_on(G, base, n)}


# ---- rainbow atoms -------------------------------------------------------------

def _patterns(n, m):
    """Surjections n -> m in first-appearance normal form."""
    out = []

    def go(prefix, top):
        if len(prefix) == n:
            if top + 1 == m:
                out.append(tuple(prefix))
            return
        for v in range(min(top + 2, m)):
            go(prefix + [v], max(top, v))

    go([], -1)
    return out


def _labelled_graphs(sig, m):
    """All J-graphs on nodes 0..m-1 (edges oriented low to high)."""
    n = sig.n
    pairs = list(itertools.combinations(range(m), 2))
    colours = sig.edge_colours
    graphs = []

    def edges_rec(k, G):
        if k == len(pairs):
            _shade_rec(G)
            return
        x, y = pairs[k]
        for c in colours:
            G.set_edge(x, y, c, converse)
            ok = True
            for z in range(y):
                if z == x:
                    continue
                p, q, s = sorted((x, y, z))
                if all((u, v) in G.edges for u, v in ((p, q), (q, s), (p, s))):
                    if is_forbidden_triple(G.edges[p, q], G.edges[q, s], G.edges[p, s])[0]:
                        ok = False
                        break
            if ok:
                edges_rec(k + 1, G)
        del G.edges[x, y], G.edges[y, x]

    def _shade_rec(G):
        tuples = [t for t in itertools.permutations(range(m), n - 1) if not has_green(G, t)]
        choices = []
        for t in tuples:
            need = required_tints(G, t, n) if m >= n else set()
            choices.append([s for s in sig.shades if all(shade_contains(s, i) for i in need)])
        for pick in itertools.product(*choices):
            graphs.append(ColouredGraph(range(m), G.edges, dict(zip(tuples, pick))))

    edges_rec(0, ColouredGraph(range(m)))
    return graphs


def rainbow_atoms(sig, limit=400000):
    """One canonical surjection per equivalence class, for graphs of at most n nodes."""
    n = sig.n
    est = sum(len(sig.edge_colours) ** (m * (m - 1) // 2) * len(sig.shades) ** (m * (m - 1) if m >= n - 1 else 0)
              for m in range(1, n + 1))
    if est > limit * 50:
        raise SizeGuardError(f"rainbow enumeration estimate {est} exceeds guard")
    atoms = []
    for m in range(1, n + 1):
        pats = _patterns(n, m)
        for G in _labelled_graphs(sig, m):
            for p in pats:
                atoms.append(graph_atom(G, p))
                if len(atoms) > limit:
                    raise SizeGuardError(f"more than {limit} rainbow atoms")
    return atoms


def _diag(i, j, a):
    return a.pattern[i] == a.pattern[j]


def _structure(n, atoms, name):
    def key(i, a):
        return restrict_atom(a, [p for p in range(n) if p != i])

    def substitute(a, sigma):
        return graph_atom(atom_graph(a), tuple(a.pattern[sigma[k]] for k in range(n)))

    return CaAtomStructure(n, atoms, _diag, key, substitute=substitute, name=name)


def rainbow_atom_structure(sig, limit=400000):
    return _structure(sig.n, rainbow_atoms(sig, limit), f"rainbow(n={sig.n},z={sig.zmax},r={sig.nmax})")


def rainbow_rules(n):
    """Rule-defined rainbow structure over all graph atoms (no atom list)."""
    return _structure(n, None, f"rainbow(n={n})")


# ---- random J graphs ---------------------------------------------------------

def random_J_graph(sig, size, rng, kinds=None, tries=200):
    """Random member of J on nodes 0..size-1, edges coloured greedily, shades per cones."""
    n = sig.n
    kinds = kinds or ["g", "g0", "w", "wf", "y", "b", "r"]
    by_kind = {}
    for c in sig.edge_colours:
        by_kind.setdefault(c[0], []).append(c)
    kinds = [k for k in kinds if k in by_kind]
    for _ in range(tries):
        G = ColouredGraph(range(size))
        ok = True
        for x, y in itertools.combinations(range(size), 2):
            placed = False
            for _ in range(30):
                c = rng.choice(by_kind[rng.choice(kinds)])
                G.set_edge(x, y, c, converse)
                if _triangles_ok(G, x, y):
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if not ok:
            continue
        for t in itertools.permutations(range(size), n - 1):
            if has_green(G, t):
                continue
            need = required_tints(G, t, n)
            options = [s for s in sig.shades if all(shade_contains(s, i) for i in need)]
            G.shades[t] = rng.choice(options)
        return G
    raise RuntimeError("could not build a J graph")


def _triangles_ok(G, x, y):
    for z in G.nodes:
        if z in (x, y) or (x, z) not in G.edges or (y, z) not in G.edges:
            continue
        p, q, s = sorted((x, y, z))
        if is_forbidden_triple(G.edges[p, q], G.edges[q, s], G.edges[p, s])[0]:
            return False
    return True


def graph_to_json(G):
    return json.dumps({
        "nodes": list(G.nodes),
        "edges": [[x, y, fmt(c)] for (x, y), c in sorted(G.edges.items()) if x < y],
        "shades": [[list(t), fmt(s)] for t, s in sorted(G.shades.items())],
    }, sort_keys=True)


def graph_from_json(text):
    obj = json.loads(text) if isinstance(text, str) else text
    G = ColouredGraph(obj["nodes"])
    for x, y, c in obj["edges"]:
        G.set_edge(x, y, parse(c), converse)
    for t, s in obj["shades"]:
        G.shades[tuple(t)] = parse(s)
    return G
