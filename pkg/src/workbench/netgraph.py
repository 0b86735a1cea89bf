"""Networks, hypernetworks and coloured graphs, with the translations between them."""
import itertools
import json
from collections import namedtuple

from .core import Verdict, Violation

SHORT, LONG = "short", "long"
FORALL, EXISTS = "ForAll", "Exists"

GraphAtom = namedtuple("GraphAtom", "pattern edges shades")


class IllDefined(ValueError):
    def __init__(self, msg, witnesses=()):
        super().__init__(msg)
        self.witnesses = witnesses


class AmalgamationError(ValueError):
    pass


def _ck(c):
    return repr(c)


class ColouredGraph:
    """Labelled graph: ordered edge labels (both orientations stored) and shades on tuples."""

    def __init__(self, nodes=(), edges=None, shades=None):
        self.nodes = tuple(sorted(set(nodes)))
        self.edges = dict(edges or {})
        self.shades = dict(shades or {})

    def copy(self):
        return ColouredGraph(self.nodes, self.edges, self.shades)

    def __eq__(self, other):
        return (isinstance(other, ColouredGraph) and self.nodes == other.nodes
                and self.edges == other.edges and self.shades == other.shades)

    def __repr__(self):
        return f"ColouredGraph({len(self.nodes)} nodes, {len(self.edges) // 2} edges, {len(self.shades)} shades)"

    def edge(self, x, y):
        return self.edges.get((x, y))

    def set_edge(self, x, y, colour, converse):
        self.edges[x, y] = colour
        self.edges[y, x] = converse(colour)

    def add_node(self, x):
        if x not in self.nodes:
            self.nodes = tuple(sorted(self.nodes + (x,)))

    def is_complete(self):
        return all((x, y) in self.edges for x in self.nodes for y in self.nodes if x != y)

    def restrict(self, nodes):
        keep = set(nodes) & set(self.nodes)
        return ColouredGraph(
            keep,
            {k: v for k, v in self.edges.items() if k[0] in keep and k[1] in keep},
            {k: v for k, v in self.shades.items() if set(k) <= keep},
        )

    def relabel(self, mapping):
        """Graph with node x renamed mapping[x] (mapping injective on nodes)."""
        return ColouredGraph(
            [mapping[x] for x in self.nodes],
            {(mapping[a], mapping[b]): c for (a, b), c in self.edges.items()},
            {tuple(mapping[v] for v in t): s for t, s in self.shades.items()},
        )

    def key(self):
        return (self.nodes, tuple(sorted(self.edges.items(), key=_ck)), tuple(sorted(self.shades.items(), key=_ck)))


class Network:
    """Map from n-tuples of nodes to atoms."""

    def __init__(self, n, nodes, label):
        self.n = n
        self.nodes = tuple(sorted(set(nodes)))
        self.label = dict(label)

    def __call__(self, *tup):
        return self.label[tuple(tup)]

    def __eq__(self, other):
        return isinstance(other, Network) and self.n == other.n and self.nodes == other.nodes and self.label == other.label

    def __repr__(self):
        return f"Network(n={self.n}, {len(self.nodes)} nodes)"

    def restrict(self, nodes):
        keep = set(nodes) & set(self.nodes)
        return Network(self.n, keep, {t: a for t, a in self.label.items() if set(t) <= keep})


class Hypernetwork:
    """A network (or coloured graph standing for one) plus hyperlabels on node sequences.

    Hyperlabels are stored for sequences of distinct nodes up to length ``arity``.
    """

    def __init__(self, net, hyper=None, n=None, arity=None):
        self.net = net
        self.n = n if n is not None else getattr(net, "n", None)
        self.hyper = dict(hyper or {})
        self.arity = arity if arity is not None else (self.n + 1 if self.n else 0)

    @property
    def nodes(self):
        return self.net.nodes

    def copy(self):
        net = self.net.copy() if isinstance(self.net, ColouredGraph) else self.net
        return Hypernetwork(net, self.hyper, self.n, self.arity)

    def sequences(self, nodes=None):
        nodes = self.nodes if nodes is None else nodes
        for m in range(1, self.arity + 1):
            yield from itertools.permutations(nodes, m)

    def restrict(self, nodes):
        keep = set(nodes) & set(self.nodes)
        return Hypernetwork(self.net.restrict(keep),
                            {s: h for s, h in self.hyper.items() if set(s) <= keep}, self.n, self.arity)


class OwnershipLedger:
    """Owner of every irreflexive edge and envelope of every long hyperedge."""

    def __init__(self, owner=None, envelope=None):
        self.owner = dict(owner or {})
        self.envelope = dict(envelope or {})

    def copy(self):
        return OwnershipLedger(self.owner, self.envelope)

    def own(self, x, y, who):
        self.owner[frozenset((x, y))] = who

    def owner_of(self, x, y):
        return self.owner.get(frozenset((x, y)))


# ---------------------------------------------------------------------------
# network laws and translations
# ---------------------------------------------------------------------------

def validate_network(N, s):
    """Both network laws over every tuple; empty list means valid."""
    report = []
    n = N.n
    nodes = N.nodes
    for d in itertools.product(nodes, repeat=n):
        if d not in N.label:
            report.append(Violation("total", d))
            continue
    if report:
        return report
    for d, a in N.label.items():
        for i in range(n):
            for j in range(n):
                if d[i] == d[j] and not s.diag(i, j, a):
                    report.append(Violation("diagonal", (d, i, j)))
            key = s.cyl_key(i, a)
            for x in nodes:
                e = d[:i] + (x,) + d[i + 1:]
                if s.cyl_key(i, N.label[e]) != key:
                    report.append(Violation("cylindrifier", (d, i, x)))
    return report


def graph_atom(G, tup):
    """Canonical representative of the surjection k -> G restricted to the image of tup."""
    ren = {}
    for x in tup:
        if x not in ren:
            ren[x] = len(ren)
    order = list(ren)
    pattern = tuple(ren[x] for x in tup)
    edges = tuple(((ren[x], ren[y]), G.edges[x, y]) for x in order for y in order if x != y and (x, y) in G.edges)
    shades = tuple(sorted(((tuple(ren[v] for v in t), s) for t, s in G.shades.items() if all(v in ren for v in t)),
                          key=_ck))
    return GraphAtom(pattern, edges, shades)


def atom_graph(a):
    """The coloured graph of an atom, on nodes 0..m-1."""
    m = max(a.pattern) + 1
    return ColouredGraph(range(m), dict(a.edges), dict(a.shades))


def restrict_atom(a, positions):
    """Atom of the sub-surjection on the given positions."""
    G = atom_graph(a)
    return graph_atom(G, tuple(a.pattern[p] for p in positions))


def network_of_graph(G, n, check=True):
    """N_G: every n-tuple labelled by the atom it induces."""
    if check:
        from .rainbow import in_class_J
        v = in_class_J(G, n)
        if not v:
            raise ValueError(f"graph not in class J: {v.items[:3]}")
    label = {t: graph_atom(G, t) for t in itertools.product(G.nodes, repeat=n)}
    return Network(n, G.nodes, label)


def graph_of_network(N):
    """Recover the coloured graph from a network over graph atoms."""
    n = N.n
    edges, shades = {}, {}
    wit_e, wit_s = {}, {}
    for z, a in N.label.items():
        emap = dict(a.edges)
        for i in range(n):
            for j in range(n):
                pi, pj = a.pattern[i], a.pattern[j]
                if pi == pj:
                    if z[i] != z[j]:
                        raise IllDefined("distinct nodes on a diagonal atom", [(z, i, j)])
                    continue
                if z[i] == z[j]:
                    raise IllDefined("equal nodes on an off-diagonal position", [(z, i, j)])
                if (pi, pj) not in emap:
                    continue
                key = (z[i], z[j])
                c = emap[pi, pj]
                if key in edges and edges[key] != c:
                    raise IllDefined(f"edge {key} coloured twice", [wit_e[key], (z, i, j)])
                edges[key] = c
                wit_e[key] = (z, i, j)
        smap = dict(a.shades)
        for pos in itertools.permutations(range(n), n - 1):
            pt = tuple(a.pattern[p] for p in pos)
            if len(set(pt)) < n - 1 or pt not in smap:
                continue
            key = tuple(z[p] for p in pos)
            if key in shades and shades[key] != smap[pt]:
                raise IllDefined(f"tuple {key} shaded twice", [wit_s[key], (z, pos)])
            shades[key] = smap[pt]
            wit_s[key] = (z, pos)
    return ColouredGraph(N.nodes, edges, shades)


# ---------------------------------------------------------------------------
# hyperedges
# ---------------------------------------------------------------------------

def node_equiv(N, x, y, zbar=None):
    """x ~ y: some tuple starting (x, y, ...) is labelled below d_01."""
    if isinstance(N, ColouredGraph):
        return x == y
    n = N.n
    zbar = (x,) * (n - 2) if zbar is None else tuple(zbar)
    a = N.label[(x, y) + zbar]
    return a.pattern[0] == a.pattern[1] if isinstance(a, GraphAtom) else N.diag(0, 1, a)


def classify_hyperedge(H, xs, zbar=None):
    """Short iff the sequence meets at most n classes of ~."""
    net = H.net if isinstance(H, Hypernetwork) else H
    n = H.n if isinstance(H, Hypernetwork) else net.n
    reps = []
    for x in dict.fromkeys(xs):
        if not any(node_equiv(net, x, r, zbar) for r in reps):
            reps.append(x)
    return SHORT if len(reps) <= n else LONG


def is_lambda_neat(H, lam0):
    bad = [s for s in H.sequences() if classify_hyperedge(H, s) == SHORT and H.hyper.get(s, lam0) != lam0]
    return Verdict(not bad, bad)


def apply_transformation(H, theta):
    """Pull back along a finite partial map theta (dict)."""
    theta = dict(theta)
    old = set(H.nodes)
    new = [x for x in theta if theta[x] in old]
    net = H.net
    if isinstance(net, ColouredGraph):
        G = ColouredGraph(new)
        for x in new:
            for y in new:
                if x != y and (theta[x], theta[y]) in net.edges:
                    G.edges[x, y] = net.edges[theta[x], theta[y]]
        for t in itertools.permutations(new, H.n - 1):
            img = tuple(theta[v] for v in t)
            if img in net.shades:
                G.shades[t] = net.shades[img]
        net2 = G
    else:
        net2 = Network(net.n, new, {t: net.label[tuple(theta[v] for v in t)]
                                    for t in itertools.product(new, repeat=net.n)})
    hyper = {}
    for m in range(1, H.arity + 1):
        for s in itertools.permutations(new, m):
            img = tuple(theta[v] for v in s)
            if img in H.hyper:
                hyper[s] = H.hyper[img]
    return Hypernetwork(net2, hyper, H.n, H.arity)


def check_partial_iso(M, N, theta):
    """Labels and hyperlabels preserved on dom(theta)."""
    theta = dict(theta)
    dom = [x for x in theta if x in set(M.nodes)]
    if any(theta[x] not in set(N.nodes) for x in dom):
        return False
    if len({theta[x] for x in dom}) < len(dom):
        return False
    m, nn = M.net, N.net
    if isinstance(m, ColouredGraph):
        for x in dom:
            for y in dom:
                if x != y and m.edges.get((x, y)) != nn.edges.get((theta[x], theta[y])):
                    return False
        for t in itertools.permutations(dom, M.n - 1):
            if m.shades.get(t) != nn.shades.get(tuple(theta[v] for v in t)):
                return False
    else:
        for t in itertools.product(dom, repeat=m.n):
            if m.label[t] != nn.label[tuple(theta[v] for v in t)]:
                return False
    for s in M.sequences(dom):
        if M.hyper.get(s) != N.hyper.get(tuple(theta[v] for v in s)):
            return False
    return True


def equivalent_on(M, N, nodes):
    """M restricted to nodes equals N restricted to nodes."""
    theta = {x: x for x in nodes}
    return check_partial_iso(M, N, theta) and check_partial_iso(N, M, theta)


def amalgamation_violation(M, N):
    """None if (M, N) is a legal amalgamation pair, else the reason."""
    overlap = sorted(set(M.nodes) & set(N.nodes))
    if not overlap:
        return "empty overlap"
    if not equivalent_on(M, N, overlap):
        return "M and N disagree on the overlap"
    base = {x: x for x in overlap}
    for m in set(M.nodes) - set(N.nodes):
        for k in set(N.nodes) - set(M.nodes):
            if check_partial_iso(M, N, {**base, m: k}):
                return f"cross pair ({m}, {k}) extends to a partial isomorphism"
    return None


def amalgamate(M, N):
    """Union of M and N over their common nodes; cross labels left undefined."""
    why = amalgamation_violation(M, N)
    if why is not None:
        raise AmalgamationError(why)
    m, nn = M.net, N.net
    if isinstance(m, ColouredGraph):
        net = ColouredGraph(set(m.nodes) | set(nn.nodes), {**nn.edges, **m.edges}, {**nn.shades, **m.shades})
    else:
        net = Network(m.n, set(m.nodes) | set(nn.nodes), {**nn.label, **m.label})
    return Hypernetwork(net, {**N.hyper, **M.hyper}, M.n, M.arity)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

DOT_COLOURS = {"g": "green", "g0": "darkgreen", "w": "gray", "wf": "gray", "y": "gold",
               "b": "black", "r": "red"}


def to_dot(G, fmt=str, name="G"):
    lines = [f"graph {name} {{"]
    for x in G.nodes:
        tags = [f"{fmt(s)}:{','.join(map(str, t))}" for t, s in sorted(G.shades.items(), key=_ck) if t[0] == x]
        label = f"{x}" + (f"<BR/><FONT POINT-SIZE=\"8\">{' '.join(tags)}</FONT>" if tags else "")
        lines.append(f'  {x} [label=<{label}>];')
    for (x, y), c in sorted(G.edges.items(), key=_ck):
        if x < y:
            kind = c[0] if isinstance(c, tuple) else str(c)
            lines.append(f'  {x} -- {y} [label="{fmt(c)}", color="{DOT_COLOURS.get(kind, "blue")}"];')
    lines.append("}")
    return "\n".join(lines)


def hypernetwork_to_json(H, fmt=str, parse=None):
    G = H.net
    return json.dumps({
        "n": H.n,
        "nodes": list(G.nodes),
        "edges": [[x, y, fmt(c)] for (x, y), c in sorted(G.edges.items(), key=_ck) if x < y],
        "shades": [[list(t), fmt(s)] for t, s in sorted(G.shades.items(), key=_ck)],
        "hyper": [[list(s), h] for s, h in sorted(H.hyper.items(), key=_ck)],
    }, sort_keys=True)


def hypernetwork_from_json(text, parse, converse):
    obj = json.loads(text)
    G = ColouredGraph(obj["nodes"])
    for x, y, c in obj["edges"]:
        G.set_edge(x, y, parse(c), converse)
    for t, s in obj["shades"]:
        G.shades[tuple(t)] = parse(s)
    hyper = {tuple(s): (tuple(h) if isinstance(h, list) else h) for s, h in obj["hyper"]}
    return Hypernetwork(G, hyper, obj["n"])
