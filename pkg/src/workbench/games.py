"""Games F^m and H_k over rainbow coloured graphs, scripted strategies, and the I-VI auditor."""
import itertools
import json
import random
from dataclasses import dataclass, field

from . import rainbow as rb
from .core import Verdict
from .netgraph import (
    EXISTS,
    FORALL,
    ColouredGraph,
    Hypernetwork,
    Network,
    OwnershipLedger,
    amalgamation_violation,
    apply_transformation,
    is_lambda_neat,
    to_dot,
)

LAM0 = "l0"
SEARCH_BUDGET = 20000


class RhoExhausted(ValueError):
    """No room left in the red-index range for the requested tint."""

    def __init__(self, msg, tint=None, rho=None):
        super().__init__(msg)
        self.tint = tint
        self.rho = dict(rho or {})


class TruncationExhausted(RuntimeError):
    """A scripted strategy ran past the signature bounds."""


# ---- moves -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Initial:
    graph: object = None
    atom: object = None


@dataclass(frozen=True, eq=False)
class Cylindrifier:
    """Face of n-1 nodes, new (or reused) node k, demanded label b, inserted at position l."""
    net: int
    face: tuple
    k: int
    b: object
    l: int = 0


@dataclass(frozen=True, eq=False)
class Transformation:
    net: int
    theta: tuple  # pairs (new node, old node)


@dataclass(frozen=True, eq=False)
class Amalgamation:
    left: int
    right: int


@dataclass
class Response:
    hyper: Hypernetwork
    ledger: OwnershipLedger
    rho: dict
    note: str = ""


@dataclass
class Resign:
    reason: str
    case: str
    truncation: bool = False


# ---- state -------------------------------------------------------------------

@dataclass
class GameState:
    kind: str                      # "F" or "H"
    n: int
    sig: object
    pebbles: int = None            # m for F^m
    rounds: int = None             # k for H_k
    history: list = field(default_factory=list)
    ledgers: list = field(default_factory=list)
    rho: dict = field(default_factory=dict)
    rho_history: list = field(default_factory=list)
    round: int = 0
    fresh: int = 0
    births: dict = field(default_factory=dict)
    forced_counts: bool = True
    anchor: int = None
    structure: object = None
    track_hyper: bool = True

    @property
    def rounds_remaining(self):
        return None if self.rounds is None else self.rounds - self.round

    @property
    def current(self):
        return self.history[-1]

    def gap(self, played=None):
        """Required spacing of rho once `played` rounds are over."""
        if self.kind != "H":
            return 1
        played = self.round if played is None else played
        return 3 ** max(self.rounds - played, 0)

    def fresh_label(self):
        self.fresh += 1
        return f"h{self.fresh}"

    def all_nodes(self):
        out = set()
        for H in self.history:
            out |= set(H.nodes)
        return out


def h_anchor(n, k):
    return (n - 1) * 3 ** (k + 1) // 2


def h_signature(n=3, k=3, zmax=2):
    """Signature with enough red indices for rho spacing over k rounds."""
    return rb.ColourSignature(n, zmax, 2 * h_anchor(n, k) + n * n * 3 ** (k + 1))


def new_state(kind, sig, pebbles=None, rounds=None, forced_counts=True, anchor=None):
    n = sig.n
    if kind == "F":
        pebbles = n + 2 if pebbles is None else pebbles
        anchor = sig.nmax if anchor is None else anchor
    elif kind == "H":
        if rounds is None:
            raise ValueError("H_k needs a round bound")
        anchor = h_anchor(n, rounds) if anchor is None else anchor
    else:
        raise ValueError(f"unknown game kind {kind!r}")
    return GameState(kind, n, sig, pebbles, rounds, forced_counts=forced_counts, anchor=anchor)


# ---- rho bookkeeping -----------------------------------------------------------

def extend_rho(rho, tints, r=0, horizon=None, gap=None, anchor=0, nmax=None):
    """Add tints to rho keeping it order preserving with range gaps >= 3^(horizon-r-1).

    New points go at max+gap above, min-gap below, or lo+gap between neighbours.
    """
    if gap is None:
        gap = 1 if horizon is None else 3 ** max(horizon - r - 1, 0)
    out = dict(rho)
    for t in sorted(set(tints) - set(out)):
        if not out:
            v = anchor
        else:
            lower = [i for i in out if i < t]
            upper = [i for i in out if i > t]
            if not upper:
                v = out[max(lower)] + gap
            elif not lower:
                v = out[min(upper)] - gap
            else:
                lo, hi = out[max(lower)], out[min(upper)]
                v = lo + gap
                if v > hi - gap:
                    raise RhoExhausted(f"no room for tint {t} between {lo} and {hi} with gap {gap}", t, out)
        if v < 0 or (nmax is not None and v > nmax):
            raise RhoExhausted(f"tint {t} would need red index {v}", t, out)
        out[t] = v
    return out


def rho_violations(rho, gap):
    bad = []
    items = sorted(rho.items())
    for (i, a), (j, b) in itertools.pairwise(items):
        if not a < b:
            bad.append(("order", (i, j)))
        elif b - a < gap:
            bad.append(("spacing", (i, j, b - a, gap)))
    return bad


def tints_of(G):
    return {c[1] for c in G.edges.values() if c[0] == "g0"}


# ---- graph helpers ---------------------------------------------------------

def _cone_at(G, base, apex):
    """Tint of the cone with this base order and apex, or None."""
    c = G.edge(base[0], apex)
    if c is None or c[0] != "g0":
        return None
    for j in range(1, len(base)):
        if G.edge(base[j], apex) != rb.g(j):
            return None
    for u, v in itertools.combinations(base, 2):
        e = G.edge(u, v)
        if e is None or rb.is_green(e):
            return None
    return c[1]


def cone_tints(G, base):
    return {t for z in G.nodes if z not in base for t in [_cone_at(G, base, z)] if t is not None}


def same_base_apexes(G, x, k, n):
    """(tint at x, tint at k, base) if x and k are apexes of cones on one base, else None."""
    common = [b for b in G.nodes if b not in (x, k) and rb.is_green(G.edge(b, x)) and rb.is_green(G.edge(b, k))]
    if len(common) < n - 1:
        return None
    for base in itertools.permutations(common, n - 1):
        p = _cone_at(G, base, x)
        if p is None:
            continue
        q = _cone_at(G, base, k)
        if q is not None:
            return p, q, base
    return None


def shade_new_tuples(G, n, is_new):
    """Yellow shades y_S, S the cone tints on that base, for unshaded non-green new tuples."""
    for t in itertools.permutations(G.nodes, n - 1):
        if t in G.shades or not is_new(t) or rb.has_green(G, t):
            continue
        G.shades[t] = rb.shade(cone_tints(G, t))


def _triangles_ok(G, x, y, c):
    for z in G.nodes:
        if z == x or z == y:
            continue
        a, b = G.edges.get((x, z)), G.edges.get((z, y))
        if a is None or b is None:
            continue
        if rb.is_forbidden_triple(a, b, c)[0]:
            return False
    return True


def _v_whites(G, x, k):
    """w_f choices forced by property V for the edge (x, k)."""
    out = []
    for a, b in ((x, k), (k, x)):
        for u, v in itertools.permutations(G.nodes, 2):
            red = G.edges.get((u, v))
            if red is None or red[0] != "r":
                continue
            ga, gb = G.edges.get((a, u)), G.edges.get((a, v))
            if ga is None or gb is None or ga[0] != "g0" or gb[0] != "g0":
                continue
            if G.edges.get((b, u)) == rb.Y and G.edges.get((b, v)) == rb.Y:
                f = {(ga[1], red[1]), (gb[1], red[2])}
                if rb.is_order_preserving(f):
                    out.append(rb.wf(sorted(f)))
    return out


def _yellow_tints(G, x, k):
    S = set()
    for z in G.nodes:
        a, b = G.edges.get((z, x)), G.edges.get((z, k))
        if a is None or b is None:
            continue
        for p, q in ((a, b), (b, a)):
            if p[0] == "g0" and q == rb.Y:
                S.add(p[1])
    return S


def _red_candidates(G, x, k, rho, nmax):
    """Reds for (x, k): V-derived, cone-derived and match-derived first, then a small fallback grid."""
    out = []
    for xp in G.nodes:
        a, b = G.edges.get((xp, x)), G.edges.get((xp, k))
        if a is None or b is None or a[0] != "g0" or b[0] != "g0":
            continue
        i, j = a[1], b[1]
        for yp in G.nodes:
            if G.edges.get((yp, x)) == rb.Y and G.edges.get((yp, k)) == rb.Y:
                e = G.edges.get((xp, yp))
                if e is not None and e[0] == "wf" and i in dict(e[1]) and j in dict(e[1]):
                    f = dict(e[1])
                    out.append(rb.r(f[i], f[j]))
        if i in rho and j in rho:
            out.append(rb.r(rho[i], rho[j]))
    for z in G.nodes:
        a, b = G.edges.get((x, z)), G.edges.get((z, k))
        if a is not None and b is not None and a[0] == "r" and b[0] == "r" and a[2] == b[1]:
            out.append(rb.r(a[1], b[2]))
    if nmax <= 12:
        vals = range(nmax + 1)
    else:
        vals = {0, nmax} | set(rho.values()) | {v for c in out for v in c[1:]}
        vals = sorted(v for v in vals | {v + d for v in vals for d in (-1, 1)} if 0 <= v <= nmax)
    out += [rb.r(i, j) for i in vals for j in vals]
    return out


def edge_candidates(G, x, k, rho, sig):
    """Ordered colour choices for the new edge (x, k): whites, then black, then reds."""
    n = sig.n
    out = []
    apex = same_base_apexes(G, x, k, n)
    if apex is not None:
        p, q, _ = apex
        if p in rho and q in rho:
            out.append(rb.r(rho[p], rho[q]))
    else:
        out += _v_whites(G, x, k)
        S = sorted(_yellow_tints(G, x, k))
        if len(S) <= 2:
            if all(i in rho for i in S):
                out.append(rb.wf([(i, rho[i]) for i in S]))
            out.append(rb.wf(list(zip(S, range(len(S))))))
        out += [rb.W, rb.B]
    out += _red_candidates(G, x, k, rho, sig.nmax)
    seen, res = set(), []
    for c in out:
        if c not in seen and sig.in_bounds(c):
            seen.add(c)
            res.append(c)
    return res


def label_edges(G, pairs, rho, sig, budget=SEARCH_BUDGET):
    """Depth-first choice of colours for the new pairs so every triangle stays allowed.

    Returns the completed graph or None when the search fails or runs out of budget.
    """
    G = G.copy()
    pairs = list(pairs)
    steps = [0]

    def go(idx):
        if idx == len(pairs):
            return True
        x, k = pairs[idx]
        for c in edge_candidates(G, x, k, rho, sig):
            steps[0] += 1
            if steps[0] > budget:
                return False
            if not _triangles_ok(G, x, k, c):
                continue
            G.set_edge(x, k, c, rb.converse)
            if go(idx + 1):
                return True
            del G.edges[x, k], G.edges[k, x]
        return False

    return G if go(0) else None


def _long_sequences(nodes, n, must=None):
    for s in itertools.permutations(sorted(nodes), n + 1):
        if must is None or any(v in must for v in s):
            yield s


# ---- legality ----------------------------------------------------------------

def _graph_form(state):
    return state.structure is None


def legal_forall_move(state, mv):
    """(legal, reason) for a move by the universal player."""
    n = state.n
    if isinstance(mv, Initial):
        if state.history:
            return False, "initial move after the start"
        if _graph_form(state):
            G = mv.graph
            if not isinstance(G, ColouredGraph):
                return False, "initial move needs a coloured graph"
            if not 1 <= len(G.nodes) <= n:
                return False, "initial graph must have between 1 and n nodes"
            if state.pebbles is not None and any(not 0 <= x < state.pebbles for x in G.nodes):
                return False, "node outside the pebble range"
            v = rb.in_class_J(G, n)
            return (True, "ok") if v else (False, f"initial graph not in J: {v.items[:2]}")
        return (mv.atom in state.structure.atoms, "ok") if state.structure.atoms is not None else (True, "ok")
    if not state.history:
        return False, "no network played yet"
    if isinstance(mv, Cylindrifier):
        if not 0 <= mv.net < len(state.history):
            return False, "no such network"
        if state.kind == "F" and mv.net != len(state.history) - 1:
            return False, "F^m moves act on the current network"
        N = state.history[mv.net]
        face = tuple(mv.face)
        if len(face) != n - 1 or len(set(face)) != n - 1:
            return False, "face must be n-1 distinct nodes"
        if not set(face) <= set(N.nodes):
            return False, "face not inside the network"
        if mv.k in face:
            return False, "new node lies in the face"
        if state.kind == "H" and mv.k in N.nodes:
            return False, "H_k needs a new node"
        if state.kind == "F" and not 0 <= mv.k < state.pebbles:
            return False, f"node {mv.k} outside the {state.pebbles} pebbles"
        if _graph_form(state):
            phi = mv.b
            if not isinstance(phi, ColouredGraph) or set(phi.nodes) != set(face) | {mv.k}:
                return False, "demanded graph must live on face plus k"
            old = N.net.restrict(face)
            if phi.restrict(face) != old:
                return False, "demanded graph disagrees with the face"
            v = rb.in_class_J(phi, n)
            return (True, "ok") if v else (False, f"demanded graph not in J: {v.items[:2]}")
        s = state.structure
        tup = face[:mv.l] + (face[0],) + face[mv.l:]
        if s.cyl_key(mv.l, mv.b) != s.cyl_key(mv.l, N.net.label[tup]):
            return False, "demanded atom not below the cylindrification"
        return True, "ok"
    if isinstance(mv, Transformation):
        if state.kind != "H":
            return False, "transformation moves belong to H_k"
        if not 0 <= mv.net < len(state.history):
            return False, "no such network"
        theta = dict(mv.theta)
        if not theta or len(theta) != len(mv.theta):
            return False, "theta must be a nonempty function"
        if len(set(theta.values())) != len(theta):
            return False, "theta must be injective"
        if not set(theta.values()) <= set(state.history[mv.net].nodes):
            return False, "theta must map into the network"
        return True, "ok"
    if isinstance(mv, Amalgamation):
        if state.kind != "H":
            return False, "amalgamation moves belong to H_k"
        if not (0 <= mv.left < len(state.history) and 0 <= mv.right < len(state.history)):
            return False, "no such network"
        why = amalgamation_violation(state.history[mv.left], state.history[mv.right])
        return (True, "ok") if why is None else (False, why)
    return False, f"unknown move {mv!r}"


# ---- the existential player ---------------------------------------------------------

def _initial_response(state, mv):
    G = mv.graph.copy()
    H = Hypernetwork(G, {}, state.n)
    ledger = OwnershipLedger()
    for x, y in itertools.combinations(G.nodes, 2):
        ledger.own(x, y, FORALL)
    return H, ledger


def _rho_update(state, G, strict, played):
    """Extend rho for the tints of G; F games tolerate exhaustion."""
    new = tints_of(G) - set(state.rho)
    if not new:
        return dict(state.rho), None
    try:
        return extend_rho(state.rho, new, gap=state.gap(played), anchor=state.anchor,
                          nmax=state.sig.nmax), None
    except RhoExhausted as e:
        if strict:
            return None, e
        return dict(e.rho), e


def strategy_exists(state, mv):
    """The scripted existential response to a legal move (graph form)."""
    n = state.n
    strict = state.kind == "H"
    if isinstance(mv, Initial):
        H, ledger = _initial_response(state, mv)
        rho, err = _rho_update(state, H.net, strict, state.round)
        if rho is None:
            return Resign(str(err), "rho", truncation=True)
        return Response(H, ledger, rho)

    if isinstance(mv, Cylindrifier):
        N = state.history[mv.net]
        led = state.ledgers[mv.net]
        keep = [x for x in N.nodes if x != mv.k]
        G = N.net.restrict(keep)
        G.add_node(mv.k)
        G.edges.update(mv.b.edges)
        G.shades.update(mv.b.shades)
        rho, err = _rho_update(state, G, strict, state.round + 1)
        if rho is None:
            return Resign(str(err), "rho", truncation=True)
        pairs = [(x, mv.k) for x in keep if x not in mv.face]
        M = label_edges(G, pairs, rho, state.sig)
        if M is None:
            return Resign("no colour choice keeps every triangle allowed", "cylindrifier")
        phi_nodes = set(mv.face) | {mv.k}
        shade_new_tuples(M, n, lambda t: mv.k in t and not set(t) <= phi_nodes)
        ledger = OwnershipLedger({p: w for p, w in led.owner.items() if mv.k not in p},
                                 {s: e for s, e in led.envelope.items() if mv.k not in s})
        for f in mv.face:
            ledger.own(f, mv.k, FORALL)
        for x, _ in pairs:
            ledger.own(x, mv.k, EXISTS)
        hyper = {s: h for s, h in N.hyper.items() if mv.k not in s}
        if state.kind == "H" and state.track_hyper:
            env = frozenset(M.nodes)
            for s in _long_sequences(M.nodes, n, must={mv.k}):
                hyper[s] = state.fresh_label()
                ledger.envelope[s] = env
        return Response(Hypernetwork(M, hyper, n), ledger, rho)

    if isinstance(mv, Transformation):
        N = state.history[mv.net]
        led = state.ledgers[mv.net]
        theta = dict(mv.theta)
        H = apply_transformation(N, theta)
        inv = {}
        for new, old in theta.items():
            inv.setdefault(old, []).append(new)
        ledger = OwnershipLedger()
        for x, y in itertools.combinations(H.nodes, 2):
            w = led.owner_of(theta[x], theta[y])
            if w is not None:
                ledger.own(x, y, w)
        for s in H.hyper:
            env = led.envelope.get(tuple(theta[v] for v in s))
            if env is not None:
                ledger.envelope[s] = frozenset(x for x in H.nodes if theta[x] in env)
        return Response(H, ledger, dict(state.rho), note="forced")

    if isinstance(mv, Amalgamation):
        Mh, Nh = state.history[mv.left], state.history[mv.right]
        lm, ln = state.ledgers[mv.left], state.ledgers[mv.right]
        mn, nn = set(Mh.nodes), set(Nh.nodes)
        G = ColouredGraph(mn | nn, {**Nh.net.edges, **Mh.net.edges}, {**Nh.net.shades, **Mh.net.shades})
        pairs = [(i, j) for i in sorted(mn - nn) for j in sorted(nn - mn)]
        L = label_edges(G, pairs, state.rho, state.sig)
        if L is None:
            return Resign("no colour choice keeps every triangle allowed", "amalgamation")
        shade_new_tuples(L, n, lambda t: not set(t) <= mn and not set(t) <= nn)
        ledger = OwnershipLedger()
        for x, y in itertools.combinations(sorted(L.nodes), 2):
            owners = {lm.owner_of(x, y), ln.owner_of(x, y)}
            ledger.own(x, y, FORALL if FORALL in owners else EXISTS)
        hyper = {}
        env_all = frozenset(L.nodes)
        for s in (_long_sequences(L.nodes, n) if state.track_hyper else ()):
            if set(s) <= mn and s in Mh.hyper:
                hyper[s] = Mh.hyper[s]
                ledger.envelope[s] = lm.envelope.get(s, frozenset(mn))
            elif set(s) <= nn and s in Nh.hyper:
                hyper[s] = Nh.hyper[s]
                ledger.envelope[s] = ln.envelope.get(s, frozenset(nn))
            else:
                hyper[s] = state.fresh_label()
                ledger.envelope[s] = env_all
        return Response(Hypernetwork(L, hyper, n), ledger, dict(state.rho))

    raise TypeError(f"unknown move {mv!r}")


def strategy_exists_greedy(state, mv):
    """Least admissible colour for every new edge, ignoring the red-for-apexes rule."""
    if not isinstance(mv, Cylindrifier):
        return strategy_exists(state, mv)
    N = state.history[mv.net]
    keep = [x for x in N.nodes if x != mv.k]
    G = N.net.restrict(keep)
    G.add_node(mv.k)
    G.edges.update(mv.b.edges)
    G.shades.update(mv.b.shades)
    menu = [rb.W, rb.wf(()), rb.B] + [rb.r(i, j) for i in range(state.sig.nmax + 1) for j in range(state.sig.nmax + 1)]
    for x in keep:
        if x in mv.face:
            continue
        for c in menu:
            if _triangles_ok(G, x, mv.k, c):
                G.set_edge(x, mv.k, c, rb.converse)
                break
        else:
            return Resign("greedy search found no colour", "cylindrifier")
    phi_nodes = set(mv.face) | {mv.k}
    shade_new_tuples(G, state.n, lambda t: mv.k in t and not set(t) <= phi_nodes)
    led = state.ledgers[mv.net]
    ledger = OwnershipLedger({p: w for p, w in led.owner.items() if mv.k not in p})
    for x in keep:
        ledger.own(x, mv.k, FORALL if x in mv.face else EXISTS)
    return Response(Hypernetwork(G, {}, state.n), ledger, dict(state.rho))


# ---- response checking ---------------------------------------------------------

def response_violation(state, mv, resp):
    """None if resp is a legal answer to mv, else the reason."""
    n = state.n
    H = resp.hyper
    G = H.net
    v = rb.in_class_J(G, n)
    if not v:
        return f"response not in J: {v.items[:2]}"
    if not is_lambda_neat(H, LAM0):
        return "response not lambda0-neat"
    if isinstance(mv, Initial):
        return None if G == mv.graph else "initial response differs from the demanded graph"
    if isinstance(mv, Cylindrifier):
        N = state.history[mv.net]
        keep = [x for x in N.nodes if x != mv.k]
        if set(G.nodes) != set(keep) | {mv.k}:
            return "cylindrifier response has the wrong nodes"
        if G.restrict(keep) != N.net.restrict(keep):
            return "response changes the old network"
        if G.restrict(set(mv.face) | {mv.k}) != mv.b:
            return "response does not realise the demanded graph"
        return None
    if isinstance(mv, Transformation):
        want = apply_transformation(state.history[mv.net], dict(mv.theta))
        return None if (G == want.net and H.hyper == want.hyper) else "transformation answered wrongly"
    if isinstance(mv, Amalgamation):
        M, N = state.history[mv.left], state.history[mv.right]
        if set(G.nodes) != set(M.nodes) | set(N.nodes):
            return "amalgam has the wrong nodes"
        if G.restrict(M.nodes) != M.net or G.restrict(N.nodes) != N.net:
            return "amalgam does not extend both networks"
        return None
    return "unknown move"


# ---- audit --------------------------------------------------------------------------

def _local_iso(M, N, envM, envN, xs, ys):
    """A label-preserving injection envM -> envN sending xs to ys, if one exists."""
    fixed = dict(zip(xs, ys))
    if len(set(fixed.values())) != len(fixed):
        return None
    rest = sorted(set(envM) - set(fixed))
    targets = sorted(set(envN) - set(fixed.values()))
    GM, GN = M.net, N.net

    def ok(theta, x):
        for y in theta:
            if y != x and GM.edges.get((x, y)) != GN.edges.get((theta[x], theta[y])):
                return False
        return True

    if not all(ok(fixed, x) for x in fixed):
        return None

    def go(i, theta, used):
        if i == len(rest):
            return dict(theta)
        x = rest[i]
        for t in targets:
            if t in used:
                continue
            theta[x] = t
            if ok(theta, x):
                res = go(i + 1, theta, used | {t})
                if res is not None:
                    return res
            del theta[x]
        return None

    return go(0, dict(fixed), set(fixed.values()))


def audit_properties(state, claims=True, claim_cap=200):
    """Per-property witnesses for I-VI on the latest network (empty list = pass)."""
    n = state.n
    H = state.current
    G = H.net
    led = state.ledgers[-1]
    rep = {p: [] for p in ("I", "II", "III", "IV", "V", "VI")}
    for (x, y), c in G.edges.items():
        if x < y and (rb.is_green(c) or c == rb.Y) and led.owner_of(x, y) != FORALL:
            rep["I"].append((x, y, rb.fmt(c)))
    for a, b in zip(state.rho_history, state.rho_history[1:]):
        if any(a[t] != b.get(t) for t in a):
            rep["II"].append(("shrinks", sorted(a.items()), sorted(b.items())))
    seen = set()
    for Hs in state.history:
        seen |= tints_of(Hs.net)
    if set(state.rho) != seen:
        rep["III"].append(("domain", sorted(state.rho), sorted(seen)))
    rep["IV"] = rho_violations(state.rho, state.gap())
    for (u, v), red in G.edges.items():
        if red[0] != "r" or led.owner_of(u, v) != EXISTS:
            continue
        mu, de = red[1], red[2]
        for x in G.nodes:
            a, b = G.edges.get((x, u)), G.edges.get((x, v))
            if a is None or b is None or a[0] != "g0" or b[0] != "g0":
                continue
            i, j = a[1], b[1]
            for y in G.nodes:
                if y == x or G.edges.get((y, u)) != rb.Y or G.edges.get((y, v)) != rb.Y:
                    continue
                e = G.edges.get((x, y))
                if e is not None and e[0] == "wf":
                    f = dict(e[1])
                    if f.get(i) != mu or f.get(j) != de:
                        rep["V"].append(("b", (u, v, x, y)))
                elif state.rho.get(i) != mu or state.rho.get(j) != de:
                    rep["V"].append(("a", (u, v, x, y)))
    vj = rb.in_class_J(G, n)
    if not vj:
        rep["VI"] += [("J",) + tuple(vj.items[:3])]
    if not is_lambda_neat(H, LAM0):
        rep["VI"].append(("not lambda0-neat",))
    if claims and state.kind == "H":
        rep.update(audit_claim(state, cap=claim_cap))
    return rep


def audit_claim(state, cap=200):
    """The three ownership/envelope claim items for the latest network."""
    n = state.n
    H = state.current
    led = state.ledgers[-1]
    out = {"claim1": [], "claim2": [], "claim3": []}
    by_label = {}
    for s, h in H.hyper.items():
        by_label.setdefault(h, []).append(s)
    for s, h in H.hyper.items():
        env = led.envelope.get(s, frozenset(H.nodes))
        for t in by_label[h]:
            if t != s and set(t) <= env:
                out["claim1"].append((s, t))
    checked = 0
    for idx, Hp in enumerate(state.history[:-1]):
        lp = state.ledgers[idx]
        index = {}
        for s, h in Hp.hyper.items():
            index.setdefault(h, []).append(s)
        for s, h in sorted(H.hyper.items()):
            for t in index.get(h, ()):
                if checked >= cap:
                    break
                checked += 1
                envM = led.envelope.get(s, frozenset(H.nodes))
                envN = lp.envelope.get(t, frozenset(Hp.nodes))
                if _local_iso(H, Hp, envM, envN, s, t) is None:
                    out["claim2"].append((s, idx, t))
    for s in H.hyper:
        env = led.envelope.get(s, frozenset(H.nodes))
        for x in H.nodes:
            if x in env:
                continue
            S = [y for y in env if led.owner_of(x, y) == FORALL]
            if len(S) > n - 1:
                out["claim3"].append((s, x, tuple(sorted(S))))
    return out


def audit_ok(rep):
    return all(not v for v in rep.values())


# ---- the universal player -------------------------------------------------------------

def zeroth_graph(n, base_shade=None):
    """0-cone on base 0..n-2 with apex n-1, whites on the base."""
    G = ColouredGraph(range(n))
    for i, j in itertools.combinations(range(n - 1), 2):
        G.set_edge(i, j, rb.W, rb.converse)
    for i in range(1, n - 1):
        G.set_edge(i, n - 1, rb.g(i), rb.converse)
    G.set_edge(0, n - 1, rb.g0(0), rb.converse)
    for t in itertools.permutations(range(n), n - 1):
        if not rb.has_green(G, t):
            G.shades[t] = rb.shade(rb.ALL) if base_shade is None or t != tuple(range(n - 1)) else base_shade
    return G


def cone_demand(G, face, k, tint):
    """The graph on face + k making k the apex of a tint-cone on face."""
    phi = G.restrict(face)
    phi.add_node(k)
    phi.set_edge(face[0], k, rb.g0(tint), rb.converse)
    for j in range(1, len(face)):
        phi.set_edge(face[j], k, rb.g(j), rb.converse)
    return phi


def strategy_forall_rainbow(state, rng=None):
    """Zeroth move a 0-cone, then cones of tint -1, -2, ... on the base, reusing the oldest apex."""
    n = state.n
    if not state.history:
        return Initial(zeroth_graph(n))
    t = -state.round - 1
    if t < -state.sig.zmax:
        raise TruncationExhausted(f"tint {t} below -{state.sig.zmax}")
    G = state.current.net
    face = tuple(range(n - 1))
    free = [k for k in range(state.pebbles) if k not in G.nodes]
    if free:
        k = free[0]
    else:
        apexes = [x for x in G.nodes if x not in face]
        k = min(apexes, key=lambda x: (state.births.get(x, -1), x))
    return Cylindrifier(len(state.history) - 1, face, k, cone_demand(G.restrict(face), face, k, t))


def _menu_colour(sig, rng, kinds, red_top=4, wf_top=4):
    kind = rng.choice(kinds)
    if kind == "g":
        return rb.g(rng.randint(1, sig.n - 2))
    if kind == "g0":
        return rb.g0(rng.randint(-sig.zmax, sig.zmax))
    if kind == "wf":
        size = rng.randint(0, 2)
        dom = sorted(rng.sample(sig.tints, min(size, len(sig.tints))))
        vals = sorted(rng.sample(range(wf_top + 1), len(dom)))
        return rb.wf(list(zip(dom, vals)))
    if kind == "r":
        top = min(sig.nmax, red_top)
        return rb.r(rng.randint(0, top), rng.randint(0, top))
    return (kind,)


FORALL_KINDS = ("g", "g0", "g0", "w", "wf", "y", "y", "b", "r")


def random_demand(G, face, k, sig, rng, tries=50):
    """A random graph in J on face + k extending G on the face."""
    n = sig.n
    for _ in range(tries):
        phi = G.restrict(face)
        phi.add_node(k)
        for f in face:
            phi.set_edge(f, k, _menu_colour(sig, rng, FORALL_KINDS), rb.converse)
        for t in itertools.permutations(phi.nodes, n - 1):
            if k not in t or rb.has_green(phi, t):
                continue
            need = cone_tints(phi, t)
            phi.shades[t] = rb.shade(rb.ALL) if rng.random() < 0.3 else rb.shade(need)
        if rb.in_class_J(phi, n):
            return phi
    phi = G.restrict(face)
    phi.add_node(k)
    for f in face:
        phi.set_edge(f, k, rb.W, rb.converse)
    for t in itertools.permutations(phi.nodes, n - 1):
        if k in t and not rb.has_green(phi, t):
            phi.shades[t] = rb.shade(rb.ALL)
    return phi


def random_initial(sig, rng):
    n = sig.n
    for _ in range(100):
        G = ColouredGraph(range(n))
        for x, y in itertools.combinations(range(n), 2):
            G.set_edge(x, y, _menu_colour(sig, rng, FORALL_KINDS), rb.converse)
        for t in itertools.permutations(range(n), n - 1):
            if not rb.has_green(G, t):
                G.shades[t] = rb.shade(rb.ALL) if rng.random() < 0.3 else rb.shade(cone_tints(G, t))
        if rb.in_class_J(G, n):
            return G
    return zeroth_graph(n)


def strategy_forall_random(state, rng):
    """A random legal move: cylindrifier, injective transformation or maximal amalgamation."""
    n, sig = state.n, state.sig
    if not state.history:
        return Initial(random_initial(sig, rng))
    kinds = ["cyl"] * 3
    if state.kind == "H":
        kinds += ["theta", "amalg"]
    choice = rng.choice(kinds)
    if choice == "amalg":
        pairs = [(a, b) for a in range(len(state.history)) for b in range(len(state.history))
                 if a != b and set(state.history[a].nodes) - set(state.history[b].nodes)
                 and set(state.history[b].nodes) - set(state.history[a].nodes)]
        rng.shuffle(pairs)
        for a, b in pairs[:6]:
            mv = Amalgamation(a, b)
            if legal_forall_move(state, mv)[0]:
                return mv
        choice = "cyl"
    if choice == "theta":
        idx = rng.randrange(len(state.history))
        N = state.history[idx]
        dom = sorted(rng.sample(list(N.nodes), rng.randint(1, len(N.nodes))))
        top = max(state.all_nodes()) + 1
        theta = []
        for j, old in enumerate(dom):
            theta.append((old if rng.random() < 0.5 else top + j, old))
        return Transformation(idx, tuple(theta))
    if state.kind == "F":
        idx = len(state.history) - 1
    else:
        cands = [i for i, H in enumerate(state.history) if len(H.nodes) >= n - 1]
        idx = cands[-1] if rng.random() < 0.6 else rng.choice(cands)
    N = state.history[idx]
    G = N.net
    face = tuple(rng.sample(list(N.nodes), n - 1))
    if state.kind == "H":
        k = min(set(range(max(state.all_nodes()) + 2)) - state.all_nodes())
    else:
        free = [x for x in range(state.pebbles) if x not in face]
        k = rng.choice(free)
    red_faces = [f for f in itertools.permutations(G.nodes, n - 1)
                 if all(G.edges.get(e, ("?",))[0] == "r" for e in itertools.combinations(f, 2))]
    if red_faces and rng.random() < 0.5:
        face = rng.choice(red_faces)
    roll = rng.random()
    if roll < 0.15:
        phi = G.restrict(face)
        phi.add_node(k)
        for f in face:
            phi.set_edge(f, k, rb.g0(rng.randint(-sig.zmax, sig.zmax)), rb.converse)
        if rb.in_class_J(phi, n):
            return Cylindrifier(idx, face, k, phi)
    elif roll < 0.4:
        phi = _cone_demand_random(G, k, sig, rng)
        if phi is not None:
            return Cylindrifier(idx, phi[0], k, phi[1])
    elif roll < 0.6:
        phi = G.restrict(face)
        phi.add_node(k)
        for f in face:
            phi.set_edge(f, k, rb.Y, rb.converse)
        for t in itertools.permutations(phi.nodes, n - 1):
            if k in t and not rb.has_green(phi, t):
                phi.shades[t] = rb.shade(cone_tints(phi, t))
        if rb.in_class_J(phi, n):
            return Cylindrifier(idx, face, k, phi)
    return Cylindrifier(idx, face, k, random_demand(G, face, k, sig, rng))


def strategy_forall_probe(state, rng=None, tints=(0, -1), pair=(1, 0)):
    """Scripted prober for property V: two cones on one base, then green-zero and yellow
    demands on the face spanned by the two apexes, then random moves."""
    n = state.n
    if not state.history:
        return Initial(zeroth_graph(n))
    G = state.current.net
    idx = len(state.history) - 1
    k = min(set(range(max(state.all_nodes()) + 2)) - state.all_nodes())
    base = tuple(range(n - 1))
    step = state.round
    if step < len(tints) - 1:
        return Cylindrifier(idx, base, k, cone_demand(G.restrict(base), base, k, tints[step + 1]))
    apexes = [x for x in sorted(G.nodes) if x not in base and _cone_at(G, base, x) is not None]
    face = tuple(apexes[:n - 1])
    if len(face) == n - 1 and step in (len(tints) - 1, len(tints)):
        phi = G.restrict(face)
        phi.add_node(k)
        first = step == len(tints) - 1
        for f, t in zip(face, pair):
            phi.set_edge(f, k, rb.g0(t) if first else rb.Y, rb.converse)
        for t in itertools.permutations(phi.nodes, n - 1):
            if k in t and not rb.has_green(phi, t):
                phi.shades[t] = rb.shade(cone_tints(phi, t))
        if rb.in_class_J(phi, n):
            return Cylindrifier(idx, face, k, phi)
    return strategy_forall_random(state, rng or random.Random(step))


def _cone_demand_random(G, k, sig, rng):
    """A cone demand on a face that can carry one, preferring faces that are already cone bases."""
    n = sig.n
    faces = [f for f in itertools.permutations(G.nodes, n - 1) if f in G.shades]
    if not faces:
        return None
    based = [f for f in faces if cone_tints(G, f)]
    face = rng.choice(based if based and rng.random() < 0.7 else faces)
    S = G.shades[face][1]
    tints = sig.tints if S == rb.ALL else sorted(S)
    if not tints:
        return None
    phi = cone_demand(G.restrict(face), face, k, rng.choice(tints))
    for t in itertools.permutations(phi.nodes, n - 1):
        if k in t and not rb.has_green(phi, t):
            phi.shades[t] = rb.shade(cone_tints(phi, t))
    return (face, phi) if rb.in_class_J(phi, n) else None


# ---- engine ---------------------------------------------------------------------------

@dataclass
class Outcome:
    winner: str
    reason: str
    rounds: int
    transcript: list
    state: GameState
    dots: list = field(default_factory=list)

    def to_jsonl(self):
        return "\n".join(json.dumps(rec, sort_keys=True) for rec in self.transcript)


def move_to_json(mv):
    if isinstance(mv, Initial):
        return {"type": "initial", "graph": json.loads(rb.graph_to_json(mv.graph)) if mv.graph is not None else None,
                "atom": repr(mv.atom) if mv.atom is not None else None}
    if isinstance(mv, Cylindrifier):
        b = json.loads(rb.graph_to_json(mv.b)) if isinstance(mv.b, ColouredGraph) else repr(mv.b)
        return {"type": "cylindrifier", "net": mv.net, "face": list(mv.face), "k": mv.k, "b": b, "l": mv.l}
    if isinstance(mv, Transformation):
        return {"type": "transformation", "net": mv.net, "theta": [list(p) for p in mv.theta]}
    if isinstance(mv, Amalgamation):
        return {"type": "amalgamation", "left": mv.left, "right": mv.right}
    return {"type": "unknown"}


def response_diff(before, after, rho_before, rho_after):
    """Nodes, edges and shades that changed between two graphs, plus rho changes."""
    b = before if before is not None else ColouredGraph()
    return {
        "added_nodes": sorted(set(after.nodes) - set(b.nodes)),
        "removed_nodes": sorted(set(b.nodes) - set(after.nodes)),
        "edges": [[x, y, rb.fmt(c)] for (x, y), c in sorted(after.edges.items())
                  if x < y and b.edges.get((x, y)) != c],
        "shades": [[list(t), rb.fmt(s)] for t, s in sorted(after.shades.items()) if b.shades.get(t) != s],
        "rho": [[t, v] for t, v in sorted(rho_after.items()) if rho_before.get(t) != v],
    }


def _before(state, mv):
    if isinstance(mv, (Cylindrifier, Transformation)):
        return state.history[mv.net].net
    if isinstance(mv, Amalgamation):
        return state.history[mv.left].net
    return None


def play(kind, sig, strat_forall=None, strat_exists=None, max_rounds=None, seed=0, pebbles=None,
         audit=True, forced_counts=True, dot_every=None, claims=True):
    """Run one game; the transcript has one record per round."""
    strat_forall = strat_forall or (strategy_forall_rainbow if kind == "F" else strategy_forall_random)
    strat_exists = strat_exists or strategy_exists
    rounds = max_rounds if kind == "H" else None
    if kind == "H" and rounds is None:
        raise ValueError("H_k needs max_rounds")
    state = new_state(kind, sig, pebbles=pebbles, rounds=rounds, forced_counts=forced_counts)
    rng = random.Random(seed)
    transcript, dots = [], []
    limit = max_rounds if max_rounds is not None else 10 ** 6

    def finish(winner, reason):
        return Outcome(winner, reason, state.round, transcript, state, dots)

    step = 0
    while True:
        if state.history and state.round >= limit:
            return finish(EXISTS, f"survived {state.round} rounds")
        try:
            mv = strat_forall(state, rng)
        except TruncationExhausted as e:
            transcript.append({"round": state.round + (1 if state.history else 0), "mover": FORALL,
                               "move": None, "response-diff": None, "audit": None, "outcome": "truncation"})
            return finish(None, f"truncation exhaustion: {e}")
        ok, why = legal_forall_move(state, mv)
        rnd = state.round + (1 if state.history else 0)
        rec = {"round": rnd, "mover": FORALL, "move": move_to_json(mv)}
        if not ok:
            rec.update({"response-diff": None, "audit": None, "outcome": f"illegal: {why}"})
            transcript.append(rec)
            return finish(EXISTS, f"illegal move by ForAll: {why}")
        resp = strat_exists(state, mv)
        if isinstance(resp, Resign):
            rec.update({"response-diff": None, "audit": None,
                        "outcome": "truncation" if resp.truncation else f"resign: {resp.case}"})
            transcript.append(rec)
            if resp.truncation:
                return finish(None, f"truncation exhaustion: {resp.reason}")
            return finish(FORALL, f"Exists cannot answer ({resp.case}): {resp.reason}")
        bad = response_violation(state, mv, resp)
        if bad is not None:
            rec.update({"response-diff": None, "audit": None, "outcome": f"illegal response: {bad}"})
            transcript.append(rec)
            return finish(FORALL, f"illegal response: {bad}")
        before = _before(state, mv)
        rho_before = dict(state.rho)
        state.history.append(resp.hyper)
        state.ledgers.append(resp.ledger)
        state.rho = resp.rho
        state.rho_history.append(dict(resp.rho))
        if isinstance(mv, Initial):
            state.births = {x: 0 for x in resp.hyper.nodes}
        else:
            if not (isinstance(mv, Transformation) and not state.forced_counts):
                state.round += 1
            if isinstance(mv, Cylindrifier):
                state.births[mv.k] = state.round
        rec["response-diff"] = response_diff(before, resp.hyper.net, rho_before, resp.rho)
        if audit:
            rep = audit_properties(state, claims=claims)
            rec["audit"] = {k: (not v) for k, v in sorted(rep.items())}
            rec["audit_witnesses"] = {k: [repr(w) for w in v[:3]] for k, v in sorted(rep.items()) if v}
        else:
            rec["audit"] = None
        transcript.append(rec)
        if dot_every and step % dot_every == 0:
            dots.append(to_dot(resp.hyper.net, rb.fmt, name=f"round{state.round}"))
        step += 1


def forced_red_indices(outcome):
    """Red index attached to each new apex: first index of its edge to the previous apex."""
    n = outcome.state.n
    out = []
    prev = n - 1
    for rec in outcome.transcript[1:]:
        mv = rec.get("move") or {}
        if mv.get("type") != "cylindrifier" or rec.get("response-diff") is None:
            continue
        k = mv["k"]
        for x, y, c in rec["response-diff"]["edges"]:
            if {x, y} == {k, prev} and c.startswith("r:"):
                i, j = (int(v) for v in c[2:].split(","))
                out.append(i if x == k else j)
        prev = k
    return out


def sweep(kind, sig, seeds, max_rounds, **kw):
    """Independent games over seeds; results keyed by seed."""
    return {s: play(kind, sig, max_rounds=max_rounds, seed=s, **kw) for s in seeds}


# ---- network form: neat-hat strategy and limit prefix ---------------------------------------

def _points(C, x):
    return C.points_of(x)


def strategy_exists_neat_hat(N, mv, C, embed, atoms):
    """Answer a cylindrifier move so the hat of the response stays nonzero.

    N maps n-tuples to atoms; embed(a) is an n-dimensional element of the finite set algebra C.
    Picks the least point s of c_k(N-hat) . s_a(b) and labels every tuple by the atom containing s.
    """
    from .core import neat_hat
    n = N.n
    if C.top == 0:
        raise ValueError("zero algebra has no points")
    hat = neat_hat(C, N, n, embed)
    tup = tuple(mv.face[:mv.l]) + (mv.k,) + tuple(mv.face[mv.l:])
    if any(x >= C.dimension for x in tup):
        raise ValueError("node outside the algebra's dimension")
    target = C.cyl(mv.k, hat) & C.subst_map(tup, embed(mv.b))
    pts = _points(C, target)
    if not pts:
        raise ValueError("no atom choice keeps the hat nonzero")
    s = pts[0]
    nodes = sorted(set(N.nodes) | {mv.k})
    label = {t: a for t, a in N.label.items() if mv.k not in t}
    for t in itertools.product(nodes, repeat=n):
        if mv.k not in t:
            continue
        for a in atoms:
            if s in _points(C, C.subst_map(t, embed(a))):
                label[t] = a
                break
        else:
            raise ValueError(f"no atom contains the chosen point at {t}")
    return Network(n, nodes, label)


def initial_network_neat_hat(atom, n, C, embed, atoms):
    """N_0 on nodes 0..n-1 with N_0(0..n-1) = atom, read off a point of the atom."""
    tup = tuple(range(n))
    pts = _points(C, C.subst_map(tup, embed(atom)))
    if not pts:
        raise ValueError("atom embeds as zero")
    s = pts[0]
    label = {}
    for t in itertools.product(range(n), repeat=n):
        for a in atoms:
            if s in _points(C, C.subst_map(t, embed(a))):
                label[t] = a
                break
    return Network(n, range(n), label)


@dataclass
class PrefixReport:
    networks: list
    discharged: list
    pending: list
    thetas: list

    @property
    def ok(self):
        return not self.pending


def _witnessed(G, face, phi, k):
    for z in G.nodes:
        if z in face:
            continue
        if all(G.edges.get((f, z)) == phi.edges.get((f, k)) for f in face):
            if all(G.shades.get(tuple(z if v == k else v for v in t)) == s for t, s in phi.shades.items()):
                return True
    return False


def _face_demand(G, face, k, n):
    s = G.shades.get(tuple(face))
    if s is not None and rb.shade_contains(s, 0):
        phi = cone_demand(G, face, k, 0)
    else:
        phi = G.restrict(face)
        phi.add_node(k)
        for f in face:
            phi.set_edge(f, k, rb.W, rb.converse)
    for t in itertools.permutations(phi.nodes, n - 1):
        if k in t and not rb.has_green(phi, t):
            phi.shades[t] = rb.shade(cone_tints(phi, t))
    return phi


def build_limit_prefix(depth, sig=None, initial=None, width=4, theta_stages=(1,), strategy=None):
    """Nested graphs N_0 within ... within N_depth under a FIFO requirement scheduler.

    Stage r enqueues up to `width` unwitnessed cone/white demands on faces of N_r and, at the
    listed stages, one node-extension requirement theta = {x -> y}; everything enqueued at stage r
    is discharged while building N_{r+1}.
    """
    sig = sig or h_signature(3, max(depth, 1))
    n = sig.n
    strategy = strategy or strategy_exists
    state = new_state("H", sig, rounds=max(depth, 1))
    state.track_hyper = False
    first = Initial(initial if initial is not None else zeroth_graph(n))
    resp = strategy(state, first)
    if isinstance(resp, Resign):
        raise RuntimeError(resp.reason)
    state.history.append(resp.hyper)
    state.ledgers.append(resp.ledger)
    state.rho = resp.rho
    state.rho_history.append(dict(resp.rho))
    nets = [resp.hyper.net.copy()]
    queue, discharged, thetas = [], [], []
    for stage in range(depth):
        G = state.current.net
        faces = [f for f in itertools.permutations(G.nodes, n - 1) if not rb.has_green(G, f)]
        added = 0
        for face in faces:
            if added >= width:
                break
            probe = max(G.nodes) + 1
            phi = _face_demand(G, face, probe, n)
            if not _witnessed(G, face, phi, probe):
                queue.append(("cyl", stage, face))
                added += 1
        if stage in theta_stages and len(G.nodes) >= 2:
            x, y = sorted(G.nodes)[:2]
            queue.append(("theta", stage, (x, y)))
        todo = [q for q in queue if q[1] <= stage]
        queue = [q for q in queue if q[1] > stage]
        for req in todo:
            cur = state.current
            top = max(state.all_nodes()) + 1
            if req[0] == "cyl":
                face = req[2]
                phi = _face_demand(cur.net, face, top, n)
                if _witnessed(cur.net, face, phi, top):
                    discharged.append((req, stage + 1))
                    continue
                mv = Cylindrifier(len(state.history) - 1, face, top, phi)
            else:
                x, y = req[2]
                Nr = nets[req[1]]
                ren = {}
                nxt = top
                for v in Nr.nodes:
                    if v == y:
                        ren[v] = x
                    else:
                        ren[v] = nxt
                        nxt += 1
                copy = Nr.relabel(ren)
                Hc = Hypernetwork(copy, {}, n)
                lc = OwnershipLedger()
                for a, b in itertools.combinations(copy.nodes, 2):
                    lc.own(a, b, FORALL)
                state.history.append(Hc)
                state.ledgers.append(lc)
                mv = Amalgamation(len(state.history) - 2, len(state.history) - 1)
                thetas.append({"stage": req[1], "theta_plus": {ren[v]: v for v in Nr.nodes}})
            r2 = strategy(state, mv)
            if isinstance(r2, Resign):
                raise RuntimeError(f"strategy resigned on {req}: {r2.reason}")
            state.history.append(r2.hyper)
            state.ledgers.append(r2.ledger)
            state.rho = r2.rho
            state.rho_history.append(dict(r2.rho))
            discharged.append((req, stage + 1))
        state.round = min(state.round + 1, state.rounds)
        nets.append(state.current.net.copy())
    return PrefixReport(nets, discharged, queue, thetas)


def graph_audit(nets, n):
    """Every prefix graph lies in J and extends its predecessor."""
    bad = []
    for i, G in enumerate(nets):
        if not rb.in_class_J(G, n):
            bad.append(("J", i))
        if i and G.restrict(nets[i - 1].nodes) != nets[i - 1]:
            bad.append(("extends", i))
    return Verdict(not bad, bad)
