"""Bounded backtracking search for square representations of small finite relation algebras."""
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

from .core import structure_to_json

MAX_BASE = 8


@dataclass
class SquareRepresentation:
    base: tuple
    assign: dict            # (x, y) -> atom for every ordered pair

    def to_json(self):
        return {"base": list(self.base),
                "assign": [[x, y, str(a)] for (x, y), a in sorted(self.assign.items())]}


@dataclass
class SearchResult:
    status: str             # exists | none | timeout
    base_size: int
    rep: SquareRepresentation = None
    nodes: int = 0
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def exit_code(self):
        return {"exists": 0, "none": 1, "timeout": 2}[self.status]

    def to_json(self):
        out = {"status": self.status, "base_size": self.base_size, "search_nodes": self.nodes}
        out.update(self.stats)
        if self.rep is not None:
            out["representation"] = self.rep.to_json()
        return out


class _Timeout(Exception):
    pass


def find_square_representation(s, B, timeout=10.0, max_base=MAX_BASE):
    """Representation on exactly B points, or a certificate that none exists.

    Star edges (0, y) are chosen first as a non-decreasing sequence of atoms,
    since the points 1..B-1 are interchangeable.
    """
    if B < 1 or B > max_base:
        raise ValueError(f"base size {B} outside 1..{max_base}")
    atoms = list(s.atoms)
    pos = {a: k for k, a in enumerate(atoms)}
    ids = [a for a in atoms if a in s.identity]
    div = [a for a in atoms if a not in s.identity]
    conv = s.converse
    cons = {}

    def ok(a, b, c):
        key = (a, b, c)
        if key not in cons:
            cons[key] = s.is_consistent(a, b, c)
        return cons[key]

    # row-major order, so the star (0, y) comes first and row x is complete once its pairs are set
    pairs = [(x, y) for x in range(B) for y in range(x + 1, B)]
    assign = {}
    counter = [0]
    start = time.monotonic()

    def get(x, y):
        if (x, y) in assign:
            return assign[x, y]
        if (y, x) in assign:
            return conv[assign[y, x]]
        return None

    def triangles_ok(x, y):
        a = get(x, y)
        for z in range(B):
            b, c = get(y, z), get(x, z)
            if b is not None and c is not None and not ok(a, b, c):
                return False
        return True

    def witness_at(x, y):
        c = get(x, y)
        have = {(get(x, z), get(z, y)) for z in range(B)}
        return all((a, b) in have for a in atoms for b in atoms if ok(a, b, c))

    def row_done(x):
        # every pair (u, v) with u, v <= x now has all of its witnesses on the board
        return all(witness_at(x, v) and witness_at(v, x) for v in range(x + 1))

    def go(k):
        counter[0] += 1
        if timeout is not None and counter[0] % 256 == 0 and time.monotonic() - start > timeout:
            raise _Timeout
        if k and (k == len(pairs) or pairs[k][0] != pairs[k - 1][0]) and not row_done(pairs[k - 1][0]):
            return False
        if k == len(pairs):
            return all(row_done(x) for x in range(B))
        x, y = pairs[k]
        lo = pos[assign[0, y - 1]] if x == 0 and y > 1 else 0
        for a in div:
            if x == 0 and pos[a] < lo:
                continue
            assign[x, y] = a
            if triangles_ok(x, y) and go(k + 1):
                return True
            del assign[x, y]
        return False

    def diagonals(x):
        if x == B:
            return go(0)
        for e in ids:
            assign[x, x] = e
            if diagonals(x + 1):
                return True
            del assign[x, x]
        return False

    try:
        found = diagonals(0)
    except _Timeout:
        return SearchResult("timeout", B, nodes=counter[0], seconds=time.monotonic() - start)
    took = time.monotonic() - start
    if found:
        full = {(x, y): get(x, y) for x in range(B) for y in range(B)}
        return SearchResult("exists", B, SquareRepresentation(tuple(range(B)), full), counter[0], took)
    return SearchResult("none", B, nodes=counter[0], seconds=took,
                        stats={"certificate": f"search exhausted on base of size exactly {B}"})


def verify_representation(s, rep):
    """All four laws checked exhaustively; returns a list of (law, witness)."""
    report = []
    pts = list(rep.base)
    lab = rep.assign
    for x in pts:
        for y in pts:
            if (x, y) not in lab:
                report.append(("total", (x, y)))
                continue
            a = lab[x, y]
            if a not in s.converse:
                report.append(("atom", (x, y, a)))
            elif (x == y) != (a in s.identity):
                report.append(("identity", (x, y, a)))
    if report:
        return report
    for x in pts:
        for y in pts:
            if lab[y, x] != s.converse[lab[x, y]]:
                report.append(("converse", (x, y)))
    for x in pts:
        for y in pts:
            for z in pts:
                if not s.is_consistent(lab[x, y], lab[y, z], lab[x, z]):
                    report.append(("triangle", (x, y, z)))
    for x in pts:
        for y in pts:
            for a in s.atoms:
                for b in s.atoms:
                    if not s.is_consistent(a, b, lab[x, y]):
                        continue
                    if not any(lab[x, z] == a and lab[z, y] == b for z in pts):
                        report.append(("witness", (x, y, a, b)))
    return report


def representation_profile(s, B_max, timeout=10.0, start=1):
    """Verdict per base size: exists, none or timeout."""
    return {B: find_square_representation(s, B, timeout).status for B in range(start, B_max + 1)}


def structure_hash(s):
    blob = json.dumps(structure_to_json(s), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cached_search(s, B, timeout=10.0, cache_dir=None):
    """find_square_representation with results stored by content hash under ``cache_dir``.

    ``cache_dir`` defaults to the WORKBENCH_CACHE environment variable; timeouts
    are never cached.
    """
    cache_dir = cache_dir or os.environ.get("WORKBENCH_CACHE")
    path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, f"rep-{structure_hash(s)}-B{B}.json")
        if os.path.exists(path):
            with open(path) as fh:
                return json.load(fh), True
    res = find_square_representation(s, B, timeout)
    out = res.to_json()
    if path and res.status != "timeout":
        with open(path, "w") as fh:
            json.dump(out, fh, sort_keys=True)
    return out, False
