"""Hot table kernels with an optional numba path.

Set WORKBENCH_NO_JIT=1 to force the pure numpy implementations.
"""
import os

import numpy as np

USE_JIT = os.environ.get("WORKBENCH_NO_JIT", "") not in ("1", "true", "yes")

try:
    if not USE_JIT:
        raise ImportError
    import numba

    def njit(func):
        return numba.njit(cache=False)(func)

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(func):
        return func


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


# ---- numba kernels ---------------------------------------------------------

@njit
def _scan_table_jit(table, conv, ident):
    n = table.shape[0]
    for a in range(n):
        ca = conv[a]
        for b in range(n):
            cb = conv[b]
            for c in range(n):
                t = table[a, b, c]
                if t != table[ca, c, b]:
                    return 1, a, b, c
                if t != table[c, cb, a]:
                    return 2, a, b, c
                if ident[c] and t != (a == cb):
                    return 3, a, b, c
    return 0, -1, -1, -1


@njit
def _compose_jit(x, y, table):
    n = table.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for a in range(n):
        if not x[a]:
            continue
        for b in range(n):
            if not y[b]:
                continue
            for c in range(n):
                if table[a, b, c]:
                    out[c] = True
    return out


@njit
def _colourable_jit(adj, k):
    n = adj.shape[0]
    if n == 0:
        return True
    col = np.full(n, -1, dtype=np.int64)
    v = 0
    while v >= 0:
        if v == n:
            return True
        c = col[v] + 1
        # symmetry: vertex v may only open colour max_used + 1
        top = -1
        for u in range(v):
            top = max(top, col[u])
        placed = False
        while c < k and c <= top + 1:
            ok = True
            for u in range(v):
                if adj[v, u] and col[u] == c:
                    ok = False
                    break
            if ok:
                col[v] = c
                placed = True
                break
            c += 1
        if placed:
            v += 1
        else:
            col[v] = -1
            v -= 1
    return False


@njit
def _factored_val(a, b, c, code, rowe, cell_of, row_of, npw, nr, conv, idx):
    if c == idx:
        return a == conv[b]
    if a == idx:
        return b == c
    if b == idx:
        return a == c
    cd = code[(cell_of[a] * npw + cell_of[b]) * npw + cell_of[c]]
    if cd >= 2:
        return True
    if cd == 0:
        return False
    return rowe[(row_of[a] * nr + row_of[b]) * nr + row_of[c]]


@njit
def _compose_factored_jit(xi, yi, code, rowe, cell_of, row_of, npw, nr, conv, idx):
    n = cell_of.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for c in range(n):
        found = False
        for a in xi:
            for b in yi:
                if _factored_val(a, b, c, code, rowe, cell_of, row_of, npw, nr, conv, idx):
                    found = True
                    break
            if found:
                break
        out[c] = found
    return out


# ---- numpy fallbacks -------------------------------------------------------

def _scan_table_np(table, conv, ident):
    n = table.shape[0]
    t1 = table[conv][:, :, :].transpose(0, 2, 1)
    # t1[a, b, c] = table[conv a, c, b]
    bad = table != t1
    if bad.any():
        a, b, c = np.argwhere(bad)[0]
        return 1, int(a), int(b), int(c)
    t2 = table[:, conv, :].transpose(2, 1, 0)
    # t2[a, b, c] = table[c, conv b, a]
    bad = table != t2
    if bad.any():
        a, b, c = np.argwhere(bad)[0]
        return 2, int(a), int(b), int(c)
    expect = conv[:, None] == np.arange(n)[None, :]
    for c in np.flatnonzero(ident):
        bad = table[:, :, c] != expect
        if bad.any():
            a, b = np.argwhere(bad)[0]
            return 3, int(a), int(b), int(c)
    return 0, -1, -1, -1


def _compose_np(x, y, table):
    return table[np.ix_(x, y)].any(axis=(0, 1)) if x.any() and y.any() else np.zeros(table.shape[0], bool)


def _colourable_py(adj, k):
    n = adj.shape[0]
    col = [-1] * n
    nbrs = [np.flatnonzero(adj[v, :v]).tolist() for v in range(n)]

    def go(v, top):
        if v == n:
            return True
        for c in range(min(k, top + 2)):
            if all(col[u] != c for u in nbrs[v]):
                col[v] = c
                if go(v + 1, max(top, c)):
                    return True
        col[v] = -1
        return False

    return go(0, -1)


# ---- dispatch ----------------------------------------------------------------

def scan_table(table, conv, ident, jit=None):
    """First Peircean or identity-law violation in a dense triple table.

    Returns (code, a, b, c); code 0 means clean, 1 and 2 are the two Peircean
    rotations, 3 is the identity law.
    """
    table = np.ascontiguousarray(table, dtype=np.bool_)
    conv = np.ascontiguousarray(conv, dtype=np.int64)
    ident = np.ascontiguousarray(ident, dtype=np.bool_)
    use = HAVE_NUMBA if jit is None else (jit and HAVE_NUMBA)
    fn = _scan_table_jit if use else _scan_table_np
    code, a, b, c = fn(table, conv, ident)
    return int(code), int(a), int(b), int(c)


def compose(x, y, table, jit=None):
    x = np.ascontiguousarray(x, dtype=np.bool_)
    y = np.ascontiguousarray(y, dtype=np.bool_)
    use = HAVE_NUMBA if jit is None else (jit and HAVE_NUMBA)
    if use:
        return _compose_jit(x, y, np.ascontiguousarray(table, dtype=np.bool_))
    return _compose_np(x, y, table)


def colourable(adj, k, jit=None):
    adj = np.ascontiguousarray(adj, dtype=np.bool_)
    use = HAVE_NUMBA if jit is None else (jit and HAVE_NUMBA)
    if use:
        return bool(_colourable_jit(adj, int(k)))
    return _colourable_py(adj, int(k))


def factored_available(jit=None):
    return HAVE_NUMBA if jit is None else (jit and HAVE_NUMBA)


def compose_factored(x, y, f, conv, idx):
    xi = np.flatnonzero(x).astype(np.int64)
    yi = np.flatnonzero(y).astype(np.int64)
    return _compose_factored_jit(xi, yi, f["code"], f["rowe"], f["cell_of"], f["row_of"], f["npw"], f["nr"],
                                 np.ascontiguousarray(conv, dtype=np.int64), int(idx))
