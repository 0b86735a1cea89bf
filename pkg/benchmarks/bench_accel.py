"""Compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_accel.py [--repeat 3] [--imax 15]

Kernel timings call each dispatcher with jit=True and jit=False. The
end-to-end row runs the Monk embedding check in a subprocess with and without
WORKBENCH_NO_JIT=1, since the factored compose path is chosen at import time.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from workbench import _accel
from workbench.blowblur import clique_union


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def peircean_table(n, seed=0):
    # random self-converse atoms closed under the Peircean permutations, so the scan runs to the end
    rng = np.random.default_rng(seed)
    t = rng.random((n, n, n)) < 0.3
    t = t | t.transpose(1, 0, 2) | t.transpose(2, 1, 0) | t.transpose(0, 2, 1) | t.transpose(1, 2, 0) | t.transpose(2, 0, 1)
    t[0] = False
    t[:, 0] = False
    t[:, :, 0] = False
    for a in range(n):
        t[0, a, a] = t[a, 0, a] = t[a, a, 0] = True
    conv = np.arange(n)
    ident = np.zeros(n, dtype=bool)
    ident[0] = True
    return t, conv, ident


def kernels(repeat):
    rows = []
    t, conv, ident = peircean_table(160)
    _accel.scan_table(t, conv, ident, jit=True)
    rows.append(("scan_table n=160",
                 best_of(lambda: _accel.scan_table(t, conv, ident, jit=True), repeat),
                 best_of(lambda: _accel.scan_table(t, conv, ident, jit=False), repeat)))
    rng = np.random.default_rng(1)
    x, y = rng.random(160) < 0.5, rng.random(160) < 0.5
    _accel.compose(x, y, t, jit=True)
    rows.append(("compose n=160",
                 best_of(lambda: _accel.compose(x, y, t, jit=True), repeat),
                 best_of(lambda: _accel.compose(x, y, t, jit=False), repeat)))
    G = clique_union(2, 7)
    adj = np.asarray(G.adjacency(), dtype=bool)
    _accel.colourable(adj, 6, jit=True)
    rows.append(("colourable 2xK7, k=6",
                 best_of(lambda: _accel.colourable(adj, 6, jit=True), repeat),
                 best_of(lambda: _accel.colourable(adj, 6, jit=False), repeat)))
    return rows


def end_to_end(imax):
    code = ("import time; from workbench.blowblur import blur_structure, embed_monk_in_cm; "
            f"s = blur_structure(6, i_max={imax}); t = time.perf_counter(); "
            "r = embed_monk_in_cm(s, 3); print(time.perf_counter() - t, r['ok'])")
    out = []
    for flag in ("0", "1"):
        env = dict(os.environ, WORKBENCH_NO_JIT=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        secs, _ok = res.stdout.split()
        out.append(float(secs))
    return (f"embed_monk_in_cm i_max={imax}", out[0], out[1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--imax", type=int, default=15)
    args = ap.parse_args()
    print(f"backend: {_accel.backend()}")
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; both columns use the fallback")
    rows = kernels(args.repeat) + [end_to_end(args.imax)]
    print(f"{'kernel':<32}{'jit s':>10}{'numpy s':>10}{'speedup':>10}")
    for name, jit, ref in rows:
        print(f"{name:<32}{jit:>10.4f}{ref:>10.4f}{ref / max(jit, 1e-9):>10.1f}")


if __name__ == "__main__":
    main()
