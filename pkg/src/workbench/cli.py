"""Command-line surface: ``workbench <group> <command> [options]``.

Exit codes: 0/1/2 exists/none/timeout (or pass/fail for checks), 64 usage,
65 size guard refusal, 70 internal invariant breach.
"""
import argparse
import json
import multiprocessing
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import (
    WITNESSES,
    SetAlgebra,
    SizeGuardError,
    check_witness_inequality,
    complete_graph_ra,
    generated_subalgebra,
    identity_ra,
    structure_from_json,
    structure_to_json,
    two_atom_ra,
    validate_ca_atom_structure,
    validate_ra_atom_structure,
)

EXIT_OK, EXIT_NONE, EXIT_TIMEOUT = 0, 1, 2
EXIT_USAGE, EXIT_SIZE, EXIT_INVARIANT = 64, 65, 70


class UsageError(Exception):
    pass


class InvariantBreach(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    options: dict = field(default_factory=dict)

    BOUNDS = ("zmax", "nmax", "imax", "size", "k", "steps", "seeds", "base", "bmax", "count", "workers",
              "max_rounds", "emit_dot_every", "gens", "limit")

    def validate(self):
        o = self.options
        for key in self.BOUNDS:
            v = o.get(key)
            vals = v if isinstance(v, list) else [v]
            for x in vals:
                if isinstance(x, int) and x < (0 if key in ("zmax", "nmax") else 1):
                    raise UsageError(f"--{key.replace('_', '-')} must be positive")
        if self.subcommand.startswith("rainbow") or self.subcommand.startswith("game"):
            if o.get("n", 3) < 3:
                raise UsageError("rainbow constructions need n >= 3")
        return self

    def to_json(self):
        skip = {"func", "json", "config", "group", "command"}
        return {k: v for k, v in sorted(self.options.items()) if k not in skip}


# ---- helpers ------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, (set, frozenset, tuple)):
        return list(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def dumps(obj):
    return json.dumps(obj, sort_keys=True, default=_jsonable)


def _emit(args, cfg, payload, lines):
    if args.json:
        print(dumps({"command": cfg.subcommand, "config": cfg.to_json(), **payload}))
    else:
        for line in lines:
            print(line)


def parse_range(text):
    """'3', '1..4' or '1,3,5' to a list of ints."""
    text = str(text)
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a range: {text!r}")


def parse_pebbles(text, n):
    text = str(text).replace(" ", "")
    if text == "n":
        return n
    if text.startswith("n+"):
        return n + int(text[2:])
    return int(text)


def algebra_from_ref(ref):
    """Relation or cylindric atom structure named by a reference string or JSON path."""
    from . import blowblur as bb
    from . import rainbow as rb
    if ref.endswith(".json") or os.path.sep in ref:
        with open(ref) as fh:
            return structure_from_json(json.load(fh))
    name, *rest = ref.split(":")
    nums = [int(v) for v in rest]
    builders = {
        "two-atom": lambda: two_atom_ra(),
        "identity": lambda: identity_ra(),
        "complete": lambda: complete_graph_ra(),
        "monk": lambda size=6: bb.monk_algebra(size),
        "blur": lambda size=6, i_max=30: bb.blur_structure(size, i_max=i_max),
        "family-F": lambda l=2, mu=1, size=6, i_max=30: bb.family_F(l, mu, size, i_max),
        "alpha": lambda count=3, size=3, n=3: bb.alpha_of_graph(bb.clique_union(count, size), n),
        "rainbow": lambda n=3, zmax=0, nmax=0: rb.rainbow_atom_structure(rb.ColourSignature(n, zmax, nmax)),
    }
    if name not in builders:
        raise UsageError(f"unknown algebra {ref!r}; known: {', '.join(builders)} or a .json path")
    try:
        return builders[name](*nums)
    except TypeError:
        raise UsageError(f"bad parameters in {ref!r}")


# ---- rainbow ------------------------------------------------------------------------

def cmd_rainbow_gen(args, cfg):
    from . import rainbow as rb
    from .netgraph import atom_graph
    sig = rb.ColourSignature(args.n, args.zmax, args.nmax)
    t0 = time.monotonic()
    s = rb.rainbow_atom_structure(sig, limit=args.limit)
    atoms = s.atoms
    payload = {"edge_colours": len(sig.edge_colours), "shades": len(sig.shades), "atoms": len(atoms)}
    if args.validate:
        bad = validate_ca_atom_structure(s)
        payload["valid"] = not bad
        payload["violations"] = [[v.law, repr(v.witness)] for v in bad[:10]]
    if args.out:
        with open(args.out, "w") as fh:
            for a in atoms:
                rec = json.loads(rb.graph_to_json(atom_graph(a)))
                rec["pattern"] = list(a.pattern)
                fh.write(dumps(rec) + "\n")
        payload["out"] = args.out
    lines = [f"signature: n={args.n} zmax={args.zmax} nmax={args.nmax}",
             f"edge colours: {payload['edge_colours']}, shades: {payload['shades']}",
             f"atoms: {payload['atoms']} ({time.monotonic() - t0:.1f}s)"]
    if args.validate:
        lines.append("validate: " + ("ok" if payload["valid"] else f"{len(bad)} violations"))
    _emit(args, cfg, payload, lines)
    return EXIT_OK if payload.get("valid", True) else EXIT_NONE


def triple_table(n, zmax, nmax):
    from . import rainbow as rb
    sig = rb.ColourSignature(n, zmax, nmax)
    cols = sig.edge_colours
    rows = []
    for a in cols:
        for b in cols:
            for c in cols:
                bad, rule = rb.is_forbidden_triple(a, b, c)
                rows.append((rb.fmt(a), rb.fmt(b), rb.fmt(c), bad, rule))
    return len(cols), rows


def cmd_rainbow_check_triples(args, cfg):
    ncols, rows = triple_table(args.n, args.zmax, args.nmax)
    forbidden = sum(1 for r in rows if r[3])
    if args.json:
        _emit(args, cfg, {"colours": ncols, "triples": len(rows), "forbidden": forbidden,
                          "table": [{"a": a, "b": b, "c": c, "forbidden": f, "rule": r} for a, b, c, f, r in rows]},
              [])
    else:
        for a, b, c, f, r in rows:
            print(f"{a}\t{b}\t{c}\t{'forbidden' if f else 'ok'}\t{r or '-'}")
        print(f"# {len(rows)} triples, {forbidden} forbidden")
    return EXIT_OK


# ---- games ------------------------------------------------------------------------------

def game_setup(kind, n, k=None, nmax=6, zmax=None, max_rounds=None):
    from . import games
    from .rainbow import ColourSignature
    if kind == "F":
        sig = ColourSignature(n, nmax + 3 if zmax is None else zmax, nmax)
        return sig, max_rounds or 60
    if k is None:
        raise UsageError("H games need --k")
    return games.h_signature(n, k, 2 if zmax is None else zmax), k


def _audit_failures(outcome):
    return sum(1 for rec in outcome.transcript if rec.get("audit") and not all(rec["audit"].values()))


def cmd_game_play(args, cfg):
    from . import games
    sig, rounds = game_setup(args.kind, args.n, args.k, args.nmax, args.zmax, args.max_rounds)
    pebbles = parse_pebbles(args.pebbles, args.n) if args.pebbles is not None else None
    o = games.play(args.kind, sig, max_rounds=rounds, seed=args.seed, pebbles=pebbles,
                   forced_counts=not args.forced_free, dot_every=args.emit_dot_every)
    bad = _audit_failures(o)
    result = {"winner": o.winner or "none", "reason": o.reason, "rounds": o.rounds, "seed": args.seed,
              "audit_failures": bad}
    if args.kind == "F":
        result["forced_reds"] = games.forced_red_indices(o)
    if args.transcript:
        with open(args.transcript, "w") as fh:
            fh.write(o.to_jsonl() + "\n")
    if o.dots:
        os.makedirs(args.dot_dir, exist_ok=True)
        for j, dot in enumerate(o.dots):
            with open(os.path.join(args.dot_dir, f"{args.kind}-seed{args.seed}-{j:03d}.dot"), "w") as fh:
                fh.write(dot + "\n")
        result["dot_files"] = len(o.dots)
    if args.json:
        if o.transcript:
            print(o.to_jsonl())
        print(dumps({"result": result, "config": cfg.to_json()}))
    else:
        for rec in o.transcript:
            mv = rec.get("move") or {}
            print(f"round {rec['round']}: {rec['mover']} {mv.get('type', '-')} -> {rec.get('outcome') or 'answered'}")
        if "forced_reds" in result:
            print(f"forced reds: {result['forced_reds']}")
        print(f"reason: {o.reason}")
        print(f"winner: {result['winner']}")
    if bad:
        raise InvariantBreach(f"audit failed in {bad} rounds")
    return EXIT_OK


def _sweep_job(job):
    from . import games
    kind, n, k, nmax, zmax, max_rounds, seed = job
    sig, rounds = game_setup(kind, n, k, nmax, zmax, max_rounds)
    o = games.play(kind, sig, max_rounds=rounds, seed=seed)
    return {"k": k, "seed": seed, "winner": o.winner or "none", "reason": o.reason, "rounds": o.rounds,
            "audit_failures": _audit_failures(o)}


def run_pool(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with multiprocessing.get_context("spawn").Pool(workers) as pool:
        return pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers)))


def cmd_game_sweep(args, cfg):
    from .netgraph import EXISTS, FORALL
    ks = args.k if args.kind == "H" else [None]
    if args.kind == "H" and not ks:
        raise UsageError("H sweeps need --k")
    seeds = range(args.seed, args.seed + args.seeds)
    jobs = [(args.kind, args.n, k, args.nmax, args.zmax, args.max_rounds, s) for k in ks for s in seeds]
    results = sorted(run_pool(_sweep_job, jobs, args.workers), key=lambda r: (r["k"] or 0, r["seed"]))
    summary = []
    for k in ks:
        rs = [r for r in results if r["k"] == k]
        summary.append({
            "k": k, "games": len(rs),
            "forall_wins": sum(r["winner"] == FORALL for r in rs),
            "exists_wins": sum(r["winner"] == EXISTS for r in rs),
            "truncations": sum(r["winner"] == "none" for r in rs),
            "audit_failures": sum(r["audit_failures"] for r in rs),
            "max_rounds": max((r["rounds"] for r in rs), default=0),
        })
    lines = [f"k={s['k']}: {s['games']} games, Exists {s['exists_wins']}, ForAll {s['forall_wins']}, "
             f"truncated {s['truncations']}, audit failures {s['audit_failures']}" for s in summary]
    _emit(args, cfg, {"summary": summary, "games": results if args.per_game else None}, lines)
    if any(s["audit_failures"] for s in summary):
        raise InvariantBreach("audit failures in sweep")
    return EXIT_OK


# ---- blur ------------------------------------------------------------------------------

def cmd_blur_build(args, cfg):
    from . import blowblur as bb
    t0 = time.monotonic()
    if args.family:
        l, mu = parse_range(args.family)
        s = bb.family_F(l, mu, args.size, args.imax, permissive=not args.strict)
        params = {"l": l, "mu": mu, "size": args.size, "i_max": args.imax, "permissive": not args.strict}
        rule = "family_F"
    else:
        s = bb.blur_structure(args.size, i_max=args.imax, permissive=not args.strict)
        params = {"size": args.size, "i_max": args.imax, "permissive": not args.strict}
        rule = "blur"
    bad = validate_ra_atom_structure(s)
    payload = {"atoms": len(s.atoms), "valid": not bad,
               "violations": [[v.law, repr(v.witness)] for v in bad[:10]],
               "partition": s.universe.partition_report()}
    lines = [f"{rule}: {len(s.atoms)} atoms ({', '.join(f'{k}={v}' for k, v in params.items())})",
             "validate: " + ("ok" if not bad else f"{len(bad)} violations, first {bad[0]}")]
    if not args.family and args.margin is not None:
        emb = bb.embed_monk_in_cm(s, args.margin)
        payload["embedding"] = emb
        lines.append(f"monk embedding (margin {emb['margin']}): {emb['pairs_ok']}/{emb['pairs']} pairs ok, "
                     f"disjoint={emb['disjoint']}, union is diversity={emb['union_is_diversity']}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps({"kind": "ra", "name": s.name, "triples": rule, "params": params,
                            "universe": s.universe.to_json()}) + "\n")
        payload["out"] = args.out
    lines.append(f"time: {time.monotonic() - t0:.1f}s")
    _emit(args, cfg, payload, lines)
    if bad or not payload.get("embedding", {"ok": True})["ok"]:
        raise InvariantBreach("blur structure failed its checks")
    return EXIT_OK


def cmd_blur_saturate(args, cfg):
    from . import blowblur as bb
    s = bb.blur_structure(args.size, i_max=args.imax)
    resume = args.resume
    chunk = args.emit_dot_every or args.steps
    done, sat, dots = 0, None, 0
    while done < args.steps:
        step = min(chunk, args.steps - done)
        sat = bb.saturate_graph(s, budget=step, palette_rows=args.palette_rows, seed=args.seed,
                                resume=sat if sat is not None else resume, checkpoint=args.checkpoint)
        done += step
        if args.emit_dot_every:
            os.makedirs(args.dot_dir, exist_ok=True)
            with open(os.path.join(args.dot_dir, f"saturation-{sat.steps:05d}.dot"), "w") as fh:
                fh.write(bb.saturation_to_dot(sat) + "\n")
            dots += 1
        if not sat.demands and not sat.pair_queue:
            break
    payload = {"report": sat.report(), "palette": len(sat.palette)}
    lines = [f"saturation: {sat.n} nodes after {sat.steps} steps, palette {len(sat.palette)}",
             f"laws ok at every step: {payload['report']['laws_ok_every_step']}"]
    if args.dot:
        with open(args.dot, "w") as fh:
            fh.write(bb.saturation_to_dot(sat) + "\n")
    if args.sample:
        sample = bb.fincof_sample(s, args.sample, seed=args.seed)
        rep = bb.rep_map_check(sat, sample, backward=not args.no_backward)
        payload["rep_map"] = rep
        lines.append(f"rep map on {len(sample)} elements: boolean={rep['boolean_ok']} "
                     f"rep(Id)=diagonal={rep['rep_id_diagonal']} forward={rep['forward_ok']}")
        if rep.get("backward"):
            b = rep["backward"]
            lines.append(f"backward inclusion (reported only): {b['holds']}/{b['checked']} serviced pairs")
    if dots:
        payload["dot_files"] = dots
    _emit(args, cfg, payload, lines)
    if not payload["report"]["laws_ok_every_step"] or not payload.get("rep_map", {"ok": True})["ok"]:
        raise InvariantBreach("saturation checks failed")
    return EXIT_OK


def _monk_row(job):
    from . import blowblur as bb
    n, i, count = job
    return bb.monk_sequence_experiment(n, [i], count)[0]


def cmd_blur_monk_seq(args, cfg):
    from . import blowblur as bb
    rows = sorted(run_pool(_monk_row, [(args.n, i, args.count) for i in args.i], args.workers),
                  key=lambda r: r["i"])
    text = bb.monk_sequence_csv(rows)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text)
    if args.json:
        _emit(args, cfg, {"rows": rows}, [])
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---- repsearch ---------------------------------------------------------------------------

def _rep_job(job):
    from .repsearch import SquareRepresentation, cached_search, verify_representation
    ref, B, timeout, cache = job
    s = algebra_from_ref(ref)
    out, hit = cached_search(s, B, timeout, cache_dir=cache)
    out = dict(out, algebra=ref, cached=hit)
    if out["status"] == "exists":
        r = out["representation"]
        rep = SquareRepresentation(tuple(r["base"]), {(x, y): _atom(s, a) for x, y, a in r["assign"]})
        out["verify"] = [[law, list(map(str, w))] for law, w in verify_representation(s, rep)]
    return out


def _atom(s, text):
    for a in s.atoms:
        if str(a) == text:
            return a
    raise KeyError(text)


def cmd_repsearch_run(args, cfg):
    from .repsearch import MAX_BASE
    if args.jobs:
        with open(args.jobs) as fh:
            spec = json.load(fh)
        jobs = [(j["algebra"], B, args.timeout, args.cache_dir)
                for j in spec for B in range(j["bases"][0], j["bases"][-1] + 1)]
    elif args.algebra:
        bases = [args.base] if args.base else list(range(1, (args.bmax or MAX_BASE) + 1))
        jobs = [(args.algebra, B, args.timeout, args.cache_dir) for B in bases]
    else:
        raise UsageError("give --algebra or --jobs")
    for _, B, _, _ in jobs:
        if not 1 <= B <= MAX_BASE:
            raise UsageError(f"base size {B} outside 1..{MAX_BASE}")
    results = run_pool(_rep_job, jobs, args.workers)
    lines = []
    for r in results:
        extra = f", verify: {'pass' if not r.get('verify') else r['verify'][:2]}" if "verify" in r else ""
        lines.append(f"{r['algebra']} B={r['base_size']}: {r['status']} ({r['search_nodes']} nodes){extra}")
    _emit(args, cfg, {"results": results}, lines)
    if any(r.get("verify") for r in results):
        raise InvariantBreach("search returned a representation that fails verification")
    statuses = {r["status"] for r in results}
    if len(results) == 1:
        return {"exists": EXIT_OK, "none": EXIT_NONE, "timeout": EXIT_TIMEOUT}[results[0]["status"]]
    if "exists" in statuses:
        return EXIT_OK
    return EXIT_TIMEOUT if "timeout" in statuses else EXIT_NONE


# ---- core ----------------------------------------------------------------------------------

def cmd_core_validate(args, cfg):
    from .core import RaAtomStructure
    s = algebra_from_ref(args.structure)
    if isinstance(s, RaAtomStructure):
        bad = validate_ra_atom_structure(s)
        kind = "ra"
    else:
        bad = validate_ca_atom_structure(s)
        kind = "ca"
    payload = {"kind": kind, "atoms": len(s.atoms), "valid": not bad,
               "violations": [[v.law, repr(v.witness)] for v in bad[:20]]}
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps(structure_to_json(s)) + "\n")
    lines = [f"{s.name}: {len(s.atoms)} atoms ({kind})", "valid" if not bad else f"{len(bad)} violations"]
    lines += [f"  {v.law}: {v.witness!r}" for v in bad[:20]]
    _emit(args, cfg, payload, lines)
    return EXIT_OK if not bad else EXIT_NONE


def witness_elements(C, mode, gens, seed):
    """Element pool for term checks: all, neat, or the subalgebra generated by random neat elements."""
    if mode == "all":
        return C.elements()
    neat = C.neat_elements(C.dimension - 1)
    if mode == "neat":
        return neat
    rng = np.random.default_rng(seed)
    chosen = rng.choice(neat, size=gens)
    return generated_subalgebra(C, chosen, dims=C.dimension - 1)


def cmd_core_term_check(args, cfg):
    if args.witness not in WITNESSES:
        raise UsageError(f"unknown witness {args.witness!r}; known: {', '.join(WITNESSES)}")
    small, big = WITNESSES[args.witness]
    C = SetAlgebra(args.dimension, args.base)
    els = witness_elements(C, args.elements, args.gens, args.seed)
    res = check_witness_inequality(small, big, C, elements=els, seed=args.seed)
    payload = {"holds": res.holds, "mode": res.mode, "checked": res.checked, "elements": len(els),
               "counterexample": res.counterexample}
    if res.holds:
        line = f"inequality holds ({res.mode})"
    else:
        cex = ", ".join(f"{k}={v}" for k, v in sorted(res.counterexample.items()))
        line = f"counterexample: {cex} ({res.mode})"
    _emit(args, cfg, payload, [(f"witness {args.witness} over Cs_{args.dimension} base {args.base}, "
                               f"{len(els)} elements ({args.elements})"), line])
    return EXIT_OK if res.holds else EXIT_NONE


# ---- parser -------------------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="workbench", description="Rainbow atom structures, network games and blur constructions.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--config", help="key=value file supplying defaults for this command")
    groups = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    rb = groups.add_parser("rainbow").add_subparsers(dest="command", required=True, parser_class=_Parser)
    c = rb.add_parser("gen", parents=[common], help="enumerate truncated rainbow atoms")
    c.add_argument("--n", type=int, default=3)
    c.add_argument("--zmax", type=int, default=0)
    c.add_argument("--nmax", type=int, default=0)
    c.add_argument("--limit", type=int, default=400000)
    c.add_argument("--validate", action="store_true")
    c.add_argument("--out", help="write atoms as JSON lines")
    c.set_defaults(func=cmd_rainbow_gen)
    c = rb.add_parser("check-triples", parents=[common], help="forbidden-triple table")
    c.add_argument("--n", type=int, default=3)
    c.add_argument("--zmax", type=int, default=1)
    c.add_argument("--nmax", type=int, default=1)
    c.set_defaults(func=cmd_rainbow_check_triples)

    gm = groups.add_parser("game").add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in (("play", cmd_game_play), ("sweep", cmd_game_sweep)):
        c = gm.add_parser(name, parents=[common])
        c.add_argument("--kind", choices=["F", "H"], default="F")
        c.add_argument("--n", type=int, default=3)
        c.add_argument("--nmax", type=int, default=6, help="red index bound for F")
        c.add_argument("--zmax", type=int, default=None, help="tint bound (F: nmax+3, H: 2)")
        c.add_argument("--max-rounds", type=int, default=None)
        c.add_argument("--seed", type=int, default=0)
        c.set_defaults(func=fn)
        if name == "play":
            c.add_argument("--k", type=int, default=None, help="rounds of H_k")
            c.add_argument("--pebbles", default=None, help="pebble count, e.g. n+2")
            c.add_argument("--forced-free", action="store_true", help="forced transformations do not count as rounds")
            c.add_argument("--transcript", help="write the JSON-lines transcript here")
            c.add_argument("--emit-dot-every", type=int, default=None, metavar="R")
            c.add_argument("--dot-dir", default="dots")
        else:
            c.add_argument("--k", type=parse_range, default=None, help="k values, e.g. 1..4")
            c.add_argument("--seeds", type=int, default=20, help="number of seeds from --seed")
            c.add_argument("--workers", type=int, default=1)
            c.add_argument("--per-game", action="store_true")

    bl = groups.add_parser("blur").add_subparsers(dest="command", required=True, parser_class=_Parser)
    c = bl.add_parser("build", parents=[common])
    c.add_argument("--size", type=int, default=6, help="|I|")
    c.add_argument("--imax", type=int, default=30)
    c.add_argument("--strict", action="store_true", help="e(i,j,k) rejects constant triples")
    c.add_argument("--family", default=None, metavar="L,MU")
    c.add_argument("--margin", type=int, default=3)
    c.add_argument("--out")
    c.set_defaults(func=cmd_blur_build)
    c = bl.add_parser("saturate", parents=[common])
    c.add_argument("--size", type=int, default=6)
    c.add_argument("--imax", type=int, default=30)
    c.add_argument("--steps", type=int, default=500)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--palette-rows", type=int, default=1)
    c.add_argument("--sample", type=int, default=50, help="term-algebra sample size for the rep check (0 skips)")
    c.add_argument("--no-backward", action="store_true")
    c.add_argument("--checkpoint")
    c.add_argument("--resume")
    c.add_argument("--dot")
    c.add_argument("--emit-dot-every", type=int, default=None, metavar="R")
    c.add_argument("--dot-dir", default="dots")
    c.set_defaults(func=cmd_blur_saturate)
    c = bl.add_parser("monk-seq", parents=[common])
    c.add_argument("--n", type=int, default=3)
    c.add_argument("--i", type=parse_range, default=list(range(5)))
    c.add_argument("--count", type=int, default=2, help="cliques per graph")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_blur_monk_seq)

    rp = groups.add_parser("repsearch").add_subparsers(dest="command", required=True, parser_class=_Parser)
    c = rp.add_parser("run", parents=[common])
    c.add_argument("--algebra", help="two-atom, identity, complete, monk:SIZE, alpha:C:S:N, ... or a .json path")
    c.add_argument("--base", type=int, default=None)
    c.add_argument("--bmax", type=int, default=None)
    c.add_argument("--jobs", help="JSON list of {algebra, bases: [lo, hi]}")
    c.add_argument("--timeout", type=float, default=10.0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--cache-dir", default=None, help="defaults to $WORKBENCH_CACHE")
    c.set_defaults(func=cmd_repsearch_run)

    co = groups.add_parser("core").add_subparsers(dest="command", required=True, parser_class=_Parser)
    c = co.add_parser("validate", parents=[common])
    c.add_argument("--structure", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_core_validate)
    c = co.add_parser("term-check", parents=[common])
    c.add_argument("--witness", default="ca-3")
    c.add_argument("--dimension", type=int, default=4)
    c.add_argument("--base", type=int, default=2)
    c.add_argument("--elements", choices=["generated", "neat", "all"], default="generated")
    c.add_argument("--gens", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_core_term_check)
    return p


def _leaf(parser, argv):
    """The subcommand parser selected by argv, or None."""
    node = parser
    for tok in argv:
        subs = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not subs or tok not in subs[0].choices:
            break
        node = subs[0].choices[tok]
    return node if node is not parser else None


def read_config(path):
    out = {}
    with open(path) as fh:
        for num, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{num}: expected key = value")
            k, v = (x.strip() for x in line.split("=", 1))
            out[k.replace("-", "_")] = v.strip('"')
    return out


def apply_config(leaf, cfg):
    actions = {a.dest: a for a in leaf._actions}
    defaults = {}
    for k, v in cfg.items():
        act = actions.get(k)
        if act is None or k in ("config", "help"):
            raise UsageError(f"config key {k!r} is not an option of this command")
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        elif act.type is not None:
            defaults[k] = act.type(v)
        else:
            defaults[k] = v
    leaf.set_defaults(**defaults)


def cmd_dispatch(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if "--config" in argv:
            path = argv[argv.index("--config") + 1]
            leaf = _leaf(parser, argv)
            if leaf is None:
                raise UsageError("--config must follow a subcommand")
            apply_config(leaf, read_config(path))
        args = parser.parse_args(argv)
        cfg = RunConfig(f"{args.group} {args.command}", vars(args)).validate()
        return args.func(args, cfg)
    except UsageError as e:
        print(f"workbench: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, IndexError, argparse.ArgumentTypeError) as e:
        print(f"workbench: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SizeGuardError as e:
        print(f"workbench: size guard: {e}", file=sys.stderr)
        return EXIT_SIZE
    except InvariantBreach as e:
        print(f"workbench: invariant breach: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as e:
        if type(e).__name__ in ("SaturationError", "ClosureError"):
            print(f"workbench: invariant breach: {e}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"workbench: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as e:
        print(f"workbench: invariant breach: {e}", file=sys.stderr)
        return EXIT_INVARIANT


def main():
    sys.exit(cmd_dispatch())


if __name__ == "__main__":
    main()
