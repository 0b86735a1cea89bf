import itertools
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest
from oracles import colours, forbidden_oracle

from workbench import cli
from workbench import rainbow as rb


def schema(name):
    return json.loads(resources.files("workbench").joinpath("schemas", f"{name}.json").read_text())


def run(capsys, *argv):
    code = cli.cmd_dispatch(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv, name="envelope"):
    code, out, _ = run(capsys, *argv, "--json")
    doc = json.loads(out.strip().splitlines()[-1])
    jsonschema.validate(doc, schema("envelope"))
    if name != "envelope":
        jsonschema.validate(doc, schema(name))
    return code, doc


# ---- documented examples ------------------------------------------------------------------------

def test_game_play_F_ends_with_forall(capsys):
    code, out, _ = run(capsys, "game", "play", "--kind", "F", "--pebbles", "n+2", "--n", "3", "--nmax", "6",
                       "--seed", "1")
    assert code == 0
    assert out.strip().splitlines()[-1] == "winner: ForAll"


def test_term_check_holds_exhaustively(capsys):
    code, out, _ = run(capsys, "core", "term-check", "--witness", "ca-3")
    assert code == 0 and out.strip().splitlines()[-1] == "inequality holds (exhaustive)"


def test_check_triples_matches_oracle(capsys):
    code, doc = run_json(capsys, "rainbow", "check-triples", "--zmax", "1", "--nmax", "1")
    assert code == 0
    cols = colours(3, 1, 1)
    assert doc["colours"] == len(cols) and doc["triples"] == len(cols) ** 3
    for row in doc["table"]:
        assert row["forbidden"] == forbidden_oracle(*(rb.parse(row[k]) for k in "abc"))
    expected = sum(forbidden_oracle(a, b, c) for a, b, c in itertools.product(cols, repeat=3))
    assert doc["forbidden"] == expected


def test_check_triples_text_summary(capsys):
    _, out, _ = run(capsys, "rainbow", "check-triples", "--zmax", "0", "--nmax", "0")
    n = len(colours(3, 0, 0))
    assert out.strip().splitlines()[-1].startswith(f"# {n ** 3} triples")


# ---- exit codes ---------------------------------------------------------------------------------

def test_usage_errors_exit_64(capsys):
    assert run(capsys, "rainbow", "check-triples", "--n", "2")[0] == 64
    assert run(capsys, "game", "play", "--kind", "H")[0] == 64
    assert run(capsys, "repsearch", "run", "--algebra", "nope", "--base", "1")[0] == 64
    assert run(capsys, "repsearch", "run", "--algebra", "two-atom", "--base", "9")[0] == 64
    assert run(capsys, "blur", "build", "--imax", "0")[0] == 64
    with pytest.raises(SystemExit) as e:
        cli.cmd_dispatch(["rainbow", "frobnicate"])
    assert e.value.code == 64


def test_size_guard_exits_65(capsys):
    code, _, err = run(capsys, "rainbow", "gen", "--zmax", "2", "--nmax", "2")
    assert code == 65 and "size guard" in err


def test_repsearch_exit_codes(capsys, tmp_path):
    cache = ["--cache-dir", str(tmp_path)]
    assert run(capsys, "repsearch", "run", "--algebra", "two-atom", "--base", "2", *cache)[0] == 0
    assert run(capsys, "repsearch", "run", "--algebra", "two-atom", "--base", "3", *cache)[0] == 1
    assert run(capsys, "repsearch", "run", "--algebra", "monk:6", "--base", "8", "--timeout", "0", *cache)[0] == 2


def test_failed_verification_exits_70(capsys, tmp_path, monkeypatch):
    import workbench.repsearch as rs
    monkeypatch.setattr(rs, "verify_representation", lambda s, rep: [("triangle", (0, 1, 2))])
    code, _, err = run(capsys, "repsearch", "run", "--algebra", "two-atom", "--base", "2",
                       "--cache-dir", str(tmp_path))
    assert code == 70 and "invariant breach" in err


def test_core_validate_reports_bad_structure(capsys, tmp_path):
    bad = {"kind": "ra", "atoms": ["Id", "a", "b"], "identity": ["Id"], "converse": {"Id": "Id", "a": "b", "b": "b"},
           "triples": [["Id", "a", "a"]]}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, doc = run_json(capsys, "core", "validate", "--structure", str(path))
    assert code == 1 and not doc["valid"] and doc["violations"]


def test_core_validate_writes_schema_valid_structure(capsys, tmp_path):
    out = tmp_path / "s.json"
    code, doc = run_json(capsys, "core", "validate", "--structure", "complete", "--out", str(out))
    assert code == 0 and doc["valid"]
    jsonschema.validate(json.loads(out.read_text()), schema("structure"))


# ---- config files ---------------------------------------------------------------------------

def test_config_supplies_defaults_and_flags_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep settings\nkind = H\nk = 1..2\nseeds = 3\n")
    _, doc = run_json(capsys, "game", "sweep", "--config", str(cfg))
    assert doc["config"]["k"] == [1, 2] and doc["config"]["seeds"] == 3
    assert [s["k"] for s in doc["summary"]] == [1, 2]
    _, doc = run_json(capsys, "game", "sweep", "--config", str(cfg), "--seeds", "2")
    assert doc["config"]["seeds"] == 2 and all(s["games"] == 2 for s in doc["summary"])


def test_config_rejects_unknown_keys(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert run(capsys, "game", "sweep", "--config", str(cfg))[0] == 64
    cfg.write_text("just words\n")
    assert run(capsys, "game", "sweep", "--config", str(cfg))[0] == 64


def test_missing_config_file_is_usage_error(capsys, tmp_path):
    assert run(capsys, "game", "sweep", "--config", str(tmp_path / "absent.cfg"))[0] == 64


# ---- json outputs --------------------------------------------------------------------------------

def test_game_play_json_validates(capsys):
    code, out, _ = run(capsys, "game", "play", "--kind", "F", "--nmax", "4", "--seed", "1", "--json")
    lines = out.strip().splitlines()
    result = json.loads(lines[-1])
    assert code == 0
    jsonschema.validate(result, schema("game-result"))
    assert result["result"]["winner"] == "ForAll" and result["result"]["forced_reds"] == [3, 2, 1, 0]
    for line in lines[:-1]:
        jsonschema.validate(json.loads(line), schema("game-record"))


def test_game_play_json_is_deterministic(capsys):
    argv = ("game", "play", "--kind", "H", "--k", "3", "--seed", "5", "--json")
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_transcript_file_matches_stdout(capsys, tmp_path):
    path = tmp_path / "t.jsonl"
    _, out, _ = run(capsys, "game", "play", "--kind", "H", "--k", "2", "--seed", "3", "--json",
                    "--transcript", str(path))
    assert path.read_text().strip().splitlines() == out.strip().splitlines()[:-1]


def test_game_sweep_json(capsys):
    code, doc = run_json(capsys, "game", "sweep", "--kind", "H", "--k", "1..2", "--seeds", "4", "--per-game")
    assert code == 0 and len(doc["games"]) == 8
    assert all(s["forall_wins"] == 0 and s["audit_failures"] == 0 for s in doc["summary"])


def test_monk_seq_json(capsys):
    code, doc = run_json(capsys, "blur", "monk-seq", "--i", "0..1", name="monk-seq")
    assert code == 0 and [r["chi"] for r in doc["rows"]] == [3, 4]


def test_monk_seq_csv(capsys, tmp_path):
    path = tmp_path / "seq.csv"
    run(capsys, "blur", "monk-seq", "--i", "0", "--csv", str(path))
    assert path.read_text().splitlines() == ["i,chi,blocks,obstruction", "0,3,10,True"]


def test_repsearch_json_validates_and_caches(capsys, tmp_path):
    argv = ("repsearch", "run", "--algebra", "complete", "--bmax", "3", "--cache-dir", str(tmp_path))
    code, doc = run_json(capsys, *argv, name="repsearch")
    assert code == 0 and [r["status"] for r in doc["results"]] == ["none", "none", "exists"]
    assert not any(r["cached"] for r in doc["results"])
    _, doc = run_json(capsys, *argv, name="repsearch")
    assert all(r["cached"] for r in doc["results"])


def test_repsearch_job_file(capsys, tmp_path):
    jobs = tmp_path / "jobs.json"
    jobs.write_text(json.dumps([{"algebra": "identity", "bases": [1, 2]}, {"algebra": "two-atom", "bases": [3, 3]}]))
    code, doc = run_json(capsys, "repsearch", "run", "--jobs", str(jobs), "--cache-dir", str(tmp_path),
                         name="repsearch")
    assert code == 0
    assert [(r["algebra"], r["base_size"], r["status"]) for r in doc["results"]] == [
        ("identity", 1, "exists"), ("identity", 2, "none"), ("two-atom", 3, "none")]


def test_blur_build_json(capsys):
    code, doc = run_json(capsys, "blur", "build", "--imax", "12")
    assert code == 0 and doc["embedding"]["pairs_ok"] == doc["embedding"]["pairs"] == 36


def test_blur_saturate_json(capsys):
    code, doc = run_json(capsys, "blur", "saturate", "--imax", "12", "--steps", "20", "--sample", "5")
    assert code == 0 and doc["command"] == "blur saturate" and doc["config"]["seed"] == 0


def test_rainbow_gen_json(capsys, tmp_path):
    out = tmp_path / "atoms.jsonl"
    code, doc = run_json(capsys, "rainbow", "gen", "--out", str(out))
    assert code == 0 and doc["atoms"] == len(out.read_text().splitlines())


def test_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "workbench.cli", "core", "validate", "--structure", "two-atom"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "valid" in proc.stdout
