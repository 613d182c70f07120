import json

import pytest

from sheafsep.cli import build_arg_parser, load_model, main, parse_heap, parse_stage, run_command
from sheafsep.errors import ModelSchemaError
from sheafsep.presheaf import Heap
from sheafsep.psl import PslModel
from sheafsep.seplogic import ResourceModel


def write_model(tmp_path, doc, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


MEMORY_DOC = {
    "schema_version": 1,
    "kind": "memory",
    "locations": ["x", "y"],
    "values": [0, 1],
    "sheaf": "partial-memory",
    "coverage": "downward-closed",
    "monoid": "weak-partial",
    "formulas": {"both": "x |->! 0 * y |->! 1"},
}

PSL_DOC = {
    "schema_version": 1,
    "kind": "psl",
    "spaces": {
        "unif4": {
            "size": 4,
            "blocks": [[1], [2], [3], [4]],
            "measure": ["1/4", "1/4", "1/4", "1/4"],
        },
        "corr": {
            "size": 4,
            "blocks": [[1], [2], [3], [4]],
            "measure": ["1/2", "0", "0", "1/2"],
        },
    },
    "variables": {"X": [0, 0, 1, 1], "Y": [0, 1, 0, 1]},
    "formulas": {"indep": "(X ~ {0: 1/2, 1: 1/2}) * (Y ~ {0: 1/2, 1: 1/2})"},
}


def test_load_memory_model(tmp_path):
    model = load_model(write_model(tmp_path, MEMORY_DOC))
    assert isinstance(model, ResourceModel)
    assert model.locations == ("x", "y")
    assert "both" in model.formulas


def test_load_model_bound_exceeded(tmp_path):
    doc = dict(MEMORY_DOC, locations=["a", "b", "c", "d", "e", "f"])
    with pytest.raises(ModelSchemaError) as exc:
        load_model(write_model(tmp_path, doc))
    assert exc.value.path == "locations"


def test_load_model_monoid_needs_partial_memory(tmp_path):
    doc = dict(MEMORY_DOC, sheaf="strict-memory")
    with pytest.raises(ModelSchemaError) as exc:
        load_model(write_model(tmp_path, doc))
    assert exc.value.path == "monoid"


def test_load_model_schema_version(tmp_path):
    doc = dict(MEMORY_DOC, schema_version=99)
    with pytest.raises(ModelSchemaError) as exc:
        load_model(write_model(tmp_path, doc))
    assert exc.value.path == "schema_version"


def test_load_model_bad_formula(tmp_path):
    doc = dict(MEMORY_DOC, formulas={"broken": "x |->"})
    with pytest.raises(ModelSchemaError) as exc:
        load_model(write_model(tmp_path, doc))
    assert "formulas.broken" == exc.value.path


def test_load_psl_model(tmp_path):
    model = load_model(write_model(tmp_path, PSL_DOC))
    assert isinstance(model, PslModel)
    assert set(model.spaces) == {"unif4", "corr"}


def test_parse_stage_and_heap(tmp_path):
    model = load_model(write_model(tmp_path, MEMORY_DOC))
    assert parse_stage("{x,y}", model) == ("x", "y")
    assert parse_stage("{}", model) == ()
    heap = parse_heap("{x:0, y:null}", ("x", "y"))
    assert heap == Heap.of(("x", "y"), {"x": 0, "y": None})
    assert parse_heap('{"x": 1}', ("x",)) == Heap.of(("x",), {"x": 1})
    with pytest.raises(ModelSchemaError):
        parse_heap("{x:0}", ("x", "y"))


def run_cli(argv):
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    return run_command(args.command, args)


def test_sat_weak_exit_zero_with_witness(tmp_path):
    model_path = write_model(tmp_path, MEMORY_DOC)
    report = run_cli(
        [
            "sat",
            "--model",
            model_path,
            "--formula",
            "x |->! 0 * x |->! 0",
            "--heap",
            "{x:0}",
            "--stage",
            "{x}",
        ]
    )
    assert report.exit_code == 0
    assert report.witnesses[0]["left_stage"] == ["x"]


def test_sat_strong_exit_one(tmp_path):
    doc = dict(MEMORY_DOC, monoid="strong-partial")
    report = run_cli(
        [
            "sat",
            "--model",
            write_model(tmp_path, doc),
            "--formula",
            "x |->! 0 * x |->! 0",
            "--heap",
            "{x:0}",
            "--stage",
            "{x}",
        ]
    )
    assert report.exit_code == 1


def test_check_site_and_sheaf(tmp_path):
    model_path = write_model(tmp_path, MEMORY_DOC)
    assert run_cli(["check-site", "--model", model_path]).exit_code == 0
    assert run_cli(["check-sheaf", "--model", model_path]).exit_code == 0


def test_check_sheaf_fails_for_support_bounded(tmp_path):
    doc = dict(MEMORY_DOC, sheaf="support-bounded", support_bound=1, monoid=None)
    report = run_cli(["check-sheaf", "--model", write_model(tmp_path, doc)])
    assert report.exit_code == 1
    assert any(w["kind"] == "existence" for w in report.witnesses)


def test_eval_named_formula(tmp_path):
    model_path = write_model(tmp_path, MEMORY_DOC)
    report = run_cli(["eval", "--model", model_path, "--name", "both"])
    assert report.exit_code == 0
    rows = {tuple(r["at"]): r["members"] for r in report.status["family"]}
    assert {"x": 0, "y": 1} in rows[("x", "y")]


def test_laws_small_model(tmp_path):
    doc = dict(MEMORY_DOC, locations=["x"], formulas={})
    report = run_cli(
        ["laws", "--model", write_model(tmp_path, doc), "--samples", "10", "--seed", "7"]
    )
    assert report.exit_code == 0, report.status


def test_psl_command(tmp_path):
    model_path = write_model(tmp_path, PSL_DOC)
    good = run_cli(["psl", "--model", model_path, "--name", "indep", "--space", "unif4"])
    assert good.exit_code == 0
    assert good.witnesses[0]["q1"] == [1, 1, 2, 2]
    bad = run_cli(["psl", "--model", model_path, "--name", "indep", "--space", "corr"])
    assert bad.exit_code == 1


def test_main_json_deterministic(tmp_path, capsys):
    model_path = write_model(tmp_path, MEMORY_DOC)
    argv = [
        "sat",
        "--model",
        model_path,
        "--formula",
        "x |->! 0 * y |->! 1",
        "--heap",
        "{x:0, y:1}",
        "--stage",
        "{x,y}",
        "--json",
    ]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    second = capsys.readouterr().out
    assert first == second
    doc = json.loads(first)
    assert doc["status"]["result"] is True
    assert doc["witnesses"][0]["left_stage"] == ["x"]


def test_main_usage_error_exit_two(tmp_path, capsys):
    model_path = write_model(tmp_path, MEMORY_DOC)
    assert main(["sat", "--model", model_path, "--heap", "{x:0}", "--stage", "{x}"]) == 2
    assert main(["eval", "--model", model_path, "--formula", "z |-> 9"]) == 2


def test_main_unknown_model_file(capsys):
    assert main(["check-site", "--model", "/nonexistent.json"]) == 2


def test_json_reports_byte_identical_across_processes(tmp_path):
    """Fixed iteration orders and witness tie-breaks make reports
    byte-identical even under different interpreter hash seeds."""
    import os
    import subprocess
    import sys

    model_path = write_model(tmp_path, MEMORY_DOC)
    argv = [
        sys.executable,
        "-m",
        "sheafsep",
        "eval",
        "--model",
        model_path,
        "--name",
        "both",
        "--json",
    ]
    outputs = set()
    for seed in ("0", "1", "314159"):
        env = dict(os.environ, PYTHONHASHSEED=seed)
        proc = subprocess.run(argv, capture_output=True, env=env, check=True)
        outputs.add(proc.stdout)
    assert len(outputs) == 1
