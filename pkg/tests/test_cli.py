import json

import pytest

from hvx.cli import main
from hvx.corpus import fixture_source
from hvx.kernel import run_program


@pytest.fixture
def write(tmp_path):
    def go(text, name="prog.hvx"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return str(p)

    return go


def test_run_plain_program(write, capsys):
    assert main(["run", write("(+ 1 2)")]) == 0
    assert capsys.readouterr().out == "3\n"


def test_run_counter_before_and_after_edit(write, capsys):
    path = write(fixture_source("counter"))
    assert main(["run", path]) == 0
    assert capsys.readouterr().out.strip() == "42"
    path2 = write(fixture_source("counter").replace("{:count 42}", "{:count 43}"), "edited.hvx")
    assert main(["run", path2]) == 0
    assert capsys.readouterr().out.strip() == "43"


def test_run_unresolved_visx_names_symbol(write, capsys):
    path = write("(Widget {:x 1})")
    assert main(["run", path]) == 1
    assert "Widget" in capsys.readouterr().err


def test_run_json_envelope(write, capsys):
    assert main(["run", write("(+ 1 2)"), "--json"]) == 0
    assert json.loads(capsys.readouterr().out) == {"ok": True, "value": "3"}
    assert main(["run", write("(/ 1 0)", "crash.hvx"), "--json"]) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] is False and "division by zero" in out["error"]


def test_run_prints_program_output(write, capsys):
    assert main(["run", write('(println "hello") 7')]) == 0
    assert capsys.readouterr().out == "hello\n7\n"


def test_run_fuel_flag(write, capsys):
    assert main(["run", write("(reduce + 0 (range 100000))"), "--fuel", "50"]) == 1
    assert "fuel" in capsys.readouterr().err


def test_expand_bezier_shows_binding_structure(write, capsys):
    path = write(fixture_source("bezier"))
    assert main(["expand", path]) == 0
    out = capsys.readouterr().out
    assert "{:keys [AB BC ABC]}" in out
    assert "compute-mid-points" in out


def test_expand_plain_file_is_canonical_reprint(write, capsys):
    path = write("(def x 1)\n(+  x\n   2)\n")
    assert main(["expand", path]) == 0
    assert capsys.readouterr().out == "(def x 1)\n(+ x 2)\n"


def test_expand_output_runs_identically(write, capsys, tmp_path):
    for name in ["counter", "bezier", "form-builder", "state-machine"]:
        path = write(fixture_source(name), f"{name}.hvx")
        assert main(["expand", path]) == 0
        expanded = capsys.readouterr().out
        original = run_program(fixture_source(name)).value_text
        again = run_program(expanded).value_text
        assert again == original, name


def test_expand_meta_fixture_contains_generated_definition(write, capsys):
    path = write(fixture_source("form-builder"))
    assert main(["expand", path]) == 0
    assert "(defvisx GradeForm" in capsys.readouterr().out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
