import argparse
import json
import os
import subprocess
import sys

import pytest

import cli_pipeline
from vek import dataio
from vek.cli import DEFAULT_SEED, build_parser, main


def subcommand_pairs(parser):
    pairs = set()
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for group, sub in action.choices.items():
                for inner in sub._actions:
                    if isinstance(inner, argparse._SubParsersAction):
                        pairs |= {(group, name) for name in inner.choices}
    return pairs


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    return cli_pipeline.prepare_inputs(tmp_path_factory.mktemp("inputs"))


class TestUsage:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
        assert "usage" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [["frobnicate"], ["pu", "fly"], ["pu", "fit", "--out", "x.json"]])
    def test_usage_errors_exit_two(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2

    def test_bad_flag_value_names_flag(self, capsys):
        with pytest.raises(SystemExit):
            main(["diag", "faithfulness", "--input", "a", "--saliency", "b", "--out", "c", "--thresholds", "0,x"])
        assert "--thresholds" in capsys.readouterr().err

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "vek", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "pu" in proc.stdout


class TestDeterminism:
    def test_pu_fit_twice(self, fixtures, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        outputs = []
        for _ in range(2):
            assert main(["pu", "fit", "--mode", "puc", "--input", str(fixtures / "scar.jsonl"), "--out", "r.json", "--seed", "7"]) == 0
            outputs.append((tmp_path / "r.json").read_bytes())
        assert outputs[0] == outputs[1]
        doc = json.loads(outputs[0])
        assert {"tool_version", "seed", "config", "wall_time", "results"} <= set(doc)
        assert doc["seed"] == 7 and doc["config"]["mode"] == "puc"

    def test_every_subcommand_twice(self, inputs, tmp_path):
        a = cli_pipeline.run_all(inputs, tmp_path / "a")
        b = cli_pipeline.run_all(inputs, tmp_path / "b")
        assert a == b
        for name in a:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_pipeline_covers_every_subcommand(self):
        covered = {tuple(argv[:2]) for argv in cli_pipeline.commands(lambda name: name)}
        assert covered == subcommand_pairs(build_parser())

    def test_wall_time_flag(self, fixtures, tmp_path):
        out = tmp_path / "r.json"
        main(["pu", "convert", "--input", str(fixtures / "scar.jsonl"), "--out", str(out), "--record-wall-time"])
        assert dataio.read_report(out)["wall_time"] >= 0.0


class TestSeed:
    def run(self, fixtures, out, *extra):
        assert main(["pu", "convert", "--input", str(fixtures / "scar.jsonl"), "--out", str(out), *extra]) == 0
        return dataio.read_report(out)["seed"]

    def test_default(self, fixtures, tmp_path, monkeypatch):
        monkeypatch.delenv("VEK_SEED", raising=False)
        assert self.run(fixtures, tmp_path / "r.json") == DEFAULT_SEED == 13

    def test_env_overrides_default(self, fixtures, tmp_path, monkeypatch):
        monkeypatch.setenv("VEK_SEED", "21")
        assert self.run(fixtures, tmp_path / "r.json") == 21

    def test_explicit_beats_env(self, fixtures, tmp_path, monkeypatch):
        monkeypatch.setenv("VEK_SEED", "21")
        assert self.run(fixtures, tmp_path / "r.json", "--seed", "5") == 5

    def test_bad_env_is_usage_error(self, fixtures, tmp_path, monkeypatch):
        monkeypatch.setenv("VEK_SEED", "abc")
        with pytest.raises(SystemExit) as info:
            self.run(fixtures, tmp_path / "r.json")
        assert info.value.code == 2


class TestDataErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["pu", "fit", "--input", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "r.json")]) == 1
        assert "none.jsonl" in capsys.readouterr().err

    def test_bad_line_cites_file_and_line(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id":"a","features":[1.0],"pu_flag":"labelled"}\n{broken\n')
        assert main(["pu", "fit", "--input", str(path), "--out", str(tmp_path / "r.json")]) == 1
        assert "bad.jsonl:2" in capsys.readouterr().err

    def test_unknown_saliency_id(self, inputs, tmp_path, capsys):
        sal = tmp_path / "s.jsonl"
        sal.write_text('{"id":"ghost","class":0,"scores":[0.1]}\n')
        argv = ["diag", "faithfulness", "--input", str(inputs / "tokens.jsonl"), "--saliency", str(sal)]
        assert main(argv + ["--model", str(inputs / "model.json"), "--out", str(tmp_path / "r.json")]) == 1
        err = capsys.readouterr().err
        assert "ghost" in err and "s.jsonl" in err

    def test_no_report_on_failure(self, tmp_path):
        out = tmp_path / "r.json"
        main(["pu", "fit", "--input", str(tmp_path / "none.jsonl"), "--out", str(out)])
        assert not out.exists()


def test_no_stray_files(inputs, tmp_path, monkeypatch):
    # reports land only where --out points
    monkeypatch.chdir(tmp_path)
    main(["explain", "rouge", "--candidate", "a b", "--reference", "a b", "--out", "sub.json"])
    assert os.listdir(tmp_path) == ["sub.json"]
