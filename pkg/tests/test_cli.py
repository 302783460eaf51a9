import csv
import json
import logging
import subprocess
import sys

import numpy as np
import pytest

from cmmkit import data as dm
from cmmkit import io as model_io
from cmmkit.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["--seed", "1", "synth", "mixed", "--n", "240", "--out", str(d / "mixed.csv"),
                 "--schema-out", str(d / "mixed.schema")]) == 0
    assert main(["train", "--data", str(d / "mixed.csv"), "--schema", str(d / "mixed.schema"),
                 "--out-model", str(d / "mixed.json"), "--components", "4", "--max-iter", "40",
                 "--trace", str(d / "trace.csv")]) == 0
    return d


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestTrain:
    def test_model_and_trace_written(self, workdir):
        clf, so = model_io.load_model(workdir / "mixed.json")
        assert so is not None and clf.n_components >= 2
        rows = list(csv.DictReader(open(workdir / "trace.csv")))
        assert rows[0]["iteration"] == "1"

    def test_builtin_iris_bounded(self, tmp_path, capsys):
        code, out, _ = run(["train", "--data", "builtin:iris", "--out-model", str(tmp_path / "i.json"),
                            "--max-iter", "60"], capsys)
        assert code == 0 and "components" in out
        clf, _ = model_io.load_model(tmp_path / "i.json")
        assert clf.n_components <= 30

    def test_bad_schema_exit_2(self, workdir, tmp_path, capsys):
        bad = tmp_path / "bad.schema"
        bad.write_text("x1: banana\n")
        out_model = tmp_path / "never.json"
        code, _, err = run(["train", "--data", str(workdir / "mixed.csv"), "--schema", str(bad),
                            "--out-model", str(out_model)], capsys)
        assert code == 2 and "error" in err and not out_model.exists()

    def test_missing_schema_exit_2(self, workdir, tmp_path, capsys):
        code, _, _ = run(["train", "--data", str(workdir / "mixed.csv"), "--out-model", str(tmp_path / "m.json")],
                         capsys)
        assert code == 2

    def test_impo_trace_monotone(self, tmp_path, capsys):
        trace = tmp_path / "t.csv"
        code, _, _ = run(["train", "--data", "builtin:iris", "--out-model", str(tmp_path / "m.json"),
                          "--prune", "impo", "--prune-threshold", "0.5", "--trace", str(trace)], capsys)
        counts = [int(r["components"]) for r in csv.DictReader(open(trace))]
        assert code == 0 and all(a >= b for a, b in zip(counts, counts[1:]))

    def test_invalid_threshold(self, tmp_path, capsys):
        code, _, _ = run(["train", "--data", "builtin:iris", "--out-model", str(tmp_path / "m.json"),
                          "--prune", "impo", "--prune-threshold", "3"], capsys)
        assert code == 2

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--bogus"])
        assert exc.value.code == 2


class TestModelCommands:
    def test_classify(self, workdir, capsys):
        code, out, _ = run(["classify", "--model", str(workdir / "mixed.json"), "--data", str(workdir / "mixed.csv")],
                           capsys)
        rows = list(csv.reader(out.splitlines()))
        assert code == 0 and rows[0][:2] == ["index", "prediction"] and len(rows) == 241

    def test_eval(self, workdir, capsys):
        code, out, _ = run(["eval", "--model", str(workdir / "mixed.json"), "--data", str(workdir / "mixed.csv")],
                           capsys)
        n, acc, err = out.splitlines()[1].split(",")
        assert code == 0 and n == "240" and float(acc) + float(err) == pytest.approx(1.0)

    def test_measures_csv(self, workdir, capsys):
        code, out, _ = run(["measures", "--model", str(workdir / "mixed.json"), "--data", str(workdir / "mixed.csv"),
                            "--ranks"], capsys)
        header = out.splitlines()[0].split(",")
        assert code == 0 and header[3:] == ["info", "uniq", "impo", "disc", "repr", "unct", "dsng"]
        assert "measure,value,rank,component" in out

    def test_measures_without_second_order(self, workdir, tmp_path, capsys):
        clf, _ = model_io.load_model(workdir / "mixed.json")
        model_io.save_model(tmp_path / "nso.json", clf)
        code, out, _ = run(["measures", "--model", str(tmp_path / "nso.json"), "--data", str(workdir / "mixed.csv")],
                           capsys)
        assert code == 0 and "unct" not in out.splitlines()[0]

    def test_measures_unknown_name(self, workdir, capsys):
        code, _, _ = run(["measures", "--model", str(workdir / "mixed.json"), "--data", str(workdir / "mixed.csv"),
                          "--measures", "impo,bogus"], capsys)
        assert code == 2

    def test_rank(self, workdir, capsys):
        code, out, _ = run(["rank", "--model", str(workdir / "mixed.json"), "--data", str(workdir / "mixed.csv"),
                            "--measure", "impo"], capsys)
        ranks = [int(line.split(",")[2]) for line in out.strip().splitlines()[1:]]
        assert code == 0 and ranks == sorted(ranks)

    def test_rules_rejects_full_covariance(self, workdir, capsys):
        code, _, err = run(["rules", "--model", str(workdir / "mixed.json")], capsys)
        assert code == 1 and "non-diagonal" in err

    def test_rules_diag_json(self, workdir, tmp_path, capsys):
        model = tmp_path / "diag.json"
        assert main(["train", "--data", str(workdir / "mixed.csv"), "--schema", str(workdir / "mixed.schema"),
                     "--out-model", str(model), "--covariance", "diag", "--components", "3"]) == 0
        capsys.readouterr()
        code, out, _ = run(["rules", "--model", str(model), "--format", "json"], capsys)
        doc = json.loads(out)
        assert code == 0 and len(doc["rules"]) == model_io.load_model(model)[0].n_components

    def test_missing_model_file(self, workdir, capsys):
        code, _, _ = run(["eval", "--model", str(workdir / "nope.json"), "--data", str(workdir / "mixed.csv")],
                         capsys)
        assert code == 1

    def test_column_mismatch(self, workdir, tmp_path, capsys):
        p = tmp_path / "other.csv"
        dm.save_csv(dm.two_moons(n=20, seed=0), open(p, "w", newline=""))
        code, _, _ = run(["eval", "--model", str(workdir / "mixed.json"), "--data", str(p)], capsys)
        assert code == 2


@pytest.fixture(scope="module")
def stream(tmp_path_factory):
    d = tmp_path_factory.mktemp("nov")
    rng = np.random.default_rng(0)
    bg = dm.background_training_set(n=400, seed=1)
    model = d / "bg.json"
    schema = d / "bg.schema"
    dm.save_csv(bg, open(d / "bg.csv", "w", newline=""))
    schema.write_text("".join(f"{k}: {v}\n" for k, v in dm.schema_declaration(bg.schema).items()))
    assert main(["train", "--data", str(d / "bg.csv"), "--schema", str(schema), "--out-model", str(model),
                 "--components", "3"]) == 0
    xs = rng.standard_normal((900, 2))
    novel = (np.arange(900) >= 300) & (np.arange(900) < 600) & (rng.random(900) < 0.25)
    xs[novel] += [6.0, 0.0]
    lines = ["x1,x2"] + [f"{a!r},{b!r}" for a, b in xs.tolist()]
    (d / "stream.csv").write_text("\n".join(lines) + "\n")
    return d


class TestNoveltyCommand:
    def stream_args(self, d, *extra):
        return ["novelty", "--model", str(d / "bg.json"), "--stream", str(d / "stream.csv"),
                "--window", "150", "--every", "10", *extra]

    def test_output_and_alarm(self, stream, capsys):
        code, out, err = run(self.stream_args(stream), capsys)
        rows = out.strip().splitlines()
        assert code == 0 and rows[0] == "stream_index,raw,z" and len(rows) > 50
        assert err.count("alarm:") >= 1

    def test_deterministic(self, stream, capsys):
        _, a, _ = run(self.stream_args(stream), capsys)
        _, b, _ = run(self.stream_args(stream), capsys)
        assert a == b

    def test_window_larger_than_stream(self, stream, capsys, caplog):
        caplog.set_level(logging.WARNING, logger="cmmkit")
        code, out, err = run(["novelty", "--model", str(stream / "bg.json"), "--stream", str(stream / "stream.csv"),
                              "--window", "5000"], capsys)
        assert code == 0 and out.strip() == "stream_index,raw,z"
        assert "too short" in caplog.text


class TestCorrelateAndSynth:
    def test_models_dir(self, workdir, tmp_path, capsys):
        d = tmp_path / "models"
        d.mkdir()
        (d / "mixed.json").write_text((workdir / "mixed.json").read_text())
        (d / "mixed.csv").write_text((workdir / "mixed.csv").read_text())
        code, out, _ = run(["correlate", "--models-dir", str(d), "--format", "csv"], capsys)
        assert code == 0
        first = out.splitlines()[1].split(",")
        assert first[:3] == ["info", "info", "1.0"]

    def test_unknown_dataset(self, capsys):
        code, _, _ = run(["correlate", "--datasets-list", "nonexistent"], capsys)
        assert code == 2

    def test_synth_reproducible(self, capsys):
        _, a, _ = run(["--seed", "3", "synth", "two_moons", "--n", "50"], capsys)
        _, b, _ = run(["--seed", "3", "synth", "two_moons", "--n", "50"], capsys)
        assert a == b and len(a.strip().splitlines()) == 51

    def test_entry_point_help(self):
        r = subprocess.run([sys.executable, "-m", "cmmkit.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0 and "novelty" in r.stdout
