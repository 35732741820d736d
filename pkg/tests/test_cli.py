import csv
import json

import numpy as np
import pytest

from ctflow.cli import _split_phases, main, resolve_train_config

FAST = ["--phases", "logistic:2:3,mlp(4,4):2:1", "--window", "2", "--n", "300"]


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    return code


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = d / "m.json"
    assert main(["train", "--task", "squares", "--out", str(out), *FAST]) == 0
    return out


def test_train_outputs(model):
    trace = read_csv(str(model) + ".trace.csv")
    assert trace[0] == ["member", "tree", "validation_loglik"]
    assert trace[1][:2] == ["0", "0"]
    cfg = json.loads(open(str(model) + ".config.json").read())
    assert cfg["run"]["phases"] == ["logistic:2:3", "mlp(4,4):2:1"]
    assert cfg["train"]["window"] == 2
    assert "time" not in open(model).read().lower()


def test_eval(model, tmp_path):
    out = tmp_path / "e.csv"
    assert main(["eval", "--model", str(model), "--task", "squares", "--n", "200",
                 "--out", str(out)]) == 0
    rows = dict(read_csv(out)[1:])
    assert rows["n"] == "200" and np.isfinite(float(rows["mean_loglik"]))


def test_eval_on_csv(model, tmp_path):
    data = tmp_path / "d.csv"
    assert main(["simulate", "--task", "squares", "--n", "50", "--seed", "2",
                 "--out", str(data)]) == 0
    assert main(["eval", "--model", str(model), "--data", str(data), "--x-cols", "x",
                 "--y-cols", "y1,y2"]) == 0


def test_sample_rows(model, tmp_path):
    cov = tmp_path / "c.csv"
    cov.write_text("x,other\n0.25,1\n-0.5,2\n")
    out = tmp_path / "s.csv"
    args = ["sample", "--model", model, "--covariates", cov, "--x-cols", "x",
            "--n-per-row", 3, "--seed", 4, "--out", out]
    assert run(args) == 0
    rows = read_csv(out)
    assert rows[0] == ["x", "y1", "y2"] and len(rows) == 7
    assert [r[0] for r in rows[1:]] == ["0.25"] * 3 + ["-0.5"] * 3
    first = out.read_bytes()
    assert run(args) == 0 and out.read_bytes() == first


def test_truth_and_sse(model, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["truth", "--task", "elastic_ring", "--grid", "8", "--x", "0.25",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["x", "y1", "y2", "density"] and len(rows) == 65
    rep = tmp_path / "sse.txt"
    assert main(["sse", "--model", str(model), "--task", "squares", "--grid", "16",
                 "--out", str(rep)]) == 0
    lines = rep.read_text().splitlines()
    assert lines[0].startswith("# task=squares grid=16x16 bounds=")
    assert lines[-1].startswith("mean,") and len(lines) == 7


def test_truth_default_reference_values(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["truth", "--task", "squares", "--grid", "2", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 1 + 4 * 4


def test_bench(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--ns", "100,200", "--trees", "1", "--repeats", "1",
                 "--eval-dims", "2", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["kind", "n_or_d", "size", "seconds"]
    assert [r[0] for r in rows[1:]] == ["fit", "fit", "eval_per_point"]


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("c0: 0.2\neta: 0.3\nphases: ['logistic:2:1']\n")
    out = tmp_path / "m.json"
    assert main(["train", "--config", str(cfg), "--eta", "0.4", "--task", "squares",
                 "--n", "100", "--out", str(out)]) == 0
    echo = json.loads(open(str(out) + ".config.json").read())["train"]
    assert echo["c0"] == 0.2 and echo["eta"] == 0.4
    assert echo["phases"] == [{"kind": "logistic", "max_depth": 2, "max_trees": 1}]


def test_resolve_defaults():
    cfg = resolve_train_config({}, {})
    assert cfg["c0"] == 0.05 and cfg["rotations"] == 1
    assert resolve_train_config({"phases": "mlp(4,4):3,logistic:2"}, {})["phases"] == \
        ["mlp(4,4):3", "logistic:2"]
    assert _split_phases("mlp(8,8):2:5,logistic") == ["mlp(8,8):2:5", "logistic"]


@pytest.mark.parametrize("argv, code, msg", [
    (["train", "--task", "squares", "--out", "{tmp}/m.json", "--c0", "2"], 2, "ConfigError"),
    (["train", "--task", "squares"], 2, "--out is required"),
    (["train", "--config", "{tmp}/bad.yaml", "--out", "{tmp}/m.json"], 2, "unknown config key"),
    (["train", "--out", "{tmp}/m.json"], 2, "give either --data"),
    (["eval", "--model", "{tmp}/missing.json", "--task", "squares"], 1, "FileNotFoundError"),
    (["eval", "--model", "{tmp}/bad.yaml", "--task", "squares"], 2, "ModelFormatError"),
    (["train", "--task", "squares", "--out", "{tmp}/m.json", "--phases", "tree:2"], 2,
     "cannot parse phase"),
    (["train", "--task", "squares", "--out", "{tmp}/m.json", "--rotations", "2",
      "--axis-pairs", "0-5"], 2, "invalid axis pair"),
    (["--threads", "0", "simulate", "--task", "squares", "--out", "{tmp}/s.csv"], 2, "threads"),
])
def test_structured_errors(tmp_path, capsys, argv, code, msg):
    (tmp_path / "bad.yaml").write_text("c0: 0.1\nlearning_rate: 3\n")
    argv = [a.replace("{tmp}", str(tmp_path)) for a in argv]
    assert main(argv) == code
    err = capsys.readouterr().err
    assert err.startswith(f"ctflow {argv[0] if not argv[0].startswith('--') else argv[2]}: error:")
    assert msg in err


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CTFLOW_THREADS", "1")
    assert main(["simulate", "--task", "squares", "--n", "3", "--out",
                 str(tmp_path / "s.csv")]) == 0


def test_train_is_byte_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"m{k}.json"
        assert main(["--threads", "1", "train", "--task", "half_gaussian", "--rotations", "2",
                     "--x-bins", "2", "--out", str(out), *FAST]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
