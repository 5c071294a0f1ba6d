import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from clmda.cli import main
from clmda.simulate import reference_population, gen_dataset


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    X, ds, _ = gen_dataset(reference_population(), 200, np.random.default_rng(0), R=4, C=3)
    with open(d / "y.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ds.var_names)
        w.writerows(ds.codes.tolist())
    with open(d / "x.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(X.col_names) + ["sex"])
        w.writerow(["numeric"] * 5 + ["categorical:m"])
        for i, row in enumerate(X.values.tolist()):
            w.writerow([repr(v) for v in row] + ["f" if i % 3 else "m"])
    return d


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_prints_npar(data, tmp_path, capsys):
    code, out, _ = run(["fit", "--responses", data / "y.csv", "--predictors", data / "x.csv", "--model", "clrrr",
                        "--dims", 2, "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    # 4 x 2 thresholds + (6 + 4 - 2) x 2
    assert "npar 24" in out
    assert json.loads((tmp_path / "m.json").read_text())["npar"] == 24


def test_fit_is_deterministic(data, tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["fit", "--responses", data / "y.csv", "--predictors", data / "x.csv", "--model", "clrmdu",
                    "--dims", 2, "--starts", 2, "--max-outer", 50, "--out", tmp_path / f"{name}.json"], capsys)[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_exit_codes(data, tmp_path, capsys):
    base = ["fit", "--responses", data / "y.csv", "--out", tmp_path / "m.json"]
    assert run(base + ["--model", "clpca", "--dims", 5], capsys)[0] == 2
    for argv in (base + ["--model", "clrrr", "--dims", 2], ["fit", "--responses", data / "y.csv"]):
        with pytest.raises(SystemExit) as exc:
            main([str(a) for a in argv])
        assert exc.value.code == 64
    capsys.readouterr()
    assert run(["validate", "--responses", tmp_path / "nope.csv"], capsys)[0] == 2


def test_scan_dims(data, tmp_path, capsys):
    code, out, _ = run(["scan", "--responses", data / "y.csv", "--predictors", data / "x.csv", "--model", "clrrr",
                        "--dims-range", "1..2", "--out", tmp_path / "s.csv"], capsys)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["dims", "deviance", "npar", "aic", "bic"] and len(rows) == 3
    assert "AIC" in out
    assert json.loads((tmp_path / "s.csv.meta.json").read_text())


def test_biplot(data, tmp_path, capsys):
    run(["fit", "--responses", data / "y.csv", "--predictors", data / "x.csv", "--model", "clrmdu",
         "--dims", 2, "--starts", 1, "--out", tmp_path / "m.json"], capsys)
    for fmt in ("svg", "json"):
        code, _, _ = run(["biplot", "--model", tmp_path / "m.json", "--format", fmt, "--regions", "Y1",
                          "--grid", 10, "--out", tmp_path / f"b.{fmt}"], capsys)
        assert code == 0
    assert json.loads((tmp_path / "b.json").read_text())["schema"] == "biplot/1"
    assert run(["biplot", "--model", tmp_path / "m.json", "--format", "svg", "--dims", "1,3",
                "--out", tmp_path / "c.svg"], capsys)[0] == 2


def test_simulate(tmp_path, capsys):
    design = {"N_levels": [100], "C_levels": [3], "R_levels": [4], "replications": 2, "seed": 1,
              "families": ["dominance"], "max_outer": 50}
    (tmp_path / "d.json").write_text(json.dumps(design))
    for name in ("a", "b"):
        code, out, _ = run(["simulate", "--design", tmp_path / "d.json", "--out", tmp_path / f"{name}.csv"], capsys)
        assert code == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 3
    design["replications"] = 0
    (tmp_path / "z.json").write_text(json.dumps(design))
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--design", str(tmp_path / "z.json"), "--out", str(tmp_path / "z.csv")])
    assert exc.value.code == 64


def test_validate_and_recode(tmp_path, capsys):
    (tmp_path / "g.csv").write_text("a\n1\n3\n3\n1\n")
    code, out, _ = run(["validate", "--responses", tmp_path / "g.csv"], capsys)
    assert code == 2 and "category 2 unobserved" in out + _
    assert run(["recode", "--responses", tmp_path / "g.csv", "--out", tmp_path / "r.csv"], capsys)[0] == 0
    assert (tmp_path / "r.csv").read_text().split() == ["a", "1", "2", "2", "1"]
    assert run(["validate", "--responses", tmp_path / "r.csv"], capsys)[0] == 0


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "clmda", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout
