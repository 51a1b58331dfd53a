import csv
import re
import subprocess
import sys

from geolin.cli import BENCH_ROWS, bench_timings, fmt, main
from geolin.model import build_test_system, dump_model, random_model

FLOAT = re.compile(r"^-?\d\.\d{16}e[+-]\d{2}$")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fmt_round_trips():
    for x in (0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23):
        assert float(fmt(x)) == x
        assert FLOAT.match(fmt(x))


def test_validate_writes_trials_and_aggregate(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["validate", "--test-system", "--trials", "3", "--seed", "1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0][:2] == ["kind", "index"] and len(rows[0]) == 10
    assert [r[0] for r in rows[1:]] == ["trial", "trial", "trial", "aggregate"]
    assert all(FLOAT.match(x) for x in rows[-1][2:])


def test_validate_is_byte_identical(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["validate", "--test-system", "--trials", "4", "--out", str(a)])
    monkeypatch.setenv("GEOLIN_THREADS", "3")
    main(["validate", "--test-system", "--trials", "4", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_validate_base_only_single_trial(tmp_path):
    model = tmp_path / "base.model"
    model.write_text(dump_model(random_model(0, 0)))
    out = tmp_path / "r.csv"
    assert main(["validate", "--model", str(model), "--trials", "1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [r[0] for r in rows[1:]] == ["trial", "aggregate"]


def test_validate_model_file(tmp_path):
    model = tmp_path / "sys.model"
    model.write_text(dump_model(build_test_system()))
    out = tmp_path / "r.csv"
    assert main(["validate", "--model", str(model), "--trials", "2", "--random-params", "--out", str(out)]) == 0


def test_validate_tolerance_breach(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["validate", "--test-system", "--trials", "2", "--max-tol", "1e-12", "--out", str(out)])
    assert code == 1
    assert "tolerance breach" in capsys.readouterr().err


def test_malformed_model_exit_2(tmp_path, capsys):
    model = tmp_path / "bad.model"
    model.write_text("base inertia=1,2\n")
    out = tmp_path / "r.csv"
    assert main(["validate", "--model", str(model), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "line 1" in err
    assert not out.exists()


def test_missing_model_exit_2(tmp_path):
    assert main(["validate", "--model", str(tmp_path / "nope.model")]) == 2


def test_bad_arguments_exit_2():
    assert main(["validate"]) == 2
    assert main(["validate", "--test-system", "--trials", "0"]) == 2


def test_bad_thread_env_exit_2(monkeypatch, tmp_path):
    monkeypatch.setenv("GEOLIN_THREADS", "-1")
    assert main(["validate", "--test-system", "--trials", "1", "--out", str(tmp_path / "r.csv")]) == 2


def test_study_rejects_unsorted(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["study", "--test-system", "--deltas", "1e-6", "1e-4", "--out", str(out)]) == 2
    assert "descending" in capsys.readouterr().err
    assert not out.exists()


def test_study_rows(tmp_path):
    out = tmp_path / "s.csv"
    code = main(["study", "--test-system", "--trials", "2", "--deltas", "1e-2", "1e-7", "1e-12", "--out", str(out)])
    rows = read_csv(out)
    assert rows[0][0] == "delta" and len(rows) == 4
    assert [float(r[0]) for r in rows[1:]] == [1e-2, 1e-7, 1e-12]
    assert code == 0


def test_study_without_interior_minimum(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["study", "--test-system", "--trials", "2", "--deltas", "1e-1", "1e-2", "1e-3", "--out", str(out)]) == 1


def test_single_delta_study_equals_validate(tmp_path):
    s, v = tmp_path / "s.csv", tmp_path / "v.csv"
    main(["study", "--test-system", "--trials", "3", "--deltas", "1e-6", "--out", str(s)])
    main(["validate", "--test-system", "--trials", "3", "--delta", "1e-6", "--out", str(v)])
    assert read_csv(s)[1][1:] == read_csv(v)[-1][2:]


def test_bench_rows(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--test-system", "--trials", "1", "--repeats", "3", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["operation", "median_seconds"]
    assert [r[0] for r in rows[1:]] == list(BENCH_ROWS)
    assert all(float(r[1]) > 0 for r in rows[1:])


def test_bench_linearize_dominates():
    t = bench_timings(build_test_system(), trials=2, repeats=5, seed=0)
    assert t["linearize"] >= max(v for k, v in t.items() if k != "linearize")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "geolin", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "validate" in proc.stdout
