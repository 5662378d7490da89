import json
import subprocess
import sys

import numpy as np
import pytest

from fisherot.cli import main


@pytest.fixture(scope="module")
def ex1(tmp_path_factory):
    d = tmp_path_factory.mktemp("ex1")
    assert main(["example", "1", "--out-dir", str(d)]) == 0
    return d / "example1_p0.csv", d / "example1_p1.csv"


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_example1(tmp_path, capsys, ex1):
    report = tmp_path / "r.json"
    code, out, _ = _run(
        capsys,
        ["solve", "--input0", str(ex1[0]), "--input1", str(ex1[1]), "--domain", "0,2", "--floor", "0",
         "--out-dir", str(tmp_path / "frames"), "--report", str(report)],
    )
    assert code == 0, out
    rep = json.loads(report.read_text())
    assert rep["termination"] == "converged"
    assert rep["max_feasibility_residual"] <= 1e-8
    assert len(list((tmp_path / "frames").glob("frame_*.csv"))) == 32


def test_distance_vs_oracle(capsys, ex1):
    args = ["--input0", str(ex1[0]), "--input1", str(ex1[1]), "--domain", "0,2"]
    code, out, _ = _run(capsys, ["distance", *args])
    assert code == 0
    est = float(out.strip())
    code, out, _ = _run(capsys, ["oracle-1d", *args])
    assert code == 0
    exact = float(out.strip())
    assert abs(est - exact) / exact < 0.1


def test_oracle_identical_files(capsys, ex1):
    code, out, _ = _run(capsys, ["oracle-1d", "--input0", str(ex1[0]), "--input1", str(ex1[0])])
    assert code == 0 and float(out) == 0.0


def test_oracle_rejects_2d(tmp_path, capsys):
    f = tmp_path / "a.csv"
    f.write_text("1,2\n3,4\n")
    code, _, err = _run(capsys, ["oracle-1d", "--input0", str(f), "--input1", str(f)])
    assert code == 2 and "one-dimensional" in err


def test_deterministic_reports(tmp_path, capsys, ex1):
    reps = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        main(["solve", "--input0", str(ex1[0]), "--input1", str(ex1[1]), "--time-steps", "8",
              "--out-dir", str(tmp_path / f"f{k}"), "--report", str(path), "--seed", "5"])
        rep = json.loads(path.read_text())
        rep.pop("wall_time_s")
        reps.append(rep)
    capsys.readouterr()
    assert reps[0] == reps[1]
    for a in sorted((tmp_path / "f0").iterdir()):
        assert a.read_bytes() == (tmp_path / "f1" / a.name).read_bytes()


@pytest.mark.parametrize(
    "argv_tail, code",
    [
        (["--input0", "missing.csv", "--input1", "missing.csv"], 2),
        (["--input0", "{a}", "--input1", "{b}"], 2),
        (["--input0", "{z}", "--input1", "{z}", "--floor", "0"], 2),
    ],
)
def test_input_errors(tmp_path, capsys, argv_tail, code):
    a, b, z = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "z.csv"
    a.write_text("1\n2\n3\n")
    b.write_text("1\n2\n")
    z.write_text("0\n0\n0\n")
    argv = ["solve"] + [s.format(a=a, b=b, z=z) for s in argv_tail]
    got, _, err = _run(capsys, argv)
    assert got == code and err.startswith("error:")


def test_not_converged_exit_code(tmp_path, capsys, ex1):
    code, out, _ = _run(
        capsys, ["solve", "--input0", str(ex1[0]), "--input1", str(ex1[1]), "--max-iter", "1", "--time-steps", "4"]
    )
    assert code == 3 and out.startswith("max-iter")


def test_bad_domain_is_usage_error(capsys, ex1):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--input0", str(ex1[0]), "--input1", str(ex1[1]), "--domain", "2,0"])
    assert exc.value.code == 2


def test_verify_passes(capsys):
    code, out, _ = _run(capsys, ["verify", "--trials", "2"])
    assert code == 0
    assert out.count("[PASS]") == 6


def test_pgm_solve(tmp_path, capsys):
    from fisherot.io import write_pgm

    img0 = np.zeros((6, 6), dtype=int)
    img1 = np.zeros((6, 6), dtype=int)
    img0[1, 1] = img1[4, 4] = 200
    write_pgm(tmp_path / "a.pgm", img0, 255)
    write_pgm(tmp_path / "b.pgm", img1, 255)
    code, _, _ = _run(capsys, ["solve", "--input0", str(tmp_path / "a.pgm"), "--input1", str(tmp_path / "b.pgm"),
                               "--time-steps", "4", "--out-dir", str(tmp_path / "out")])
    assert code == 0
    assert len(list((tmp_path / "out").glob("frame_*.pgm"))) == 6


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fisherot", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify" in proc.stdout


@pytest.mark.parametrize("which", ["1", "2", "3"])
def test_example_inputs_match_recipes(tmp_path, capsys, which):
    from fisherot import experiments, io

    assert main(["example", which, "--out-dir", str(tmp_path)]) == 0
    capsys.readouterr()
    prob = {"1": experiments.example1, "2": experiments.example2, "3": experiments.square_split}[which]()
    floor = 0.01 if which == "3" else 0.0
    for k, expected in enumerate((prob.p0, prob.p1)):
        h = io.read_histogram(tmp_path / f"example{which}_p{k}.csv")
        assert np.allclose(io.normalize_with_floor(h, floor), expected, rtol=1e-14, atol=0)
