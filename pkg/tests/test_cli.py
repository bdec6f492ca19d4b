import json

import numpy as np
import pytest

from weaknull.cli import main
from weaknull.errors import ParseError
from weaknull.ingest import read_csv


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture
def toy_csv(tmp_path):
    return write(tmp_path, "toy.csv", "treatment,outcome\n1,1\n1,2\n2,3\n2,4\n")


@pytest.fixture
def three_arm_csv(tmp_path):
    rng = np.random.default_rng(3)
    lines = ["unit_id,treatment,outcome"]
    for i in range(30):
        lines.append(f"u{i},{i % 3 + 1},{float(rng.normal() * (1 + i % 3)) + (i % 3 == 2)!r}")
    return write(tmp_path, "three.csv", "\n".join(lines) + "\n")


def test_read_basic(toy_csv):
    data = read_csv(toy_csv)
    assert data.J == 2 and data.N == 4
    assert data.outcome[:, 0].tolist() == [1, 2, 3, 4]


def test_read_vector(tmp_path):
    path = write(tmp_path, "v.csv", "treatment,outcome_2,outcome_1\n" + "".join(f"{t},{i},{i * i}\n" for i, t in enumerate([1, 1, 1, 2, 2, 2])))
    data = read_csv(path)
    assert data.d == 2
    assert data.outcome[1].tolist() == [1, 1]
    assert data.outcome[2].tolist() == [4, 2]


def test_numeric_labels_sort_by_value(tmp_path):
    rows = "".join(f"{t},{i}\n" for i, t in enumerate([2, 2, 10, 10, 1, 1]))
    data = read_csv(write(tmp_path, "n.csv", "treatment,outcome\n" + rows))
    assert data.arm_labels == ("1", "2", "10")


def test_parse_error_line(tmp_path):
    path = write(tmp_path, "bad.csv", "treatment,outcome\n1,1\n1,2\n2,oops\n2,4\n")
    with pytest.raises(ParseError) as err:
        read_csv(path)
    assert err.value.line == 4


def test_missing_column(tmp_path):
    with pytest.raises(ParseError):
        read_csv(write(tmp_path, "m.csv", "arm,outcome\n1,2\n"))


def test_optional_columns(tmp_path):
    text = "treatment,outcome,stratum\n" + "".join(f"{t},{v},{s}\n" for t, v, s in zip([1, 1, 2, 2] * 2, range(8), "aaaabbbb"))
    path = write(tmp_path, "s.csv", text)
    assert read_csv(path).design == "SRE"
    assert read_csv(path, stratified=False).design == "CRE"


def test_exact_toy(toy_csv, capsys):
    assert main(["test", toy_csv, "--contrast", "tc", "--exact"]) == 0
    out = capsys.readouterr().out
    assert "33.33%" in out and "(2/6)" in out


def test_json_round_trip(three_arm_csv, capsys):
    assert main(["test", three_arm_csv, "--draws", "500", "--seed", "3", "--output", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    from weaknull.contrast import anova_contrast, make_hypothesis
    from weaknull.engine import frt_pvalue

    res = frt_pvalue(read_csv(three_arm_csv), make_hypothesis(anova_contrast(3)), "x2", draws=500, seed=3)
    assert report["p_frt"] == res.p_frt
    assert report["t_obs"] == res.t_obs
    assert report["p_reference"] == res.p_reference
    assert report["seed"] == 3


def test_rejection_is_not_an_error(three_arm_csv, capsys):
    assert main(["test", three_arm_csv, "--draws", "200", "--seed", "1", "--alpha", "0.999"]) == 0
    assert "reject" in capsys.readouterr().out


def test_error_exit_codes(tmp_path, toy_csv, capsys):
    bad = write(tmp_path, "bad.csv", "treatment,outcome\n1,x\n")
    assert main(["test", bad]) == 2
    assert main(["test", toy_csv, "--contrast", "anova", "--stat", "box", "--null", "1"]) == 3
    tied = write(tmp_path, "tied.csv", "treatment,outcome\n1,0\n1,1\n2,0\n2,1\n")
    assert main(["test", tied, "--exact"]) == 4
    assert main(["test", str(tmp_path / "missing.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_jitter_breaks_ties(tmp_path, capsys):
    tied = write(tmp_path, "tied.csv", "treatment,outcome\n1,0\n1,1\n2,0\n2,1\n")
    assert main(["test", tied, "--exact", "--jitter", "0.01", "--seed", "4"]) == 0


def test_trend_and_tplus(three_arm_csv, capsys):
    assert main(["test", three_arm_csv, "--stat", "trend", "--doses", "0,1,2", "--draws", "200", "--seed", "1"]) == 0
    assert main(["test", three_arm_csv, "--stat", "tplus", "--contrast", "file:" + write_matrix(three_arm_csv), "--draws", "200", "--seed", "1"]) == 0


def write_matrix(near):
    import os

    path = os.path.join(os.path.dirname(near), "C.csv")
    with open(path, "w") as fh:
        fh.write("1,-1,0\n")
    return path


def test_ci_command(three_arm_csv, capsys):
    path = write_matrix(three_arm_csv)
    assert main(["ci", three_arm_csv, "--contrast", "file:" + path, "--grid", "7", "--draws", "100", "--seed", "2", "--output", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["grid"]) == 7
    assert report["grid"][3]["accepted"]


def test_weights_command(capsys):
    assert main(["weights", "--u", "3,1,1,3", "--contrast", "factorial:2:1,2"]) == 0
    out = capsys.readouterr().out
    assert "(1.000, 1.000)" in out and "(1.800, 0.200)" in out


def test_weights_population_file(tmp_path, capsys):
    path = write(tmp_path, "pop.json", json.dumps({"p": [0.5, 0.5], "S": [[1, 0.5], [0.5, 2]]}))
    assert main(["weights", "--population", path, "--contrast", "tc", "--output", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["x2"]) == 1 and report["x2"][0] <= 1


def test_simulate_command(tmp_path, capsys):
    prefix = str(tmp_path / "sim")
    assert main(["simulate", "--n", "5", "--replications", "10", "--permutations", "49", "--prefix", prefix]) == 0
    assert (tmp_path / "sim_rates.csv").exists() and (tmp_path / "sim_hist.csv").exists()
