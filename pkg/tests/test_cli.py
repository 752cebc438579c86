import csv

import pytest

from semipc.cli import main, parse_schema, read_config
from semipc.fixtures import MATCH_FILE, PROJECTION_FILE, bundled

SEASON = ["--input", str(bundled(MATCH_FILE)), "--features", "home,b2b", "--projections", str(bundled(PROJECTION_FILE))]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert main(["fit", *SEASON, "--sign", "auto", "--out", str(out)]) == 0
    return out


def test_fit_report(fitted):
    est = rows(fitted / "estimates.csv")
    assert [r["parameter"] for r in est[:2]] == ["home", "b2b"]
    for r in est[:2]:
        assert set(r) == {"parameter", "estimate", "std_error", "ci_lower", "ci_upper", "p_value"}
        assert float(r["ci_lower"]) < float(r["estimate"]) < float(r["ci_upper"])
    assert len(est) == 2 + 29
    ranks = rows(fitted / "ranks.csv")
    assert len(ranks) == 30 and ranks[0]["rank"] == "1"
    diag = {r["key"]: r["value"] for r in rows(fitted / "diagnostics.csv")}
    assert diag["special_sign"] == "-1" and diag["mode"] == "closed_form"
    assert (fitted / "criterion.csv").exists()


def test_sign_check_recommends_negative(tmp_path, capsys):
    assert main(["sign-check", *SEASON, "--out", str(tmp_path)]) == 0
    assert "recommended sign -1" in capsys.readouterr().out
    wr = [float(r["win_rate"]) for r in rows(tmp_path / "sign_check.csv")]
    assert all(a > b for a, b in zip(wr, wr[1:]))


def test_bandwidth_trace(tmp_path):
    assert main(["bandwidth", *SEASON, "--sign", "-1", "--grid", "0.05,0.1", "--out", str(tmp_path)]) == 0
    trace = rows(tmp_path / "criterion.csv")
    assert len(trace) == 2 and sum(r["selected"] == "1" for r in trace) == 1


def test_simulate_table(tmp_path):
    code = main(["simulate", "--n", "6", "--T", "2", "--reps", "5", "--bandwidth", "0.8", "--out", str(tmp_path)])
    assert code == 0
    m = rows(tmp_path / "metrics.csv")
    assert {"parameter", "truth", "bias", "sd", "cp"} == set(m[0])
    assert [r["parameter"] for r in m][-2:] == ["eta1", "eta2"]


def test_qq_and_compare(tmp_path):
    args = ["--n", "6", "--T", "3", "--reps", "10", "--bandwidth", "0.8", "--out", str(tmp_path)]
    assert main(["qq", *args, "--param", "eta2"]) == 0
    assert len(rows(tmp_path / "qq.csv")) == 10
    assert main(["compare", *args[:4], "--reps", "2", *args[6:]]) == 0
    assert "mle_bias" in rows(tmp_path / "comparison.csv")[0]


def test_qq_refuses_few_reps(tmp_path, capsys):
    assert main(["qq", "--n", "5", "--T", "2", "--reps", "3", "--bandwidth", "0.8", "--out", str(tmp_path)]) == 1
    assert "at least 10" in capsys.readouterr().err


def test_config_defaults_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nn = 6\nT = 2\nreps = 4\nbandwidth = 0.8\nout = " + str(tmp_path / "a") + "\n")
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert rows(tmp_path / "a" / "metrics.csv")[-3]["parameter"] == "theta6"
    assert main(["simulate", "--config", str(cfg), "--n", "8", "--out", str(tmp_path / "b")]) == 0
    names = [r["parameter"] for r in rows(tmp_path / "b" / "metrics.csv")]
    assert "theta8" in names


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_unknown_flag_is_usage_error(capsys):
    assert main(["fit", "--no-such-flag"]) != 0
    assert "usage" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    assert main(["fit", "--input", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 1
    assert "semipc: error" in capsys.readouterr().err


def test_table_format(tmp_path):
    assert main(["sign-check", *SEASON, "--format", "table", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sign_check.txt").read_text().splitlines()[0].split()[0] == "bucket"


def test_parse_schema_and_config(tmp_path):
    s = parse_schema("home:d, rest:c", -1)
    assert s.continuous_mask == (False, True) and s.special_sign == -1 and s.names == ("home", "rest")
    p = tmp_path / "c.cfg"
    p.write_text("a-b = 1\n\n# x\nc=two\n")
    assert read_config(p) == {"a_b": "1", "c": "two"}
