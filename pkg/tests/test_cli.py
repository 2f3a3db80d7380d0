import json
import subprocess
import sys

import numpy as np
import pytest

from cmvwalk import cli, dynamics, verify
from cmvwalk.model import WalkParams
from cmvwalk.reports import BoundReport


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--output", str(out)])
    return code, out.read_text() if out.exists() else None


def test_simulate_csv(tmp_path):
    code, text = run(tmp_path, "simulate", "--t", "0.2", "--period", "3", "--steps", "100")
    assert code == 0
    lines = text.split("\n")
    assert lines[0] == "site,prob_up,prob_down,prob_total"
    assert text.endswith("\n") and "\r" not in text
    rows = [line.split(",") for line in lines[1:-1]]
    assert len(rows) <= 201
    total = 0.0
    for site, up, down, tot in rows:
        int(site)
        assert abs(float(up) + float(down) - float(tot)) <= 1e-14
        total += float(tot)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_simulate_delta_single_row(tmp_path):
    code, text = run(tmp_path, "simulate", "--steps", "0", "--spin-down", "1", "--spin-up", "0", "--site", "4")
    assert code == 0
    assert text == "site,prob_up,prob_down,prob_total\n4,0,1,1\n"


def test_simulate_json_round_trip(tmp_path):
    code, text = run(tmp_path, "simulate", "--t", "0.6", "--period", "2", "--steps", "30", "--format", "json")
    assert code == 0
    dist, meta = cli.parse_distribution_json(text)
    assert meta == {"t": 0.6, "n": 2, "k": 1, "N": 30, "seed": verify.DEFAULT_SEED, "field": "periodic"}
    direct = dynamics.site_distribution(dynamics.run(WalkParams(0.6, 2), 30))
    assert np.array_equal(dist.sites, direct.sites)
    assert np.array_equal(dist.prob_up, direct.prob_up)
    assert np.array_equal(dist.prob_down, direct.prob_down)


def test_csv_values_round_trip(tmp_path):
    code, text = run(tmp_path, "simulate", "--t", "0.37", "--steps", "12")
    direct = dynamics.site_distribution(dynamics.run(WalkParams(0.37), 12))
    ups = [float(line.split(",")[1]) for line in text.splitlines()[1:]]
    assert ups == direct.prob_up.tolist()


@pytest.mark.parametrize(
    "args",
    [
        ("simulate", "--t", "0.3", "--period", "4", "--steps", "40", "--format", "json"),
        ("simulate", "--t", "0.5", "--steps", "20", "--field", "random", "--seed", "11"),
        ("verify-sympoly", "--n", "4"),
        ("norms", "--t", "0.4", "--steps", "3"),
        ("conjecture-probe", "--t-grid", "0.5", "--n-grid", "1,2", "--steps", "20"),
    ],
)
def test_determinism(tmp_path, args):
    c1, t1 = run(tmp_path, *args, name="a")
    c2, t2 = run(tmp_path, *args, name="b")
    assert c1 == c2 == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_random_field_depends_on_seed(tmp_path):
    _, a = run(tmp_path, "simulate", "--t", "0.5", "--steps", "20", "--field", "random", "--seed", "1", name="a")
    _, b = run(tmp_path, "simulate", "--t", "0.5", "--steps", "20", "--field", "random", "--seed", "2", name="b")
    assert a != b


def test_verify_sympoly_lines(tmp_path):
    code, text = run(tmp_path, "verify-sympoly", "--n", "4")
    assert code == 0
    records = [json.loads(line) for line in text.splitlines()]
    assert len(records) == 6
    assert all(r["claim"] == "collapse" and r["pass"] for r in records)
    assert set(records[0]) == {"claim", "params", "computed", "bound", "margin", "pass", "window_radii", "seed"}


def test_verify_sympoly_five(tmp_path):
    code, text = run(tmp_path, "verify-sympoly", "--n", "5")
    assert code == 0 and len(text.splitlines()) == 9


def test_verify_bounds(tmp_path):
    code, text = run(tmp_path, "verify-bounds", "--t", "0.3", "--period", "2", "--k-max", "2", "--n-count", "3")
    assert code == 0
    claims = [json.loads(line)["claim"] for line in text.splitlines()]
    assert claims == ["subsequence_bound"] * 2 + ["main_theorem"] * 3


def test_empty_suite(tmp_path):
    code, text = run(tmp_path, "verify-bounds", "--t", "0.1", "--period", "2", "--k-max", "0", "--n-count", "0")
    assert code == 0 and text == ""


def test_failing_report_sets_exit_one(tmp_path, monkeypatch):
    bad = BoundReport(claim="subsequence_bound", params={}, computed=2.0, bound=1.0)
    monkeypatch.setattr(verify, "check_subsequence_bound", lambda *a, **k: [bad])
    code, text = run(tmp_path, "verify-bounds", "--t", "0.1", "--period", "2", "--n-count", "0")
    assert code == 1
    assert json.loads(text)["pass"] is False


def test_nonconvergence_exit_three(tmp_path, monkeypatch):
    def never_converges(W, rel_tol, max_iter):
        raise cli.NormConvergenceError("cap", 0.0)

    monkeypatch.setattr(cli.bandop, "_power_iteration", never_converges)
    code, _ = run(tmp_path, "norms", "--t", "0.3", "--steps", "2", "--strict-norms")
    assert code == 3
    code, text = run(tmp_path, "norms", "--t", "0.3", "--steps", "2")
    assert code == 0
    assert all(json.loads(line)["params"]["norm_method"] == "svd" for line in text.splitlines())


@pytest.mark.parametrize(
    "args",
    [
        ["simulate", "--t", "1.5"],
        ["simulate", "--period", "4", "--root-k", "2"],
        ["simulate", "--steps", "-1"],
        ["bogus"],
        ["simulate", "--format", "xml"],
        ["simulate", "--period", "0"],
    ],
)
def test_usage_errors(args, capsys):
    assert cli.main(args) == 2
    assert capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--steps", "1", "--output", str(blocker / "sub" / "x.csv")]) == 2


def test_config_file_and_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# walk\nt = 0.2\nperiod = 3\nsteps = 50\nformat = json\n")
    cfg, _ = cli.config_from_args(["simulate", "--config", str(cfg_file), "--steps", "7"])
    assert (cfg.t, cfg.period, cfg.steps, cfg.format) == (0.2, 3, 7, "json")


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert cli.main(["simulate", "--config", str(bad)]) == 2
    bad.write_text("t 0.3\n")
    assert cli.main(["simulate", "--config", str(bad)]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "results"))
    assert cli.main(["verify-sympoly", "--n", "3"]) == 0
    assert len((tmp_path / "results" / "verify-sympoly.jsonl").read_text().splitlines()) == 4


def test_stdout_default(capsys, monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_DIR_ENV, raising=False)
    assert cli.main(["simulate", "--steps", "0"]) == 0
    assert capsys.readouterr().out == "site,prob_up,prob_down,prob_total\n0,1,0,1\n"


def test_norms_command(tmp_path):
    code, text = run(tmp_path, "norms", "--t", "0.3", "--steps", "4")
    assert code == 0
    recs = [json.loads(line) for line in text.splitlines()]
    assert [r["params"].get("operator") for r in recs[:3]] == ["B", "C", "rtB+t^2C"]
    assert recs[2]["computed"] == pytest.approx(0.3, abs=1e-8)
    assert recs[3]["claim"] == "linear_bound"


def test_conjecture_probe_csv(tmp_path):
    code, text = run(tmp_path, "conjecture-probe", "--t-grid", "0,0.8", "--n-grid", "1", "--steps", "10")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "t,n,N,velocity,reference,ratio,peak_site"
    assert lines[1].split(",")[3:6] == ["0", "0", "0"]


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "cmvwalk", "simulate", "--steps", "0"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("site,prob_up")
