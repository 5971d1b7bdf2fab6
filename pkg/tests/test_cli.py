import json

import pytest

from hybridmc.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, EXIT_RUNTIME, main


def write(tmp_path, obj, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


BASE = {"algorithms": [{"name": "mha", "s": 4}], "budget": {"iterations": 60}, "burn_in": 10, "replicates": 2, "workers": 1}


def test_run_ok(tmp_path, capsys):
    code = main(["run", write(tmp_path, BASE), "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    assert "mha" in capsys.readouterr().out
    assert (tmp_path / "o" / "reports.csv").read_text().count("\n") == 2


def test_bench_overrides(tmp_path):
    code = main(["bench", write(tmp_path, BASE), "--out", str(tmp_path / "o"), "--budget-iters", "30", "--seed", "5"])
    assert code == EXIT_OK
    lines = (tmp_path / "o" / "reports.csv").read_text().splitlines()
    assert len(lines) == 3 and all(",30," in l for l in lines[1:])


def test_bad_config(tmp_path, capsys):
    code = main(["bench", write(tmp_path, {**BASE, "replicates": 0})])
    assert code == EXIT_CONFIG
    assert "replicates" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["bench", str(tmp_path / "none.json")]) == EXIT_CONFIG


@pytest.mark.parametrize("flag", [["--budget-iters", "0"], ["--budget-secs", "-1"], ["--burn-in", "-3"]])
def test_bad_overrides(tmp_path, flag):
    assert main(["bench", write(tmp_path, BASE), *flag]) == EXIT_CONFIG


def test_partial_failure(tmp_path, capsys):
    cfg = {**BASE, "algorithms": [{"name": "mha", "s": 4}, {"name": "pmc", "k": 2.5}], "budget": {"iterations": 300}, "pmc_burn_in": 10}
    code = main(["bench", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_PARTIAL
    assert "failed: pmc" in capsys.readouterr().err


def test_total_failure_is_runtime(tmp_path):
    cfg = {**BASE, "algorithms": [{"name": "pmc", "k": 2.5}], "budget": {"iterations": 300}, "pmc_burn_in": 10}
    assert main(["bench", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_RUNTIME


def test_aerosol_burn_in_exceeds_budget(tmp_path, capsys):
    cfg = {"algorithms": [{"name": "mha"}], "budget": {"iterations": 50}, "burn_in": 100, "aerosol": {}}
    code = main(["aerosol", write(tmp_path, cfg), "--synth", "n=200", "--out", str(tmp_path / "o")])
    assert code == EXIT_RUNTIME
    assert "burn-in" in capsys.readouterr().err


def test_aerosol_synthetic(tmp_path, capsys):
    cfg = {"algorithms": [{"name": "mha"}], "budget": {"iterations": 80}, "burn_in": 20, "aerosol": {}}
    code = main(["aerosol", write(tmp_path, cfg), "--synth", "n=200,lambda=0.5,mu1=1,mu2=4", "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    assert "lambda" in capsys.readouterr().out


def test_aerosol_bad_data(tmp_path):
    data = tmp_path / "d.txt"
    data.write_text("1\nfoo\n")
    cfg = {"algorithms": [{"name": "mha"}], "budget": {"iterations": 80}, "burn_in": 20, "aerosol": {}}
    assert main(["aerosol", write(tmp_path, cfg), "--data", str(data)]) == EXIT_CONFIG


def test_tune_xi(tmp_path, capsys):
    cfg = {"algorithms": [{"name": "mh-rp", "s": 4}], "budget": {"iterations": 40}, "init": {"kind": "target"}}
    code = main(["tune-xi", write(tmp_path, cfg), "--grid", "0,1e-3", "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    assert "eta=1.0000" in capsys.readouterr().out


def test_mode_detect(tmp_path, capsys):
    cfg = {**BASE, "algorithms": [{"name": "mala", "h": 2}], "init": {"kind": "mode", "mode": 0}}
    assert main(["mode-detect", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "detected" in capsys.readouterr().out


def test_help_runs():
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
