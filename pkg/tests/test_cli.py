import json

import pytest

from lillab.cli import main
from lillab.report import TOOL_VERSION

CHAIN = {"model": {"kind": "ctmc", "q": [[-1, 1], [1, -1]]}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_json(tmp_path, args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip().startswith("{") else out)


def strip_stamp(text):
    d = json.loads(text)
    d.pop("timestamp")
    return json.dumps(d, sort_keys=True)


def test_certify_mixing_ou_defaults(tmp_path, capsys):
    code, rep = run_json(tmp_path, ["certify-mixing"], capsys)
    assert code == 0
    ratios = [row["ratio"] for row in rep["result"]["grid"]]
    assert len(ratios) == 1000
    assert max(abs(r - 1.0) for r in ratios) <= 1e-12
    assert rep["tool_version"] == TOOL_VERSION
    assert rep["config"]["model"]["kind"] == "ou"


def test_lil_zero_observable_is_certified_fail(tmp_path, capsys):
    cfg = dict(CHAIN, observable={"kind": "zero"}, params={"n_paths": 4, "horizon": 20.0})
    code = main(["lil", "--config", write(tmp_path, cfg)])
    out = capsys.readouterr().out
    assert code == 2
    assert "degenerate variance" in out


def test_same_seed_same_report(tmp_path):
    cfg = write(tmp_path, dict(CHAIN, params={"n_paths": 1500, "horizon": 5.0}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["martingale-check", "--config", cfg, "--out", str(a)]) == 0
    assert main(["martingale-check", "--config", cfg, "--out", str(b)]) == 0
    ta = (a / "martingale-check.json").read_text()
    tb = (b / "martingale-check.json").read_text()
    assert strip_stamp(ta) == strip_stamp(tb)


@pytest.mark.parametrize("command", ["sigma", "clt-proxy"])
def test_thread_count_does_not_change_report(tmp_path, command):
    params = {"n_paths": 3000, "chunk": 500}
    if command == "sigma":
        params["horizon"] = 10.0
    else:
        params["t_eval"] = 5.0
    cfg = write(tmp_path, dict(CHAIN, params=params))
    texts = []
    for k in (1, 4, 8):
        d = tmp_path / f"t{k}"
        main([command, "--config", cfg, "--threads", str(k), "--out", str(d)])
        texts.append(strip_stamp((d / f"{command}.json").read_text()))
    assert texts[0] == texts[1] == texts[2]


def test_env_seed_overrides_config_and_flag_overrides_env(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, dict(CHAIN, seed=5))
    monkeypatch.setenv("LILLAB_SEED", "17")
    _, rep = run_json(tmp_path, ["corrector", "--config", cfg], capsys)
    assert rep["config"]["seed"] == 17
    _, rep = run_json(tmp_path, ["corrector", "--config", cfg, "--seed", "99"], capsys)
    assert rep["config"]["seed"] == 99


def test_unknown_command_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1


def test_invalid_config_lists_every_problem(tmp_path, capsys):
    cfg = write(tmp_path, {"seed": -3, "bogus": 1, "params": {"n_paths": 0, "mesh": 0.3}})
    assert main(["sigma", "--config", cfg]) == 1
    err = capsys.readouterr().err
    for fragment in ("seed", "bogus", "n_paths", "mesh"):
        assert fragment in err


def test_unreadable_config(tmp_path, capsys):
    assert main(["sigma", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sigma", "--config", str(bad)]) == 1


def test_csv_output(tmp_path):
    out = tmp_path / "o"
    assert main(["certify-mixing", "--format", "csv", "--out", str(out)]) == 0
    head = (out / "certify-mixing.csv").read_text().splitlines()[0]
    assert head == "x,y,t,distance,ratio"
    assert (out / "certify-mixing.json").exists()


def test_corrector_chain(tmp_path, capsys):
    code, rep = run_json(tmp_path, ["corrector", "--config", write(tmp_path, CHAIN)], capsys)
    assert code == 0
    assert rep["result"]["chi"] == [0.5, -0.5]
    assert rep["result"]["sigma_pair"] == 1.0


def test_corrupted_corrector_fails_martingale_check(tmp_path, capsys):
    cfg = dict(CHAIN, params={"n_paths": 2000, "horizon": 5.0, "corrupt_factor": 1.5})
    assert main(["martingale-check", "--config", write(tmp_path, cfg)]) == 2


def test_ergodicity_defaults_to_point_start(tmp_path, capsys):
    code, rep = run_json(tmp_path, ["ergodicity", "--config", write(tmp_path, CHAIN)], capsys)
    assert code == 0
    assert rep["config"]["initial"] == {"kind": "dirac", "state": 0}


def test_timestamp_is_the_only_volatile_field(tmp_path, capsys):
    code, rep = run_json(tmp_path, ["certify-moments"], capsys)
    assert code == 0
    assert set(rep) == {"command", "tool_version", "config", "passed", "status", "result", "timestamp"}
