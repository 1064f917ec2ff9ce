import json

import pytest
import yaml

from mfg_turnpike import cli
from mfg_turnpike.errors import ArtifactCorrupt, ConfigInvalid

TURNPIKE = {
    "seed": 4,
    "model": {"family": "mechanical_quadratic", "parameters": {"c0": 1.0, "a": 0.5}},
    "rho0": {"sampler": "gaussian_quantiles", "mean": 0.5, "std": 0.5, "n": 40},
    "T_time": 6.0,
    "c0_hat": 1.0,
    "solver": {"dt_time": 0.05, "N": 40, "eps_fp": 1e-12},
    "turnpike": {"second": {"final_cost": {"gamma": 2.0}}},
}

VERIFY = {
    "seed": 1,
    "model": {"family": "riccati_lq", "parameters": {"c0": 0.6, "gamma": 1.0}},
    "verify": {"trials": 60, "cloud_size": 5, "hypotheses": ["H2", "H4", "H5", "H8"]},
}


def write_config(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


@pytest.fixture(scope="module")
def turnpike_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tp") / "run"
    return out, cli.run("turnpike", TURNPIKE, out)


def test_verify_exit_code_and_c0(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["verify", "--config", write_config(tmp_path, VERIFY), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert 0.55 <= report["derived"]["hypotheses"]["H2"]["c0"] <= 0.6 + 1e-12


def test_zero_particles_is_a_config_error(tmp_path):
    bad = dict(TURNPIKE, solver={"dt_time": 0.05, "N": 0})
    with pytest.raises(ConfigInvalid):
        cli.run("turnpike", bad, tmp_path / "x")
    assert cli.main(["turnpike", "--config", write_config(tmp_path, bad), "--out", str(tmp_path / "y")]) == 2


def test_unknown_keys_and_missing_seed(tmp_path):
    with pytest.raises(ConfigInvalid):
        cli.run("verify", dict(VERIFY, colour="red"), tmp_path / "a")
    cfg = {k: v for k, v in VERIFY.items() if k != "seed"}
    with pytest.raises(ConfigInvalid):
        cli.run("verify", cfg, tmp_path / "b")


def test_turnpike_backward_pair_passes(turnpike_run):
    _, report = turnpike_run
    assert report["settings"]["shape"] == "backward"
    assert report["passed"] and all(report["criteria"].values())


def test_replay_ok(turnpike_run):
    out, _ = turnpike_run
    assert cli.replay(out) == (0, [])


def test_runs_are_byte_identical(turnpike_run, tmp_path):
    out, _ = turnpike_run
    cli.run("turnpike", TURNPIKE, tmp_path / "again")
    for name in ("report.json", "manifest.json", "traces/gaps.csv"):
        assert (out / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_seed_override_changes_config_hash(tmp_path):
    a = cli.run("verify", VERIFY, tmp_path / "a")
    b = cli.run("verify", VERIFY, tmp_path / "b", seed=2)
    assert a["config_hash"] != b["config_hash"]


def test_perturbed_trace_is_detected(tmp_path):
    out = tmp_path / "p"
    cli.run("verify", VERIFY, out)
    trace = out / "traces" / "verify_H2.csv"
    lines = trace.read_text().splitlines()
    lines[1] = "-5"
    trace.write_text("\n".join(lines) + "\n")
    status, mismatches = cli.replay(out)
    assert status == 1 and any("verify_H2" in m for m in mismatches)
    assert cli.main(["replay", str(out)]) == 1


def test_missing_manifest(tmp_path):
    out = tmp_path / "m"
    cli.run("verify", VERIFY, out)
    (out / "manifest.json").unlink()
    with pytest.raises(ArtifactCorrupt):
        cli.replay(out)
    assert cli.main(["replay", str(out)]) == 3


def test_plots_are_written(tmp_path):
    out = tmp_path / "pl"
    cli.run("turnpike", dict(TURNPIKE, T_time=4.0), out, plots=True)
    svg = (out / "plots" / "gaps.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg
