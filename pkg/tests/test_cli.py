"""Command driver: exit codes, machine-readable errors, artifact shapes,
and byte-level determinism of repeated runs."""

import json
from pathlib import Path

import pytest

from flatflow import cli, flatmap


def write_config(tmp_path: Path, payload: dict, name: str = "cfg.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(payload, indent=2))
    return str(path)


def run(args) -> int:
    return cli.main([str(a) for a in args])


TUNE_CFG = {
    "map": {"ell": "3/2", "flat_length": "1/5", "precision_bits": 128},
    "target": {"quotients": [1] * 30},
    "tune": {"tol": "1/10000"},
}


@pytest.fixture(scope="module")
def tuned_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tuned")
    cfg = write_config(tmp, TUNE_CFG)
    out = tmp / "out"
    assert run(["tune", "--config", cfg, "--out", out]) == 0
    return out


def load_params_block(tuned_dir):
    return json.loads((tuned_dir / "params.json").read_text())


def full_config(tuned_dir, tmp_path, **extra):
    blob = load_params_block(tuned_dir)
    cfg = {
        "map": {
            "ell": blob["exact"]["ell"],
            "a": blob["exact"]["a"],
            "b": blob["exact"]["b"],
            "c": blob["exact"]["c"],
            "precision_bits": blob["precision_bits"],
        },
        "target": {"quotients": [1] * 30},
        "geometry": {"n_max": 7},
        "bounds": {"n0": 2},
    }
    cfg.update(extra)
    return write_config(tmp_path, cfg, name="full.json")


def test_tune_writes_loadable_params(tuned_dir):
    blob = load_params_block(tuned_dir)
    params = flatmap.params_from_json_dict(blob)
    assert params.ell == flatmap.Fraction(3, 2)
    summary = json.loads((tuned_dir / "tune_summary.json").read_text())
    assert summary["command"] == "tune"
    assert summary["precision_bits_used"] >= 128


def test_alpha_and_bounds_artifacts(tuned_dir, tmp_path):
    cfg = full_config(tuned_dir, tmp_path)
    out = tmp_path / "alpha_out"
    assert run(["alpha", "--config", cfg, "--out", out]) == 0
    lines = (out / "alpha.csv").read_text().splitlines()
    assert lines[0] == "n,qn,alpha_n,theta_n,margin_log_K1,K1_n"
    assert len(lines) == 9  # n = 0..7
    assert run(["bounds", "--config", cfg, "--out", out]) == 0
    summary = json.loads((out / "bounds_summary.json").read_text())
    assert summary["proposition"]["overall"] is True
    assert summary["corollary"]["overall"] is True
    assert summary["ratios"]["positive"] is True
    ratios = (out / "ratios.csv").read_text().splitlines()
    assert ratios[0] == "n,r_n,running_inf"


def test_orbit_and_gamma_commands(tuned_dir, tmp_path):
    cfg_path = full_config(
        tuned_dir, tmp_path,
        model={"tau0": "1", "epsilon_cut": "1/8"},
        segment={"N": 150},
        gamma={"t_grid_pows": [4, 5, 6], "n0": 2, "n": 4},
    )
    out = tmp_path / "dyn_out"
    assert run(["orbit", "--config", cfg_path, "--out", out]) == 0
    orbit_lines = (out / "orbit.csv").read_text().splitlines()
    assert orbit_lines[0] == "i,z_i,dist_to_crit,t_i"
    assert len(orbit_lines) == 152
    assert run(["gamma", "--config", cfg_path, "--out", out]) == 0
    gamma_lines = (out / "gamma.csv").read_text().splitlines()
    assert gamma_lines[0] == "t,gamma_hat,tA_over_t"
    assert len(gamma_lines) == 4
    summary = json.loads((out / "gamma_summary.json").read_text())
    assert 0 <= float(summary["last_gamma_hat"]) < 1
    assert 0 <= float(summary["first_gamma_hat"]) < 1


def test_report_merges_sections(tuned_dir, tmp_path):
    cfg = full_config(tuned_dir, tmp_path)
    out = tmp_path / "rep_out"
    assert run(["report", "--config", cfg, "--out", out]) == 0
    summary = json.loads((out / "report_summary.json").read_text())
    assert "alpha" in summary["runs"]
    assert "bounds" in summary["runs"]
    assert summary["runs"]["bounds"]["proposition"]["overall"] is True


def stderr_field(capsys) -> str:
    err = capsys.readouterr().err
    return json.loads(err.strip().splitlines()[-1])["field"]


def test_missing_required_field(tmp_path, capsys):
    cfg = write_config(tmp_path, {"map": {"ell": "3/2", "flat_length": "1/5",
                                          "precision_bits": 128},
                                  "target": {"quotients": [1] * 30},
                                  "geometry": {"n_max": 6}})
    assert run(["alpha", "--config", cfg, "--out", tmp_path / "o"]) == 1
    assert stderr_field(capsys) == "map.c"


def test_bad_fraction_rejected(tmp_path, capsys):
    bad = dict(TUNE_CFG, map={"ell": "one and a half", "flat_length": "1/5",
                              "precision_bits": 128})
    cfg = write_config(tmp_path, bad)
    assert run(["tune", "--config", cfg, "--out", tmp_path / "o"]) == 1
    assert stderr_field(capsys) == "map.ell"


def test_shallow_target_rejected(tmp_path, capsys):
    bad = dict(TUNE_CFG, target={"quotients": [2, 2]})
    cfg = write_config(tmp_path, bad)
    assert run(["tune", "--config", cfg, "--out", tmp_path / "o"]) == 1
    assert stderr_field(capsys) == "target"


def test_gamma_depth_error(tuned_dir, tmp_path, capsys):
    cfg = full_config(
        tuned_dir, tmp_path,
        model={"tau0": "1", "epsilon_cut": "1/8"},
        gamma={"t_grid_pows": [4], "n0": 2, "n": 40},
    )
    assert run(["gamma", "--config", cfg, "--out", tmp_path / "o"]) == 1
    assert stderr_field(capsys) == "gamma.n"


def test_missing_config_file(tmp_path, capsys):
    assert run(["alpha", "--config", tmp_path / "nope.json",
                "--out", tmp_path / "o"]) == 1
    assert stderr_field(capsys) == "--config"


def test_unknown_subcommand_exits_one(capsys):
    assert cli.main(["frobnicate"]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "usage"


def test_unexpected_exception_exit_three(tuned_dir, tmp_path, capsys, monkeypatch):
    cfg = full_config(tuned_dir, tmp_path)

    def boom(cfg_obj, out_dir, bits):
        raise RuntimeError("synthetic failure")

    monkeypatch.setitem(cli.DISPATCH, "alpha", boom)
    assert run(["alpha", "--config", cfg, "--out", tmp_path / "o"]) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "internal"
    assert err["type"] == "RuntimeError"


def test_determinism_byte_identical(tuned_dir, tmp_path):
    cfg = full_config(tuned_dir, tmp_path)
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    assert run(["report", "--config", cfg, "--out", out1]) == 0
    assert run(["report", "--config", cfg, "--out", out2]) == 0
    names1 = sorted(p.name for p in out1.iterdir())
    names2 = sorted(p.name for p in out2.iterdir())
    assert names1 == names2
    for name in names1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
