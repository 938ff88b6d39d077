import json
import math

import numpy as np
import pytest

from rbm_lab import cli
from rbm_lab.config import COMMANDS, SCHEMA, ConfigError, load_config
from rbm_lab.mc import MCEstimate, resolve_workers, sample_map, sigma_distance
from rbm_lab.reports import Check, RunReport, dumps, git_blob_hash, to_jsonable

SMALL = """
[dos-scan]
W = 1, 2
L = 4, 6
E = 0.5, 1.0
samples = 8
identity_samples = 1
[verify-duality]
samples = 4000
direct_samples = 2000
derivative_samples = 4000
[verify-deformation]
samples = 4000
direct_samples = 2000
[covariance-report]
L = 32
W = 4
grid_L = 2, 4
grid_W = 1, 2
grid_E = 1.0
schur_subsets = 10
[region-report]
L = 4, 4
W = 1, 2
samples = 2000
[bounds-report]
trials = 50
bl_samples = 5000
bl_lambdas = 0, 0.5
scaling_Ls = 8, 12, 16
[grassmann-selftest]
trials = 3
n_max = 3
minor_n_max = 3
sdet_trials = 3
potential_points = 10
ibp_samples = 5000
hs_samples = 2000
"""


# ------------------------------------------------------------------- config

def test_defaults_for_every_command():
    for cmd in COMMANDS:
        cfg = load_config(cmd)
        assert cfg.seed == 42
        assert set(cfg.params) == set(SCHEMA[cmd])
    assert load_config("dos-scan").params["eps"] == 0.05
    assert load_config("verify-duality").params["eps"] == 1.0
    assert load_config("covariance-report").params["alpha"] == 0.5
    assert load_config("region-report").params["nu"] == 0.5


def test_section_and_override_precedence():
    cfg = load_config("verify-duality", "[verify-duality]\nL = 2\nseed = 7\neps = 0.5\n",
                      {"seed": "9"})
    assert cfg.params["eps"] == 0.5
    assert cfg.seed == 9


@pytest.mark.parametrize("text,key", [
    ("[verify-duality]\neps = 0\n", "eps"),
    ("[verify-duality]\nbogus = 1\n", "bogus"),
    ("[verify-duality]\nsamples = 1.5\n", "samples"),
    ("[dos-scan]\nW = 2, 4\nL = 8\n", "L"),
    ("[covariance-report]\nE = 2.0\n", "E"),
    ("[region-report]\nnu = 1.5\n", "nu"),
    ("[grassmann-selftest]\nn_max = 7\n", "n_max"),
])
def test_invalid_values_name_the_key(text, key):
    section = text.split("]")[0][1:]
    with pytest.raises(ConfigError) as exc:
        load_config(section, text)
    assert exc.value.key == key
    assert exc.value.to_json()["error"] == "config"


def test_unknown_section_and_command():
    with pytest.raises(ConfigError):
        load_config("dos-scan", "[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config("serve")
    with pytest.raises(ConfigError):
        load_config("dos-scan", "not an ini")


@pytest.mark.parametrize("seed", ["-1", str(2**64), "abc"])
def test_seed_must_be_u64(seed):
    with pytest.raises(ConfigError):
        load_config("dos-scan", None, {"seed": seed})


def test_seed_parses_full_u64_range():
    assert load_config("dos-scan", None, {"seed": "0"}).seed == 0
    assert load_config("dos-scan", None, {"seed": str(2**64 - 1)}).seed == 2**64 - 1


# ------------------------------------------------------------ parallel MC

def _draw(rng, m):
    return rng.standard_normal(m)


def test_sample_map_depends_only_on_seed_and_workers():
    a = sample_map(_draw, 1000, 5, 1)
    assert np.array_equal(a, sample_map(_draw, 1000, 5, 1))
    b = sample_map(_draw, 1000, 5, 2)
    assert np.array_equal(b, sample_map(_draw, 1000, 5, 2))
    assert b.shape == (1000,)


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("RBM_LAB_WORKERS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.delenv("RBM_LAB_WORKERS")
    assert resolve_workers() == 1
    with pytest.raises(ValueError):
        resolve_workers(0)


def test_sigma_distance():
    est = MCEstimate(1.0 + 1.0j, 0.1 + 0.2j, 100)
    d, se = sigma_distance(est, 1.3 + 1.0j)
    assert d == pytest.approx(3.0)
    assert se == 0.1 + 0.2j
    assert sigma_distance(1.0, 1.0)[0] == 0
    assert math.isinf(sigma_distance(1.0, 2.0)[0])


# ------------------------------------------------------------------ reports

def test_jsonable_and_hash():
    obj = {"z": 1 + 2j, "n": np.int64(3), "x": np.float64("nan"), "a": np.arange(2)}
    assert to_jsonable(obj) == {"z": [1.0, 2.0], "n": 3, "x": "nan", "a": [0, 1]}
    assert dumps({"b": 1, "a": 2}).index('"a"') < dumps({"b": 1, "a": 2}).index('"b"')
    # same convention as `git hash-object` on an empty file
    assert git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_report_rejects_duplicate_checks():
    rep = RunReport("x", {})
    rep.add(Check("a", {}, True))
    with pytest.raises(ValueError):
        rep.add(Check("a", {}, False))
    rep.add(Check("b", {}, False))
    assert rep.summary() == {"checks": 2, "passed": 1, "pass": False}
    row = rep.checks[0].to_json()
    assert set(row) >= {"check_id", "params", "lhs", "rhs", "combined_se", "sigma_distance", "pass"}


# ---------------------------------------------------------------------- CLI

@pytest.fixture(scope="module")
def small_ini(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.ini"
    p.write_text(SMALL)
    return str(p)


def _run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr().out
    return code, out


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_runs_and_is_byte_identical(command, small_ini, tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        code, out = _run([command, "--config", small_ini, "--out", str(d), "--workers", "1"],
                         capsys)
        assert code in (0, 1), out
        outs.append({f.name: f.read_bytes() for f in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    files = outs[0]
    manifest = json.loads(files["manifest.json"])
    assert manifest["command"] == command and manifest["seed"] == 42
    assert manifest["input_hash"] == git_blob_hash(SMALL.encode())
    for name, digest in manifest["outputs"].items():
        import hashlib
        assert hashlib.sha256(files[name]).hexdigest() == digest
    report = json.loads(files["report.json"])
    assert report["summary"]["checks"] == len(report["checks"])
    assert code == (0 if report["summary"]["pass"] else 1)


def test_selftest_passes_on_small_config(small_ini, tmp_path, capsys):
    code, out = _run(["grassmann-selftest", "--config", small_ini, "--out", str(tmp_path)], capsys)
    assert code == 0, out
    table = json.loads((tmp_path / "grassmann_selftest.json").read_text())["data"]
    assert {"identity", "n", "trials", "max_rel_err", "pass"} == set(table[0])


def test_dos_scan_csv_columns(small_ini, tmp_path, capsys):
    _run(["dos-scan", "--config", small_ini, "--out", str(tmp_path)], capsys)
    header = (tmp_path / "dos_scan.csv").read_text().splitlines()[0]
    assert header == "E,W,L,eps,samples,rho_mean,rho_se,rho_sc,abs_err"


def test_zero_broadening_is_a_config_error(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[verify-duality]\neps = 0\n")
    code, out = _run(["verify-duality", "--config", str(ini), "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    err = json.loads(out)
    assert err["error"] == "config" and err["key"] == "eps"
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("args", [["serve"], ["dos-scan", "--seed", "-3"],
                                  ["dos-scan", "--workers", "0"],
                                  ["dos-scan", "--config", "/nonexistent.ini"],
                                  ["dos-scan", "--format", "xml"]])
def test_bad_invocations_exit_2(args, capsys, tmp_path):
    code, out = _run(args + ["--out", str(tmp_path)] if args[0] != "serve" else args, capsys)
    assert code == 2
    assert json.loads(out.strip().splitlines()[-1])["error"] == "config"


def test_workers_env_and_seed_flag(small_ini, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RBM_LAB_WORKERS", "2")
    d1, d2 = tmp_path / "a", tmp_path / "b"
    _run(["region-report", "--config", small_ini, "--out", str(d1), "--seed", "5"], capsys)
    _run(["region-report", "--config", small_ini, "--out", str(d2), "--seed", "5"], capsys)
    m = json.loads((d1 / "manifest.json").read_text())
    assert m["workers"] == 2 and m["seed"] == 5
    assert (d1 / "region_report.csv").read_bytes() == (d2 / "region_report.csv").read_bytes()
