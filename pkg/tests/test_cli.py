import shutil
import subprocess
import sys

import pytest

from cdfit import config as cfgmod
from cdfit.cli import main
from cdfit.errors import ParseError

LADDER_INI = """\
[run]
seed = 11

[model]
type = pairwise
m = 8
structure = homogeneous
couplings = 0-1, 1-2, 2-3, 4-5, 5-6, 6-7, 0-4, 1-5, 2-6, 3-7
observed = 0 0 0 1 0 0 1 1

[fit]
method = cd_newton
family = random_scan_gibbs
k = 4
n_chains = 512
equilibrium_chains = 64
plot = {plot}
"""


def write_cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_fit_outputs_are_byte_identical(tmp_path, capsys):
    cfg = write_cfg(tmp_path, LADDER_INI.format(plot="true"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fit", "--config", cfg, "--out", str(a)]) == 0
    assert main(["fit", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "fit.csv").read_bytes() == (b / "fit.csv").read_bytes()
    assert (a / "fit_trace.png").stat().st_size > 0
    header = (a / "fit.csv").read_text().splitlines()[0]
    assert header.startswith("config_hash,family,s,k,method,statistic,eta_hat,mu_hat,mc_se")
    assert "converged" in capsys.readouterr().out


def test_seed_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, LADDER_INI.format(plot="false"))
    main(["fit", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["fit", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "12"])
    a = (tmp_path / "a" / "fit.csv").read_text()
    b = (tmp_path / "b" / "fit.csv").read_text()
    assert a.splitlines()[1].split(",")[0] != b.splitlines()[1].split(",")[0]
    assert a.splitlines()[1:] != b.splitlines()[1:]


def test_config_hash_ignores_output_location(tmp_path):
    cfg = write_cfg(tmp_path, LADDER_INI.format(plot="false"))
    h1 = cfgmod.load(cfg, out=str(tmp_path / "x")).config_hash
    h2 = cfgmod.load(cfg, out=str(tmp_path / "y"), jobs=3).config_hash
    h3 = cfgmod.load(cfg, seed=5).config_hash
    assert h1 == h2 != h3
    assert len(h1) == 12


def test_relative_out_resolves_against_config_dir(tmp_path):
    sub = tmp_path / "cfgs"
    sub.mkdir()
    cfg = write_cfg(sub, LADDER_INI.format(plot="false").replace(
        "seed = 11", "seed = 11\nout = ../res"))
    assert cfgmod.load(cfg).out == str(tmp_path / "res")


def test_unknown_key_names_line(tmp_path, capsys):
    text = LADDER_INI.format(plot="false").replace("k = 4", "k = 4\nkk = 5")
    cfg = write_cfg(tmp_path, text)
    lineno = text.splitlines().index("kk = 5") + 1
    assert main(["fit", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert f"run.ini:{lineno}:" in err and "kk" in err


def test_bad_value_names_line(tmp_path):
    text = LADDER_INI.format(plot="false").replace("n_chains = 512", "n_chains = many")
    cfg = write_cfg(tmp_path, text)
    with pytest.raises(ParseError) as err:
        cfgmod.build_fit_config(cfgmod.load(cfg), "fit")
    assert err.value.lineno == text.splitlines().index("n_chains = many") + 1


def test_bad_statistic_is_config_error(tmp_path, root, capsys):
    shutil.copy(root / "data" / "example6.edges", tmp_path)
    cfg = write_cfg(tmp_path, "[run]\nseed = 1\n[model]\nedges = example6.edges\n"
                              "stats = edges, triangles\n[fit]\nmethod = mple\n")
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_seed(tmp_path, capsys):
    cfg = write_cfg(tmp_path, LADDER_INI.format(plot="false").replace("seed = 11", ""))
    assert main(["fit", "--config", cfg]) == 2
    assert "seed" in capsys.readouterr().err


def test_config_converters():
    assert cfgmod.to_real("2/3") == pytest.approx(2 / 3)
    assert cfgmod.to_int_grid("2^4..2^6, 100") == [16, 32, 64, 100]
    assert cfgmod.to_int_grid("3..5") == [3, 4, 5]
    b = cfgmod.to_blocks("0-1, 2-3-4:3")
    assert b.blocks == ((0, 1), (2, 3, 4)) and list(b.probs) == [0.25, 0.75]
    with pytest.raises(ValueError):
        cfgmod.to_bool("maybe")


def test_mple_on_example_network(root, tmp_path, capsys):
    assert main(["fit", "--config", str(root / "configs" / "fit_example6.ini"),
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "converged" in out
    rows = (tmp_path / "fit.csv").read_text().splitlines()
    assert len(rows) == 5


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def test_verify_passes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[run]\nseed = 0\n[verify]\nsuite = oracle, detailed_balance, "
                              "kl_decay\nkl_steps = 20\nplot = false\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert (tmp_path / "v" / "kl_decay.csv").exists()


def test_verify_negative_control_fails(root, tmp_path, capsys):
    cfg = root / "configs" / "verify_negative.ini"
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "blocked" in out


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_deterministic(root, tmp_path, capsys):
    cfg = str(root / "configs" / "simulate.ini")
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    for name in ("synthetic30.edges", "synthetic30.attr", "synthetic30_stats.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    # the committed network is the one this config produces
    assert ((tmp_path / "a" / "synthetic30.edges").read_bytes()
            == (root / "data" / "synthetic30.edges").read_bytes())


@pytest.mark.slow
def test_node_s_fit_on_synthetic_network(root, tmp_path, capsys):
    cfg = str(root / "configs" / "fit_synthetic.ini")
    assert main(["fit", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert "converged" in capsys.readouterr().out


def test_console_script_help():
    exe = shutil.which("cdfit")
    cmd = [exe] if exe else [sys.executable, "-m", "cdfit.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True, check=True)
    for sub in ("fit", "sweep", "verify", "simulate"):
        assert sub in res.stdout
