import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from cwlab import cli

MINIMAL = """
[env]
kind = constant
kappa = 1

[run]
command = kernel
n_max = 100
"""

SMALL_ALL = """
# small end-to-end run
[env]
kind = periodic
cycle = 1, 2
seed = 4

[run]
command = all
n_max = 256
walkers = 20000
walk_steps = 50
K = 1, 2
snapshots = 0, 10, 512

[tolerances]
tv = 0.02
"""


def schema():
    text = resources.files("cwlab").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- parsing ----------------------------------------------------------------------

def test_minimal_config():
    cfg = cli.parse_config(MINIMAL)
    assert cfg.command == "kernel" and cfg.n_max == 100
    assert cfg.env.label == "constant(kappa=1)#seed=0"
    assert cfg.schedule == [8, 16, 32, 64]


def test_markov_and_defaults():
    cfg = cli.parse_config("""
[env]
kind = markov
states = 0.5, 3
transition_matrix = 0.7 0.3; 0.4 0.6
[run]
command = verify
n_max = 1024
""")
    assert cfg.env.params["transition_matrix"] == ((0.7, 0.3), (0.4, 0.6))
    assert cfg.schedule == [64, 128, 256, 512, 1024]
    assert cfg.clt_n == 2048 and cfg.delta == [0.25, 1.0]
    pareto = cli.parse_config("[env]\nkind = iid_pareto\nalpha = 0.5\n")
    assert pareto.env.params["xm"] == 1.0


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[env]\nkind = constant\nkappa = -1\n", "line 3 (env.kappa)"),
        ("[env]\nkind = constant\nkappa = 1\n[run]\nn_max = 100\nschedule = 8, 16, 32, 200\n",
         "run.schedule"),
        ("[env]\nkind = constant\nkappa = 1\n[run]\ncommand = walk\nwalkers = 0\n", "run.walkers"),
        ("[env]\nkind = constant\nkappa = 1\nbogus = 3\n", "env.bogus"),
        ("[env]\nkind = constant\nkappa = 1\n[run]\nspeed = 3\n", "run.speed"),
        ("[env]\nkind = constant\nkappa = 1\n[tolerances]\nllt_rel = 0\n", "tolerances.llt_rel"),
        ("[env]\nkind = constant\nkappa = 1\n[tolerances]\nfuzz = 1\n", "tolerances.fuzz"),
        ("[env]\nkind = constant\nkappa = 1\n[extra]\na = 1\n", "unknown section"),
        ("[env]\nkind = constant\nkappa = x\n", "env.kappa"),
        ("[env]\nkind = constant\nkappa = 1\n[run]\nn_max = abc\n", "line 5 (run.n_max)"),
        ("[env]\nkind = constant\nkappa = 1\nnot a pair\n", "line 4"),
        ("kind = constant\n", "line 1"),
        ("[env]\nkind = constant\nkappa = 1\nkappa = 2\n", "line 4"),
        ("[env]\nkind = weird\n", "env.kind"),
        ("[run]\ncommand = kernel\n", "[env]"),
        ("[env]\nkind = constant\nkappa = 1\n[run]\ncommand = dance\n", "run.command"),
        ("[env]\nkind = constant\nkappa = 1\n[run]\nx0 = 1\n", "run.x0"),
        ("[env]\nkind = constant\nkappa = 1\n[run]\nn_max = 100\nschedule = 10, 20\n", "at least 4"),
    ],
)
def test_config_rejections(text, fragment):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    assert fragment in str(info.value)


# -- running ------------------------------------------------------------------------

def test_all_command_manifest_and_formats(tmp_path):
    cfg = cli.parse_config(SMALL_ALL)
    status = cli.run(cfg, tmp_path / "out")
    out = tmp_path / "out"
    names = {p.name for p in out.iterdir()}
    for required in ("energies.csv", "snapshot_0.csv", "snapshot_10.csv", "snapshot_512.csv", "occupancy.csv",
                     "escape.json", "report.json", "report.csv", "environment.csv", "series_llt.svg"):
        assert required in names
    assert any(n.startswith("series_regularity") for n in names)
    for csv_name in ("energies.csv", "snapshot_10.csv", "occupancy.csv", "report.csv"):
        raw = (out / csv_name).read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
    assert (out / "energies.csv").read_text().splitlines()[:2] == ["n,energy", "0,0.3333333333333333"]
    assert (out / "snapshot_10.csv").read_text().splitlines()[0] == "x,h_value,occupation"
    assert (out / "occupancy.csv").read_text().splitlines()[0] == "x,count,frequency"
    assert (out / "report.csv").read_text().splitlines()[0] == "theorem,n,observed,target,gap"
    report = json.loads((out / "report.json").read_text())
    jsonschema.validate(report, schema())
    assert report["passed"] == (status == 0)
    assert status == 0, report["failures"]
    escape = json.loads((out / "escape.json").read_text())
    assert [e["K"] for e in escape] == [1, 2] and escape[0]["mc"] == 1.0
    svg = (out / "series_llt.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_verify_is_deterministic(tmp_path):
    text = "[env]\nkind = iid_lognormal\nm = 0\ns = 1\nseed = 2\n[run]\ncommand = verify\nn_max = 512\n" \
           "identities = false\nmonotonicity = false\n"
    cfg = cli.parse_config(text)
    cli.run(cfg, tmp_path / "a")
    cli.run(cli.parse_config(text), tmp_path / "b")
    for name in ("report.csv", "report.json", "series_llt.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_failing_check_gives_exit_one_and_failure_list(tmp_path):
    text = "[env]\nkind = periodic\ncycle = 1, 2\n[run]\ncommand = verify\nn_max = 256\n" \
           "identities = false\nmonotonicity = false\n[tolerances]\nllt_rel = 1e-9\n"
    cfg = cli.parse_config(text)
    assert cli.run(cfg, tmp_path / "o") == 1
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    jsonschema.validate(report, schema())
    assert "llt" in report["failures"] and report["passed"] is False


def test_main_flags(tmp_path, capsys):
    p = write(tmp_path, MINIMAL)
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "o"), "--seed", "7", "--quiet"]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["env"] == "constant(kappa=1)#seed=7"
    assert capsys.readouterr().err == ""
    bad = write(tmp_path, "[env]\nkind = constant\nkappa = -1\n", "bad.ini")
    assert cli.main(["--config", str(bad)]) == 2
    assert "env.kappa" in capsys.readouterr().err
    assert cli.main(["--config", str(tmp_path / "missing.ini")]) == 2
    assert cli.main(["--config", str(p), "--seed", str(2**64), "--out", str(tmp_path / "x")]) == 2
    assert cli.main(["--config", str(p), "--threads", "0", "--out", str(tmp_path / "x")]) == 2


def test_walk_threads_do_not_change_output(tmp_path, monkeypatch):
    text = "[env]\nkind = iid_lognormal\nm = 0\ns = 1\n[run]\ncommand = walk\nn_max = 64\nwalkers = 5000\n" \
           "walk_steps = 40\nK = 2, 3\n[tolerances]\ntv = 0.1\n"
    p = write(tmp_path, text)
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "one"), "--threads", "1", "--quiet"]) == 0
    monkeypatch.setenv("CWLAB_THREADS", "3")
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "three"), "--quiet"]) == 0
    for name in ("occupancy.csv", "escape.json", "report.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "three" / name).read_bytes()


@pytest.mark.parametrize("path", sorted((Path(__file__).parent.parent / "configs").glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = cli.parse_config(path.read_text())
    assert cfg.command in {"verify", "all", "kernel", "walk", "env-sample"}
