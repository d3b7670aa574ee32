import json
from pathlib import Path

import pytest
import tomli

from harnacklab.cli import ConfigError, main, parse_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = sorted((ROOT / "configs").glob("*.toml"))


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def outputs(d: Path):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_parse(path):
    raw = tomli.loads(path.read_text())
    if path.stem == "bad_ellipticity":
        with pytest.raises(Exception, match="EllipticityParams"):
            parse_config(raw)
    else:
        parse_config(raw)


def test_verify_example_exit_zero(tmp_path, capsys):
    rc = main(["verify-example", "--config", str(ROOT / "configs/verify_example.toml"), "--out", str(tmp_path)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["experiment"] == "verify-example"
    listed = set(manifest["outputs"])
    assert listed == {p.name for p in tmp_path.iterdir() if p.name != "manifest.json"}
    for key in ("artifact_version", "config_sha256", "config", "seed", "threads", "stage_seconds",
                "wall_clock_seconds"):
        assert key in manifest


def test_bad_ellipticity_exits_two(tmp_path, capsys):
    rc = main(["verify-example", "--config", str(ROOT / "configs/bad_ellipticity.toml"), "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "EllipticityParams" in err
    assert not (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize("text,needle", [
    ('experiment = "verify-example"\n[operator]\nlamda = 1.0\n', "lamda"),
    ('experiment = "verify-example"\ncolour = 1\n', "colour"),
    ('experiment = "no-such"\n', "no-such"),
    ('experiment = "verify-example"\n[operator\n', "malformed"),
    ('[params]\nsamples = 10\n', "experiment"),
])
def test_invalid_configs_exit_two(tmp_path, capsys, text, needle):
    rc = main(["run", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert needle in capsys.readouterr().err


def test_command_must_match_config(tmp_path, capsys):
    rc = main(["solve", "--config", str(ROOT / "configs/verify_example.toml"), "--out", str(tmp_path)])
    assert rc == 2
    assert "does not match" in capsys.readouterr().err


def test_unknown_key_raises_config_error():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "cover", "params": {"famillies": 3}})


COVER_SMALL = """
experiment = "cover"
[operator]
p = 3.0
n = 2
[params]
families = 6
size = 80
"""


def test_outputs_are_deterministic_across_runs_and_threads(tmp_path):
    cfg = write(tmp_path, COVER_SMALL)
    assert main(["cover", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["cover", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
    assert main(["cover", "--config", cfg, "--out", str(tmp_path / "c"), "--threads", "4"]) == 0
    a, b, c = (outputs(tmp_path / d) for d in "abc")
    assert a and a == b == c
    assert main(["cover", "--config", cfg, "--out", str(tmp_path / "d"), "--seed", "5"]) == 0
    assert outputs(tmp_path / "d") != a


def test_cover_with_fixture_writes_selection(tmp_path):
    fam = tmp_path / "fam.csv"
    fam.write_text("x1,t,rho\n0.0,0.0,0.5\n0.25,0.0,0.25\n3.0,0.0,0.5\n")
    cfg = write(tmp_path, f'experiment = "cover"\n[params]\nfixture = "{fam}"\n')
    assert main(["cover", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    sel = (tmp_path / "o" / "selected.csv").read_text().split()
    assert sel == ["index", "0", "2"]


def test_convergence_of_constant_is_exact(tmp_path, capsys):
    cfg = write(tmp_path, """
experiment = "convergence"
[grid]
origin = [0.0]
extent = [1.0]
dx = 0.125
t_start = 0.0
t_end = 0.1
dt = 0.05
[operator]
kind = "pucci_minus"
p = 3.0
[solution]
kind = "constant"
value = 2.5
[params]
levels = 3
""")
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert all(r["linf"] == 0.0 and r["l1"] == 0.0 for r in summary["rows"])


def test_harnack_subcommand_dispatch(tmp_path, capsys):
    cfg = write(tmp_path, """
experiment = "harnack-waiting-time"
[operator]
p = 3.0
[params]
C0 = [1.0, 2.0]
""")
    assert main(["harnack", "waiting-time", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads(capsys.readouterr().out)
    th = [r["theta1"] for r in summary["rows"]]
    assert th == pytest.approx([0.25, 0.125], rel=1e-6)
    assert summary["below_bound_and_nonincreasing"]
