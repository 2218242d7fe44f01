import json
import subprocess
import sys
from pathlib import Path

import pytest

from steklov_lab.cli import main
from steklov_lab.config import ConfigError, load_scenario, scenario_from_dict

SCENARIOS = sorted((Path(__file__).resolve().parent.parent / "scenarios").glob("*.toml"))


def base(**over):
    sc = {"name": "t", "cross_section": "torus:2pi,2pi", "family": "conformal", "profile": "conf1",
          "L": 1.0, "eps": [0.1], "k": 4}
    sc.update(over)
    return {"scenario": sc}


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_bundled_scenarios_load(path):
    sc = load_scenario(path)
    assert sc.name == path.stem
    assert sc.checks


@pytest.mark.parametrize("doc,field", [
    ({}, "scenario"),
    (base(L=None), "scenario.L"),
    (base(L=-1), "scenario.L"),
    (base(family="hyperbolic"), "scenario.family"),
    (base(profile="conf9"), "scenario.profile"),
    (base(eps=[]), "scenario.eps"),
    (base(eps=["abc"]), "scenario.eps"),
    (base(k=0), "scenario.k"),
    (base(cross_section="klein:1"), "scenario.cross_section"),
    (base(checks=["nope"]), "scenario.checks"),
    (base(checks=["kokarev"]), "scenario.checks[kokarev]"),
    (base(checks=["warped"]), "scenario.checks[warped]"),
    (base(problems=["steklov-dirichlet"]), "scenario.depth"),
    (base(profile="custom"), "scenario.pieces"),
    ({**base(), "checks": {"bogus": {}}}, "checks.bogus"),
    ({**base(), "resolution": {"per_mile": 3}}, "resolution"),
    ({**base(checks=["quasiiso"]), "checks": {"quasiiso": {"ratio": 0.5}}}, "checks.quasiiso.ratio"),
])
def test_schema_errors_name_the_field(doc, field):
    if doc.get("scenario", {}).get("L", 0) is None:
        del doc["scenario"]["L"]
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(doc)
    assert exc.value.field == field
    assert str(exc.value).startswith(field)


def test_invalid_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[scenario\n")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_scenario(p)


def test_output_dir_relative_to_config(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('[scenario]\nname="s"\ncross_section="circle:1"\nL=1\nchecks=["kokarev"]\n[output]\ndir="o"\n')
    assert load_scenario(p).output_dir == tmp_path / "o"


def test_cli_spectrum(capsys, tmp_path):
    assert main(["spectrum", "--cross-section", "circle:1", "-k", "4", "--json", str(tmp_path / "s.json"),
                 "--csv", str(tmp_path / "s.csv")]) == 0
    out = capsys.readouterr().out
    assert "0.761594155" in out
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["entries"][0]["value"] == 0.0
    assert (tmp_path / "s.csv").read_text().startswith("index,eigenvalue,multiplicity\n")


def test_cli_steklov_dirichlet(capsys):
    assert main(["spectrum", "--problem", "steklov-dirichlet", "--depth", "0.5", "-k", "1"]) == 0
    first = capsys.readouterr().out.splitlines()[2].split()
    assert first[:3] == ["1", "2", "1"]  # sigma_1 = 1/depth for the zero mode


def test_cli_dtn(capsys, tmp_path):
    ext = tmp_path / "ext.csv"
    assert main(["dtn", "--lam", "0", "--dump-extension", str(ext), "--trace", "1", "-1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["eigenvalues"] == pytest.approx([0.0, 1.0], abs=1e-12)
    assert doc["parity"] == ["even", "odd"]
    rows = ext.read_text().splitlines()
    assert rows[0] == "t,h,a" and float(rows[1].split(",")[2]) == pytest.approx(1.0)


def test_cli_rayleigh(capsys):
    assert main(["rayleigh", "--cross-section", "torus:2pi,2pi", "--profile", "conf1", "--eps", "0.05"]) == 0
    assert "sigma_2 <= 2" in capsys.readouterr().out


def test_cli_convergence(capsys):
    assert main(["convergence", "--levels", "3", "--exact", "0.7615941559557649"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    orders = [float(line.split()[-1]) for line in lines[2:]]
    assert all(1.8 < o < 2.2 for o in orders)


def test_cli_sweep(tmp_path, capsys):
    assert main(["sweep", "--cross-section", "torus:2pi,2pi", "--profile", "conf1", "--eps", "0.1", "0.05",
                 "-k", "3", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "sweep.csv").read_text()
    assert text.splitlines()[0] == "eps,k,sigma" and len(text.splitlines()) == 7
    assert (tmp_path / "sigma.svg").exists()


def test_cli_errors_exit_2(capsys):
    assert main(["spectrum", "--profile", "conf1", "--cross-section", "torus:2pi,2pi", "--eps", "0.5"]) == 2
    assert "min(L/4, 2/L)" in capsys.readouterr().err
    assert main(["spectrum", "--cross-section", "torus:2pi,2pi", "--family", "conformal", "--profile", "conf1",
                 "--eps", "0.5", "--no-strict-epsilon"]) == 2  # still too wide for L = 1


def test_non_strict_epsilon(capsys):
    # eps = 0.6 breaks min(L/4, 2/L) = 0.5 for L = 4 but fits the construction
    assert main(["spectrum", "--cross-section", "torus:2pi,2pi", "--profile", "conf1", "-L", "4", "--eps", "0.6",
                 "-k", "2", "--no-strict-epsilon"]) == 0


def write(tmp_path, name, body):
    p = tmp_path / f"{name}.toml"
    p.write_text(body)
    return p


def test_verify_exit_codes_and_determinism(tmp_path):
    good = write(tmp_path, "good", '[scenario]\nname="good"\ncross_section="circle:1"\nL=1\nk=4\n'
                                   'checks=["kokarev","volume-growth"]\n')
    # conf1 growth demanded of the product cylinder fails on purpose
    bad = write(tmp_path, "bad", '[scenario]\nname="bad"\ncross_section="torus:2pi,2pi"\nprofile="custom"\nL=1\n'
                                 'pieces=[[-1.0, 1.0, "constant", 1.0]]\neps=[0.1, 0.05]\nchecks=["conf1"]\n')
    assert main(["verify", str(good), "--out", str(tmp_path / "a")]) == 0
    assert main(["verify", str(good), "--out", str(tmp_path / "b"), "--no-plot"]) == 0
    a = (tmp_path / "a" / "good" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "good" / "report.json").read_bytes()
    assert (tmp_path / "a" / "good" / "sweep.csv").read_bytes() == (tmp_path / "b" / "good" / "sweep.csv").read_bytes()
    assert main(["verify", str(bad), "--out", str(tmp_path / "c")]) == 1
    assert main(["verify", str(tmp_path / "missing.toml")]) == 2
    leftovers = [p for p in tmp_path.rglob("*.tmp")]
    assert not leftovers


def test_verify_schema_error_exit_2(tmp_path, capsys):
    p = write(tmp_path, "x", '[scenario]\nname="x"\ncross_section="torus:2pi,2pi"\nL=1\nchecks=["kokarev"]\n')
    assert main(["verify", str(p)]) == 2
    assert "scenario.checks[kokarev]" in capsys.readouterr().err


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "steklov_lab.cli", "spectrum", "-k", "2"], capture_output=True,
                         text=True, check=True)
    assert "0.76159415" in out.stdout
