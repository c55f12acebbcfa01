import csv
import io
import json
import math
import subprocess
import sys

import pytest
from click.testing import CliRunner

from hiercubes.cli import main

LAM = math.log(16 / 3)


@pytest.fixture
def write(tmp_path):
    def _write(name, doc):
        path = tmp_path / name
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return str(path)
    return _write


@pytest.fixture
def models(write):
    return {
        "monomer": write("monomer.json", {"d": 1, "model": {"type": "table", "z": [1.0]}}),
        "table": write("table.json", {"d": 1, "model": {"type": "table", "z": [1, "1/2", 0.3]}}),
        "const": write("const.json", {"d": 1, "model": {"type": "constant_energy", "lambda": LAM, "mu": 0.0}}),
        "diverging": write("div.json", {"d": 1, "model": {"type": "constant_energy", "lambda": LAM, "mu": 1.0}}),
        "energy": write("energy.json", {"d": 1, "model": {"type": "energy", "E": [0.5, 1.0, 3.0, "inf"],
                                                          "e_inf": 0.0, "mu": 0.1}}),
        "profile": write("profile.json", {"d": 1, "profile": {"rho": [0.4, 0.2]}}),
    }


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def ok_json(*args):
    res = run(*args)
    assert res.exit_code == 0, res.output
    return json.loads(res.output)


def test_pressure_monomer(models):
    doc = ok_json("pressure", "--config", models["monomer"])
    assert doc["command"] == "pressure"
    assert doc["result"]["p"] == pytest.approx(math.log(2), rel=1e-12)
    assert doc["meta"]["tol"] == 1e-10 and "heuristics" in doc["meta"]


def test_pressure_diverging(models):
    doc = ok_json("pressure", "--config", models["diverging"])
    assert doc["result"]["regime_hint"] == "divergent"
    assert doc["result"]["p"] == pytest.approx(doc["result"]["theta_star"], abs=1e-9)


def test_invalid_inputs(models, write):
    assert run("pressure", "--config", write("bad.json", "{not json")).exit_code == 2
    unknown = write("unknown.json", {"d": 1, "model": {"type": "table", "z": [1.0]}, "extra": 1})
    assert run("pressure", "--config", unknown).exit_code == 2
    assert run("pressure").exit_code == 2
    assert run("pressure", "--config", models["monomer"], "--tol", "-1").exit_code == 2
    assert run("pressure", "--config", models["monomer"], "--out", "x.txt").exit_code == 2
    assert run("pressure", "--config", models["monomer"], "--mu", "1").exit_code == 2


def test_strict_undetermined(write):
    near = write("near.json", {"d": 1, "model": {"type": "constant_energy", "lambda": LAM,
                                                  "mu": math.log(16 / 9) - 1e-12}})
    assert run("pressure", "--config", near, "--max-level", "6").exit_code == 0
    assert run("pressure", "--config", near, "--max-level", "6", "--strict").exit_code == 3


def test_numeric_failure_exit(models):
    assert run("oracle", "--d", "1", "--n", "6").exit_code == 4


def test_densities_csv(models):
    res = run("densities", "--config", models["table"], "--out", "csv")
    assert res.exit_code == 0
    rows = list(csv.DictReader(io.StringIO(res.output)))
    assert list(rows[0]) == ["j", "rho_j", "nu_j", "zhat_j", "z_j"]
    assert float(rows[1]["z_j"]) == pytest.approx(0.5)


def test_invert(models):
    doc = ok_json("invert", "--config", models["profile"])
    assert doc["result"]["z"] == pytest.approx([1.0, 1.0])


def test_entropy_from_profile_and_model(models):
    doc = ok_json("entropy", "--config", models["profile"])
    assert 0 <= doc["result"]["s"] <= doc["result"]["s_bound"]
    doc = ok_json("entropy", "--config", models["energy"])
    assert doc["result"]["f"] is not None


def test_phase(models):
    doc = ok_json("phase", "--config", models["const"])
    assert doc["result"]["kind"] == "Continuous"
    assert doc["result"]["mu_c"] == pytest.approx(math.log(16 / 9), abs=1e-9)
    assert run("phase", "--config", models["table"]).exit_code == 2


def test_phase_scan_rows(models):
    res = run("phase-scan", "--config", models["const"], "--mu-min", 0, "--mu-max", 1, "--steps", 100)
    assert res.exit_code == 0
    rows = list(csv.DictReader(io.StringIO(res.output)))
    assert len(rows) == 100 and list(rows[0]) == ["mu", "p", "sigma", "regime"]


def test_sample_and_fractal(models, tmp_path):
    doc = ok_json("sample", "--config", models["table"], "--level", 2, "--replicas", 2000, "--seed", 3)
    assert len(doc["result"]["rho_fixed"]) == 3
    target = tmp_path / "geo.json"
    assert run("fractal", "--config", models["const"], "--level", 5, "--seed", 9,
               "--mu", "0.3", "--out", target).exit_code == 0
    geo = json.loads(target.read_text())["result"]
    assert all(0 <= c["corner"][0] < 1 for c in geo["cubes"])


def test_oracle(write):
    doc = ok_json("oracle", "--d", 1, "--n", 1)
    assert doc["result"]["Xi"]["rational"] == "5"
    zfile = write("z.json", ["1/2", 1])
    doc = ok_json("oracle", "--d", 1, "--n", 1, "--z", zfile)
    assert doc["result"]["Xi"]["rational"] == "13/4"


COMMANDS = [
    ["pressure", "--config", "{table}"],
    ["densities", "--config", "{energy}"],
    ["invert", "--config", "{profile}"],
    ["entropy", "--config", "{profile}"],
    ["phase", "--config", "{const}"],
    ["phase-scan", "--config", "{const}", "--mu-min", "0", "--mu-max", "1", "--steps", "5"],
    ["sample", "--config", "{table}", "--level", "2", "--replicas", "5000", "--seed", "42"],
    ["fractal", "--config", "{const}", "--level", "6", "--seed", "42"],
    ["oracle", "--d", "2", "--n", "1"],
]


@pytest.mark.parametrize("argv", COMMANDS, ids=[c[0] for c in COMMANDS])
def test_byte_reproducible(argv, models):
    args = [a.format(**models) for a in argv]
    outs = [subprocess.run([sys.executable, "-m", "hiercubes.cli", *args], capture_output=True, check=True).stdout
            for _ in range(2)]
    assert outs[0] == outs[1] and outs[0]
