"""Config validation, experiment construction, and the batch CLI."""

from __future__ import annotations

import copy
import json
import math
import re

import numpy as np
import pytest
from click.testing import CliRunner

from carpetmf import (
    UniformRowWeight,
    finite_beta,
    make_constant_cell,
    make_skew_product,
)
from carpetmf.cli import main
from carpetmf.config import (
    ConfigError,
    config_sha256,
    load_config,
    load_raw,
    parse_config,
)
from carpetmf.reference import default_config

SHA_HEX = re.compile(r"^[0-9a-f]{64}$")


def small_config(**overrides) -> dict:
    data = {
        "cellSystem": default_config()["cellSystem"],
        "weight": default_config()["weight"],
        "grids": {"qGrid": [0.0, 0.5, 1.0, 2.0], "depthSchedule": [2, 4]},
        "sampling": {"nSamples": 5, "depth": 4, "masterSeed": 7},
        "output": {"directory": "out", "formats": ["csv", "json"]},
    }
    data.update(copy.deepcopy(overrides))
    return data


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def data_lines(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


# -- parsing and hashing ------------------------------------------------------


def test_default_config_parses():
    cfg = parse_config(default_config())
    assert cfg.system.r1 == 2 and cfg.system.r2 == 4
    assert cfg.system.n_cells == 5
    assert cfg.depth_schedule == (4, 6, 8, 10, 12)
    assert 0.0 in cfg.q_grid and 1.0 in cfg.q_grid
    assert np.all(np.diff(cfg.q_grid) > 0)
    assert cfg.n_samples == 400
    assert SHA_HEX.match(cfg.sha256)


def test_q_grid_refinement():
    cfg = parse_config(small_config(grids={"qGrid": {"start": -1.0, "stop": 1.0, "count": 5, "refine": [0.0]}}))
    for offset in (0.03125, 0.0625, 0.125):
        assert offset in cfg.q_grid and -offset in cfg.q_grid


def test_sha_ignores_key_order():
    a = small_config()
    b = {k: a[k] for k in reversed(list(a))}
    assert parse_config(a).sha256 == parse_config(b).sha256
    assert config_sha256({"x": 1, "y": 2}) == config_sha256({"y": 2, "x": 1})


def test_sha_distinguishes_content():
    a = parse_config(small_config())
    b = parse_config(small_config(sampling={"nSamples": 6, "depth": 4, "masterSeed": 7}))
    assert a.sha256 != b.sha256


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d.update(surprise=1), "surprise"),
        (lambda d: d["weight"].update(values=[0.2, 0.3, 0.1, 0.15]), "weight.values"),
        (lambda d: d["weight"].update(values=[0.2, 0.3, 0.1, 0.15, 0.0]), "weight"),
        (lambda d: d["cellSystem"].update(allowed=[[0, 0], [0, 9]]), "cellSystem"),
        (lambda d: d["grids"].update(depthSchedule=[4, 2]), "grids.depthSchedule"),
        (lambda d: d["weight"].update(matrices=[[1.0]]), "not used by kind"),
    ],
)
def test_rejections_name_the_block(mutate, fragment):
    data = small_config()
    data["weight"] = dict(data["weight"])
    mutate(data)
    with pytest.raises(ConfigError) as err:
        parse_config(data)
    assert fragment in str(err.value)


def test_truncated_table_keys_validated():
    weight = {
        "kind": "constantCell",
        "depth": 2,
        "values": [1.0] * 25,
        "truncated": {"x": [1.0] * 5},
    }
    with pytest.raises(ConfigError, match="non-integer length key"):
        parse_config(small_config(weight=weight))
    weight["truncated"] = {"2": [1.0] * 25}
    with pytest.raises(ConfigError, match="outside 1..1"):
        parse_config(small_config(weight=weight))
    weight["truncated"] = {"1": [1.0] * 4}
    with pytest.raises(ConfigError, match=r"truncated\[1\]"):
        parse_config(small_config(weight=weight))


def test_matrix_shape_validated():
    weight = {"kind": "matrixCocycle", "dimension": 2, "matrices": [[1.0, 1.0]] * 5}
    with pytest.raises(ConfigError, match="4 row-major entries"):
        parse_config(small_config(weight=weight))
    weight = {"kind": "matrixCocycle", "dimension": 1, "matrices": [[1.0]] * 4}
    with pytest.raises(ConfigError, match="one matrix per allowed cell"):
        parse_config(small_config(weight=weight))


def test_load_raw_diagnostics(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "a": ,\n}')
    with pytest.raises(ConfigError) as err:
        load_raw(bad)
    assert "line 2" in str(err.value)
    array = tmp_path / "array.json"
    array.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="top level must be an object"):
        load_raw(array)


# -- weight construction -------------------------------------------------------


def test_build_constant_cell(ref_masses):
    cfg = parse_config(small_config())
    for cell, mass in ref_masses.items():
        assert cfg.weight.log_weight([cell]) == pytest.approx(math.log(mass), abs=1e-12)


def test_build_matrix_cocycle_dimension_one(ref_masses):
    weight = {
        "kind": "matrixCocycle",
        "dimension": 1,
        "matrices": [[m] for m in (0.2, 0.3, 0.1, 0.15, 0.25)],
    }
    cfg = parse_config(small_config(weight=weight))
    w = [(0, 1), (1, 2), (1, 0)]
    want = sum(math.log(ref_masses[c]) for c in w)
    assert cfg.weight.log_weight(w) == pytest.approx(want, abs=1e-12)


def test_build_skew_product(ref_system):
    values = [0.2, 0.3, 0.1, 0.15, 0.25]
    weight = {
        "kind": "skewProduct",
        "rho": {"values": values},
        "theta1": {"kind": "uniform"},
    }
    cfg = parse_config(small_config(weight=weight))
    rho = make_constant_cell(ref_system, 1, np.log(values))
    want = make_skew_product(rho, UniformRowWeight(2))
    w = [(0, 1), (1, 2)]
    assert cfg.weight.log_weight(w) == pytest.approx(want.log_weight(w), abs=1e-12)
    # explicit uniform letter table gives the same weight
    letters = dict(weight, theta1={"kind": "letters", "values": [0.5, 0.5]})
    cfg2 = parse_config(small_config(weight=letters))
    assert cfg2.weight.log_weight(w) == pytest.approx(want.log_weight(w), abs=1e-12)


def test_build_normalized_weight():
    weight = {
        "kind": "constantCell",
        "depth": 1,
        "values": [2.0, 3.0, 1.0, 1.5, 2.5],
        "normalize": True,
    }
    cfg = parse_config(small_config(weight=weight))
    assert abs(finite_beta(cfg.weight, 1.0, 4)) <= 1e-9


# -- CLI -----------------------------------------------------------------------------


def invoke(*args):
    return CliRunner().invoke(main, list(args))


def test_cli_version():
    result = invoke("--version")
    assert result.exit_code == 0
    assert "carpetmf, version 0.1.0" in result.output


def test_cli_pressure(tmp_path):
    cfgfile = write_config(tmp_path, small_config())
    result = invoke("pressure", "--config", str(cfgfile), "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    residual = float(result.output.split("beta(1) residual = ")[1].splitlines()[0])
    assert abs(residual) <= 1e-9
    assert "support dimension" in result.output
    for stem in ("pressure_T", "pressure_beta"):
        csv = tmp_path / "out" / f"{stem}.csv"
        lines = csv.read_text().splitlines()
        assert lines[0] == "# carpetmf 0.1.0"
        assert lines[1].startswith("# config ") and SHA_HEX.match(lines[1].split()[-1])
        body = data_lines(csv)
        assert body[0] == "q,value_n2,value_n4,extrapolated,error"
        assert len(body) == 1 + 4
        payload = json.loads((tmp_path / "out" / f"{stem}.json").read_text())
        assert payload["meta"]["tool"] == "carpetmf"
        assert payload["meta"]["version"] == "0.1.0"
        assert SHA_HEX.match(payload["meta"]["configSha256"])


def test_cli_pressure_depth_max(tmp_path):
    result = invoke("pressure", "--depth-max", "6", "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    body = data_lines(tmp_path / "out" / "pressure_T.csv")
    assert body[0] == "q,value_n4,value_n6,extrapolated,error"


def test_cli_rejects_malformed_config(tmp_path):
    cfgfile = write_config(tmp_path, small_config(surprise=1))
    result = invoke("pressure", "--config", str(cfgfile), "--out", str(tmp_path / "out"))
    assert result.exit_code == 1
    assert "error:" in result.stderr and "surprise" in result.stderr


def test_cli_workers_deterministic(tmp_path):
    cfgfile = write_config(tmp_path, small_config())
    invoke("pressure", "--config", str(cfgfile), "--out", str(tmp_path / "a"), "--workers", "1")
    invoke("pressure", "--config", str(cfgfile), "--out", str(tmp_path / "b"), "--workers", "4")
    for stem in ("pressure_T", "pressure_beta"):
        a = (tmp_path / "a" / f"{stem}.csv").read_bytes()
        b = (tmp_path / "b" / f"{stem}.csv").read_bytes()
        # only the config hash differs (output.directory is hashed); the
        # numeric payload must match byte for byte
        assert data_lines(tmp_path / "a" / f"{stem}.csv") == data_lines(
            tmp_path / "b" / f"{stem}.csv"
        )
        assert len(a) == len(b)


def test_cli_spectrum(tmp_path):
    cfgfile = write_config(tmp_path, small_config())
    result = invoke("spectrum", "--config", str(cfgfile), "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    for stem in ("spectrum_birkhoff", "spectrum_gibbs", "spectrum_carpet"):
        assert (tmp_path / "out" / f"{stem}.csv").exists()
        assert (tmp_path / "out" / f"{stem}.json").exists()
    assert (tmp_path / "out" / "spectrum.gp").exists()
    body = data_lines(tmp_path / "out" / "spectrum_gibbs.csv")
    assert body[0] == "q,alpha,dimension,flag"
    rows = {float(ln.split(",")[0]): ln.split(",") for ln in body[1:]}
    q1 = rows[1.0]
    # beta(1) = 0 puts the Gibbs spectrum on the diagonal at q = 1
    assert abs(float(q1[2]) - float(q1[1])) <= 1e-6
    carpet_body = data_lines(tmp_path / "out" / "spectrum_carpet.csv")
    assert carpet_body[0] == "q,beta,dimension,flag"


def test_cli_sample(tmp_path):
    cfgfile = write_config(tmp_path, small_config())
    result = invoke("sample", "--config", str(cfgfile), "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    body = data_lines(tmp_path / "out" / "samples.csv")
    assert body[0] == "sampleIndex,birkhoffAverage,localDimension"
    assert len(body) == 1 + 5
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["nSamples"] == 5 and summary["depth"] == 4
    assert "meanLocalDimension" in summary and "stderrLocalDimension" in summary


def test_cli_sample_empty(tmp_path):
    cfgfile = write_config(
        tmp_path, small_config(sampling={"nSamples": 0, "depth": 4, "masterSeed": 7})
    )
    result = invoke("sample", "--config", str(cfgfile), "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    body = data_lines(tmp_path / "out" / "samples.csv")
    assert body == ["sampleIndex,birkhoffAverage,localDimension"]
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert "meanLocalDimension" not in summary


def test_cli_sample_seed_changes_output(tmp_path):
    cfgfile = write_config(tmp_path, small_config())
    invoke("sample", "--config", str(cfgfile), "--out", str(tmp_path / "a"), "--seed", "1")
    invoke("sample", "--config", str(cfgfile), "--out", str(tmp_path / "b"), "--seed", "2")
    invoke("sample", "--config", str(cfgfile), "--out", str(tmp_path / "c"), "--seed", "1")
    a = data_lines(tmp_path / "a" / "samples.csv")
    b = data_lines(tmp_path / "b" / "samples.csv")
    c = data_lines(tmp_path / "c" / "samples.csv")
    assert a != b
    assert a == c


def test_cli_render_and_boxcount(tmp_path):
    cfgfile = write_config(tmp_path, small_config())
    result = invoke(
        "render", "--config", str(cfgfile), "--out", str(tmp_path / "out"), "--depth", "2"
    )
    assert result.exit_code == 0, result.output
    pgm = (tmp_path / "out" / "render_n2.pgm").read_bytes()
    assert pgm.startswith(b"P5\n")
    assert b"16 16\n65535\n" in pgm
    csv = data_lines(tmp_path / "out" / "render_n2.csv")
    assert csv[0] == "columnIndex,rowIndex,logMass"
    # 5^2 admissible squares, each extended by 2^(g-n) = 4 column suffixes
    assert len(csv) == 1 + 5**2 * 4

    result = invoke(
        "boxcount", "--config", str(cfgfile), "--out", str(tmp_path / "out"), "--depth", "2"
    )
    assert result.exit_code == 0, result.output
    body = data_lines(tmp_path / "out" / "boxcount_n2.csv")
    assert body[0] == "q,tau"
    taus = {float(ln.split(",")[0]): float(ln.split(",")[1]) for ln in body[1:]}
    assert abs(taus[1.0]) <= 1e-12


def test_cli_check_custom_system(tmp_path):
    data = small_config(
        cellSystem={"r1": 3, "r2": 3, "allowed": [[0, 0], [1, 1]]},
        weight={"kind": "constantCell", "depth": 1, "values": [1.0, 1.0]},
    )
    cfgfile = write_config(tmp_path, data)
    result = invoke("check", "--config", str(cfgfile), "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    payload = json.loads((tmp_path / "out" / "check.json").read_text())
    assert payload["P1"] is False  # rows 0 and 1 are adjacent
    assert payload["P2"] is True  # top boundary row 2 is unoccupied
    assert payload["P3"]["subsetHolds"] is False
    assert payload["P3"]["verdict"] == "indeterminate"
    assert payload["meta"]["tool"] == "carpetmf"


def test_cli_check_reference(tmp_path):
    result = invoke("check", "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    payload = json.loads((tmp_path / "out" / "check.json").read_text())
    assert payload["P1"] is False and payload["P2"] is False
    assert payload["P3"]["subsetHolds"] is True
    assert payload["P3"]["verdict"] == "indeterminate"
    assert payload["P3"]["terminalDefect"] == pytest.approx(0.31365755885504143, abs=1e-12)


def test_cli_verify_scoped_config(tmp_path):
    data = small_config(
        cellSystem={"r1": 3, "r2": 3, "allowed": [[0, 0], [1, 1], [2, 2]]},
        weight={"kind": "constantCell", "depth": 1, "values": [0.5, 0.3, 0.2]},
        grids={"qGrid": [0.0, 1.0], "depthSchedule": [2, 3, 4]},
    )
    cfgfile = write_config(tmp_path, data)
    result = invoke("verify", "--config", str(cfgfile), "--out", str(tmp_path / "out"))
    assert result.exit_code == 0, result.output
    assert "not applicable" in result.output


def test_load_config_round_trip(tmp_path):
    cfgfile = write_config(tmp_path, small_config())
    cfg = load_config(cfgfile)
    assert cfg.sha256 == parse_config(small_config()).sha256
