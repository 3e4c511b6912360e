import json

import numpy as np
import pytest

from segpart import io
from segpart.catalog import entry
from segpart.cli import ConfigError, main, parse_betas
from segpart.errors import IncompatibleMesh
from segpart.sphere import build_icosphere_mesh


def test_parse_betas():
    assert parse_betas("10:2560:x4") == [10, 40, 160, 640, 2560]
    assert parse_betas("1, 2.5,7") == [1, 2.5, 7]
    for bad in ["", "10:1:x2", "1:10:x1", "a,b", "1:10"]:
        with pytest.raises(ConfigError):
            parse_betas(bad)


def test_json_csv_roundtrip(tmp_path):
    io.write_json(tmp_path / "a.json", {"x": np.float64(1.5), "v": np.arange(3), "bad": float("inf")})
    doc = io.read_json(tmp_path / "a.json")
    assert doc == {"x": 1.5, "v": [0, 1, 2], "bad": "inf"}
    rows = [{"r": 0.1 + i / 3, "H": float(i)} for i in range(4)]
    io.write_csv(tmp_path / "t.csv", rows)
    back = io.read_csv(tmp_path / "t.csv")
    assert np.array_equal(back["r"], [row["r"] for row in rows])


def test_field_and_group_roundtrip(tmp_path, xyz_small):
    tr, mesh = xyz_small
    io.save_field(tmp_path / "f.json", tr.witness)
    f = io.load_field(tmp_path / "f.json")
    assert np.array_equal(f.values, tr.witness.values)
    assert f.mesh.content_hash() == mesh.content_hash()
    with pytest.raises(IncompatibleMesh):
        io.load_field(tmp_path / "f.json", build_icosphere_mesh(3))
    g = io.group_from_dict(json.loads(json.dumps(io.group_to_dict(tr.group))))
    assert g.order == tr.group.order
    assert np.array_equal(g.hom, tr.group.hom)


def test_cli_catalog(capsys, tmp_path):
    assert main(["catalog", "list"]) == 0
    assert "xyz_r3" in capsys.readouterr().out
    assert main(["catalog", "show", "dihedral2d(2)"]) == 0
    assert json.loads(capsys.readouterr().out)["group_order"] == 4


def test_cli_unknown_id(capsys, tmp_path):
    code = main(["partition", "--triplet", "nonsense", "--out", str(tmp_path)])
    assert code == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "UnknownId"
    assert io.read_json(tmp_path / "error.json")["exit_code"] == 2


def test_cli_partition(tmp_path, capsys):
    out = tmp_path / "p"
    code = main(["partition", "--triplet", "dihedral2d(1)", "--n", "128", "--betas", "10,40,160",
                 "--seeds", "1", "--threads", "1", "--out", str(out)])
    assert code == 0
    for name in ["config.json", "mesh.json", "group.json", "sweep.csv", "summary.json"]:
        assert (out / name).exists()
    sweep = io.read_csv(out / "sweep.csv")
    assert np.all(np.diff(sweep["ell_beta"]) > 0)
    summary = io.read_json(out / "summary.json")
    assert abs(summary["ell_upper"] - 1) < 0.01


def test_cli_ball_and_acf(tmp_path, capsys):
    out = tmp_path / "b"
    code = main(["ball", "--triplet", "xyz_r3", "--level", "3", "--shells", "48", "--out", str(out)])
    assert code == 0
    rep = io.read_json(out / "report.json")
    assert rep["energy_bound_ell"]
    assert abs(rep["H_V_1"] - 1) < 1e-6
    capsys.readouterr()
    code = main(["acf-check", "--diagnostics", str(out / "diagnostics_V.csv"), "--ell", "3"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["C"] == pytest.approx(rep["acf"]["C"])
