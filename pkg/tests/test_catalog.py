import numpy as np
import pytest

from segpart.catalog import LISTED, entry, face_bump_witness, list_entries
from segpart.errors import IncompatibleMesh, UnknownId
from segpart.sphere import build_circle_mesh, build_icosphere_mesh
from segpart.symmetry import admissibility_check

ORDERS = {"xyz_r3": 8, "dihedral2d(1)": 2, "dihedral2d(2)": 4, "dihedral2d(3)": 6, "prism3d(2)": 8,
          "rot2d(3,2)": 12, "y3_s2": 6, "tetra_k4": 24, "cube_k6": 48, "cube_k3": 48}

SMALL = {"dihedral2d(1)": {"n": 64}, "dihedral2d(2)": {"n": 64}, "dihedral2d(3)": {"n": 72},
         "rot2d(3,2)": {"n": 72}, "prism3d(2)": {"n_lon": 24, "n_lat": 11}, "y3_s2": {"n_lon": 24, "n_lat": 11},
         "xyz_r3": {"level": 2}, "tetra_k4": {"level": 2}, "cube_k6": {"level": 2}, "cube_k3": {"level": 2}}


@pytest.mark.parametrize("cid", LISTED)
def test_entries_admissible(cid):
    e = entry(cid)
    assert e.group().order == ORDERS[cid]
    tr, mesh = e.make(**SMALL[cid])
    assert mesh.group_exact
    rep = admissibility_check(tr)
    assert rep.passed, rep.as_dict()
    assert np.allclose(tr.witness.masses(), 1)


def test_listing_and_references():
    rows = {r["id"]: r for r in list_entries()}
    assert set(rows) == set(LISTED)
    assert rows["xyz_r3"]["ell_reference"] == 3.0
    assert rows["y3_s2"]["ell_reference"] == 1.5
    assert rows["prism3d(2)"]["ell_reference"] == 3.0
    assert rows["dihedral2d(3)"]["ell_reference"] == 3.0
    assert rows["rot2d(3,2)"]["ell_reference"] == 3.0
    assert rows["tetra_k4"]["ell_reference"] == "unknown"


def test_id_forms():
    assert entry("dihedral2d:4").id == entry("dihedral2d(4)").id
    assert entry("rot2d:2,3").k == 2
    for bad in ["nope", "dihedral2d(0)", "rot2d(3)", "rot2d(3,1)", "dihedral2d(a)"]:
        with pytest.raises(UnknownId):
            entry(bad)


def test_dimension_mismatch():
    with pytest.raises(IncompatibleMesh):
        entry("xyz_r3").make(build_circle_mesh(32))


def test_face_bumps():
    mesh = build_icosphere_mesh(3, "octahedron")
    f = face_bump_witness("cube", mesh)
    assert f.k == 6
    # disjoint supports, one per face
    assert np.max(np.sort(f.values, axis=0)[-2]) == 0
    with pytest.raises(IncompatibleMesh):
        face_bump_witness("tetrahedron", mesh, "opposite")
    with pytest.raises(IncompatibleMesh):
        face_bump_witness("cube", build_circle_mesh(16))
    with pytest.raises(IncompatibleMesh):
        face_bump_witness("tetrahedron", build_icosphere_mesh(0, "octahedron"))
