import numpy as np
import pytest
import scipy.linalg as sla

from segpart.catalog import entry, xyz_group
from segpart.errors import PointLocationFailure, ZeroComponent
from segpart.sphere import (Field, SphereMesh, build_circle_mesh, build_icosphere_mesh, build_latlong_mesh,
                            build_transports, rayleigh)
from segpart.symmetry import GroupElement, SymmetryGroup, group_closure


def _lumped_circle_eig(n, j):
    # eigenvalues of the lumped P1 pencil on n equispaced points
    h = 2 * np.pi / n
    return 4 / h ** 2 * np.sin(j * h / 2) ** 2


def check_mesh_invariants(mesh, total):
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-12)
    assert abs(mesh.area - total) / total < 1e-3
    assert abs(mesh.mass - mesh.mass.T).max() == 0
    assert np.abs(mesh.stiffness @ np.ones(mesh.n)).max() < 1e-10
    assert abs(mesh.stiffness - mesh.stiffness.T).max() < 1e-12


def test_circle_small_mass():
    m = build_circle_mesh(4)
    assert abs(m.area - 2 * np.pi) < 1e-12


def test_circle_eigen():
    m = build_circle_mesh(1024)
    check_mesh_invariants(m, 2 * np.pi)
    vals = sla.eigh(m.stiffness.toarray(), m.mass.toarray(), eigvals_only=True, subset_by_index=[0, 2])
    assert abs(vals[0]) < 1e-10
    assert abs(vals[1] - 1) < 1e-4
    assert vals[1] == pytest.approx(_lumped_circle_eig(1024, 1), rel=1e-10)
    th = 2 * np.pi * np.arange(1024) / 1024
    q = rayleigh(m, np.cos(3 * th)[None], 0)
    assert abs(q - 9) < 1e-3
    assert q == pytest.approx(8.999745868388178, rel=1e-12)


def test_circle_rate():
    errs = []
    for n in (128, 256, 512):
        m = build_circle_mesh(n)
        th = 2 * np.pi * np.arange(n) / n
        errs.append(abs(rayleigh(m, np.cos(2 * th)[None], 0) - 4))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.01)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.01)


@pytest.mark.parametrize("level,nv,nf", [(0, 12, 20), (1, 42, 80), (3, 642, 1280)])
def test_icosphere_counts(level, nv, nf):
    m = build_icosphere_mesh(level)
    assert (m.n, len(m.cells)) == (nv, nf)
    assert m.n == 10 * 4 ** level + 2


def test_octasphere_counts():
    for level in range(4):
        assert build_icosphere_mesh(level, "octahedron").n == 4 * 4 ** level + 2


def test_icosphere_level4():
    m = build_icosphere_mesh(4)
    check_mesh_invariants(m, 4 * np.pi)
    x, y, z = m.vertices.T
    assert abs(rayleigh(m, (x * y * z)[None], 0) - 12) / 12 < 0.01
    # (xyz)^+ alone has the same quotient; gamma of it is the characteristic exponent 3
    q = rayleigh(m, np.maximum(x * y * z, 0)[None], 0)
    assert abs(np.sqrt(0.25 + q) - 0.5 - 3) / 3 < 0.03


def test_latlong_invariants():
    m = build_latlong_mesh(24, 11)
    check_mesh_invariants(m, 4 * np.pi)


def test_rayleigh_constant_and_zero():
    m = build_icosphere_mesh(2)
    assert abs(rayleigh(m, np.ones((1, m.n)), 0)) < 1e-12
    with pytest.raises(ZeroComponent):
        rayleigh(m, np.zeros((1, m.n)), 0)


def test_stiffness_psd(rng):
    m = build_icosphere_mesh(3)
    for _ in range(100):
        v = rng.standard_normal(m.n)
        assert v @ (m.stiffness @ v) >= -1e-10 * (v @ v)


def test_galerkin_rate():
    levels = [2, 3, 4, 5]
    errs = []
    for lev in levels:
        m = build_icosphere_mesh(lev)
        x, y, z = m.vertices.T
        cases = [(x, 2), (z, 2), (x * y, 6), (x * x - y * y, 6), (x * y * z, 12)]
        errs.append([abs(rayleigh(m, f[None], 0) - ex) for f, ex in cases])
    errs = np.array(errs)
    for j in range(errs.shape[1]):
        slope = np.polyfit(np.log(4.0 ** np.array(levels)), np.log(errs[:, j]), 1)[0]
        assert -1.2 <= slope <= -0.8


def test_transports_exact_and_contravariant():
    grp = xyz_group()
    m = build_transports(build_icosphere_mesh(2), grp)  # icosahedron keeps the coordinate planes
    assert m.group_exact
    assert np.array_equal(m.transports[0].perm, np.arange(m.n))
    f = np.random.default_rng(3).random(m.n)
    for t in m.transports.values():
        A = t.matrix.toarray()
        assert np.allclose(A.sum(axis=1), 1)
        assert np.all((A == 0) | (A == 1))
    for a in range(grp.order):
        for b in range(grp.order):
            ab = grp.compose(a, b)
            assert np.allclose(m.pull(ab, f), m.pull(b, m.pull(a, f)), atol=1e-8)


def test_transports_interpolating():
    # a rotation by 2 pi / 7 about z is not a symmetry of the icosphere
    c, s = np.cos(2 * np.pi / 7), np.sin(2 * np.pi / 7)
    grp = group_closure([np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])])
    m = build_transports(build_icosphere_mesh(3), grp)
    assert not m.group_exact
    for t in m.transports.values():
        assert np.allclose(np.asarray(t.matrix.sum(axis=1)).ravel(), 1)
    # linear functions are interpolated with O(h^2) error
    z = m.vertices[:, 2]
    assert np.abs(m.pull(1, z) - z).max() < 5e-3


def test_point_location_failure():
    m = build_icosphere_mesh(1)
    broken = SphereMesh(3, m.vertices, m.cells[:10], m.mass, m.stiffness, "icosahedron", 1)
    c, s = np.cos(0.3), np.sin(0.3)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    # a two-element "group" is enough to drive point location; closure is not needed here
    fake = SymmetryGroup(3, (GroupElement(np.eye(3), 0), GroupElement(rot, 1)), np.zeros((2, 2), int),
                         (rot,), (1,), ((-1, -1), (0, 0)))
    with pytest.raises(PointLocationFailure):
        build_transports(broken, fake)


def test_field_normalization(xyz_small):
    tr, mesh = xyz_small
    f = Field(mesh, 3 * tr.witness.values)
    assert np.allclose(f.normalized("unit").masses(), 1)
    assert np.allclose(f.normalized("one_over_k").masses(), 0.5)


def test_content_hash_stable():
    a, b = build_icosphere_mesh(2), build_icosphere_mesh(2)
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != build_icosphere_mesh(2, "octahedron").content_hash()
