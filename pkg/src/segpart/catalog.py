"""Built-in admissible triplets with closed-form witnesses and reference values of ell."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IncompatibleMesh, UnknownId
from .sphere import Field, SphereMesh, build_sphere_mesh, build_transports
from .symmetry import AdmissibleTriplet, SymmetryGroup, attach_homomorphism, group_closure


def _rot2(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _refl2(angle: float) -> np.ndarray:
    """Reflection across the line through the origin at ``angle``."""
    c, s = np.cos(2 * angle), np.sin(2 * angle)
    return np.array([[c, s], [s, -c]])


def _embed3(m2: np.ndarray, zz: float = 1.0) -> np.ndarray:
    out = np.zeros((3, 3))
    out[:2, :2] = m2
    out[2, 2] = zz
    return out


def _images_from_anchors(generators, anchors: np.ndarray, tol: float = 1e-8) -> list:
    """h(g)(j) = index of the anchor g maps anchor j onto."""
    imgs = []
    for g in generators:
        moved = anchors @ np.asarray(g).T
        d = np.linalg.norm(moved[:, None, :] - anchors[None, :, :], axis=2)
        p = np.argmin(d, axis=1)
        if np.any(d[np.arange(len(anchors)), p] > tol):
            raise ValueError("generator does not permute the anchors")
        imgs.append(p)
    return imgs


def _normalize(values: np.ndarray, mesh: SphereMesh) -> np.ndarray:
    return values / np.sqrt(mesh.masses(values))[:, None]


def _angles(mesh: SphereMesh):
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return np.arctan2(y, x)


# --- groups ------------------------------------------------------------------

def dihedral_group(d: int) -> SymmetryGroup:
    """Reflections across the nodal lines of cos(d theta), each swapping the two components."""
    gens = [_refl2(np.pi / (2 * d) + j * np.pi / d) for j in range(d)]
    grp = group_closure(gens)
    return attach_homomorphism(grp, 2, [[1, 0]] * d)


def rotation_group(k: int, m: int) -> SymmetryGroup:
    d = m * k / 2
    gens = [_rot2(np.pi / d), _refl2(0.0)]
    cyc = (np.arange(k) + 1) % k
    conj = (-np.arange(k)) % k
    return attach_homomorphism(group_closure(gens), k, [cyc, conj])


def xyz_group() -> SymmetryGroup:
    gens = [np.diag(s) for s in ([-1.0, 1, 1], [1.0, -1, 1], [1.0, 1, -1])]
    return attach_homomorphism(group_closure(gens), 2, [[1, 0]] * 3)


def prism_group(d: int) -> SymmetryGroup:
    gens = [_embed3(_refl2(np.pi / (2 * d) + j * np.pi / d)) for j in range(d)]
    gens.append(np.diag([1.0, 1.0, -1.0]))
    return attach_homomorphism(group_closure(gens), 2, [[1, 0]] * (d + 1))


def y3_group() -> SymmetryGroup:
    gens = [_embed3(_rot2(2 * np.pi / 3)), np.diag([1.0, -1.0, 1.0])]
    return attach_homomorphism(group_closure(gens), 3, [[1, 2, 0], [0, 2, 1]])


TETRA_VERTICES = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3)
CUBE_NORMALS = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, 0, 0], [0, -1, 0], [0, 0, -1]], dtype=float)


def _swap(i: int, j: int) -> np.ndarray:
    p = np.eye(3)
    p[[i, j]] = p[[j, i]]
    return p


def tetra_group() -> SymmetryGroup:
    """Full tetrahedral group (order 24); components are faces, labelled by the opposite vertex."""
    gens = [_swap(0, 1), _swap(1, 2), np.array([[0.0, -1, 0], [-1, 0, 0], [0, 0, 1]])]
    grp = group_closure(gens)
    return attach_homomorphism(grp, 4, _images_from_anchors(gens, -TETRA_VERTICES))


def cube_group(k: int) -> SymmetryGroup:
    """Full cube group (order 48) acting on 6 faces, or on the 3 pairs of opposite faces."""
    gens = [_swap(0, 1), _swap(1, 2), np.diag([-1.0, 1, 1])]
    grp = group_closure(gens)
    imgs = _images_from_anchors(gens, CUBE_NORMALS)
    if k == 3:
        imgs = [p[:3] % 3 for p in imgs]
    elif k != 6:
        raise ValueError("cube triplets have k = 3 or k = 6")
    return attach_homomorphism(grp, k, imgs)


# --- witnesses -----------------------------------------------------------------

def _dihedral_witness(mesh: SphereMesh, d: int) -> np.ndarray:
    c = np.cos(d * _angles(mesh))
    return np.array([np.maximum(c, 0), np.maximum(-c, 0)])


def _rot_witness(mesh: SphereMesh, k: int, m: int) -> np.ndarray:
    d = m * k / 2
    th = _angles(mesh)
    sector = np.rint(th * d / np.pi).astype(int) % int(round(2 * d))
    amp = np.abs(np.cos(d * th))
    return np.array([np.where(sector % k == c, amp, 0.0) for c in range(k)])


def _xyz_witness(mesh: SphereMesh) -> np.ndarray:
    p = np.prod(mesh.vertices, axis=1)
    return np.array([np.maximum(p, 0), np.maximum(-p, 0)])


def _prism_witness(mesh: SphereMesh, d: int) -> np.ndarray:
    x, y, z = mesh.vertices.T
    p = np.real((x + 1j * y) ** d) * z
    return np.array([np.maximum(p, 0), np.maximum(-p, 0)])


def _y3_witness(mesh: SphereMesh) -> np.ndarray:
    x, y, z = mesh.vertices.T
    theta = np.arccos(np.clip(z, -1, 1))
    phi = np.arctan2(y, x)
    out = []
    for c in range(3):
        rel = np.angle(np.exp(1j * (phi - 2 * np.pi * c / 3)))
        out.append(np.where(np.abs(rel) < np.pi / 3, np.sin(theta) ** 1.5 * np.cos(1.5 * rel), 0.0))
    return np.maximum(np.array(out), 0.0)


def _polygon_edge_normals(corners: np.ndarray) -> np.ndarray:
    """Inward unit normals of the planes through the origin and each polygon edge."""
    centre = corners.mean(axis=0)
    # order corners cyclically around the centre
    ref = corners[0] - centre
    ax = np.cross(centre, ref)
    ang = np.arctan2((corners - centre) @ ax / np.linalg.norm(ax), (corners - centre) @ ref)
    corners = corners[np.argsort(ang)]
    normals = []
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        nrm = np.cross(a, b)
        nrm /= np.linalg.norm(nrm)
        normals.append(nrm if nrm @ centre > 0 else -nrm)
    return np.array(normals)


def face_bump_witness(polyhedron: str, mesh: SphereMesh, pairing: str = "none") -> Field:
    """Bumps equal to the spherical distance to the boundary of each projected face."""
    if mesh.dim != 3:
        raise IncompatibleMesh("face bumps live on S^2")
    if polyhedron == "tetrahedron":
        verts = TETRA_VERTICES * np.sqrt(3)
        faces = [np.delete(verts, i, axis=0) for i in range(4)]
    elif polyhedron == "cube":
        cube = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        faces = [cube[cube @ nrm > 0] for nrm in CUBE_NORMALS]
    else:
        raise ValueError(f"unknown polyhedron {polyhedron!r}")
    bumps = []
    for corners in faces:
        normals = _polygon_edge_normals(corners)
        dist = np.arcsin(np.clip(mesh.vertices @ normals.T, -1, 1)).min(axis=1)
        bumps.append(np.maximum(dist, 0.0))
    vals = np.array(bumps)
    if pairing == "opposite":
        if polyhedron != "cube":
            raise IncompatibleMesh("opposite-face pairing needs the cube")
        vals = vals[:3] + vals[3:]
    elif pairing != "none":
        raise ValueError(f"unknown pairing {pairing!r}")
    if np.any(vals.max(axis=1) <= 0):
        raise IncompatibleMesh("mesh too coarse: a face contains no interior vertex")
    return Field(mesh, _normalize(vals, mesh), "unit")


# --- entries -------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    id: str
    k: int
    group_factory: Callable[[], SymmetryGroup]
    witness_factory: Callable[[SphereMesh], np.ndarray]
    mesh_spec: dict
    ell_reference: float | None
    provenance: str
    tolerance: float | None = None
    notes: str = ""
    extra: dict = field(default_factory=dict)

    def group(self) -> SymmetryGroup:
        return self.group_factory()

    def build_mesh(self, **overrides) -> SphereMesh:
        spec = {**self.mesh_spec, **{k: v for k, v in overrides.items() if v is not None}}
        return build_sphere_mesh(**spec)

    def make(self, mesh: SphereMesh | None = None, **overrides) -> tuple[AdmissibleTriplet, SphereMesh]:
        """Triplet with its witness sampled on ``mesh`` (recommended mesh when omitted)."""
        grp = self.group()
        if mesh is None:
            mesh = self.build_mesh(**overrides)
        if mesh.dim != grp.dimension:
            raise IncompatibleMesh(f"{self.id} needs a mesh of S^{grp.dimension - 1}")
        if not mesh.transports:
            mesh = build_transports(mesh, grp)
        vals = self.witness_factory(mesh)
        if isinstance(vals, Field):
            vals = vals.values
        wit = Field(mesh, _normalize(np.asarray(vals, dtype=float), mesh), "unit")
        return AdmissibleTriplet(self.k, grp, wit, [], self.id), mesh

    def describe(self) -> dict:
        return {
            "id": self.id,
            "k": self.k,
            "mesh": self.mesh_spec,
            "ell_reference": self.ell_reference if self.ell_reference is not None else "unknown",
            "provenance": self.provenance,
            "tolerance": self.tolerance,
            "notes": self.notes,
        }


def _circle_n(multiple: int, target: int = 2048) -> int:
    return max(multiple, multiple * int(round(target / multiple)))


def _dihedral(d: int) -> CatalogEntry:
    return CatalogEntry(
        f"dihedral2d({d})", 2, lambda: dihedral_group(d), lambda m: _dihedral_witness(m, d),
        {"base": "circle", "n": _circle_n(4 * d)}, float(d), "literature", 0.005,
        "reflections across the nodal lines of cos(d theta)")


def _rot2d(k: int, m: int) -> CatalogEntry:
    d2 = m * k  # twice the degree
    if d2 % 2:
        raise UnknownId(f"rot2d({k},{m}) needs m*k even")
    d = d2 // 2
    return CatalogEntry(
        f"rot2d({k},{m})", k, lambda: rotation_group(k, m), lambda mesh: _rot_witness(mesh, k, m),
        {"base": "circle", "n": _circle_n(4 * d)}, float(d), "literature (stated without computation)", 0.02,
        "rotation by pi/d mapped to the k-cycle, conjugation to i -> -i mod k")


def _prism(d: int) -> CatalogEntry:
    return CatalogEntry(
        f"prism3d({d})", 2, lambda: prism_group(d), lambda m: _prism_witness(m, d),
        {"base": "latlong", "n_lon": 24 * max(1, int(np.ceil(2 * d / 24))) * 2, "n_lat": 31},
        float(d + 1), "literature", 0.03, "nodal-plane reflections and z -> -z")


_FIXED = {
    "xyz_r3": lambda: CatalogEntry(
        "xyz_r3", 2, xyz_group, _xyz_witness, {"base": "octahedron", "level": 4}, 3.0, "literature", 0.03,
        "coordinate reflections"),
    "y3_s2": lambda: CatalogEntry(
        "y3_s2", 3, y3_group, _y3_witness, {"base": "latlong", "n_lon": 48, "n_lat": 31}, 1.5, "literature", 0.03,
        "rotation by 2 pi/3 about x3 and the reflection y -> -y"),
    "tetra_k4": lambda: CatalogEntry(
        "tetra_k4", 4, tetra_group, lambda m: face_bump_witness("tetrahedron", m).values,
        {"base": "octahedron", "level": 4}, None, "unknown", None, "tetrahedral group, face bumps"),
    "cube_k6": lambda: CatalogEntry(
        "cube_k6", 6, lambda: cube_group(6), lambda m: face_bump_witness("cube", m).values,
        {"base": "octahedron", "level": 4}, None, "unknown", None, "cube group, face bumps"),
    "cube_k3": lambda: CatalogEntry(
        "cube_k3", 3, lambda: cube_group(3), lambda m: face_bump_witness("cube", m, "opposite").values,
        {"base": "octahedron", "level": 4}, None, "unknown", None, "cube group, opposite-face pairs"),
}

_PARAM = {"dihedral2d": (_dihedral, 1), "prism3d": (_prism, 1), "rot2d": (_rot2d, 2)}

LISTED = ["xyz_r3", "dihedral2d(1)", "dihedral2d(2)", "dihedral2d(3)", "prism3d(2)", "rot2d(3,2)",
          "y3_s2", "tetra_k4", "cube_k6", "cube_k3"]


def entry(id: str) -> CatalogEntry:
    """Look up ``xyz_r3``, ``dihedral2d(3)`` / ``dihedral2d:3``, ``rot2d(3,2)`` / ``rot2d:3,2`` etc."""
    key = id.strip()
    if key in _FIXED:
        return _FIXED[key]()
    mt = re.fullmatch(r"(\w+)(?:\(([\d,\s]+)\)|:([\d,\s]+))", key)
    if mt and mt.group(1) in _PARAM:
        builder, arity = _PARAM[mt.group(1)]
        args = [int(a) for a in (mt.group(2) or mt.group(3)).split(",") if a.strip()]
        if len(args) == arity and all(a >= 1 for a in args):
            return builder(*args)
    raise UnknownId(f"unknown catalog id {id!r}")


def list_entries() -> list[dict]:
    return [entry(i).describe() for i in LISTED]
