"""Piecewise-linear discretizations of S^1 and S^2.

Stiffness is the P1 form on the (flat) cells; the lumped mass uses the exact
spherical measure of each cell, so constants integrate to |S^{N-1}| exactly.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import PointLocationFailure, ZeroComponent

BASES = ("circle", "icosahedron", "octahedron", "latlong")


@dataclass(frozen=True)
class Transport:
    """Pull-back operator ``(A f)(v) = f(g v)``; ``perm`` is set when every ``g v`` is a vertex."""

    matrix: sp.csr_matrix
    perm: np.ndarray | None = None

    @property
    def exact(self) -> bool:
        return self.perm is not None


@dataclass(frozen=True)
class SphereMesh:
    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    base: str
    level: int | None = None
    params: dict = field(default_factory=dict)
    transports: dict = field(default_factory=dict)
    consistent_mass: sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.mass.sum(axis=1)).ravel()

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def group_exact(self) -> bool:
        return bool(self.transports) and all(t.exact for t in self.transports.values())

    def has_transport(self, g: int) -> bool:
        return g in self.transports

    def pull(self, g: int, values: np.ndarray) -> np.ndarray:
        t = self.transports[g]
        if t.perm is not None:
            return values[..., t.perm]
        shape = values.shape
        flat = values.reshape(-1, shape[-1])
        return np.asarray((t.matrix @ flat.T).T).reshape(shape)

    def masses(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values) ** 2) @ self.weights

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(np.round(self.vertices, 12)).tobytes())
        h.update(np.ascontiguousarray(self.cells.astype(np.int64)).tobytes())
        h.update(self.base.encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "base": self.base,
            "level": self.level,
            "params": self.params,
            "hash": self.content_hash(),
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
        }


@dataclass
class Field:
    """k-component nodal function; ``mode`` is the per-component target mass (``unit`` or ``one_over_k``)."""

    mesh: SphereMesh
    values: np.ndarray
    mode: str = "unit"

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def masses(self) -> np.ndarray:
        return self.mesh.masses(self.values)

    def normalized(self, mode: str = "unit") -> "Field":
        target = 1.0 if mode == "unit" else 1.0 / self.k
        m = self.masses()
        if np.any(m < 1e-30):
            raise ZeroComponent("cannot normalize a vanishing component")
        return Field(self.mesh, self.values * np.sqrt(target / m)[:, None], mode)

    def copy(self) -> "Field":
        return Field(self.mesh, self.values.copy(), self.mode)


# --- assembly ---------------------------------------------------------------

def _cot_stiffness(vertices: np.ndarray, cells: np.ndarray) -> sp.csr_matrix:
    n = len(vertices)
    rows, cols, vals = [], [], []
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        # cotangent of the angle at c, opposite edge (a, b)
        ea = vertices[cells[:, a]] - vertices[cells[:, c]]
        eb = vertices[cells[:, b]] - vertices[cells[:, c]]
        cot = np.einsum("ij,ij->i", ea, eb) / np.linalg.norm(np.cross(ea, eb), axis=1)
        w = 0.5 * cot
        ia, ib = cells[:, a], cells[:, b]
        rows += [ia, ib, ia, ib]
        cols += [ib, ia, ia, ib]
        vals += [-w, -w, w, w]
    k = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return k.tocsr()


def spherical_triangle_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[cells[:, i]] for i in range(3))
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def _surface_mesh(vertices, cells, base, level=None, params=None) -> SphereMesh:
    vertices = vertices / np.linalg.norm(vertices, axis=1)[:, None]
    cells = np.asarray(cells, dtype=np.int64)
    n = len(vertices)
    areas = spherical_triangle_areas(vertices, cells)
    lumped = np.bincount(cells.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=n)
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(cells[:, a])
            cols.append(cells[:, b])
            vals.append(areas * (2.0 if a == b else 1.0) / 12.0)
    consistent = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(n, n)).tocsr()
    return SphereMesh(3, vertices, cells, sp.diags(lumped).tocsr(), _cot_stiffness(vertices, cells),
                      base, level, dict(params or {}), {}, consistent)


def build_circle_mesh(n: int) -> SphereMesh:
    """``n`` equispaced vertices on S^1 with P1 elements in arc length."""
    if n < 3:
        raise ValueError("need at least 3 vertices")
    theta = 2 * np.pi * np.arange(n) / n
    verts = np.column_stack([np.cos(theta), np.sin(theta)])
    i = np.arange(n)
    j = (i + 1) % n
    h = 2 * np.pi / n
    stiff = sp.coo_matrix((np.r_[np.full(2 * n, 1 / h), np.full(2 * n, -1 / h)],
                           (np.r_[i, j, i, j], np.r_[i, j, j, i])), shape=(n, n)).tocsr()
    cons = sp.coo_matrix((np.r_[np.full(2 * n, h / 3), np.full(2 * n, h / 6)],
                          (np.r_[i, j, i, j], np.r_[i, j, j, i])), shape=(n, n)).tocsr()
    return SphereMesh(2, verts, np.column_stack([i, j]), sp.diags(np.full(n, h)).tocsr(), stiff,
                      "circle", None, {"n": n}, {}, cons)


def _icosahedron():
    p = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
                  [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
                  [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]], dtype=float)
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    return v, np.array(f)


def _octahedron():
    v = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    f = [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]]
    return v, np.array(f)


def _subdivide(vertices: np.ndarray, cells: np.ndarray):
    verts = [v for v in vertices]
    cache: dict = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = vertices[a] + vertices[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in cells:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(out)


def build_icosphere_mesh(level: int, base: str = "icosahedron") -> SphereMesh:
    """Regular polyhedron refined ``level`` times with vertices projected to S^2.

    ``icosahedron`` gives 10*4^level + 2 vertices, ``octahedron`` 4*4^level + 2.
    """
    if not 0 <= level <= 7:
        raise ValueError("level must lie in [0, 7]")
    if base == "icosahedron":
        v, f = _icosahedron()
    elif base == "octahedron":
        v, f = _octahedron()
    else:
        raise ValueError(f"unknown polyhedral base {base!r}")
    v = v / np.linalg.norm(v, axis=1)[:, None]
    for _ in range(level):
        v, f = _subdivide(v, f)
    return _surface_mesh(v, f, base, level)


def build_latlong_mesh(n_lon: int, n_lat: int) -> SphereMesh:
    """Longitude-latitude grid: ``n_lat`` rings at polar angles j*pi/(n_lat+1), ``n_lon`` meridians.

    Every quad is split into four triangles around its centre so the mesh keeps all
    reflections of the underlying grid (through meridians and through the equator).
    """
    if n_lon < 3 or n_lat < 1:
        raise ValueError("need n_lon >= 3 and n_lat >= 1")

    def sph(theta, phi):
        return np.column_stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])

    theta = np.pi * np.arange(1, n_lat + 1) / (n_lat + 1)
    phi = 2 * np.pi * np.arange(n_lon) / n_lon
    rings = sph(np.repeat(theta, n_lon), np.tile(phi, n_lat))
    north, south = 0, 1 + n_lat * n_lon
    verts = [np.array([[0.0, 0.0, 1.0]]), rings, np.array([[0.0, 0.0, -1.0]])]

    def ring(j, i):
        return 1 + j * n_lon + (i % n_lon)

    cells = []
    for i in range(n_lon):
        cells.append([north, ring(0, i), ring(0, i + 1)])
        cells.append([south, ring(n_lat - 1, i + 1), ring(n_lat - 1, i)])
    nxt = south + 1
    centres = []
    for j in range(n_lat - 1):
        tc = 0.5 * (theta[j] + theta[j + 1])
        for i in range(n_lon):
            centres.append((tc, phi[i] + np.pi / n_lon))
            c = nxt
            nxt += 1
            a, b, d, e = ring(j, i), ring(j, i + 1), ring(j + 1, i + 1), ring(j + 1, i)
            cells += [[c, a, b], [c, b, d], [c, d, e], [c, e, a]]
    if centres:
        tc, pc = np.array(centres).T
        verts.append(sph(tc, pc))
    v = np.vstack(verts)
    return _surface_mesh(v, np.array(cells), "latlong", None, {"n_lon": n_lon, "n_lat": n_lat})


def build_sphere_mesh(base: str, level: int | None = None, n: int | None = None,
                      n_lon: int | None = None, n_lat: int | None = None) -> SphereMesh:
    if base == "circle":
        return build_circle_mesh(int(n))
    if base == "latlong":
        return build_latlong_mesh(int(n_lon), int(n_lat))
    return build_icosphere_mesh(int(level), base)


# --- transports -------------------------------------------------------------

def _locate(mesh: SphereMesh, pts: np.ndarray, tree: cKDTree, incident: list) -> tuple:
    """Barycentric weights of points in the (radially projected) containing cell."""
    d = mesh.dim
    rows, cols, vals = [], [], []
    for r, p in enumerate(pts):
        _, near = tree.query(p, k=min(4, mesh.n))
        cand = sorted({c for v in np.atleast_1d(near) for c in incident[v]})
        found = None
        for pool in (np.array(cand), np.arange(len(mesh.cells))):
            T = mesh.vertices[mesh.cells[pool]].transpose(0, 2, 1)  # (c, d, d)
            try:
                x = np.linalg.solve(T, np.broadcast_to(p, (len(pool), d))[..., None])[..., 0]
            except np.linalg.LinAlgError:
                continue
            ok = np.all(x >= -1e-12, axis=1) & (x.sum(axis=1) > 0)
            if np.any(ok):
                c = pool[np.argmax(ok)]
                w = np.clip(x[np.argmax(ok)], 0, None)
                found = (mesh.cells[c], w / w.sum())
                break
        if found is None:
            raise PointLocationFailure(f"point {p} lies in no cell")
        rows += [r] * d
        cols += list(found[0])
        vals += list(found[1])
    return rows, cols, vals


def build_transports(mesh: SphereMesh, group, tol: float = 1e-10) -> SphereMesh:
    """Attach ``A_g`` with ``(A_g f)(v) = f(g v)`` for every group element."""
    if group.dimension != mesh.dim:
        raise ValueError("group dimension does not match mesh")
    tree = cKDTree(mesh.vertices)
    incident: list = [[] for _ in range(mesh.n)]
    for c, cell in enumerate(mesh.cells):
        for v in cell:
            incident[v].append(c)
    out = {}
    n = mesh.n
    for g, el in enumerate(group.elements):
        img = mesh.vertices @ el.matrix.T
        dist, idx = tree.query(img)
        exact = dist < tol
        if np.all(exact):
            A = sp.csr_matrix((np.ones(n), (np.arange(n), idx)), shape=(n, n))
            out[g] = Transport(A, idx.astype(np.int64))
            continue
        rows = list(np.nonzero(exact)[0])
        cols = list(idx[exact])
        vals = [1.0] * len(rows)
        miss = np.nonzero(~exact)[0]
        r2, c2, v2 = _locate(mesh, img[miss], tree, incident)
        rows += list(miss[np.asarray(r2, dtype=int)])
        cols += c2
        vals += v2
        A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        out[g] = Transport(A, None)
    return replace(mesh, transports=out)


# --- quadratic forms ----------------------------------------------------------

def rayleigh(mesh: SphereMesh, fld, i: int) -> float:
    u = fld.values[i] if isinstance(fld, Field) else np.asarray(fld)[i]
    den = float(u @ (mesh.mass @ u))
    if den < 1e-30:
        raise ZeroComponent(f"component {i} has zero mass")
    return float(u @ (mesh.stiffness @ u)) / den
