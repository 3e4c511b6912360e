"""Finite orthogonal groups, permutation homomorphisms and the equivariant action.

Conventions
-----------
* ``table[a, b]`` is the id of ``matrix[a] @ matrix[b]``.
* Permutations are 0-based one-line arrays; ``(s o t)[i] = s[t[i]]``.
* The action of ``g`` on a k-component field is

      (g . u)_i = u_{h(g)^-1(i)} o g^-1,

  a genuine left action for a homomorphism ``h``.  For involutions this is the
  textbook formula with ``u o g``; for higher-order elements the inverse keeps
  ``g . (g' . u) = (g g') . u`` so that averaging over the group is a projector.
  With this convention ``u_{h(g)(1)} = u_1 o g^-1`` for every equivariant field.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NotAHomomorphism, NotOrthogonal, ClosureOverflow, MissingTransport

@dataclass(frozen=True)
class GroupElement:
    matrix: np.ndarray
    label: int

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


def _orthonormalize(q: np.ndarray) -> np.ndarray:
    # one Newton step of the polar decomposition
    return 0.5 * (q + np.linalg.inv(q).T)


def check_orthogonal(m: np.ndarray, tol: float = 1e-10) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) <= tol)


@dataclass(frozen=True)
class SymmetryGroup:
    """Closure of a set of generators, optionally carrying a homomorphism into S_k."""

    dimension: int
    elements: tuple
    table: np.ndarray
    generators: tuple  # generator matrices as given (re-orthonormalized)
    generator_ids: tuple  # element id of each generator
    words: tuple  # words[e] = (parent id, generator index) with e = parent * gen; identity -> (-1, -1)
    k: int | None = None
    hom: np.ndarray | None = field(default=None)
    generator_images: tuple | None = None

    @property
    def order(self) -> int:
        return len(self.elements)

    @property
    def identity(self) -> int:
        return 0

    @cached_property
    def matrices(self) -> np.ndarray:
        return np.stack([e.matrix for e in self.elements])

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.argmax(self.table == self.identity, axis=1)

    def compose(self, a: int, b: int) -> int:
        return int(self.table[a, b])

    def perm(self, g: int) -> np.ndarray:
        if self.hom is None:
            raise NotAHomomorphism("group has no homomorphism attached")
        return self.hom[g]

    def find(self, matrix: np.ndarray, tol: float = 1e-8) -> int:
        d = np.linalg.norm(self.matrices - np.asarray(matrix)[None], axis=(1, 2))
        i = int(np.argmin(d))
        if d[i] > tol:
            raise KeyError("matrix is not an element of the group")
        return i

    def stabilizer(self, i: int = 0) -> list[int]:
        """Ids of elements whose permutation fixes component ``i``."""
        return [g for g in range(self.order) if self.perm(g)[i] == i]

    def is_associative(self) -> bool:
        t, n = self.table, self.order
        lhs = t[t[:, :, None], np.arange(n)[None, None, :]]
        rhs = t[np.arange(n)[:, None, None], t[None, :, :]]
        return bool(np.array_equal(lhs, rhs))


def group_closure(generators, max_order: int = 256, tol: float = 1e-10) -> SymmetryGroup:
    """Multiplicative closure of orthogonal ``generators``.

    Elements are matched by Frobenius distance below ``tol``; every new product
    is re-orthonormalized before insertion so that long words do not drift.
    """
    gens = [np.asarray(g, dtype=float) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    dim = gens[0].shape[0]
    for g in gens:
        if g.shape != (dim, dim) or not check_orthogonal(g, max(tol, 1e-10)):
            raise NotOrthogonal(f"generator is not an orthogonal {dim}x{dim} matrix")
    gens = [_orthonormalize(g) for g in gens]

    mats = [np.eye(dim)]
    words = [(-1, -1)]

    def lookup(m):
        d = np.linalg.norm(np.asarray(mats) - m[None], axis=(1, 2))
        j = int(np.argmin(d))
        return j if d[j] < tol else -1

    queue = [0]
    head = 0
    while head < len(queue):
        e = queue[head]
        head += 1
        for s, gm in enumerate(gens):
            cand = _orthonormalize(mats[e] @ gm)
            if lookup(cand) >= 0:
                continue
            if len(mats) >= max_order:
                raise ClosureOverflow(f"closure exceeds max_order={max_order}")
            mats.append(cand)
            words.append((e, s))
            queue.append(len(mats) - 1)

    n = len(mats)
    arr = np.asarray(mats)
    table = np.empty((n, n), dtype=np.int64)
    for a in range(n):
        prods = np.einsum("ij,bjk->bik", arr[a], arr)
        d = np.linalg.norm(prods[:, None] - arr[None], axis=(2, 3))
        table[a] = np.argmin(d, axis=1)
        if np.any(d[np.arange(n), table[a]] > 1e3 * tol + 1e-9):
            raise ClosureOverflow("composition table not closed within tolerance")
    gen_ids = tuple(int(np.argmin(np.linalg.norm(arr - g[None], axis=(1, 2)))) for g in gens)
    elements = tuple(GroupElement(m, i) for i, m in enumerate(mats))
    return SymmetryGroup(dim, elements, table, tuple(gens), gen_ids, tuple(words))


def compose_perm(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.asarray(s)[np.asarray(t)]


def attach_homomorphism(group: SymmetryGroup, k: int, generator_images) -> SymmetryGroup:
    """Extend generator images (index -> permutation of range(k)) to the whole group."""
    if isinstance(generator_images, dict):
        imgs = [generator_images[s] for s in range(len(group.generators))]
    else:
        imgs = list(generator_images)
    imgs = [np.asarray(p, dtype=np.int64) for p in imgs]
    if len(imgs) != len(group.generators):
        raise NotAHomomorphism("one image per generator required")
    for p in imgs:
        if p.shape != (k,) or sorted(p.tolist()) != list(range(k)):
            raise NotAHomomorphism(f"{p.tolist()} is not a permutation of range({k})")
    hom = np.empty((group.order, k), dtype=np.int64)
    hom[0] = np.arange(k)
    for e in range(1, group.order):
        parent, s = group.words[e]
        hom[e] = compose_perm(hom[parent], imgs[s])
    for s, gid in enumerate(group.generator_ids):
        if not np.array_equal(hom[gid], imgs[s]):
            raise NotAHomomorphism(f"generator {s} image inconsistent with its word")
    # h(ab) == h(a) o h(b) on all pairs
    lhs = hom[group.table]
    rhs = hom[np.arange(group.order)[:, None, None], hom[None, :, :]]
    if not np.array_equal(lhs, rhs):
        bad = np.argwhere(np.any(lhs != rhs, axis=2))[0]
        raise NotAHomomorphism(f"h(g{bad[0]} g{bad[1]}) != h(g{bad[0]}) h(g{bad[1]})")
    return SymmetryGroup(group.dimension, group.elements, group.table, group.generators,
                         group.generator_ids, group.words, k, hom, tuple(p.copy() for p in imgs))


# --- the action on fields -------------------------------------------------

def act_values(group: SymmetryGroup, mesh, g: int, values: np.ndarray) -> np.ndarray:
    """Apply ``g`` to an array whose first axis is the component and last axis the vertex."""
    sigma = group.perm(g)
    sigma_inv = np.argsort(sigma)
    ginv = int(group.inverse[g])
    if not mesh.has_transport(ginv):
        raise MissingTransport(f"mesh has no transport operator for element {ginv}")
    return mesh.pull(ginv, values[sigma_inv])


def equivariant_transport(group: SymmetryGroup, g: int, mesh, fld):
    from .sphere import Field

    return Field(fld.mesh, act_values(group, mesh, g, fld.values), fld.mode)


def project_values(group: SymmetryGroup, mesh, values: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(values, dtype=float)
    for g in range(group.order):
        acc += act_values(group, mesh, g, values)
    return acc / group.order


def equivariant_project(group: SymmetryGroup, mesh, fld):
    from .sphere import Field

    return Field(fld.mesh, project_values(group, mesh, fld.values), fld.mode)


def equivariance_defect(group: SymmetryGroup, mesh, values: np.ndarray) -> float:
    """max_g ||u - g.u||_inf"""
    return max(float(np.max(np.abs(values - act_values(group, mesh, g, values)))) for g in range(group.order))


# --- admissibility ----------------------------------------------------------

@dataclass
class AdmissibleTriplet:
    k: int
    group: SymmetryGroup
    witness: object  # sphere.Field on the reference mesh
    transfer: list = field(default_factory=list)
    name: str = ""


@dataclass
class AdmissibilityReport:
    nonnegative: bool
    nontrivial: bool
    segregated: bool
    transitive: bool
    equivariant: bool
    enough_elements: bool
    transfer: list
    max_overlap: float
    equivariance_defect: float
    masses: list

    @property
    def passed(self) -> bool:
        return (self.nonnegative and self.nontrivial and self.segregated and self.transitive
                and self.equivariant and self.enough_elements)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "i_nonnegative": self.nonnegative,
            "i_nontrivial": self.nontrivial,
            "ii_segregated": self.segregated,
            "iii_transitive": self.transitive,
            "equivariant": self.equivariant,
            "enough_elements": self.enough_elements,
            "transfer": self.transfer,
            "max_overlap": self.max_overlap,
            "equivariance_defect": self.equivariance_defect,
            "masses": self.masses,
        }


def admissibility_check(triplet: AdmissibleTriplet, tol_pos: float | None = None,
                        tol_seg: float | None = None) -> AdmissibilityReport:
    """Check the witness: nonnegative and nontrivial, pairwise disjoint supports,
    components carried onto one another by the group, and equivariance.

    Transfer elements are searched in id order: for component ``i`` the first
    ``g`` with ``h(g)(i) = 0`` and ``u_i = u_0 o g`` is recorded.
    """
    group, fld = triplet.group, triplet.witness
    mesh, u = fld.mesh, np.asarray(fld.values, dtype=float)
    k = triplet.k
    scale = float(np.max(np.abs(u))) if u.size else 0.0
    tol_pos = 1e-6 * scale if tol_pos is None else tol_pos
    tol_seg = 1e-6 * scale ** 2 if tol_seg is None else tol_seg

    nonneg = bool(np.all(u >= -tol_pos))
    masses = [float(m) for m in mesh.masses(u)]
    nontrivial = all(m >= tol_pos for m in masses) and scale > 0
    overlap = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            overlap = max(overlap, float(np.max(u[i] * u[j])))
    segregated = overlap <= tol_seg

    transfer = [0]
    for i in range(1, k):
        found = None
        for g in range(group.order):
            if group.perm(g)[i] != 0 or not mesh.has_transport(g):
                continue
            if np.max(np.abs(u[i] - mesh.pull(g, u[0]))) <= tol_seg:
                found = g
                break
        transfer.append(found)
    transitive = all(t is not None for t in transfer)
    defect = equivariance_defect(group, mesh, u)
    return AdmissibilityReport(nonneg, nontrivial, segregated, transitive, defect <= max(tol_seg, 1e-8),
                               group.order >= k, transfer, overlap, defect, masses)
