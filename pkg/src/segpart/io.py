"""Plain-text persistence: JSON documents for meshes, fields and reports, CSV for tables."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import IncompatibleMesh
from .sphere import Field, SphereMesh, build_sphere_mesh
from .symmetry import SymmetryGroup, attach_homomorphism, group_closure


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; write them as strings
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_default))), indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            wr.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c]
                         for c in columns])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {c: np.array([float(r[c]) for r in rows]) for c in rows[0]}


# --- domain objects ------------------------------------------------------------------

def group_to_dict(group: SymmetryGroup) -> dict:
    return {
        "dimension": group.dimension,
        "generators": [g.tolist() for g in group.generators],
        "k": group.k,
        "generator_images": [p.tolist() for p in group.generator_images] if group.generator_images else None,
        "order": group.order,
    }


def group_from_dict(doc: dict) -> SymmetryGroup:
    grp = group_closure([np.array(g) for g in doc["generators"]])
    if doc.get("k") is not None:
        grp = attach_homomorphism(grp, int(doc["k"]), doc["generator_images"])
    return grp


def mesh_recipe(mesh: SphereMesh) -> dict:
    out = {"base": mesh.base}
    if mesh.level is not None:
        out["level"] = mesh.level
    out.update(mesh.params)
    return out


def field_to_dict(fld: Field) -> dict:
    return {
        "mesh": mesh_recipe(fld.mesh),
        "mesh_hash": fld.mesh.content_hash(),
        "mode": fld.mode,
        "k": fld.k,
        "values": fld.values.tolist(),
    }


def field_from_dict(doc: dict, mesh: SphereMesh | None = None) -> Field:
    if mesh is None:
        mesh = build_sphere_mesh(**doc["mesh"])
    if mesh.content_hash() != doc["mesh_hash"]:
        raise IncompatibleMesh("field was written on a different mesh")
    return Field(mesh, np.array(doc["values"], dtype=float), doc.get("mode", "unit"))


def save_field(path, fld: Field) -> Path:
    return write_json(path, field_to_dict(fld))


def load_field(path, mesh: SphereMesh | None = None) -> Field:
    return field_from_dict(read_json(path), mesh)


def save_mesh(path, mesh: SphereMesh) -> Path:
    return write_json(path, mesh.to_dict())
