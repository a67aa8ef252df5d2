"""JSON configs and CSV reports with atomic writes.

Floats are written with ``repr`` so that output is exact and byte-stable.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .gaussflow import FlowSystem, GaussianAtom, GaussianFamily
from .joints import Joint, Line3, LineConfig
from .perturbflow import PerturbedSystem
from .tubes import Tube, TubeFamily

SCAN_COLUMNS = ("t", "Q", "dQ", "violation")
KAKEYA_COLUMNS = ("delta", "q", "lhs", "rhs", "ratio", "nu", "grid_error")
LINES_COLUMNS = ("px", "py", "pz", "dx", "dy", "dz")
JOINTS_COLUMNS = ("x", "y", "z", "theta", "num_triples", "alpha_max", "beta_max")


# --------------------------------------------------------------------------
# atomic output


def atomic_write_text(path, text: str):
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_text(columns, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise InvalidInputError(f"row has {len(row)} fields, expected {len(columns)}")
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows):
    atomic_write_text(path, csv_text(columns, rows))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc


def read_csv(path, columns) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(columns) - set(reader.fieldnames or ())
            if missing:
                raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
            return list(reader)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc


# --------------------------------------------------------------------------
# flow systems


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise InvalidInputError(f"{where}: missing key {key!r}")
    return obj[key]


def flow_system_to_dict(system: FlowSystem) -> dict:
    return {
        "dim": system.dim,
        "p": system.p.tolist(),
        "families": [{"atoms": [{"A": a.matrix.tolist(), "v": a.velocity.tolist(), "w": a.weight}
                                for a in fam.atoms]} for fam in system.families],
    }


def _family_from_dict(fd: dict, j: int, base=None) -> GaussianFamily:
    atoms = _require(fd, "atoms", f"family {j}")
    if not isinstance(atoms, list) or not atoms:
        raise InvalidInputError(f"family {j}: atoms must be a nonempty list")
    out = []
    for k, ad in enumerate(atoms):
        where = f"family {j} atom {k}"
        mat = ad.get("A", base) if isinstance(ad, dict) else None
        if mat is None:
            raise InvalidInputError(f"{where}: missing key 'A'")
        try:
            out.append(GaussianAtom(np.asarray(mat, dtype=float),
                                    np.asarray(_require(ad, "v", where), dtype=float),
                                    _require(ad, "w", where)))
        except (InvalidInputError, ValueError, TypeError) as exc:
            raise InvalidInputError(f"{where}: {exc}") from exc
    return GaussianFamily(out)


def flow_system_from_dict(data: dict) -> FlowSystem:
    fams = _require(data, "families", "flow system")
    p = _require(data, "p", "flow system")
    if not isinstance(fams, list) or not fams:
        raise InvalidInputError("flow system: families must be a nonempty list")
    system = FlowSystem([_family_from_dict(f, j) for j, f in enumerate(fams)], p)
    if "dim" in data and int(data["dim"]) != system.dim:
        raise InvalidInputError(f"declared dim {data['dim']} but atoms have dim {system.dim}")
    return system


def perturbed_system_to_dict(ps: PerturbedSystem) -> dict:
    out = flow_system_to_dict(ps.system)
    out["base_matrices"] = [m.tolist() for m in ps.base]
    return out


def perturbed_system_from_dict(data: dict) -> PerturbedSystem:
    base = _require(data, "base_matrices", "perturbed system")
    fams = _require(data, "families", "perturbed system")
    if not isinstance(base, list) or len(base) != len(fams):
        raise InvalidInputError("base_matrices must list one matrix per family")
    system = FlowSystem([_family_from_dict(f, j, base[j]) for j, f in enumerate(fams)],
                        _require(data, "p", "perturbed system"))
    return PerturbedSystem(base, system)


# --------------------------------------------------------------------------
# tubes


def tube_families_to_dict(families) -> list[dict]:
    return [{"dim": f.dim, "width": f.width, "nominal": f.nominal.tolist(), "radius": f.radius,
             "tubes": [{"center": t.center.tolist(), "axis": t.axis.tolist(),
                        "half_length": "inf" if t.infinite else t.half_length}
                       for t in f.tubes]} for f in families]


def tube_family_from_dict(data: dict) -> TubeFamily:
    width = float(_require(data, "width", "tube family"))
    tubes = _require(data, "tubes", "tube family")
    if not isinstance(tubes, list) or not tubes:
        raise InvalidInputError("tube family: tube list is empty")
    out = []
    for i, td in enumerate(tubes):
        hl = td.get("half_length", 0.5) if isinstance(td, dict) else None
        hl = math.inf if hl == "inf" else float(hl)
        out.append(Tube(_require(td, "center", f"tube {i}"), _require(td, "axis", f"tube {i}"),
                        width, hl))
    fam = TubeFamily(out, _require(data, "nominal", "tube family"), data.get("radius", 0.0))
    if "dim" in data and int(data["dim"]) != fam.dim:
        raise InvalidInputError(f"declared dim {data['dim']} but tubes have dim {fam.dim}")
    return fam


def tube_families_from_obj(obj) -> list[TubeFamily]:
    """Accept a single family object, a list, or ``{"families": [...]}``."""
    if isinstance(obj, dict) and "families" in obj:
        obj = obj["families"]
    if isinstance(obj, dict):
        obj = [obj]
    if not isinstance(obj, list) or not obj:
        raise InvalidInputError("no tube families given")
    return [tube_family_from_dict(f) for f in obj]


# --------------------------------------------------------------------------
# lines and joints


def read_lines_csv(path) -> LineConfig:
    rows = read_csv(path, LINES_COLUMNS)
    lines = []
    for i, r in enumerate(rows):
        try:
            vals = [float(r[c]) for c in LINES_COLUMNS]
            lines.append(Line3(vals[:3], vals[3:]))
        except (ValueError, InvalidInputError) as exc:
            raise InvalidInputError(f"line {i}: {exc}") from exc
    return LineConfig(lines)


def write_lines_csv(path, config: LineConfig):
    write_csv(path, LINES_COLUMNS,
              [tuple(p) + tuple(d) for p, d in zip(config.points, config.directions)])


def joint_rows(joints: list[Joint]):
    return [tuple(j.point) + (j.theta, len(j.triples), j.alpha_max, j.beta_max) for j in joints]


def write_joints_csv(path, joints: list[Joint]):
    write_csv(path, JOINTS_COLUMNS, joint_rows(joints))
