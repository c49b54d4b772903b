"""JSON/CSV input and output with schema validation.

Numbers are written with 17 significant digits so every float64 round-trips
exactly; non-finite values become ``null``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .domain import PointCloudSpace, build_coordinate_domain, build_graph_domain, from_lattice, from_matrix
from .energy import MapState
from .targets import RegularBall, Target, make_target


class ValidationFailure(ValueError):
    """Input did not validate; ``errors`` holds ``"<json pointer>: <message>"`` strings."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- writing ----------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _scalar(x) -> str:
    if x is None:
        return "null"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _emit(obj, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, level + 1, indent)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_scalar(v) for v in obj) + "]"
        rows = [pad + _emit(v, level + 1, indent) for v in obj]
        return "[\n" + ",\n".join(rows) + "\n" + end + "]"
    return _scalar(obj)


def dumps(obj, indent: int = 2) -> str:
    return _emit(_plain(obj), 0, indent) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def _reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


def loads(text: str):
    """Strict parse: NaN/Infinity literals are rejected."""
    return json.loads(text, parse_constant=_reject_constant)


def read_json(path):
    return loads(Path(path).read_text())


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- schemas ----------------------------------------------------------------

def load_schema(name: str) -> dict:
    text = resources.files("ksharmonic").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate(doc, name: str) -> None:
    schema = load_schema(name)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ValidationFailure([f"{_pointer(e.absolute_path)}: {e.message}" for e in errors])


def _doc(source):
    if isinstance(source, (str, Path)):
        try:
            return read_json(source)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ValidationFailure([f"/: {source}: {exc}"]) from exc
    return source


# -- domains ----------------------------------------------------------------

def domain_to_doc(domain: PointCloudSpace, edges=None) -> dict:
    doc = {"kind": domain.kind, "weights": domain.weights, "interior": domain.interior.tolist()}
    if domain.ids != tuple(range(domain.n)):
        doc["ids"] = list(domain.ids)
    if edges is not None:
        doc["kind"] = "graph"
        doc["ids"] = list(domain.ids)
        doc["edges"] = [list(e) for e in edges]
    elif domain.kind == "grid":
        shape, spacing, origin = domain.lattice
        doc["grid"] = {"shape": list(shape), "spacing": spacing, "origin": origin}
    elif domain.kind == "coordinates":
        doc["coordinates"] = domain.coordinates
    else:
        doc["matrix"] = domain.dense_metric()
    return doc


def load_domain(source, audit: bool = True) -> PointCloudSpace:
    doc = _doc(source)
    validate(doc, "domain")
    n = len(doc["weights"])
    errs = []
    if len(doc["interior"]) != n:
        errs.append(f"/interior: {len(doc['interior'])} labels for {n} weights")
    if "ids" in doc and len(doc["ids"]) != n:
        errs.append(f"/ids: {len(doc['ids'])} ids for {n} weights")
    kind = doc["kind"]
    if kind == "grid":
        g = doc["grid"]
        dim = len(g["shape"])
        if len(g["spacing"]) != dim:
            errs.append(f"/grid/spacing: expected {dim} entries")
        if len(g["origin"]) != dim:
            errs.append(f"/grid/origin: expected {dim} entries")
        if int(np.prod(g["shape"])) != n:
            errs.append(f"/grid/shape: {int(np.prod(g['shape']))} lattice points for {n} weights")
    elif kind == "coordinates" and len(doc["coordinates"]) != n:
        errs.append(f"/coordinates: {len(doc['coordinates'])} rows for {n} weights")
    elif kind == "matrix":
        m = doc["matrix"]
        if len(m) != n or any(len(row) != n for row in m):
            errs.append(f"/matrix: expected a {n}x{n} matrix")
    if errs:
        raise ValidationFailure(errs)
    w, interior = doc["weights"], doc["interior"]
    ids = doc.get("ids")
    try:
        if kind == "grid":
            g = doc["grid"]
            return from_lattice(g["shape"], g["spacing"], g["origin"], w, interior, audit=audit)
        if kind == "coordinates":
            return build_coordinate_domain(doc["coordinates"], w, interior, ids=ids, audit=audit)
        if kind == "matrix":
            return from_matrix(doc["matrix"], w, interior, ids=ids, audit=audit)
        inner = [p for p, flag in zip(ids, interior) if flag]
        return build_graph_domain([tuple(e) for e in doc["edges"]], inner, w, ids=ids, audit=audit)
    except (ValueError, KeyError) as exc:
        raise ValidationFailure([f"/: {exc}"]) from exc


def read_points_csv(path, audit: bool = True) -> PointCloudSpace:
    """Point cloud from CSV with columns ``weight``, ``interior``, optional ``id``,
    and every other column a coordinate."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationFailure([f"/: {path}: no rows"])
    cols = list(rows[0])
    errs = [f"/{c}: missing column" for c in ("weight", "interior") if c not in cols]
    coord_cols = [c for c in cols if c not in ("weight", "interior", "id")]
    if not coord_cols:
        errs.append("/: no coordinate columns")
    if errs:
        raise ValidationFailure(errs)
    flags = {"1": True, "true": True, "0": False, "false": False}
    try:
        coords = np.array([[float(r[c]) for c in coord_cols] for r in rows])
        w = np.array([float(r["weight"]) for r in rows])
        interior = np.array([flags[r["interior"].strip().lower()] for r in rows])
    except (KeyError, ValueError) as exc:
        raise ValidationFailure([f"/: bad CSV value: {exc}"]) from exc
    ids = [r["id"] for r in rows] if "id" in cols else None
    try:
        return build_coordinate_domain(coords, w, interior, ids=ids, audit=audit)
    except ValueError as exc:
        raise ValidationFailure([f"/: {exc}"]) from exc


# -- targets, traces, maps --------------------------------------------------

def target_to_doc(target: Target, ball: RegularBall | None = None) -> dict:
    return target.descriptor(ball)


def load_target(source) -> tuple[Target, RegularBall | None]:
    doc = _doc(source)
    validate(doc, "target")
    try:
        tgt = make_target(doc["type"], doc["dim"])
        if "center" not in doc:
            return tgt, None
        if len(doc["center"]) != tgt.ambient:
            raise ValidationFailure([f"/center: expected {tgt.ambient} coordinates"])
        return tgt, RegularBall(tgt, np.asarray(doc["center"], dtype=float), doc["rho"])
    except ValidationFailure:
        raise
    except ValueError as exc:
        raise ValidationFailure([f"/: {exc}"]) from exc


def trace_to_doc(domain: PointCloudSpace, values) -> dict:
    ext = domain.exterior_ids
    return {"ids": [domain.ids[i] for i in ext], "values": np.asarray(values)}


def load_trace(source, domain: PointCloudSpace, target: Target, ball: RegularBall | None = None) -> np.ndarray:
    doc = _doc(source)
    validate(doc, "trace")
    vals = doc["values"]
    n_ext = int(domain.exterior.sum())
    errs = []
    if len(vals) != n_ext:
        errs.append(f"/values: {len(vals)} rows for {n_ext} exterior points")
    bad = [k for k, row in enumerate(vals) if len(row) != target.ambient]
    errs += [f"/values/{k}: expected {target.ambient} coordinates" for k in bad[:10]]
    if "ids" in doc:
        want = [domain.ids[i] for i in domain.exterior_ids]
        if list(doc["ids"]) != want:
            errs.append("/ids: do not match the exterior ids of the domain")
    if errs:
        raise ValidationFailure(errs)
    arr = target.point(np.asarray(vals, dtype=float))
    if ball is not None:
        out = np.nonzero(~ball.contains(arr))[0]
        if out.size:
            raise ValidationFailure([f"/values/{k}: outside the regular ball" for k in out[:10]])
    return arr


def map_to_doc(u: MapState) -> dict:
    return {"values": u.values}


def load_map(source, domain: PointCloudSpace, target: Target, ball: RegularBall | None = None) -> MapState:
    doc = _doc(source)
    validate(doc, "map")
    vals = doc["values"]
    errs = []
    if len(vals) != domain.n:
        errs.append(f"/values: {len(vals)} rows for {domain.n} points")
    bad = [k for k, row in enumerate(vals) if len(row) != target.ambient]
    errs += [f"/values/{k}: expected {target.ambient} coordinates" for k in bad[:10]]
    if errs:
        raise ValidationFailure(errs)
    try:
        return MapState(domain, target, np.asarray(vals, dtype=float), ball)
    except ValueError as exc:
        raise ValidationFailure([f"/values: {exc}"]) from exc
