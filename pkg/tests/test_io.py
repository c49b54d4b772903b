import json

import numpy as np
import pytest

from ksharmonic import io as kio
from ksharmonic.domain import build_coordinate_domain, build_graph_domain, build_grid_domain, from_matrix
from ksharmonic.energy import MapState
from ksharmonic.targets import RegularBall, Sphere

S = Sphere(2)
BALL = RegularBall(S, np.array([0.0, 0.0, 1.0]), 1.2)


def roundtrip(doc):
    return kio.loads(kio.dumps(doc))


def same_domain(a, b):
    assert a.n == b.n
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.interior, b.interior)
    assert np.array_equal(a.dense_metric(), b.dense_metric())


def test_float_roundtrip_bit_exact(rng):
    x = rng.normal(size=1000) * 10.0 ** rng.integers(-300, 300, size=1000)
    back = np.array(roundtrip({"x": x})["x"])
    assert np.array_equal(back, x)
    assert roundtrip({"x": [np.nan, np.inf, 1.0]})["x"] == [None, None, 1.0]


def test_strict_parse():
    with pytest.raises(ValueError):
        kio.loads('{"x": NaN}')
    with pytest.raises(ValueError):
        kio.loads('{"x": Infinity}')


def test_grid_domain_roundtrip():
    dom = build_grid_domain(2, 9, [0.0, 1.0], 0.3)
    back = kio.load_domain(roundtrip(kio.domain_to_doc(dom)))
    assert back.kind == "grid"
    same_domain(dom, back)


def test_coordinate_domain_roundtrip(rng):
    pts = rng.uniform(size=(50, 2))
    dom = build_coordinate_domain(pts, rng.uniform(0.5, 2, size=50), pts[:, 0] < 0.7)
    back = kio.load_domain(roundtrip(kio.domain_to_doc(dom)))
    same_domain(dom, back)
    assert np.array_equal(back.coordinates, dom.coordinates)


def test_matrix_and_graph_roundtrip():
    m = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float) * 0.1
    dom = from_matrix(m, [1.0, 2.0, 3.0], [True, False, False], ids=["a", "b", "c"])
    back = kio.load_domain(roundtrip(kio.domain_to_doc(dom)))
    same_domain(dom, back)
    assert back.ids == ("a", "b", "c")
    edges = [(0, 1, 0.5), (1, 2, 0.25), (2, 3, 1.0 / 3)]
    g = build_graph_domain(edges, [1, 2], [1.0, 1.0, 1.0, 1.0], ids=[0, 1, 2, 3])
    back = kio.load_domain(roundtrip(kio.domain_to_doc(g, edges)))
    same_domain(g, back)


def test_map_and_trace_roundtrip(rng):
    dom = build_grid_domain(2, 6, [0.0, 1.0], 0.3)
    vals = S._exp(np.broadcast_to(BALL.center, (dom.n, 3)),
                  np.column_stack([rng.normal(scale=0.3, size=(dom.n, 2)), np.zeros(dom.n)]))
    u = MapState(dom, S, vals, BALL)
    back = kio.load_map(roundtrip(kio.map_to_doc(u)), dom, S, BALL)
    assert np.array_equal(back.values, u.values)
    trace = kio.load_trace(roundtrip(kio.trace_to_doc(dom, u.values[dom.exterior])), dom, S, BALL)
    assert np.array_equal(trace, u.values[dom.exterior])
    tgt, ball = kio.load_target(roundtrip(kio.target_to_doc(S, BALL)))
    assert tgt == S and ball.radius == 1.2 and np.array_equal(ball.center, BALL.center)


def test_schema_errors_carry_pointers():
    doc = {"kind": "coordinates", "weights": [1.0, "x"], "interior": [True, 0],
           "coordinates": [[0.0], [1.0]]}
    with pytest.raises(kio.ValidationFailure) as exc:
        kio.load_domain(doc)
    errs = exc.value.errors
    assert any(e.startswith("/weights/1:") for e in errs)
    assert any(e.startswith("/interior/1:") for e in errs)


def test_size_mismatches_reported():
    doc = {"kind": "coordinates", "weights": [1.0, 1.0], "interior": [True],
           "coordinates": [[0.0], [1.0], [2.0]]}
    with pytest.raises(kio.ValidationFailure) as exc:
        kio.load_domain(doc)
    assert any(e.startswith("/interior:") for e in exc.value.errors)
    dom = build_grid_domain(1, 3, [0.0, 1.0], 0.5)
    with pytest.raises(kio.ValidationFailure) as exc:
        kio.load_trace({"values": [[0.0, 0.0, 1.0]]}, dom, S, BALL)
    assert exc.value.errors[0].startswith("/values:")
    with pytest.raises(kio.ValidationFailure) as exc:
        kio.load_trace({"values": [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]}, dom, S, BALL)
    assert exc.value.errors[0].startswith("/values/0:")


def test_target_schema():
    with pytest.raises(kio.ValidationFailure):
        kio.load_target({"type": "torus", "dim": 2})
    with pytest.raises(kio.ValidationFailure):
        kio.load_target({"type": "sphere", "dim": 2, "center": [0, 0, 1]})
    with pytest.raises(kio.ValidationFailure):
        kio.load_target({"type": "sphere", "dim": 2, "center": [0, 0, 1], "rho": 2.0})


def test_csv_ingestion(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("id,x,y,weight,interior\na,0,0,1,false\nb,0.5,0,2,true\nc,1,0,1,0\n")
    dom = kio.read_points_csv(p)
    assert dom.ids == ("a", "b", "c")
    assert dom.interior.tolist() == [False, True, False]
    assert np.array_equal(dom.weights, [1.0, 2.0, 1.0])
    assert dom.distance(0, 2) == 1.0
    bad = tmp_path / "bad.csv"
    bad.write_text("x,weight\n0,1\n")
    with pytest.raises(kio.ValidationFailure):
        kio.read_points_csv(bad)


def test_file_io(tmp_path):
    path = tmp_path / "doc.json"
    kio.write_json({"a": [1.5, 2]}, path)
    assert kio.read_json(path) == {"a": [1.5, 2]}
    assert json.loads(path.read_text()) == {"a": [1.5, 2]}
    assert len(kio.file_sha256(path)) == 64
