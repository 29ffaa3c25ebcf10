import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from agsam.params import Layout, LayoutMismatch, ParamVector, load_params, save_params

LAYOUT = Layout.from_shapes([("w", (2, 3)), ("b", (3,))])
vec = arrays(np.float64, 9, elements=st.floats(-100, 100, allow_nan=False, allow_infinity=False))
scalar = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_segments_partition_the_vector():
    pos = 0
    for seg in LAYOUT:
        assert seg.offset == pos
        pos = seg.stop
    assert pos == LAYOUT.size == 9
    with pytest.raises(ValueError):
        from agsam.params import Segment
        Layout((Segment("a", 0, (2,)), Segment("b", 3, (1,))))


def test_layout_mismatch_is_rejected():
    a = ParamVector.zeros(LAYOUT)
    b = ParamVector.zeros(Layout.flat(9))
    with pytest.raises(LayoutMismatch):
        a + b
    with pytest.raises(LayoutMismatch):
        ParamVector(np.zeros(4), LAYOUT)


@settings(max_examples=60, deadline=None)
@given(vec, vec, vec, scalar, scalar)
def test_vector_space_axioms(x, y, z, a, b):
    X, Y, Z = (ParamVector(v, LAYOUT) for v in (x, y, z))
    tol = 1e-12 * 1e3 * 10  # magnitudes up to |a| * |x| ~ 1e3, relative 1e-12
    assert np.array_equal((X + Y).values, (Y + X).values)
    assert np.allclose(((X + Y) + Z).values, (X + (Y + Z)).values, rtol=0, atol=tol)
    assert np.allclose(((X + Y) * a).values, (X * a + Y * a).values, rtol=0, atol=tol)
    assert np.allclose((X * (a + b)).values, (X * a + X * b).values, rtol=0, atol=tol)
    assert np.array_equal(X.axpy(a, Y).values, (X + Y * a).values)
    assert X.norm() == pytest.approx(np.linalg.norm(x), rel=1e-12, abs=1e-300)


def test_segment_view():
    v = ParamVector(np.arange(9.0), LAYOUT)
    assert v.segment("w").shape == (2, 3)
    assert v.segment("b").tolist() == [6.0, 7.0, 8.0]


def test_checkpoint_roundtrip(tmp_path):
    v = ParamVector(np.random.default_rng(0).standard_normal(9), LAYOUT)
    path = tmp_path / "theta.params"
    save_params(v, path)
    header = path.read_bytes().split(b"end\n", 1)[0].decode()
    assert header.startswith("AGSAM-PARAMS v1\nsegments 2\nw 0 6 2,3\nb 6 3 3\n")
    back = load_params(path)
    assert back == v
    assert back.layout == LAYOUT


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.params"
    path.write_bytes(b"nope\n")
    with pytest.raises(ValueError):
        load_params(path)
