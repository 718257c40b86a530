import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpwl_minima.data import (
    ABSOLUTE,
    MSE,
    Dataset,
    gen_parabola,
    gen_vshape,
    get_loss,
    load_csv,
    risk,
    save_csv,
)
from cpwl_minima.errors import ArgumentError, FormatError, ParseError, ValidationError


def test_dataset_shapes_and_read_only():
    ds = Dataset([1.0, 2.0, 3.0], [[1.0, 0.0], [2.0, 1.0], [3.0, 2.0]])
    assert (ds.n, ds.dx, ds.dy) == (3, 1, 2)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0
    assert len(ds.samples) == 3
    np.testing.assert_array_equal(ds.subset([2, 0]).X[:, 0], [3.0, 1.0])


@pytest.mark.parametrize(
    "X, Y",
    [
        (np.zeros((0, 1)), np.zeros((0, 1))),
        (np.zeros((2, 1)), np.zeros((3, 1))),
        ([[np.nan]], [[0.0]]),
        ([[0.0]], [[np.inf]]),
    ],
)
def test_dataset_rejects_bad_input(X, Y):
    with pytest.raises(ValidationError):
        Dataset(X, Y)


def test_risk_is_mean_loss():
    ds = Dataset([0.0, 1.0], [0.0, 2.0])
    assert risk(ds, [1.0, 1.0]) == pytest.approx(1.0)
    assert risk(ds, [1.0, 1.0], ABSOLUTE) == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        risk(ds, [1.0, 1.0, 1.0])


def test_get_loss_names():
    assert get_loss("MSE") is MSE
    assert get_loss("mae") is ABSOLUTE
    with pytest.raises(ArgumentError):
        get_loss("hinge")


def test_generators():
    ds = gen_parabola(5, -1, 1)
    np.testing.assert_allclose(ds.Y[:, 0], ds.X[:, 0] ** 2)
    v = gen_vshape(30, dx=4, gap=0.3, seed=1)
    assert v.X.shape == (30, 4)
    assert np.all(np.abs(v.X[:, 0] + v.X[:, 2]) >= 0.3)
    np.testing.assert_array_equal(v.X, gen_vshape(30, dx=4, gap=0.3, seed=1).X)
    with pytest.raises(ArgumentError):
        gen_parabola(1, 0, 1)
    with pytest.raises(ArgumentError):
        gen_vshape(5, dx=3)


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.standard_normal((7, 2)), rng.standard_normal((7, 3)))
    path = tmp_path / "d.csv"
    save_csv(ds, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.Y, ds.Y)


@pytest.mark.parametrize(
    "text, exc",
    [
        ("", FormatError),
        ("a,b\n1,2\n", FormatError),
        ("x0,y0\n1,2,3\n", ParseError),
        ("x0,y0\n1,abc\n", ParseError),
        ("x0,y0\n", ValidationError),
        ("x0,y0\n1,nan\n", ValidationError),
    ],
)
def test_csv_errors(tmp_path, text, exc):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(exc):
        load_csv(path)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,y0\n1,2\n3\n")
    with pytest.raises(ParseError, match="3"):
        load_csv(path)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_mse_risk_nonnegative_and_zero_at_targets(ys):
    ds = Dataset(np.arange(len(ys), dtype=float), ys)
    assert risk(ds, ds.Y) == 0.0
    assert risk(ds, ds.Y + 1.0) == pytest.approx(1.0)
