import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpwl_minima.cpwl import assemble
from cpwl_minima.data import ABSOLUTE, Dataset, gen_parabola, gen_vshape
from cpwl_minima.errors import ArgumentError, ConfigError, UnsupportedConstructionError
from cpwl_minima.fitting import fit_group
from cpwl_minima.netbuild import (
    BuildConfig,
    CnnArch,
    ConvBlock,
    build_cnn_network,
    build_fc_network,
    build_max_gadget,
    build_min_gadget,
    cnn_structure,
    fit_structured,
    factored_expression,
    plain_expression,
    size_bounds,
)
from cpwl_minima.partition import Partition, default_domain, even_partition_1d, split_by_hyperplane
from cpwl_minima.runtime import forward_batch, predict
from cpwl_minima.verify import group_pattern_constancy

from oracles import dense_forward


def evaluate(expr, values):
    if isinstance(expr, tuple):
        op, kids = expr
        vals = [evaluate(k, values) for k in kids]
        return min(vals) if op == "min" else max(vals)
    return values[expr]


def predictor_for(ds, P):
    part = even_partition_1d(ds, P)
    return assemble(ds, part, [fit_group(ds, part, r) for r in range(P)])


@pytest.mark.parametrize("a, b", [(0.0, 0.0), (1.0, 3.0), (3.0, 1.0), (2.5, 2.5), (0.0, 7.0)])
def test_gadgets_on_examples(a, b):
    x = np.array([[a, b]])
    assert predict(build_min_gadget(), x)[0, 0] == min(a, b)
    assert predict(build_max_gadget(), x)[0, 0] == max(a, b)


def test_gadget_matches_independent_forward():
    net = build_min_gadget()
    x = np.array([[4.0, 9.0], [9.0, 4.0]])
    layers = [(l.W, l.b) for l in net.layers]
    np.testing.assert_array_equal(dense_forward(layers, x), predict(net, x))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**30), st.integers(0, 2**30))
def test_gadgets_exact_on_dyadic_grid(i, j):
    x = np.array([[i / 1024.0, j / 1024.0]])
    assert predict(build_min_gadget(), x)[0, 0] == min(x[0])
    assert predict(build_max_gadget(), x)[0, 0] == max(x[0])


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.frozensets(st.integers(0, 6), min_size=1, max_size=4), min_size=1, max_size=6
    ),
    st.lists(st.floats(-10, 10), min_size=7, max_size=7),
)
def test_factored_expression_equals_plain(sets, values):
    want = max(min(values[j] for j in s) for s in sets)
    assert evaluate(plain_expression([tuple(sorted(s)) for s in sets]), values) == want
    assert evaluate(factored_expression(sets), values) == want
    assert evaluate(factored_expression(sets, prefer_high=True), values) == want


def test_size_bounds():
    assert size_bounds(1, 1) == (1, 1)
    assert size_bounds(2, 1) == (5, 4)
    assert size_bounds(4, 2) == (9, 32)


def test_two_pieces_give_two_hidden_layers_of_width_two():
    ds = gen_parabola(40, -1, 1)
    net = build_fc_network(predictor_for(ds, 2), X=ds.X)
    assert net.hidden_widths == [2, 2]


@pytest.mark.parametrize("P", range(1, 9))
@pytest.mark.parametrize("form", ["auto", "psi", "cutoff"])
def test_fc_network_equals_predictor(P, form):
    ds = gen_parabola(40, -1, 1)
    pred = predictor_for(ds, P)
    net = build_fc_network(pred, BuildConfig(form=form), ds.X)
    lo, hi = pred.partition.domain.bounds_1d
    pts = np.vstack([ds.X, np.linspace(lo, hi, 1000)[:, None]])
    np.testing.assert_allclose(predict(net, pts), pred.eval_regionwise(pts), atol=1e-8)
    max_depth, max_width = size_bounds(pred.n_pieces, pred.dy)
    assert net.n_hidden <= max_depth
    assert max(net.hidden_widths) <= max_width


@pytest.mark.parametrize("P", [3, 4, 5, 6])
def test_cutoff_form_patterns_constant_on_groups(P):
    x = np.linspace(0, 6, 24)
    ds = Dataset(x, np.sin(x))
    pred = predictor_for(ds, P)
    net = build_fc_network(pred, BuildConfig(form="cutoff"), ds.X)
    assert net.meta["form"] == "cutoff"
    assert np.min(forward_batch(net, ds.X).margins) > 0
    assert group_pattern_constancy(net, ds, pred.partition)["constant"]


def test_two_output_network():
    x = np.linspace(-1, 1, 20)
    ds = Dataset(x, np.column_stack([x ** 2, np.abs(x - 0.3)]))
    pred = predictor_for(ds, 3)
    net = build_fc_network(pred, X=ds.X)
    assert net.d_out == 2
    grid = np.linspace(*pred.partition.domain.bounds_1d, 1000)[:, None]
    np.testing.assert_allclose(predict(net, grid), pred.eval_regionwise(grid), atol=1e-8)


def test_config_validation():
    ds = gen_parabola(10, -1, 1)
    pred = predictor_for(ds, 2)
    with pytest.raises(ConfigError):
        build_fc_network(pred, BuildConfig(c=1e-6), ds.X)
    with pytest.raises(ArgumentError):
        BuildConfig(c=-1.0)
    with pytest.raises(ArgumentError):
        BuildConfig(tree_fanin=3)
    with pytest.raises(ArgumentError):
        BuildConfig(form="lattice")


def test_cnn_structure_average_pool():
    st_ = cnn_structure(CnnArch.single(2, 2, "avg"), 4)
    # two patches averaged: each input enters with weight 1/2
    np.testing.assert_allclose(st_.G, 0.5 * np.array([[1, 0, 1, 0], [0, 1, 0, 1]]))
    assert st_.total == 1.0


def test_cnn_build_matches_predictor():
    ds = gen_vshape(60, dx=4)
    part = split_by_hyperplane(ds, [1, 0, 1, 0], 0.0)
    built = build_cnn_network(ds, part, CnnArch.single(2, 2, "average"))
    np.testing.assert_allclose(predict(built.net, ds.X), built.predictor(ds.X), atol=1e-8)
    assert group_pattern_constancy(built.net, ds, part)["constant"]


def test_cnn_two_blocks():
    ds = gen_vshape(40, dx=8, seed=4)
    part = Partition((default_domain(ds.X),), np.zeros(ds.n, dtype=int), default_domain(ds.X))
    arch = CnnArch((ConvBlock(2, 2, "none"), ConvBlock(2, 1, "average")))
    built = build_cnn_network(ds, part, arch)
    np.testing.assert_allclose(predict(built.net, ds.X), built.predictor(ds.X), atol=1e-8)
    w, beta = fit_structured(built.structure, ds.X, ds.Y)
    want = built.structure.features(ds.X) @ w.T + built.structure.total * beta
    np.testing.assert_allclose(predict(built.net, ds.X), want, atol=1e-8)


def test_cnn_rejects_max_pool_and_other_losses():
    ds = gen_vshape(20, dx=4)
    part = split_by_hyperplane(ds, [1, 0, 1, 0], 0.0)
    with pytest.raises(UnsupportedConstructionError):
        build_cnn_network(ds, part, CnnArch.single(2, 2, "max"))
    with pytest.raises(ArgumentError):
        build_cnn_network(ds, part, CnnArch.single(2, 2, "avg"), loss=ABSOLUTE)
