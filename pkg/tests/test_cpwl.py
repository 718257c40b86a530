import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpwl_minima.cpwl import (
    MaxMinForm,
    assemble,
    build_maxmin,
    check_consistency,
    dominates,
    eval_maxmin,
)
from cpwl_minima.data import Dataset, gen_parabola, gen_vshape
from cpwl_minima.errors import ArgumentError, ConsistencyError
from cpwl_minima.fitting import fit_group
from cpwl_minima.partition import Partition, Polytope, even_partition_1d, partition_1d, split_by_hyperplane


def three_pieces():
    regions = (Polytope.interval(-3, 0), Polytope.interval(0, 2), Polytope.interval(2, 4))
    part = Partition(regions, np.zeros(0, dtype=int), Polytope.interval(-3, 4))
    pieces = [(np.array([1.0]), 1.0), (np.array([-1.0]), 1.0), (np.array([3.0]), -7.0)]
    return part, pieces


def test_dominance_on_vertices():
    iv = Polytope.interval(0, 2)
    assert dominates(([1.0], 1.0), ([-1.0], 1.0), iv)
    assert not dominates(([3.0], -7.0), ([-1.0], 1.0), iv)


def test_three_piece_sets_and_values():
    part, pieces = three_pieces()
    form = build_maxmin(pieces, part)
    assert form.psi_sets == ((0, 1), (0, 1), (0, 2))
    assert eval_maxmin(form, -1.0) == 0.0
    assert eval_maxmin(form, 3.0) == 2.0
    assert form.reduced_sets() == [(0, 1), (0, 2)]


def test_form_requires_own_piece():
    with pytest.raises(ArgumentError):
        MaxMinForm([[1.0], [2.0]], [0.0, 0.0], ((1,), (1,)))


def test_compact_sets_merge_identical_pieces():
    # pieces 0 and 2 coincide
    form = MaxMinForm([[1.0], [-1.0], [1.0]], [0.0, 2.0, 0.0], ((0, 1, 2), (0, 1, 2), (0, 1, 2)))
    assert form.canonical() == [0, 1, 0]
    assert form.compact_sets() == [(0, 1)]


@pytest.mark.parametrize("P", range(1, 7))
def test_compact_sets_reproduce_predictor(P):
    ds = gen_parabola(40, -1, 1)
    part = even_partition_1d(ds, P)
    fits = [fit_group(ds, part, r) for r in range(part.n_regions)]
    pred = assemble(ds, part, fits)
    lo, hi = pred.partition.domain.bounds_1d
    grid = np.linspace(lo, hi, 1000)[:, None]
    for form in pred.forms:
        vals = form.piece_values(grid)
        compact = np.max([vals[:, list(s)].min(axis=1) for s in form.compact_sets()], axis=0)
        np.testing.assert_allclose(compact, eval_maxmin(form, grid), atol=1e-12)
    np.testing.assert_allclose(pred(grid), pred.eval_regionwise(grid), atol=1e-9)


def test_assembled_predictor_is_continuous_and_fits_groups():
    ds = gen_parabola(40, -1, 1)
    part = even_partition_1d(ds, 4)
    fits = [fit_group(ds, part, r) for r in range(part.n_regions)]
    pred = assemble(ds, part, fits)
    edges = sorted({b for r in pred.partition.regions for b in r.bounds_1d})
    for e in edges[1:-1]:
        left = pred.eval_regionwise([[e - 1e-9]])
        right = pred.eval_regionwise([[e + 1e-9]])
        np.testing.assert_allclose(left, right, atol=1e-6)
    for f in fits:
        idx = part.members(f.region_idx)
        np.testing.assert_allclose(pred(ds.X[idx]), f.piece(ds.X[idx]), atol=1e-12)
    assert check_consistency(pred, ds).ok


def test_auxiliary_regions_hold_no_samples():
    ds = gen_parabola(40, -1, 1)
    part = even_partition_1d(ds, 3)
    fits = [fit_group(ds, part, r) for r in range(part.n_regions)]
    pred = assemble(ds, part, fits)
    for r, aux in enumerate(pred.partition.auxiliary):
        if aux:
            assert pred.partition.members(r).size == 0
            assert pred.group_of_region[r] is None


def test_higher_dimensional_inconsistency_is_reported():
    ds = gen_vshape(60, dx=4, seed=0)
    part = split_by_hyperplane(ds, [1, 0, 1, 0], 0.0)
    fits = [fit_group(ds, part, r) for r in range(2)]
    pred = assemble(ds, part, fits)
    np.testing.assert_allclose(pred(ds.X), pred.eval_regionwise(ds.X, part.assignment), atol=1e-9)
    # three groups along x1 cut the V into pieces that no max-min of them reproduces
    s = ds.X[:, 0] + ds.X[:, 2]
    assign = np.where(s < 0, 0, np.where(ds.X[:, 1] < 0, 1, 2))
    dom = part.domain
    regions = (
        dom.intersect([1, 0, 1, 0], 0.0),
        dom.intersect([-1, 0, -1, 0], 0.0).intersect([0, 1, 0, 0], 0.0),
        dom.intersect([-1, 0, -1, 0], 0.0).intersect([0, -1, 0, 0], 0.0),
    )
    part3 = Partition(regions, assign, dom)
    fits3 = [fit_group(ds, part3, r) for r in range(3)]
    with pytest.raises(ConsistencyError) as info:
        assemble(ds, part3, fits3)
    assert info.value.violations


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_maxmin_equals_regionwise_on_random_data(P, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.choice(200, size=20, replace=False)).astype(float)
    y = rng.normal(size=20)
    ds = Dataset(x, y)
    part = even_partition_1d(ds, P)
    fits = [fit_group(ds, part, r) for r in range(P)]
    pred = assemble(ds, part, fits)
    lo, hi = pred.partition.domain.bounds_1d
    grid = np.linspace(lo, hi, 1000)[:, None]
    np.testing.assert_allclose(pred(grid), pred.eval_regionwise(grid), atol=1e-9 * max(1, np.abs(y).max()))


def test_partition_1d_predictor_two_outputs():
    x = np.linspace(0, 1, 10)
    ds = Dataset(x, np.column_stack([x ** 2, np.sin(3 * x)]))
    part = partition_1d(ds, [0.5])
    pred = assemble(ds, part, [fit_group(ds, part, r) for r in range(2)])
    assert pred.dy == 2
    grid = np.linspace(0, 1, 1000)[:, None]
    np.testing.assert_allclose(pred(grid), pred.eval_regionwise(grid), atol=1e-9)
