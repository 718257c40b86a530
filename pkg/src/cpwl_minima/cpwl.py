"""Max-over-min representation of continuous piecewise-linear predictors.

A scalar CPWL function that equals the affine piece ``f_i`` on region
``R_i`` can be written as ``max_i min_{j in S_i} f_j`` where ``S_i`` holds
every piece that dominates ``f_i`` on all of ``R_i``. On bounded regions
dominance of one affine function over another only needs checking at the
vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ArgumentError, ConsistencyError
from .fitting import AffinePiece, GroupFit, auxiliary_segment_1d
from .partition import Partition, Polytope, gap_interval

DOMINANCE_TOL = 1e-9
CONSISTENCY_TOL = 1e-9


def dominates(f_j, f_i, region: Polytope, tol: float = DOMINANCE_TOL) -> bool:
    """True iff ``f_j >= f_i`` on every vertex of ``region`` (ties count).

    ``f_j`` and ``f_i`` are ``(weights, bias)`` pairs of scalar affine maps.
    """
    V = np.asarray(region.vertices, float)
    if V.size == 0:
        raise ArgumentError("region has no vertices")
    wj, bj = np.asarray(f_j[0], float), float(f_j[1])
    wi, bi = np.asarray(f_i[0], float), float(f_i[1])
    diff = V @ (wj - wi) + (bj - bi)
    return bool(np.all(diff >= -tol))


@dataclass(frozen=True, eq=False)
class MaxMinForm:
    """``f(x) = max_i min_{j in psi_sets[i]} (weights[j] @ x + biases[j])``."""

    weights: np.ndarray
    biases: np.ndarray
    psi_sets: tuple
    component: int = 0

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, float))
        c = np.asarray(self.biases, float).ravel()
        sets = tuple(tuple(int(j) for j in s) for s in self.psi_sets)
        for i, s in enumerate(sets):
            if i not in s:
                raise ArgumentError(f"psi set {i} must contain its own piece")
        W.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", c)
        object.__setattr__(self, "psi_sets", sets)

    @property
    def n_pieces(self) -> int:
        return self.biases.size

    def piece_values(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        return X @ self.weights.T + self.biases

    def reduced_sets(self) -> list[tuple[int, ...]]:
        """Psi sets with duplicates and strict supersets removed.

        If ``S_a`` is a subset of ``S_b`` then ``min over S_b <= min over
        S_a`` everywhere, so ``S_b`` never attains the outer maximum alone.
        """
        uniq = sorted(set(self.psi_sets), key=lambda s: (min(s), s))
        keep = []
        for s in uniq:
            ss = set(s)
            if not any(set(t) < ss for t in uniq):
                keep.append(s)
        return keep

    def canonical(self) -> list[int]:
        """Index of the first piece identical to each piece."""
        out = []
        for j in range(self.n_pieces):
            same = np.flatnonzero(
                np.all(self.weights == self.weights[j], axis=1) & (self.biases == self.biases[j])
            )
            out.append(int(same[0]))
        return out

    def compact_sets(self) -> list[tuple[int, ...]]:
        """A small family of sets whose max-min still reproduces every region's piece.

        Identical pieces are merged first. A set ``s`` serves region ``r``
        when it contains piece ``r`` and every member dominates ``r`` on it,
        so ``min(s)`` equals piece ``r`` there. Sets are picked greedily to
        serve all regions, then strict supersets are dropped. Fewer sets means
        fewer gadget comparisons that could tie on a sample.
        """
        canon = self.canonical()
        psi = [frozenset(canon[j] for j in s) for s in self.psi_sets]
        cands = sorted(set(psi), key=lambda s: (min(s), sorted(s)))
        serves = {s: {r for r in range(len(psi)) if canon[r] in s and s <= psi[r]} for s in cands}
        todo = set(range(len(psi)))
        chosen = []
        while todo:
            best = max(cands, key=lambda s: (len(serves[s] & todo), -len(s), -cands.index(s)))
            if not serves[best] & todo:
                raise ArgumentError("psi sets do not cover every region")
            chosen.append(best)
            todo -= serves[best]
        chosen = [s for s in chosen if not any(t < s for t in chosen)]
        return [tuple(sorted(s)) for s in sorted(chosen, key=lambda s: (min(s), sorted(s)))]

    def to_dict(self) -> dict:
        return {
            "component": self.component,
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "psi_sets": [list(s) for s in self.psi_sets],
        }


def build_maxmin(pieces, partition: Partition, component: int = 0) -> MaxMinForm:
    """Psi sets for scalar pieces ``[(w, b), ...]``, one per region."""
    if len(pieces) != partition.n_regions:
        raise ArgumentError(
            f"{len(pieces)} pieces for {partition.n_regions} regions; need one each"
        )
    sets = []
    for i, region in enumerate(partition.regions):
        sets.append(tuple(j for j, fj in enumerate(pieces) if dominates(fj, pieces[i], region)))
    W = np.array([np.atleast_1d(np.asarray(w, float)) for w, _ in pieces])
    c = np.array([float(b) for _, b in pieces])
    return MaxMinForm(W, c, tuple(sets), component)


def eval_maxmin(form: MaxMinForm, x) -> np.ndarray | float:
    """Evaluate the max-min form at one point or at each row of ``x``."""
    arr = np.asarray(x, float)
    dx = form.weights.shape[1]
    single = arr.ndim == 0 or (arr.ndim == 1 and arr.size == dx)
    X = arr.reshape(-1, dx)
    vals = form.piece_values(X)
    psi = np.column_stack([vals[:, list(s)].min(axis=1) for s in form.psi_sets])
    out = psi.max(axis=1)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class CpwlPredictor:
    """Region-wise affine pieces together with their max-min forms (one per output)."""

    partition: Partition
    pieces: tuple
    forms: tuple
    group_of_region: tuple = ()

    @property
    def dy(self) -> int:
        return self.pieces[0].dy

    @property
    def dx(self) -> int:
        return self.pieces[0].dx

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    def region_of(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        inside = np.array([r.contains(X) for r in self.partition.regions])
        return np.where(inside.any(axis=0), np.argmax(inside, axis=0), -1)

    def eval_regionwise(self, X, regions=None) -> np.ndarray:
        """Evaluate each point with the piece of its region (or the given region ids)."""
        X = np.atleast_2d(np.asarray(X, float))
        regions = self.region_of(X) if regions is None else np.asarray(regions)
        if np.any(regions < 0):
            raise ArgumentError("point outside every region")
        out = np.empty((X.shape[0], self.dy))
        for r in np.unique(regions):
            sel = regions == r
            out[sel] = self.pieces[r](X[sel])
        return out

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        return np.column_stack([eval_maxmin(f, X) for f in self.forms])

    def to_dict(self) -> dict:
        return {
            "partition": self.partition.to_dict(),
            "pieces": [p.to_dict() for p in self.pieces],
            "forms": [f.to_dict() for f in self.forms],
            "group_of_region": [None if g is None else int(g) for g in self.group_of_region],
        }


@dataclass
class ConsistencyReport:
    ok: bool
    violations: list = field(default_factory=list)
    max_error: float = 0.0

    def __bool__(self):
        return self.ok


def check_consistency(predictor: CpwlPredictor, dataset: Dataset, tol=CONSISTENCY_TOL) -> ConsistencyReport:
    """Compare max-min evaluation with each sample's own region piece."""
    X = dataset.X
    assigned = predictor.partition.assignment
    want = predictor.eval_regionwise(X, assigned)
    got = predictor(X)
    err = np.abs(got - want)
    scale = np.maximum(1.0, np.abs(want))
    bad = np.argwhere(err > tol * scale)
    violations = [
        {
            "sample": int(i),
            "component": int(k),
            "region": int(assigned[i]),
            "maxmin": float(got[i, k]),
            "piece": float(want[i, k]),
        }
        for i, k in bad
    ]
    return ConsistencyReport(not violations, violations, float(err.max(initial=0.0)))


def predictor_from_pieces(partition: Partition, pieces, group_of_region=()) -> CpwlPredictor:
    pieces = tuple(pieces)
    dy = pieces[0].dy
    forms = tuple(
        build_maxmin([p.component(k) for p in pieces], partition, k) for k in range(dy)
    )
    return CpwlPredictor(partition, pieces, forms, tuple(group_of_region))


def assemble_1d(dataset: Dataset, partition: Partition, fits) -> CpwlPredictor:
    """Join per-group fits on the line into one continuous predictor.

    Sample-bearing groups are ordered left to right. Between neighbours the
    pieces either meet inside the empty gap, or an auxiliary segment is
    inserted on the middle half of the gap. Empty regions of the input
    partition are absorbed into the gaps. The result has its own partition
    whose region ``r`` carries ``group_of_region[r]`` (``None`` for
    auxiliary regions); sample assignments keep their grouping.
    """
    if dataset.dx != 1:
        raise ArgumentError("assemble_1d requires dx = 1")
    fits = {f.region_idx: f for f in fits}
    groups = [r for r in partition.sample_regions() if partition.members(r).size]
    missing = [r for r in groups if r not in fits]
    if missing:
        raise ArgumentError(f"no fit for regions {missing}")
    x = dataset.X[:, 0]
    groups.sort(key=lambda r: x[partition.members(r)].min())
    lo, hi = partition.domain.bounds_1d

    pieces, owners, edges = [], [], [lo]
    for pos, g in enumerate(groups):
        pieces.append(fits[g].piece)
        owners.append(g)
        if pos + 1 == len(groups):
            break
        nxt = groups[pos + 1]
        gap = gap_interval(partition, g, nxt, dataset)
        aux, bounds = auxiliary_segment_1d(fits[g].piece, fits[nxt].piece, gap)
        if aux is None:
            edges.append(bounds[0])
        else:
            edges.extend(bounds)
            pieces.append(aux)
            owners.append(None)
    edges.append(hi)

    regions = tuple(Polytope.interval(a, b) for a, b in zip(edges[:-1], edges[1:]))
    region_of_group = {g: r for r, g in enumerate(owners) if g is not None}
    assignment = np.array([region_of_group[g] for g in partition.assignment])
    aux_flags = tuple(g is None for g in owners)
    part = Partition(regions, assignment, partition.domain, aux_flags)
    return predictor_from_pieces(part, pieces, owners)


def assemble(dataset: Dataset, partition: Partition, fits, require_consistent: bool = True) -> CpwlPredictor:
    """Build the predictor for any input dimension.

    On the line auxiliary segments are synthesized. In higher dimensions
    only the sample-bearing regions are used as they are; if the max-min
    form then disagrees with the pieces on some sample a
    :class:`ConsistencyError` is raised (when ``require_consistent``).
    """
    if dataset.dx == 1:
        pred = assemble_1d(dataset, partition, fits)
    else:
        fits = {f.region_idx: f for f in fits}
        used = [r for r in range(partition.n_regions) if partition.members(r).size]
        remap = {r: i for i, r in enumerate(used)}
        part = Partition(
            tuple(partition.regions[r] for r in used),
            np.array([remap[a] for a in partition.assignment]),
            partition.domain,
        )
        pred = predictor_from_pieces(part, [fits[r].piece for r in used], used)
    if require_consistent:
        rep = check_consistency(pred, dataset)
        if not rep.ok:
            raise ConsistencyError(
                f"max-min form disagrees with region pieces on {len(rep.violations)} "
                f"sample components (max error {rep.max_error:.3g})",
                rep.violations,
            )
    return pred
