"""Convex polytopes, sample partitions and region refinement."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ArgumentError, CannotRefineError, DegenerateBoundaryError, ValidationError

VERTEX_TOL = 1e-9
BOUNDARY_TOL = 1e-12


def vertices_from_halfspaces(normals, offsets, tol=VERTEX_TOL) -> np.ndarray:
    """Enumerate the vertices of the bounded polytope ``normals @ x <= offsets``.

    Brute force over all ``dx``-subsets of constraints; fine for the small
    region descriptions used here (a box plus a handful of cuts).
    """
    A = np.atleast_2d(np.asarray(normals, float))
    c = np.asarray(offsets, float).ravel()
    m, d = A.shape
    found = []
    for rows in itertools.combinations(range(m), d):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, c[list(rows)])
        if np.all(A @ v <= c + tol * (1.0 + np.abs(c))):
            if not any(np.allclose(v, w, atol=1e-10, rtol=0) for w in found):
                found.append(v)
    if not found:
        raise ValidationError("halfspace description has no vertices (empty or unbounded)")
    return np.array(sorted(found, key=tuple))


@dataclass(frozen=True, eq=False)
class Polytope:
    """Bounded convex polytope ``{x : normals @ x <= offsets}`` with explicit vertices."""

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.normals, float))
        c = np.asarray(self.offsets, float).ravel()
        V = np.atleast_2d(np.asarray(self.vertices, float))
        if V.size == 0:
            raise ValidationError("polytope needs a nonempty vertex list")
        if A.shape[0] != c.shape[0] or A.shape[1] != V.shape[1]:
            raise ValidationError("inconsistent polytope dimensions")
        slack = V @ A.T - c
        if np.any(slack > VERTEX_TOL * (1.0 + np.abs(c))):
            raise ValidationError("a listed vertex violates a halfspace")
        for arr in (A, c, V):
            arr.setflags(write=False)
        object.__setattr__(self, "normals", A)
        object.__setattr__(self, "offsets", c)
        object.__setattr__(self, "vertices", V)

    @classmethod
    def from_halfspaces(cls, normals, offsets) -> "Polytope":
        return cls(normals, offsets, vertices_from_halfspaces(normals, offsets))

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        d = lo.size
        eye = np.eye(d)
        normals = np.vstack([eye, -eye])
        offsets = np.concatenate([hi, -lo])
        corners = np.array(list(itertools.product(*zip(lo, hi))), dtype=float)
        return cls(normals, offsets, corners)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Polytope":
        if not lo < hi:
            raise ArgumentError(f"empty interval [{lo}, {hi}]")
        return cls.box([lo], [hi])

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def bounds_1d(self) -> tuple[float, float]:
        if self.dim != 1:
            raise ArgumentError("bounds_1d only applies to intervals")
        return float(self.vertices.min()), float(self.vertices.max())

    def slack(self, X) -> np.ndarray:
        """``offsets - normals @ x`` for each row of ``X``; >= 0 inside."""
        X = np.atleast_2d(np.asarray(X, float))
        return self.offsets - X @ self.normals.T

    def contains(self, X, tol=VERTEX_TOL) -> np.ndarray:
        return np.all(self.slack(X) >= -tol, axis=1)

    def strictly_contains(self, X, tol=BOUNDARY_TOL) -> np.ndarray:
        return np.all(self.slack(X) > tol, axis=1)

    def intersect(self, normal, offset) -> "Polytope":
        A = np.vstack([self.normals, np.atleast_2d(normal)])
        c = np.append(self.offsets, offset)
        return Polytope.from_halfspaces(A, c)

    def to_dict(self) -> dict:
        return {
            "halfspaces": [
                {"normal": [float(v) for v in a], "offset": float(b)}
                for a, b in zip(self.normals, self.offsets)
            ],
            "vertices": [[float(v) for v in row] for row in self.vertices],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Polytope":
        hs = d["halfspaces"]
        normals = [h["normal"] for h in hs]
        offsets = [h["offset"] for h in hs]
        if d.get("vertices"):
            return cls(normals, offsets, d["vertices"])
        return cls.from_halfspaces(normals, offsets)


def default_domain(X) -> Polytope:
    """Bounding box of the samples inflated by 10% of its width on each side."""
    X = np.atleast_2d(np.asarray(X, float))
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    width = np.where(hi > lo, hi - lo, 1.0)
    return Polytope.box(lo - 0.1 * width, hi + 0.1 * width)


@dataclass(frozen=True, eq=False)
class Partition:
    """Regions covering the domain plus the sample-to-region assignment.

    ``origin[r]`` records which region of the parent partition region ``r``
    was split from (identity for freshly built partitions).
    """

    regions: tuple
    assignment: np.ndarray
    domain: Polytope
    auxiliary: tuple = ()
    origin: tuple = ()

    def __post_init__(self):
        regions = tuple(self.regions)
        a = np.asarray(self.assignment, dtype=int)
        if not regions:
            raise ValidationError("partition needs at least one region")
        if a.ndim != 1 or (a.size and (a.min() < 0 or a.max() >= len(regions))):
            raise ValidationError("assignment refers to a missing region")
        counts = np.bincount(a, minlength=len(regions))
        aux = tuple(bool(f) for f in self.auxiliary) if self.auxiliary else tuple(
            bool(c == 0) for c in counts
        )
        if len(aux) != len(regions):
            raise ValidationError("one auxiliary flag per region required")
        for r, flag in enumerate(aux):
            if flag and counts[r]:
                raise ValidationError(f"auxiliary region {r} contains samples")
        origin = tuple(self.origin) if self.origin else tuple(range(len(regions)))
        a.setflags(write=False)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "auxiliary", aux)
        object.__setattr__(self, "origin", origin)

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def members(self, region_idx: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == region_idx)

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_regions)

    def sample_regions(self) -> list[int]:
        """Indices of regions holding at least one sample, in index order."""
        return [r for r in range(self.n_regions) if not self.auxiliary[r]]

    def validate(self, X) -> None:
        """Check containment and interior-disjointness against sample coordinates."""
        X = np.atleast_2d(np.asarray(X, float))
        if X.shape[0] != self.assignment.size:
            raise ValidationError("assignment length differs from the number of samples")
        for r, region in enumerate(self.regions):
            idx = self.members(r)
            if idx.size and not region.contains(X[idx]).all():
                raise ValidationError(f"a sample assigned to region {r} lies outside it")
        if self.dim == 1:
            spans = sorted(reg.bounds_1d for reg in self.regions)
            for (_, hi), (lo, _) in zip(spans, spans[1:]):
                if lo < hi - VERTEX_TOL:
                    raise ValidationError("1-D regions overlap")
        else:
            inside = np.array([reg.strictly_contains(X) for reg in self.regions])
            if np.any(inside.sum(axis=0) > 1):
                raise ValidationError("a sample lies strictly inside two regions")

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "regions": [r.to_dict() for r in self.regions],
            "assignment": [int(v) for v in self.assignment],
            "auxiliary": list(self.auxiliary),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Partition":
        return cls(
            regions=tuple(Polytope.from_dict(r) for r in d["regions"]),
            assignment=np.asarray(d["assignment"], dtype=int),
            domain=Polytope.from_dict(d["domain"]),
            auxiliary=tuple(d.get("auxiliary", ())),
        )


def assign_samples(X, regions) -> np.ndarray:
    """Assign each sample to the first region containing it."""
    X = np.atleast_2d(np.asarray(X, float))
    inside = np.array([reg.contains(X) for reg in regions])
    if not inside.any(axis=0).all():
        missing = int(np.argmin(inside.any(axis=0)))
        raise ValidationError(f"sample {missing} lies in no region")
    return np.argmax(inside, axis=0)


def _require_1d(dataset: Dataset):
    if dataset.dx != 1:
        raise ArgumentError(f"operation requires dx = 1, dataset has dx = {dataset.dx}")


def partition_1d(dataset: Dataset, boundaries, domain: Polytope | None = None) -> Partition:
    """Split the line at ``boundaries`` into consecutive closed intervals."""
    _require_1d(dataset)
    b = np.asarray(list(boundaries), dtype=float).ravel()
    if b.size and np.any(np.diff(b) <= 0):
        raise ArgumentError(f"boundaries must be strictly increasing, got {b.tolist()}")
    domain = domain if domain is not None else default_domain(dataset.X)
    lo, hi = domain.bounds_1d
    if b.size and (b[0] <= lo or b[-1] >= hi):
        raise ArgumentError(f"boundaries must lie strictly inside the domain ({lo}, {hi})")
    x = dataset.X[:, 0]
    if b.size:
        gaps = np.abs(x[:, None] - b[None, :])
        if np.any(gaps <= BOUNDARY_TOL):
            i, j = np.argwhere(gaps <= BOUNDARY_TOL)[0]
            raise DegenerateBoundaryError(f"boundary {b[j]!r} coincides with sample {i} (x={x[i]!r})")
    edges = np.concatenate([[lo], b, [hi]])
    regions = tuple(Polytope.interval(a, c) for a, c in zip(edges[:-1], edges[1:]))
    assignment = np.searchsorted(b, x)
    return Partition(regions, assignment, domain)


def distinct_x(dataset: Dataset) -> np.ndarray:
    _require_1d(dataset)
    return np.unique(dataset.X[:, 0])


def contiguous_partitions_1d(dataset: Dataset, p: int, domain: Polytope | None = None):
    """Yield every split of the sorted distinct x-values into ``p`` contiguous groups.

    There are ``C(M - 1, p - 1)`` of them for ``M`` distinct values; cuts sit
    at midpoints between neighbouring distinct values, so equal-x samples
    always share a group.
    """
    xs = distinct_x(dataset)
    m = xs.size
    if int(p) != p or p < 1 or p > m:
        raise ArgumentError(f"p must be in [1, {m}], got {p!r}")
    domain = domain if domain is not None else default_domain(dataset.X)
    mids = 0.5 * (xs[:-1] + xs[1:])
    for cuts in itertools.combinations(range(m - 1), int(p) - 1):
        yield partition_1d(dataset, mids[list(cuts)], domain)


def count_contiguous_partitions(m: int, p: int) -> int:
    return math.comb(m - 1, p - 1) if 1 <= p <= m else 0


def even_partition_1d(dataset: Dataset, groups: int, domain: Polytope | None = None) -> Partition:
    """Split the distinct x-values into ``groups`` runs of (nearly) equal length."""
    xs = distinct_x(dataset)
    if int(groups) != groups or groups < 1 or groups > xs.size:
        raise ArgumentError(f"groups must be in [1, {xs.size}], got {groups!r}")
    chunks = np.array_split(xs, int(groups))
    bounds = [0.5 * (a[-1] + b[0]) for a, b in zip(chunks, chunks[1:])]
    return partition_1d(dataset, bounds, domain)


def gap_interval(partition: Partition, left_region: int, right_region: int, dataset: Dataset):
    """Open interval between the last sample of ``left_region`` and the first of ``right_region``."""
    _require_1d(dataset)
    x = dataset.X[:, 0]
    left = x[partition.members(left_region)]
    right = x[partition.members(right_region)]
    if not left.size or not right.size:
        raise ArgumentError("both regions must contain samples")
    u, v = float(left.max()), float(right.min())
    if not u < v:
        raise ArgumentError(f"regions {left_region} and {right_region} share no gap")
    between = (x > u) & (x < v)
    if between.any():
        raise ArgumentError(f"regions {left_region} and {right_region} are not adjacent")
    return u, v


def _split_direction(points, target, seed=0) -> np.ndarray:
    """Direction along which ``target`` is best separated from ``points``."""
    d = points.shape[1]
    rng = np.random.default_rng(seed)
    candidates = list(np.eye(d))
    if d > 1:
        for _ in range(16):
            u = rng.standard_normal(d)
            candidates.append(u / np.linalg.norm(u))
    best, best_gap = None, 0.0
    for u in candidates:
        gap = np.min(np.abs((points - target) @ u)) if points.size else np.inf
        if gap > best_gap + 1e-15:
            best, best_gap = u, gap
    if best is None or best_gap <= BOUNDARY_TOL:
        raise CannotRefineError("no hyperplane separates the sample from its group")
    return np.asarray(best, float)


def refine_isolate(dataset: Dataset, partition: Partition, region_idx: int, sample_idx: int) -> Partition:
    """Split ``region_idx`` so that ``sample_idx`` sits alone in one convex subregion.

    Cuts are hyperplanes orthogonal to a separating direction (the x-axis in
    1-D), placed at midpoints between the isolated sample's projection and
    its nearest in-group neighbours on either side. Other regions are kept.
    """
    members = partition.members(region_idx)
    if sample_idx not in members:
        raise ArgumentError(f"sample {sample_idx} is not in region {region_idx}")
    if members.size < 2:
        raise CannotRefineError(f"region {region_idx} holds a single sample")
    X = dataset.X
    target = X[sample_idx]
    others = X[members[members != sample_idx]]
    u = _split_direction(others, target)
    t_n = float(target @ u)
    t = others @ u
    below, above = t[t < t_n], t[t > t_n]
    region = partition.regions[region_idx]
    cuts = []
    if below.size:
        cuts.append(0.5 * (below.max() + t_n))
    if above.size:
        cuts.append(0.5 * (t_n + above.min()))
    pieces = []
    lower = None
    for cut in cuts + [None]:
        sub = region
        if lower is not None:
            sub = sub.intersect(-u, -lower)
        if cut is not None:
            sub = sub.intersect(u, cut)
        pieces.append(sub)
        lower = cut
    k = len(pieces)
    regions = (
        partition.regions[:region_idx] + tuple(pieces) + partition.regions[region_idx + 1:]
    )
    origin = (
        tuple(partition.origin[:region_idx])
        + (partition.origin[region_idx],) * k
        + tuple(partition.origin[region_idx + 1:])
    )
    old = partition.assignment
    assignment = np.where(old > region_idx, old + k - 1, old)
    proj = X[members] @ u
    local = np.searchsorted(np.asarray(cuts), proj)
    assignment = assignment.copy()
    assignment[members] = region_idx + local
    aux = (
        partition.auxiliary[:region_idx] + (False,) * k + partition.auxiliary[region_idx + 1:]
    )
    return Partition(regions, assignment, partition.domain, aux, origin)


def split_by_hyperplane(dataset: Dataset, normal, offset: float, domain: Polytope | None = None) -> Partition:
    """Two regions ``normal @ x <= offset`` and ``normal @ x >= offset`` of the domain."""
    normal = np.asarray(normal, float).ravel()
    if normal.size != dataset.dx or not np.any(normal):
        raise ArgumentError("normal must be a non-zero vector of length dx")
    domain = domain if domain is not None else default_domain(dataset.X)
    s = dataset.X @ normal
    if np.any(np.abs(s - offset) <= BOUNDARY_TOL):
        i = int(np.argmin(np.abs(s - offset)))
        raise DegenerateBoundaryError(f"hyperplane passes through sample {i}")
    regions = (domain.intersect(normal, offset), domain.intersect(-normal, -offset))
    return Partition(regions, (s > offset).astype(int), domain)
