"""Per-group affine fits and 1-D auxiliary connector segments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MSE, Dataset, Loss
from .errors import ArgumentError, NumericalError, ValidationError
from .partition import Partition


@dataclass(frozen=True, eq=False)
class AffinePiece:
    """``x -> A @ x + b`` with ``A`` of shape ``(dy, dx)``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        b = np.atleast_1d(np.asarray(self.b, float))
        if A.shape[0] != b.shape[0]:
            raise ValidationError("A and b disagree on dy")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValidationError("affine piece has non-finite entries")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dx(self) -> int:
        return self.A.shape[1]

    @property
    def dy(self) -> int:
        return self.A.shape[0]

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        if X.ndim == 1:
            return self.A @ X + self.b
        return X @ self.A.T + self.b

    def component(self, k: int) -> tuple[np.ndarray, float]:
        return self.A[k], float(self.b[k])

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d) -> "AffinePiece":
        return cls(d["A"], d["b"])


@dataclass(frozen=True, eq=False)
class GroupFit:
    region_idx: int
    piece: AffinePiece
    group_risk: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "region": self.region_idx,
            "piece": self.piece.to_dict(),
            "group_risk": self.group_risk,
            "n_samples": self.n_samples,
        }


def lstsq_affine(X, Y) -> AffinePiece:
    """Least-squares affine map ``Y ~ X @ A.T + b``.

    The slope is solved on centred data with an SVD, so rank-deficient
    designs (one sample, collinear inputs) get the minimum-norm slope and an
    unpenalized intercept; a single sample yields a constant piece.
    """
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.asarray(Y, float)
    if Y.ndim == 1:
        Y = Y[:, None]
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    A, *_ = np.linalg.lstsq(X - xm, Y - ym, rcond=None)
    return AffinePiece(A.T, ym - xm @ A)


def group_loss(piece: AffinePiece, X, Y, loss: Loss = MSE) -> float:
    """Un-normalized sum of losses of ``piece`` over the given samples."""
    return float(np.sum(loss.per_sample(piece(X), Y)))


def _group(dataset: Dataset, partition: Partition, region_idx: int):
    idx = partition.members(region_idx)
    if idx.size == 0:
        raise ArgumentError(f"region {region_idx} contains no samples")
    return idx, dataset.X[idx], dataset.Y[idx]


def fit_group_mse(dataset: Dataset, partition: Partition, region_idx: int) -> GroupFit:
    """Globally optimal affine piece under squared error for one group."""
    idx, X, Y = _group(dataset, partition, region_idx)
    piece = lstsq_affine(X, Y)
    return GroupFit(region_idx, piece, group_loss(piece, X, Y, MSE), int(idx.size))


def _minimize_fd(objective, theta0, iters, step, h=1e-6):
    """Finite-difference gradient descent with backtracking; never increases the objective."""
    theta = np.array(theta0, float)
    value = objective(theta)
    if not np.isfinite(value):
        raise NumericalError("loss is not finite at the starting point")
    n = theta.size
    for _ in range(iters):
        grad = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            hi, lo = objective(theta + e), objective(theta - e)
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericalError("loss became non-finite while differencing")
            grad[i] = (hi - lo) / (2 * h)
        if not np.any(grad):
            break
        t = step
        for _ in range(40):
            cand = theta - t * grad
            val = objective(cand)
            if not np.isfinite(val):
                raise NumericalError("loss became non-finite during line search")
            if val < value:
                theta, value = cand, val
                break
            t *= 0.5
        else:
            break
    return theta, value


def fit_affine_generic(X, Y, loss: Loss, iters: int = 200, step: float = 0.1) -> AffinePiece:
    """Descend ``sum loss(A x + b, y)`` from the least-squares piece."""
    if iters < 1 or step <= 0:
        raise ArgumentError("iters >= 1 and step > 0 required")
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.asarray(Y, float).reshape(X.shape[0], -1)
    warm = lstsq_affine(X, Y)
    dy, dx = warm.A.shape

    def objective(theta):
        P = X @ theta[: dy * dx].reshape(dy, dx).T + theta[dy * dx:]
        return float(np.sum(loss.per_sample(P, Y)))

    theta0 = np.concatenate([warm.A.ravel(), warm.b])
    theta, _ = _minimize_fd(objective, theta0, iters, step)
    return AffinePiece(theta[: dy * dx].reshape(dy, dx), theta[dy * dx:])


def fit_affine(X, Y, loss: Loss = MSE, **kw) -> tuple[AffinePiece, float]:
    """Best affine piece for the samples and its summed loss."""
    piece = lstsq_affine(X, Y) if loss.is_mse else fit_affine_generic(X, Y, loss, **kw)
    return piece, group_loss(piece, X, Y, loss)


def fit_group_generic(
    dataset: Dataset,
    partition: Partition,
    region_idx: int,
    loss: Loss,
    iters: int = 200,
    step: float = 0.1,
) -> GroupFit:
    """Approximate minimizer of a generic loss over affine pieces.

    Starts from the least-squares piece and only accepts descent steps, so
    the result is never worse than the warm start under ``loss``.
    """
    idx, X, Y = _group(dataset, partition, region_idx)
    piece = fit_affine_generic(X, Y, loss, iters, step)
    return GroupFit(region_idx, piece, group_loss(piece, X, Y, loss), int(idx.size))


def fit_group(dataset, partition, region_idx, loss: Loss = MSE, **kw) -> GroupFit:
    if loss.is_mse:
        return fit_group_mse(dataset, partition, region_idx)
    return fit_group_generic(dataset, partition, region_idx, loss, **kw)


def auxiliary_segment_1d(left: AffinePiece, right: AffinePiece, gap, shrink: float = 0.25):
    """Connect two 1-D pieces across an empty gap ``(u, v)``.

    Returns ``(None, [x*])`` when every output component of the two pieces
    crosses at one common point inside the gap, ``(None, [midpoint])`` when
    the pieces coincide, and otherwise an auxiliary piece joining
    ``left(u')`` to ``right(v')`` with ``u' = u + shrink*(v-u)`` and
    ``v' = v - shrink*(v-u)``, together with boundaries ``[u', v']``.
    """
    u, v = map(float, gap)
    if not u < v:
        raise ArgumentError(f"gap ({u}, {v}) is empty")
    if left.dx != 1 or right.dx != 1:
        raise ArgumentError("auxiliary segments are only built for dx = 1")
    a1, b1 = left.A[:, 0], left.b
    a2, b2 = right.A[:, 0], right.b
    same = (a1 == a2) & (b1 == b2)
    if same.all():
        return None, [0.5 * (u + v)]
    crossing = None
    ok = True
    for k in np.flatnonzero(~same):
        if a1[k] == a2[k]:
            ok = False
            break
        xk = (b2[k] - b1[k]) / (a1[k] - a2[k])
        if not u < xk < v:
            ok = False
            break
        if crossing is None:
            crossing = xk
        elif abs(xk - crossing) > 1e-12 * max(1.0, abs(crossing)):
            ok = False
            break
    if ok:
        return None, [float(crossing)]
    up = u + shrink * (v - u)
    vp = v - shrink * (v - u)
    yl = left(np.array([up]))
    yr = right(np.array([vp]))
    slope = (yr - yl) / (vp - up)
    aux = AffinePiece(slope[:, None], yl - slope * up)
    return aux, [up, vp]
