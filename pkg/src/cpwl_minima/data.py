"""Datasets, losses and the empirical risk."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import ArgumentError, FormatError, ParseError, ValidationError


class Sample(NamedTuple):
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """N labelled samples stored row-wise.

    ``X`` has shape ``(N, dx)`` and ``Y`` has shape ``(N, dy)``. Both are
    copied and made read-only on construction.
    """

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        Y = np.array(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise ValidationError("X and Y must be 2-D arrays")
        if X.shape[0] < 1:
            raise ValidationError("N >= 1 required")
        if X.shape[0] != Y.shape[0]:
            raise ValidationError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if X.shape[1] < 1 or Y.shape[1] < 1:
            raise ValidationError("dx >= 1 and dy >= 1 required")
        bad = ~(np.isfinite(X).all(axis=1) & np.isfinite(Y).all(axis=1))
        if bad.any():
            raise ValidationError(f"non-finite value in sample {int(np.argmax(bad))}")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dx(self) -> int:
        return self.X.shape[1]

    @property
    def dy(self) -> int:
        return self.Y.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return [Sample(x, y) for x, y in zip(self.X, self.Y)]

    def __len__(self):
        return self.n

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.X[idx], self.Y[idx])


class Loss:
    """A per-sample loss ``l(y_hat, y) >= 0``.

    ``fn`` maps two 1-D arrays to a float. ``batch`` (optional) maps two
    ``(N, dy)`` arrays to an ``(N,)`` array; when absent the per-sample
    function is looped. Continuity in ``y_hat`` is assumed, not checked.
    """

    def __init__(self, name: str, fn: Callable, batch: Callable | None = None):
        self.name = name
        self.fn = fn
        self._batch = batch

    def __call__(self, y_hat, y) -> float:
        return float(self.fn(np.asarray(y_hat, float), np.asarray(y, float)))

    def per_sample(self, Y_hat, Y) -> np.ndarray:
        Y_hat = np.asarray(Y_hat, float)
        Y = np.asarray(Y, float)
        if self._batch is not None:
            return np.asarray(self._batch(Y_hat, Y), dtype=float)
        return np.array([self.fn(a, b) for a, b in zip(Y_hat, Y)], dtype=float)

    @property
    def is_mse(self) -> bool:
        return self.name == "mse"

    def __repr__(self):
        return f"Loss({self.name!r})"


def _sq(y_hat, y):
    d = y_hat - y
    return float(d @ d)


def _sq_batch(Y_hat, Y):
    d = Y_hat - Y
    return np.einsum("ij,ij->i", d, d)


def _abs(y_hat, y):
    return float(np.abs(y_hat - y).sum())


def _abs_batch(Y_hat, Y):
    return np.abs(Y_hat - Y).sum(axis=1)


MSE = Loss("mse", _sq, _sq_batch)
ABSOLUTE = Loss("l1", _abs, _abs_batch)

LOSSES = {"mse": MSE, "l1": ABSOLUTE, "mae": ABSOLUTE}


def get_loss(name: str) -> Loss:
    try:
        return LOSSES[name.lower()]
    except KeyError:
        raise ArgumentError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None


def risk(dataset: Dataset, predictions, loss: Loss = MSE) -> float:
    """Empirical risk ``(1/N) * sum_i loss(y_hat_i, y_i)``."""
    P = np.asarray(predictions, dtype=float)
    if P.ndim == 1 and dataset.dy == 1:
        P = P[:, None]
    if P.shape != dataset.Y.shape:
        raise ArgumentError(
            f"predictions have shape {P.shape}, expected {dataset.Y.shape}"
        )
    # numpy sums with pairwise summation
    return float(np.sum(loss.per_sample(P, dataset.Y)) / dataset.n)


def gen_parabola(n: int, lo: float, hi: float) -> Dataset:
    """``n`` samples of ``y = x**2`` on an even grid over ``[lo, hi]``."""
    if int(n) != n or n < 2:
        raise ArgumentError(f"n must be an integer >= 2, got {n!r}")
    if not lo < hi:
        raise ArgumentError(f"need lo < hi, got lo={lo!r}, hi={hi!r}")
    x = np.linspace(lo, hi, int(n))
    return Dataset(x[:, None], (x * x)[:, None])


def gen_vshape(n: int, dx: int = 4, gap: float = 0.2, seed: int = 0) -> Dataset:
    """Synthetic dataset with a V-shaped target along ``x0 + x2``.

    Samples are uniform on ``[-1, 1]**dx`` with ``|x0 + x2| >= gap`` so
    the two halves are separated by an empty slab. The target
    ``|x0 + x2| + 0.25 * (x1 + x3)**2`` cannot be fitted by an affine map.
    """
    if dx < 4:
        raise ArgumentError("gen_vshape needs dx >= 4")
    rng = np.random.default_rng(seed)
    rows = []
    while len(rows) < n:
        x = rng.uniform(-1.0, 1.0, size=dx)
        if abs(x[0] + x[2]) >= gap:
            rows.append(x)
    X = np.array(rows)
    s = X[:, 0] + X[:, 2]
    t = X[:, 1] + X[:, 3]
    return Dataset(X, (np.abs(s) + 0.25 * t * t)[:, None])


def _header(dx: int, dy: int) -> list[str]:
    return [f"x{i}" for i in range(dx)] + [f"y{i}" for i in range(dy)]


def load_csv(path) -> Dataset:
    """Read a dataset whose header is ``x0,...,x{dx-1},y0,...,y{dy-1}``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        dx = sum(1 for h in header if h.startswith("x"))
        dy = len(header) - dx
        if dx < 1 or dy < 1 or header != _header(dx, dy):
            raise FormatError(
                f"{path}: header must be x0..x{{dx-1}},y0..y{{dy-1}}, got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != dx + dy:
                raise ParseError(f"expected {dx + dy} fields, got {len(row)}", lineno)
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if not all(np.isfinite(values)):
                raise ValidationError(f"{path}: line {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise ValidationError(f"{path}: N >= 1 required, data section is empty")
    arr = np.array(rows, dtype=float)
    return Dataset(arr[:, :dx], arr[:, dx:])


def save_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(dataset.dx, dataset.dy))
        for x, y in zip(dataset.X, dataset.Y):
            writer.writerow([repr(float(v)) for v in (*x, *y)])
