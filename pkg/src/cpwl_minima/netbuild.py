"""Explicit ReLU weights realizing a CPWL predictor.

The first hidden layer emits every affine piece shifted by a constant
``c`` so that it stays positive on the domain; ReLU is then the identity
there. Above it, binary trees of two-neuron gadgets

    min(a, b) = relu(b) - relu(b - a)
    max(a, b) = relu(a) + relu(b - a)        (a, b >= 0)

compute each psi-set minimum and then the maximum over psi values. Each
gadget's outer ReLU acts on a nonnegative value, so it is folded into the
next layer's affine map and every tree level costs one hidden layer. The
output layer subtracts the shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cpwl import CpwlPredictor, assemble
from .data import MSE, Dataset, Loss
from .errors import ArgumentError, ConfigError, UnsupportedConstructionError
from .fitting import AffinePiece, GroupFit, group_loss
from .network import LINEAR, RELU, CnnNetwork, ConvStage, Layer, PoolStage, ReluNetwork
from .partition import Partition


def build_min_gadget() -> ReluNetwork:
    """2 inputs ``(a, b)`` -> ``min(a, b)`` for nonnegative inputs."""
    hidden = Layer([[0.0, 1.0], [-1.0, 1.0]], [0.0, 0.0], RELU)
    return ReluNetwork((hidden, Layer([[1.0, -1.0]], [0.0], LINEAR)))


def build_max_gadget() -> ReluNetwork:
    """2 inputs ``(a, b)`` -> ``max(a, b)`` for nonnegative inputs."""
    hidden = Layer([[1.0, 0.0], [-1.0, 1.0]], [0.0, 0.0], RELU)
    return ReluNetwork((hidden, Layer([[1.0, 1.0]], [0.0], LINEAR)))


@dataclass
class BuildConfig:
    """Network build options.

    ``c=None`` picks ``max |first-layer affine value on domain vertices and
    samples| + 1``. ``form`` selects the lattice representation: ``"psi"``
    uses the dominance sets of the max-min form, ``"cutoff"`` (``dx = 1``
    only) uses pieces clipped by steep lines at the region ends, and
    ``"auto"`` uses ``"psi"`` unless that network ties or switches pattern
    inside a group on the samples.
    """

    c: float | None = None
    tree_fanin: int = 2
    form: str = "auto"

    def __post_init__(self):
        if self.tree_fanin != 2:
            raise ArgumentError("only binary gadget trees are supported")
        if self.form not in ("auto", "psi", "cutoff"):
            raise ArgumentError("form must be 'auto', 'psi' or 'cutoff'")
        if self.c is not None and not self.c > 0:
            raise ArgumentError("c must be positive")


def size_bounds(n_pieces: int, dy: int) -> tuple[int, int]:
    """(max hidden layers, max hidden width) for ``n`` pieces and ``dy`` outputs."""
    return 1 + 4 * int(math.floor(math.log2(n_pieces))), n_pieces * n_pieces * dy


# Lattice expressions: a leaf is a first-layer neuron index, a node is
# ("min" | "max", [children]).


def _node(op, children):
    flat = []
    for ch in children:
        if isinstance(ch, tuple) and ch[0] == op:
            flat.extend(ch[1])
        elif ch not in flat:
            flat.append(ch)
    return flat[0] if len(flat) == 1 else (op, flat)


def _first_leaf(expr):
    return expr if not isinstance(expr, tuple) else min(_first_leaf(c) for c in expr[1])


def _minimal(sets):
    sets = sorted(set(sets), key=lambda s: (min(s), sorted(s)))
    return [s for s in sets if not any(t < s for t in sets)]


def plain_expression(sets):
    """``max over sets of min over members``, children kept in the given order."""
    return _node("max", [_node("min", sorted(s)) for s in sets])


def factored_expression(sets, prefer_high: bool = False):
    """Same value as :func:`plain_expression`, with shared members pulled out.

    ``max(min(c, A), min(c, B)) = min(c, max(min A, min B))``, applied
    greedily to the member shared by most sets. Sets sharing a member tend
    to attain their minimum at that member on the same samples, which
    would leave a max gadget comparing two equal values.
    """
    sets = _minimal(frozenset(s) for s in sets)
    if len(sets) == 1:
        return _node("min", sorted(sets[0]))
    counts = {}
    for st in sets:
        for j in st:
            counts[j] = counts.get(j, 0) + 1
    sign = -1 if prefer_high else 1
    c = min(counts, key=lambda j: (-counts[j], sign * j))
    if counts[c] < 2:
        return plain_expression(sets)
    shared = [st - {c} for st in sets if c in st]
    rest = [st for st in sets if c not in st]
    part = c if any(not st for st in shared) else _node("min", [c, factored_expression(shared, prefer_high)])
    parts = [part] + ([factored_expression(rest, prefer_high)] if rest else [])
    return _node("max", sorted(parts, key=_first_leaf))


class _Val:
    """A computed value: sparse linear expression {neuron: coefficient} over the current layer."""

    __slots__ = ("expr",)

    def __init__(self, expr):
        self.expr = expr


def _lift(expr, index):
    if isinstance(expr, tuple):
        return (expr[0], [_lift(c, index) for c in expr[1]])
    return _Val({index(expr): 1.0})


def _norm(node):
    if isinstance(node, _Val):
        return node
    op, kids = node
    flat = []
    for k in (_norm(c) for c in kids):
        if isinstance(k, tuple) and k[0] == op:
            flat.extend(k[1])
        else:
            flat.append(k)
    return flat[0] if len(flat) == 1 else (op, flat)


def _gadget_layers(first_width, trees, offset):
    """Compile one lattice tree per output into hidden layers plus the output layer.

    Every step emits one hidden layer: adjacent ready operands of a node are
    paired into gadgets, other ready values are carried by a pass-through
    neuron ``relu(v) = v`` (values stay positive), and unfinished subtrees
    advance by one level.
    """
    roots = [_norm(t) for t in trees]
    layers = []
    width = first_width
    while not all(isinstance(r, _Val) for r in roots):
        rows = []

        def neuron(expr):
            rows.append(expr)
            return len(rows) - 1

        def carry(v):
            return _Val({neuron(v.expr): 1.0})

        def gadget(op, a, b):
            diff = dict(b.expr)
            for j, w in a.expr.items():
                diff[j] = diff.get(j, 0.0) - w
            if op == "min":
                return _Val({neuron(b.expr): 1.0, neuron(diff): -1.0})
            return _Val({neuron(a.expr): 1.0, neuron(diff): 1.0})

        def step(node):
            if isinstance(node, _Val):
                return carry(node)
            op, kids = node
            out, i = [], 0
            while i < len(kids):
                k = kids[i]
                if isinstance(k, _Val) and i + 1 < len(kids) and isinstance(kids[i + 1], _Val):
                    out.append(gadget(op, k, kids[i + 1]))
                    i += 2
                else:
                    out.append(step(k))
                    i += 1
            return _norm((op, out))

        roots = [step(r) for r in roots]
        W = np.zeros((len(rows), width))
        for r, expr in enumerate(rows):
            for j, v in expr.items():
                W[r, j] += v
        layers.append(Layer(W, np.zeros(len(rows)), RELU))
        width = len(rows)

    W = np.zeros((len(roots), width))
    for k, r in enumerate(roots):
        for j, v in r.expr.items():
            W[k, j] += v
    layers.append(Layer(W, np.full(len(roots), -float(offset)), LINEAR))
    return layers


def _score(layers, V, assignment):
    """(has a zero pre-activation, groups with varying patterns, depth, neurons) on first-layer values ``V``."""
    h = V
    pats, margin = [], np.inf
    for layer in layers[:-1]:
        z = h @ layer.W.T + layer.b
        margin = min(margin, float(np.min(np.abs(z))))
        pats.append(z > 0)
        h = np.maximum(z, 0.0)
    varying = 0
    if pats and assignment is not None:
        P = np.hstack(pats)
        for g in np.unique(assignment):
            rows = P[assignment == g]
            varying += bool(np.any(rows != rows[0]))
    return (not margin > 0, varying, len(layers), sum(l.rows for l in layers))


def _choose_gadgets(predictor: CpwlPredictor, first_width, index, offset, V=None, assignment=None):
    """Compile several equivalent lattice forms and keep the best one on the samples.

    Without sample values ``V`` the plain form over the compact sets is
    used. Otherwise candidates (plain, plain over all reduced sets, and two
    factorings) are scored by :func:`_score` and the first best is kept, so
    the plain form wins ties.
    """
    n, dy = predictor.n_pieces, predictor.dy
    max_depth, max_width = size_bounds(n, dy)
    compact = [form.compact_sets() for form in predictor.forms]

    def compile_with(build, family):
        trees = [_lift(build(s), lambda j, k=k: index(k, j)) for k, s in enumerate(family)]
        return _gadget_layers(first_width, trees, offset)

    plain = compile_with(plain_expression, compact)
    if V is None:
        return plain
    candidates = [
        plain,
        compile_with(plain_expression, [form.reduced_sets() for form in predictor.forms]),
        compile_with(factored_expression, compact),
        compile_with(lambda s: factored_expression(s, prefer_high=True), compact),
    ]
    fits = [
        ls for ls in candidates
        if len(ls) <= max_depth and max((l.rows for l in ls[:-1]), default=0) <= max_width
    ]
    return min(fits, key=lambda ls: _score(ls, V, assignment))


def _auto_c(values) -> float:
    return float(np.max(np.abs(values))) + 1.0


def _cutoff_leaves(predictor: CpwlPredictor):
    """Affine leaves and lattice trees for the clipped-piece form (``dx = 1``).

    Region ``j`` (left to right, ends ``a_j < b_j``) contributes
    ``min(f_j, l_j, r_j)`` where ``l_j`` and ``r_j`` have slopes ``+M`` and
    ``-M`` and meet ``f_j`` at ``a_j`` and ``b_j``. With ``M`` above the
    Lipschitz constant each term equals ``f`` on its region and lies strictly
    below it elsewhere, so every gadget switches only at region ends.
    Returns ``(A, b, trees)`` with leaf ``i`` equal to ``A[i] * x + b[i]``.
    """
    part = predictor.partition
    order = sorted(range(predictor.n_pieces), key=lambda r: part.regions[r].bounds_1d)
    A, b, trees = [], [], []

    def leaf(slope, icpt):
        A.append(float(slope))
        b.append(float(icpt))
        return len(A) - 1

    for k in range(predictor.dy):
        M = 2.0 * max(abs(float(p.A[k, 0])) for p in predictor.pieces) + 1.0
        terms = []
        for pos, r in enumerate(order):
            p = predictor.pieces[r]
            a, e = part.regions[r].bounds_1d
            members = [leaf(p.A[k, 0], p.b[k])]
            if pos > 0:
                members.append(leaf(M, float(p(np.array([a]))[k]) - M * a))
            if pos < len(order) - 1:
                members.append(leaf(-M, float(p(np.array([e]))[k]) + M * e))
            terms.append(("min", members) if len(members) > 1 else members[0])
        trees.append(_node("max", terms) if len(terms) > 1 else terms[0])
    return np.array(A)[:, None], np.array(b), trees


def _positive_c(vals, config) -> float:
    c = _auto_c(vals) if config.c is None else float(config.c)
    if np.min(vals) + c <= 0:
        raise ConfigError(
            f"bias c={c} leaves a first-layer pre-activation at {np.min(vals) + c:.3g}; "
            f"use c > {-np.min(vals):.6g}"
        )
    return c


def _perfect(score) -> bool:
    return not score[0] and score[1] == 0


def build_fc_network(predictor: CpwlPredictor, config: BuildConfig | None = None, X=None) -> ReluNetwork:
    """Fully-connected ReLU network whose output equals ``predictor`` on the domain.

    In the dominance-set form first-layer neuron ``k * n + j`` emits
    component ``k`` of piece ``j`` plus ``c``. ``X`` (optional sample inputs)
    is included in the positivity check alongside the domain vertices and
    drives the choice among equivalent gadget layouts.
    """
    config = config or BuildConfig()
    pieces = predictor.pieces
    n, dy, dx = len(pieces), predictor.dy, predictor.dx
    if config.form == "cutoff" and dx != 1:
        raise ArgumentError("the cutoff form needs dx = 1")
    pts = predictor.partition.domain.vertices
    if X is not None:
        pts = np.vstack([pts, np.atleast_2d(X)])
    assignment = predictor.partition.assignment if X is not None else None
    use_cutoff = config.form == "cutoff" and n > 1
    net = None
    if not use_cutoff:
        vals = np.stack([p(pts) for p in pieces], axis=2)  # (points, dy, n)
        c = _positive_c(vals, config)
        W1 = np.zeros((n * dy, dx))
        b1 = np.zeros(n * dy)
        for k in range(dy):
            for j, p in enumerate(pieces):
                W1[k * n + j] = p.A[k]
                b1[k * n + j] = p.b[k] + c
        V = np.maximum(np.atleast_2d(X) @ W1.T + b1, 0.0) if X is not None else None
        rest = _choose_gadgets(predictor, n * dy, lambda k, j: k * n + j, c, V, assignment)
        net = ReluNetwork((Layer(W1, b1, RELU), *rest), {"c": c, "n_pieces": n, "form": "psi"})
        use_cutoff = (
            config.form == "auto" and dx == 1 and n > 1 and V is not None
            and not _perfect(_score(rest, V, assignment))
        )
    if use_cutoff:
        A, b, trees = _cutoff_leaves(predictor)
        c = _positive_c(pts @ A.T + b, config)
        rest = _gadget_layers(len(b), [_lift(t, lambda i: i) for t in trees], c)
        net = ReluNetwork((Layer(A, b + c, RELU), *rest), {"c": c, "n_pieces": n, "form": "cutoff"})
    max_depth, max_width = size_bounds(n, dy)
    assert net.n_hidden <= max_depth and max(net.hidden_widths) <= max_width, (
        net.n_hidden, net.hidden_widths, max_depth, max_width)
    return net


# ---------------------------------------------------------------------------
# CNN


@dataclass(frozen=True)
class ConvBlock:
    patch: int
    stride: int
    pool: str = "average"
    pool_size: int = 0
    pool_stride: int = 0


@dataclass(frozen=True)
class CnnArch:
    """Stack of (conv -> pool) blocks. ``pool_size=0`` pools over the whole map."""

    blocks: tuple = field(default_factory=tuple)

    @classmethod
    def single(cls, patch, stride, pool="average", pool_size=0, pool_stride=0):
        pool = {"avg": "average"}.get(pool, pool)
        return cls((ConvBlock(int(patch), int(stride), pool, int(pool_size), int(pool_stride)),))


def _skeleton(arch: CnnArch, input_length: int, n_towers: int):
    """Stage list with placeholder first-layer filters and all-ones interior filters."""
    stages = []
    c, length = 1, input_length
    for i, blk in enumerate(arch.blocks):
        if i == 0:
            conv = ConvStage(np.zeros((n_towers, blk.patch)), np.zeros(n_towers), blk.stride)
        else:
            conv = ConvStage(np.ones((n_towers, blk.patch)), np.zeros(n_towers), blk.stride)
        c, length = conv.out_shape(c, length)
        stages.append(conv)
        if blk.pool not in (None, "none"):
            size = blk.pool_size or length
            stride = blk.pool_stride or size
            pool = PoolStage(blk.pool, size, stride)
            c, length = pool.out_shape(c, length)
            stages.append(pool)
    return stages, length


def _linear_tail(stages, U):
    """Apply everything after the first conv to first-conv outputs ``U`` (N, P0), ignoring ReLU, then sum."""
    from .runtime import _conv, _pool

    F = U[:, None, :]
    for st in stages[1:]:
        if isinstance(st, ConvStage):
            F = _conv(ConvStage(st.filters[:1], st.biases[:1], st.stride), F)
        elif st.kind == "average":
            F = _pool(st, F)
        else:
            raise UnsupportedConstructionError(
                "max pooling is evaluable but has no spurious-minimum construction"
            )
    return F.reshape(F.shape[0], -1).sum(axis=1)


@dataclass
class CnnStructure:
    """How a first-layer filter ``w`` and bias ``beta`` map to an affine piece.

    Tower output (before the shift) is ``w @ (G @ x) + total * beta``.
    """

    G: np.ndarray
    total: float
    patch: int
    stride: int
    n_patches: int

    def features(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.G.T

    def piece(self, w, beta) -> tuple[np.ndarray, float]:
        return np.asarray(w) @ self.G, self.total * float(beta)

    def patches(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.stack(
            [X[:, p * self.stride: p * self.stride + self.patch] for p in range(self.n_patches)], axis=1
        )


def cnn_structure(arch: CnnArch, input_length: int) -> CnnStructure:
    if not arch.blocks:
        raise ArgumentError("CNN architecture needs at least one conv block")
    for blk in arch.blocks:
        if blk.pool == "max":
            raise UnsupportedConstructionError(
                "max pooling is evaluable but has no spurious-minimum construction"
            )
    stages, _ = _skeleton(arch, input_length, 1)
    first = stages[0]
    _, p0 = first.out_shape(1, input_length)
    alpha = _linear_tail(stages, np.eye(p0))
    G = np.zeros((first.size, input_length))
    for p, a in enumerate(alpha):
        G[:, p * first.stride: p * first.stride + first.size] += a * np.eye(first.size)
    return CnnStructure(G, float(alpha.sum()), first.size, first.stride, p0)


def fit_structured(structure: CnnStructure, X, Y):
    """Least-squares first-layer filters/biases for one group; one (w, beta) per output."""
    Phi = structure.features(X)
    design = np.hstack([Phi, np.full((Phi.shape[0], 1), structure.total)])
    theta, *_ = np.linalg.lstsq(design, np.atleast_2d(Y.T).T, rcond=None)
    return theta[:-1].T, theta[-1]  # (dy, s), (dy,)


@dataclass
class CnnBuild:
    net: CnnNetwork
    predictor: CpwlPredictor
    fits: list
    structure: CnnStructure


def _filters_for(structure: CnnStructure, A_row, b) -> tuple[np.ndarray, float]:
    w, *_ = np.linalg.lstsq(structure.G.T, A_row, rcond=None)
    if not np.allclose(w @ structure.G, A_row, atol=1e-9):
        raise UnsupportedConstructionError("piece is not representable by the first conv layer")
    return w, b / structure.total


def build_cnn_network(
    dataset: Dataset,
    partition: Partition,
    arch: CnnArch,
    config: BuildConfig | None = None,
    loss: Loss = MSE,
) -> CnnBuild:
    """Fit structured pieces per group and wire them into a CNN.

    Every group is fitted by least squares over first-layer filters only;
    interior conv filters and the first fully-connected layer are fixed to
    ones with zero bias, so each tower outputs an affine function of ``x``.
    Min/max gadget layers follow exactly as in :func:`build_fc_network`.
    """
    if not loss.is_mse:
        raise ArgumentError("structured CNN fitting is implemented for MSE only")
    config = config or BuildConfig()
    st = cnn_structure(arch, dataset.dx)

    fits = []
    for r in range(partition.n_regions):
        idx = partition.members(r)
        if not idx.size:
            continue
        w, beta = fit_structured(st, dataset.X[idx], dataset.Y[idx])
        A = w @ st.G
        b = st.total * beta
        piece = AffinePiece(A, b)
        fits.append(GroupFit(r, piece, group_loss(piece, dataset.X[idx], dataset.Y[idx]), int(idx.size)))
    predictor = assemble(dataset, partition, fits)

    pieces = predictor.pieces
    n, dy = len(pieces), predictor.dy
    T = n * dy
    filters = np.zeros((T, st.patch))
    betas = np.zeros(T)
    for k in range(dy):
        for j, p in enumerate(pieces):
            filters[k * n + j], betas[k * n + j] = _filters_for(st, p.A[k], p.b[k])

    pts = np.vstack([partition.domain.vertices, dataset.X])
    patch_vals = np.einsum("nps,ts->ntp", st.patches(pts), filters) + betas[None, :, None]
    c = _auto_c(patch_vals) if config.c is None else float(config.c)
    if np.min(patch_vals) + c <= 0:
        raise ConfigError(f"bias c={c} leaves a conv pre-activation non-positive")

    stages, final_len = _skeleton(arch, dataset.dx, T)
    stages[0] = ConvStage(filters, betas + c, stages[0].stride)
    W_fc = np.zeros((T, T * final_len))
    for t in range(T):
        W_fc[t, t * final_len:(t + 1) * final_len] = 1.0
    first_fc = Layer(W_fc, np.zeros(T), RELU)
    offset = c * st.total
    V = np.column_stack([p(dataset.X)[:, k] for k in range(dy) for p in pieces]) + offset
    rest = _choose_gadgets(predictor, T, lambda k, j: k * n + j, offset, V, predictor.partition.assignment)
    fc = ReluNetwork((first_fc, *rest))
    net = CnnNetwork(dataset.dx, tuple(stages), fc, {"c": c, "offset": offset, "n_pieces": n})
    return CnnBuild(net, predictor, fits, st)
