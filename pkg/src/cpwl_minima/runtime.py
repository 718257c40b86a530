"""Forward evaluation, activation patterns, margins and network risk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import MSE, Dataset, Loss
from .errors import ShapeError
from .network import CnnNetwork, ConvStage, PoolStage, ReluNetwork


def relu(z):
    return np.maximum(z, 0.0)


@dataclass
class ForwardTrace:
    """Output, activation pattern and margin of one input.

    ``pattern[l][k]`` is True when hidden neuron ``k`` of activation layer
    ``l`` has a strictly positive pre-activation. ``margin`` is the smallest
    absolute pre-activation over all hidden neurons.
    """

    output: np.ndarray
    pattern: list
    margin: float

    @property
    def stable(self) -> bool:
        return self.margin > 0


@dataclass
class BatchForward:
    outputs: np.ndarray
    preacts: list  # one (N, width) array per activation layer

    @property
    def patterns(self) -> np.ndarray:
        """``(N, total_hidden)`` boolean table."""
        if not self.preacts:
            return np.zeros((self.outputs.shape[0], 0), dtype=bool)
        return np.hstack([z > 0 for z in self.preacts])

    @property
    def margins(self) -> np.ndarray:
        if not self.preacts:
            return np.full(self.outputs.shape[0], np.inf)
        return np.min(np.hstack([np.abs(z) for z in self.preacts]), axis=1)

    def trace(self, i: int) -> ForwardTrace:
        return ForwardTrace(
            self.outputs[i], [z[i] > 0 for z in self.preacts], float(self.margins[i])
        )


def _as_batch(X, d_in):
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size == d_in else X.reshape(-1, 1)
    if X.shape[1] != d_in:
        raise ShapeError(f"input has {X.shape[1]} features, network expects {d_in}")
    return X


def _fc_stack(layers, Y):
    preacts = []
    for layer in layers[:-1]:
        Z = Y @ layer.W.T + layer.b
        preacts.append(Z)
        Y = relu(Z)
    last = layers[-1]
    return Y @ last.W.T + last.b, preacts


def forward_fc_batch(net: ReluNetwork, X) -> BatchForward:
    X = _as_batch(X, net.d_in)
    out, preacts = _fc_stack(net.layers, X)
    return BatchForward(out, preacts)


def forward_fc(net: ReluNetwork, x) -> ForwardTrace:
    x = np.asarray(x, float).ravel()
    if x.size != net.d_in:
        raise ShapeError(f"input has {x.size} features, network expects {net.d_in}")
    return forward_fc_batch(net, x[None, :]).trace(0)


def _conv(stage: ConvStage, F):
    # F: (N, C, L)
    win = sliding_window_view(F, stage.size, axis=2)[:, :, :: stage.stride, :]
    if F.shape[1] == 1:
        Z = np.einsum("nps,ts->ntp", win[:, 0], stage.filters)
    else:
        Z = np.einsum("ncps,cs->ncp", win, stage.filters)
    return Z + stage.biases[None, :, None]


def _pool(stage: PoolStage, F):
    win = sliding_window_view(F, stage.size, axis=2)[:, :, :: stage.stride, :]
    return win.mean(axis=3) if stage.kind == "average" else win.max(axis=3)


def forward_cnn_batch(net: CnnNetwork, X) -> BatchForward:
    X = _as_batch(X, net.d_in)
    F = X[:, None, :]
    preacts = []
    for stage in net.stages:
        stage.out_shape(F.shape[1], F.shape[2])
        if isinstance(stage, ConvStage):
            Z = _conv(stage, F)
            preacts.append(Z.reshape(Z.shape[0], -1))
            F = relu(Z)
        else:
            F = _pool(stage, F)
    out, fc_pre = _fc_stack(net.fc.layers, F.reshape(F.shape[0], -1))
    return BatchForward(out, preacts + fc_pre)


def forward_cnn(net: CnnNetwork, x) -> ForwardTrace:
    x = np.asarray(x, float).ravel()
    if x.size != net.d_in:
        raise ShapeError(f"input has {x.size} values, network expects {net.d_in}")
    return forward_cnn_batch(net, x[None, :]).trace(0)


def forward_batch(net, X) -> BatchForward:
    if isinstance(net, CnnNetwork):
        return forward_cnn_batch(net, X)
    return forward_fc_batch(net, X)


def predict(net, X) -> np.ndarray:
    return forward_batch(net, X).outputs


@dataclass
class NetworkRisk:
    risk: float
    losses: np.ndarray
    patterns: np.ndarray
    margins: np.ndarray
    outputs: np.ndarray


def network_risk(net, dataset: Dataset, loss: Loss = MSE) -> NetworkRisk:
    """Empirical risk of ``net`` on ``dataset`` with the pattern table."""
    if net.d_in != dataset.dx:
        raise ShapeError(f"network expects dx = {net.d_in}, dataset has dx = {dataset.dx}")
    if net.d_out != dataset.dy:
        raise ShapeError(f"network outputs dy = {net.d_out}, dataset has dy = {dataset.dy}")
    fw = forward_batch(net, dataset.X)
    losses = loss.per_sample(fw.outputs, dataset.Y)
    return NetworkRisk(float(np.sum(losses) / dataset.n), losses, fw.patterns, fw.margins, fw.outputs)


def pattern_affine_map(net: ReluNetwork, pattern) -> tuple[np.ndarray, np.ndarray]:
    """Affine map ``x -> A x + b`` computed by ``net`` when the activation pattern is frozen.

    This is the product ``W^L I^{L-1} W^{L-1} ... W^1`` with biases carried along.
    """
    A = np.eye(net.d_in)
    b = np.zeros(net.d_in)
    for layer, mask in zip(net.layers[:-1], pattern):
        m = np.asarray(mask, float)
        A = m[:, None] * (layer.W @ A)
        b = m * (layer.W @ b + layer.b)
    last = net.layers[-1]
    return last.W @ A, last.W @ b + last.b
