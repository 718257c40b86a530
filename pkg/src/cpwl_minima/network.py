"""Fully-connected ReLU networks and small 1-D CNNs, with JSON round-tripping.

JSON floats are written with Python's shortest round-trip repr, so
save/load is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

RELU = "relu"
LINEAR = "linear_output"


@dataclass(frozen=True, eq=False)
class Layer:
    W: np.ndarray
    b: np.ndarray
    kind: str = RELU

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, float))
        b = np.asarray(self.b, float).ravel()
        if W.shape[0] != b.size:
            raise ShapeError(f"layer has {W.shape[0]} rows but {b.size} biases")
        if self.kind not in (RELU, LINEAR):
            raise FormatError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def rows(self) -> int:
        return self.W.shape[0]

    @property
    def cols(self) -> int:
        return self.W.shape[1]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rows": self.rows,
            "cols": self.cols,
            "weights": [float(v) for v in self.W.ravel()],
            "biases": [float(v) for v in self.b],
        }

    @classmethod
    def from_dict(cls, d) -> "Layer":
        try:
            W = np.array(d["weights"], float).reshape(int(d["rows"]), int(d["cols"]))
            return cls(W, np.array(d["biases"], float), d["kind"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad layer record: {exc}") from None


def _check_chain(layers, d_in):
    width = d_in
    for i, layer in enumerate(layers):
        if layer.cols != width:
            raise ShapeError(f"layer {i} expects {layer.cols} inputs, previous width is {width}")
        width = layer.rows
    return width


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    """ReLU hidden layers followed by one affine output layer."""

    layers: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("network needs at least an output layer")
        if layers[-1].kind != LINEAR or any(l.kind != RELU for l in layers[:-1]):
            raise ShapeError("hidden layers must be relu and the last layer linear_output")
        _check_chain(layers, layers[0].cols)
        object.__setattr__(self, "layers", layers)

    @property
    def d_in(self) -> int:
        return self.layers[0].cols

    @property
    def d_out(self) -> int:
        return self.layers[-1].rows

    @property
    def widths(self) -> list[int]:
        return [self.d_in] + [l.rows for l in self.layers]

    @property
    def hidden_widths(self) -> list[int]:
        return [l.rows for l in self.layers[:-1]]

    @property
    def n_hidden(self) -> int:
        return len(self.layers) - 1

    def params(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            out.extend([l.W, l.b])
        return out

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names.extend([f"fc{i}.W", f"fc{i}.b"])
        return names

    def with_params(self, params) -> "ReluNetwork":
        it = iter(params)
        layers = tuple(Layer(next(it), next(it), l.kind) for l in self.layers)
        return ReluNetwork(layers, dict(self.meta))

    def rescaled(self, layer: int, a: float) -> "ReluNetwork":
        """Scale layer ``layer`` (weights and bias) by ``a > 0`` and the next layer's weights by ``1/a``."""
        if not 0 <= layer < len(self.layers) - 1:
            raise ShapeError("can only rescale a hidden layer")
        if not a > 0:
            raise ValueError("positive scale required for ReLU rescaling")
        layers = list(self.layers)
        cur, nxt = layers[layer], layers[layer + 1]
        layers[layer] = Layer(cur.W * a, cur.b * a, cur.kind)
        layers[layer + 1] = Layer(nxt.W / a, nxt.b, nxt.kind)
        return ReluNetwork(tuple(layers), dict(self.meta))

    def to_dict(self) -> dict:
        return {"kind": "fc", "layers": [l.to_dict() for l in self.layers], "meta": self.meta}

    @classmethod
    def from_dict(cls, d) -> "ReluNetwork":
        if d.get("kind", "fc") != "fc":
            raise FormatError(f"expected an fc network, got {d.get('kind')!r}")
        return cls(tuple(Layer.from_dict(l) for l in d["layers"]), dict(d.get("meta", {})))


@dataclass(frozen=True, eq=False)
class ConvStage:
    """1-D convolution with ReLU.

    With a single input channel every filter scans every patch; with ``C``
    input channels the stage is depthwise and needs one filter per channel.
    Patch ``p`` covers positions ``p*stride .. p*stride + size - 1``.
    """

    filters: np.ndarray
    biases: np.ndarray
    stride: int = 1

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.filters, float))
        b = np.asarray(self.biases, float).ravel()
        if F.shape[0] != b.size:
            raise ShapeError("one bias per filter required")
        if int(self.stride) < 1:
            raise ShapeError("stride must be >= 1")
        object.__setattr__(self, "filters", F)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "stride", int(self.stride))

    @property
    def size(self) -> int:
        return self.filters.shape[1]

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    def out_shape(self, channels: int, length: int) -> tuple[int, int]:
        if length < self.size or (length - self.size) % self.stride:
            raise ShapeError(
                f"patch size {self.size} with stride {self.stride} does not tile length {length}"
            )
        if channels != 1 and channels != self.n_filters:
            raise ShapeError(f"depthwise conv needs {channels} filters, has {self.n_filters}")
        return self.n_filters, (length - self.size) // self.stride + 1

    def to_dict(self) -> dict:
        return {
            "type": "conv",
            "rows": self.n_filters,
            "cols": self.size,
            "stride": self.stride,
            "weights": [float(v) for v in self.filters.ravel()],
            "biases": [float(v) for v in self.biases],
        }


@dataclass(frozen=True, eq=False)
class PoolStage:
    kind: str
    size: int
    stride: int

    def __post_init__(self):
        if self.kind not in ("average", "max"):
            raise FormatError(f"unknown pooling {self.kind!r}")
        object.__setattr__(self, "size", int(self.size))
        object.__setattr__(self, "stride", int(self.stride))

    def out_shape(self, channels: int, length: int) -> tuple[int, int]:
        if length < self.size or (length - self.size) % self.stride:
            raise ShapeError(f"pool size {self.size}/stride {self.stride} does not tile length {length}")
        return channels, (length - self.size) // self.stride + 1

    def to_dict(self) -> dict:
        return {"type": "pool", "pool": self.kind, "size": self.size, "stride": self.stride}


def _stage_from_dict(d):
    if d.get("type") == "conv":
        F = np.array(d["weights"], float).reshape(int(d["rows"]), int(d["cols"]))
        return ConvStage(F, np.array(d["biases"], float), int(d["stride"]))
    if d.get("type") == "pool":
        kind = {"avg": "average"}.get(d["pool"], d["pool"])
        return PoolStage(kind, int(d["size"]), int(d["stride"]))
    raise FormatError(f"unknown stage {d.get('type')!r}")


@dataclass(frozen=True, eq=False)
class CnnNetwork:
    """Convolution/pooling stages followed by a fully-connected ReLU stack.

    ``fc.layers[0]`` is the first fully-connected layer; it consumes the
    channel-major flattening of the last feature map.
    """

    input_length: int
    stages: tuple
    fc: ReluNetwork
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        stages = tuple(self.stages)
        object.__setattr__(self, "stages", stages)
        c, n = self.feature_shape
        if c * n != self.fc.d_in:
            raise ShapeError(f"feature map has {c * n} values but fc expects {self.fc.d_in}")

    @property
    def feature_shape(self) -> tuple[int, int]:
        c, n = 1, int(self.input_length)
        for st in self.stages:
            c, n = st.out_shape(c, n)
        return c, n

    @property
    def d_in(self) -> int:
        return int(self.input_length)

    @property
    def d_out(self) -> int:
        return self.fc.d_out

    @property
    def conv_stages(self) -> list[ConvStage]:
        return [s for s in self.stages if isinstance(s, ConvStage)]

    @property
    def l_fc(self) -> int:
        """1-based index of the first fully-connected layer among weight layers."""
        return len(self.conv_stages) + 1

    def params(self) -> list[np.ndarray]:
        out = []
        for s in self.conv_stages:
            out.extend([s.filters, s.biases])
        return out + self.fc.params()

    def param_names(self) -> list[str]:
        names = []
        for i, _ in enumerate(self.conv_stages):
            names.extend([f"conv{i}.W", f"conv{i}.b"])
        return names + self.fc.param_names()

    def with_params(self, params) -> "CnnNetwork":
        params = list(params)
        it = iter(params)
        stages = []
        for s in self.stages:
            if isinstance(s, ConvStage):
                stages.append(ConvStage(next(it), next(it), s.stride))
            else:
                stages.append(s)
        fc = self.fc.with_params(list(it))
        return CnnNetwork(self.input_length, tuple(stages), fc, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "kind": "cnn",
            "input_length": int(self.input_length),
            "stages": [s.to_dict() for s in self.stages],
            "fc": [l.to_dict() for l in self.fc.layers],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d) -> "CnnNetwork":
        fc = ReluNetwork(tuple(Layer.from_dict(l) for l in d["fc"]))
        return cls(int(d["input_length"]), tuple(_stage_from_dict(s) for s in d["stages"]), fc, dict(d.get("meta", {})))


def network_to_json(net) -> str:
    return json.dumps(net.to_dict(), indent=1, sort_keys=True)


def network_from_dict(d):
    kind = d.get("kind", "fc")
    if kind == "fc":
        return ReluNetwork.from_dict(d)
    if kind == "cnn":
        return CnnNetwork.from_dict(d)
    raise FormatError(f"unknown network kind {kind!r}")


def save_network(net, path) -> None:
    Path(path).write_text(network_to_json(net) + "\n", encoding="utf-8")


def load_network(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return network_from_dict(d)
