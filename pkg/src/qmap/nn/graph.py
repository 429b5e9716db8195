"""Layered compute graphs with explicit forward tapes and reverse-mode gradients."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import DomainError, ShapeError, StateError
from . import layers as L
from .rng import substream

LEAKY_SLOPE = 0.2
BN_EPS = 1e-5
BN_MOMENTUM = 0.9

_PARAM_KINDS = {"conv3x3_pad1", "deconv2x2_stride2", "fully_connected", "batch_norm"}


@dataclass(frozen=True)
class Node:
    name: str
    kind: str
    inputs: tuple[str, ...]
    attrs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "inputs": list(self.inputs), "attrs": self.attrs}


@dataclass
class ComputeGraph:
    """A DAG of layers plus its parameters and batch-norm buffers.

    ``inputs`` maps each graph input name to its channel count.  Nodes are kept
    in topological order.  Parameters live in ``params[node][key]``.
    """

    inputs: dict[str, int]
    nodes: list[Node]
    output: str
    params: dict[str, dict[str, np.ndarray]]
    buffers: dict[str, dict[str, np.ndarray]]
    dtype: str = "float32"
    frozen: bool = False
    meta: dict = field(default_factory=dict)

    def node(self, name: str) -> Node:
        for nd in self.nodes:
            if nd.name == name:
                return nd
        raise KeyError(name)

    def topology(self) -> dict:
        return {
            "inputs": self.inputs,
            "nodes": [nd.to_dict() for nd in self.nodes],
            "output": self.output,
            "dtype": self.dtype,
        }

    def topology_hash(self) -> str:
        blob = json.dumps(self.topology(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def parameter_count(self) -> int:
        return sum(int(a.size) for group in self.params.values() for a in group.values())

    def checksum(self) -> str:
        """SHA-256 over every parameter and buffer, in a fixed order."""
        h = hashlib.sha256()
        for store in (self.params, self.buffers):
            for node in sorted(store):
                for key in sorted(store[node]):
                    arr = np.ascontiguousarray(store[node][key])
                    h.update(f"{node}/{key}/{arr.dtype.str}/{arr.shape}".encode())
                    h.update(arr.tobytes())
        return h.hexdigest()

    def copy(self) -> "ComputeGraph":
        return copy.deepcopy(self)

    def layer_kinds(self) -> list[str]:
        return [nd.kind for nd in self.nodes]


@dataclass
class Tape:
    """Everything ``backward`` needs from one forward pass."""

    graph_token: tuple[int, str]
    mode: str
    output: str
    order: list[str]
    input_names: list[str]
    caches: dict = field(repr=False)
    new_buffers: dict = field(default_factory=dict, repr=False)


@dataclass
class Gradients:
    params: dict[str, dict[str, np.ndarray]]
    inputs: dict[str, np.ndarray]

    def flat(self) -> list[np.ndarray]:
        return [self.params[n][k] for n in sorted(self.params) for k in sorted(self.params[n])]


class GraphBuilder:
    """Incrementally declares layers and initializes their parameters.

    Weights use He-uniform fan-in initialization, biases start at zero and
    batch-norm scale/shift at 1/0.  ``rng`` must be a numpy Generator.
    """

    def __init__(self, rng: np.random.Generator, dtype: str = "float32"):
        self.rng = rng
        self.dtype = dtype
        self.inputs: dict[str, int] = {}
        self.nodes: list[Node] = []
        self.params: dict[str, dict[str, np.ndarray]] = {}
        self.buffers: dict[str, dict[str, np.ndarray]] = {}
        self.shapes: dict[str, tuple] = {}  # name -> (channels, h, w); h/w may be None
        self._counter: dict[str, int] = {}

    def _name(self, kind: str, name: str | None) -> str:
        if name is None:
            self._counter[kind] = self._counter.get(kind, 0) + 1
            name = f"{kind}_{self._counter[kind]}"
        if name in self.shapes:
            raise ValueError(f"duplicate node name {name!r}")
        return name

    def _uniform(self, fan_in: int, shape) -> np.ndarray:
        bound = math.sqrt(6.0 / fan_in)
        return self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)

    def _add(self, name, kind, inputs, attrs, shape):
        self.nodes.append(Node(name, kind, tuple(inputs), attrs))
        self.shapes[name] = shape
        return name

    def input(self, name: str, channels: int, height: int | None = None, width: int | None = None) -> str:
        if channels <= 0:
            raise DomainError("input channel count must be positive")
        self.inputs[name] = channels
        self.shapes[name] = (channels, height, width)
        return name

    def conv3x3(self, x: str, out_channels: int, name: str | None = None) -> str:
        name = self._name("conv", name)
        c, h, w = self.shapes[x]
        self.params[name] = {
            "weight": self._uniform(c * 9, (out_channels, c, 3, 3)),
            "bias": np.zeros(out_channels, dtype=self.dtype),
        }
        attrs = {"in_channels": c, "out_channels": out_channels}
        return self._add(name, "conv3x3_pad1", [x], attrs, (out_channels, h, w))

    def deconv2x2(self, x: str, out_channels: int, name: str | None = None) -> str:
        name = self._name("deconv", name)
        c, h, w = self.shapes[x]
        self.params[name] = {
            "weight": self._uniform(c, (c, out_channels, 2, 2)),
            "bias": np.zeros(out_channels, dtype=self.dtype),
        }
        attrs = {"in_channels": c, "out_channels": out_channels}
        out_shape = (out_channels, None if h is None else 2 * h, None if w is None else 2 * w)
        return self._add(name, "deconv2x2_stride2", [x], attrs, out_shape)

    def batch_norm(self, x: str, name: str | None = None, eps: float = BN_EPS, momentum: float = BN_MOMENTUM) -> str:
        name = self._name("bn", name)
        c = self.shapes[x][0]
        self.params[name] = {
            "gamma": np.ones(c, dtype=self.dtype),
            "beta": np.zeros(c, dtype=self.dtype),
        }
        self.buffers[name] = {
            "running_mean": np.zeros(c, dtype=self.dtype),
            "running_var": np.ones(c, dtype=self.dtype),
        }
        attrs = {"channels": c, "eps": eps, "momentum": momentum}
        return self._add(name, "batch_norm", [x], attrs, self.shapes[x])

    def leaky_relu(self, x: str, slope: float = LEAKY_SLOPE, name: str | None = None) -> str:
        if not 0.0 < slope < 1.0:
            raise DomainError("leaky slope must lie in (0, 1)")
        name = self._name("lrelu", name)
        return self._add(name, "leaky_relu", [x], {"slope": slope}, self.shapes[x])

    def max_pool(self, x: str, name: str | None = None) -> str:
        name = self._name("pool", name)
        c, h, w = self.shapes[x]
        out_shape = (c, None if h is None else h // 2, None if w is None else w // 2)
        if (h is not None and h < 2) or (w is not None and w < 2):
            raise ShapeError(f"{name}: cannot pool a {h}x{w} feature map")
        return self._add(name, "max_pool2x2", [x], {}, out_shape)

    def fully_connected(self, x: str, units: int, name: str | None = None) -> str:
        name = self._name("fc", name)
        c, h, w = self.shapes[x]
        if h is None or w is None:
            raise ShapeError(f"{name}: fully connected layer needs a known input size")
        fan_in = c * h * w
        if fan_in <= 0 or units <= 0:
            raise ShapeError(f"{name}: degenerate layer {fan_in} -> {units}")
        self.params[name] = {
            "weight": self._uniform(fan_in, (units, fan_in)),
            "bias": np.zeros(units, dtype=self.dtype),
        }
        attrs = {"in_features": fan_in, "units": units}
        return self._add(name, "fully_connected", [x], attrs, (units, 1, 1))

    def dropout(self, x: str, p: float = 0.5, name: str | None = None) -> str:
        if not 0.0 <= p < 1.0:
            raise DomainError("dropout probability must lie in [0, 1)")
        name = self._name("dropout", name)
        return self._add(name, "dropout", [x], {"p": p}, self.shapes[x])

    def concat(self, xs: list[str], name: str | None = None) -> str:
        name = self._name("concat", name)
        spatial = {self.shapes[x][1:] for x in xs}
        if len(spatial) != 1:
            raise ShapeError(f"{name}: cannot concatenate spatial sizes {sorted(map(str, spatial))}")
        c = sum(self.shapes[x][0] for x in xs)
        return self._add(name, "concat_channels", xs, {}, (c,) + spatial.pop())

    def sigmoid(self, x: str, name: str | None = None) -> str:
        name = self._name("sigmoid", name)
        return self._add(name, "sigmoid", [x], {}, self.shapes[x])

    def build(self, output: str, meta: dict | None = None) -> ComputeGraph:
        return ComputeGraph(
            inputs=dict(self.inputs),
            nodes=list(self.nodes),
            output=output,
            params=self.params,
            buffers=self.buffers,
            dtype=self.dtype,
            meta=dict(meta or {}),
        )


def _needed(graph: ComputeGraph, output: str) -> list[Node]:
    required = {output}
    for nd in reversed(graph.nodes):
        if nd.name in required:
            required.update(nd.inputs)
    return [nd for nd in graph.nodes if nd.name in required]


def _as_inputs(graph: ComputeGraph, inputs) -> dict[str, np.ndarray]:
    if not isinstance(inputs, Mapping):
        if len(graph.inputs) != 1:
            raise ShapeError(f"graph has inputs {list(graph.inputs)}; pass a mapping")
        inputs = {next(iter(graph.inputs)): inputs}
    out = {}
    for name, channels in graph.inputs.items():
        if name not in inputs:
            raise ShapeError(f"missing graph input {name!r}")
        x = np.asarray(inputs[name], dtype=graph.dtype)
        if x.ndim != 4:
            raise ShapeError(f"input {name!r} must be (N, C, H, W), got shape {x.shape}")
        if x.shape[1] != channels:
            raise ShapeError(f"input {name!r} expects {channels} channels, got {x.shape[1]}")
        out[name] = x
    return out


def forward(graph: ComputeGraph, inputs, mode: str = "eval", rng_seed: int = 0,
            output: str | None = None) -> tuple[np.ndarray, Tape]:
    """Evaluate ``graph`` up to ``output`` (default: the graph output).

    In ``train`` mode batch norm uses batch statistics (updated running
    statistics are returned on the tape, see :func:`commit_buffers`) and
    dropout draws masks from a stream derived from ``rng_seed`` and the node
    name.  ``eval`` mode is deterministic.
    """
    if mode not in ("train", "eval"):
        raise DomainError(f"mode must be 'train' or 'eval', got {mode!r}")
    output = output or graph.output
    train = mode == "train"
    values: dict[str, np.ndarray] = dict(_as_inputs(graph, inputs))
    caches: dict[str, object] = {}
    new_buffers: dict[str, dict[str, np.ndarray]] = {}
    order = []
    for nd in _needed(graph, output):
        xs = [values[i] for i in nd.inputs]
        x = xs[0]
        k = nd.kind
        p = graph.params.get(nd.name)
        try:
            if k == "conv3x3_pad1":
                if x.shape[1] != nd.attrs["in_channels"]:
                    raise ShapeError(f"expects {nd.attrs['in_channels']} channels, got {x.shape[1]}")
                y, c = L.conv3x3_forward(x, p["weight"], p["bias"])
            elif k == "deconv2x2_stride2":
                if x.shape[1] != nd.attrs["in_channels"]:
                    raise ShapeError(f"expects {nd.attrs['in_channels']} channels, got {x.shape[1]}")
                y, c = L.deconv2x2_forward(x, p["weight"], p["bias"])
            elif k == "batch_norm":
                b = graph.buffers[nd.name]
                if x.shape[1] != nd.attrs["channels"]:
                    raise ShapeError(f"expects {nd.attrs['channels']} channels, got {x.shape[1]}")
                y, c, stats = L.batch_norm_forward(
                    x, p["gamma"], p["beta"], b["running_mean"], b["running_var"],
                    train, nd.attrs["eps"], nd.attrs["momentum"],
                )
                if stats is not None:
                    new_buffers[nd.name] = {"running_mean": stats[0], "running_var": stats[1]}
            elif k == "leaky_relu":
                y, c = L.leaky_relu_forward(x, nd.attrs["slope"])
            elif k == "max_pool2x2":
                if x.shape[2] < 2 or x.shape[3] < 2:
                    raise ShapeError(f"cannot pool a {x.shape[2]}x{x.shape[3]} feature map")
                y, c = L.max_pool2x2_forward(x)
            elif k == "fully_connected":
                features = int(np.prod(x.shape[1:]))
                if features != nd.attrs["in_features"]:
                    raise ShapeError(f"expects {nd.attrs['in_features']} features, got {features} from {x.shape[1:]}")
                y, c = L.fully_connected_forward(x, p["weight"], p["bias"])
            elif k == "dropout":
                rng = substream(rng_seed, "dropout", nd.name) if train else None
                y, c = L.dropout_forward(x, nd.attrs["p"], train, rng)
            elif k == "concat_channels":
                if len({v.shape[2:] for v in xs}) != 1 or len({v.shape[0] for v in xs}) != 1:
                    raise ShapeError(f"mismatched shapes {[v.shape for v in xs]}")
                y, c = L.concat_forward(xs)
            elif k == "sigmoid":
                y, c = L.sigmoid_forward(x)
            else:
                raise StateError(f"unknown layer kind {k!r}")
        except ShapeError as exc:
            raise ShapeError(f"layer {nd.name!r} ({k}): {exc}") from None
        values[nd.name] = y.astype(graph.dtype, copy=False)
        caches[nd.name] = c
        order.append(nd.name)
    tape = Tape(
        graph_token=(id(graph), graph.topology_hash()),
        mode=mode,
        output=output,
        order=order,
        input_names=list(graph.inputs),
        caches=caches,
        new_buffers=new_buffers,
    )
    return values[output], tape


def backward(graph: ComputeGraph, tape: Tape, output_grad: np.ndarray) -> Gradients:
    """Reverse pass over ``tape``.

    Returns gradients for every parameter (zeros for a frozen graph) and for
    every graph input.  Parameters are never modified.
    """
    if tape.graph_token != (id(graph), graph.topology_hash()):
        raise StateError("tape was recorded on a different graph")
    grads: dict[str, np.ndarray] = {tape.output: np.asarray(output_grad, dtype=graph.dtype)}
    pgrads: dict[str, dict[str, np.ndarray]] = {}
    for name in reversed(tape.order):
        nd = graph.node(name)
        dy = grads.pop(name, None)
        if dy is None:
            continue
        c = tape.caches[name]
        k = nd.kind
        if k == "conv3x3_pad1":
            dx, dw, db = L.conv3x3_backward(dy, c)
            pgrads[name] = {"weight": dw, "bias": db}
            dxs = [dx]
        elif k == "deconv2x2_stride2":
            dx, dw, db = L.deconv2x2_backward(dy, c)
            pgrads[name] = {"weight": dw, "bias": db}
            dxs = [dx]
        elif k == "batch_norm":
            dx, dg, dbeta = L.batch_norm_backward(dy, c)
            pgrads[name] = {"gamma": dg, "beta": dbeta}
            dxs = [dx]
        elif k == "leaky_relu":
            dxs = [L.leaky_relu_backward(dy, c)]
        elif k == "max_pool2x2":
            dxs = [L.max_pool2x2_backward(dy, c)]
        elif k == "fully_connected":
            dx, dw, db = L.fully_connected_backward(dy, c)
            pgrads[name] = {"weight": dw, "bias": db}
            dxs = [dx]
        elif k == "dropout":
            dxs = [L.dropout_backward(dy, c)]
        elif k == "concat_channels":
            dxs = L.concat_backward(dy, c)
        elif k == "sigmoid":
            dxs = [L.sigmoid_backward(dy, c)]
        else:
            raise StateError(f"unknown layer kind {k!r}")
        for src, g in zip(nd.inputs, dxs):
            if src in grads:
                grads[src] = grads[src] + g
            else:
                grads[src] = g

    params = {}
    for node, group in graph.params.items():
        params[node] = {}
        for key, value in group.items():
            g = pgrads.get(node, {}).get(key)
            if g is None or graph.frozen:
                g = np.zeros_like(value)
            params[node][key] = g.astype(value.dtype, copy=False)
    inputs = {}
    for name in tape.input_names:
        if name in grads:
            inputs[name] = grads[name]
    return Gradients(params=params, inputs=inputs)


def commit_buffers(graph: ComputeGraph, tape: Tape) -> None:
    """Adopt the batch-norm running statistics recorded by a train-mode forward."""
    if tape.graph_token[1] != graph.topology_hash():
        raise StateError("tape was recorded on a different graph")
    for node, stats in tape.new_buffers.items():
        graph.buffers[node] = {k: v.astype(graph.dtype) for k, v in stats.items()}
