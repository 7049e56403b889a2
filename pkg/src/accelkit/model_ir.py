"""Interchange model: layer specs, JSON parsing, validation, float inference.

The on-disk format is a UTF-8 JSON document::

    {
      "name": "tiny",
      "input_shape": [2],
      "layers": [
        {"kind": "linear", "in_features": 2, "out_features": 1,
         "weights": [[0.5, -0.25]], "bias": [0.0]}
      ]
    }

Layers form a linear chain; the output length of layer k must equal the
input length of layer k+1.  Three layer kinds exist:

* ``linear``      - dense y = W x + b, weights [out, in] row-major
* ``lstm``        - recurrent cell unrolled over ``steps``; gate rows are
                    stacked i, f, g, o into gate_weights [4h, in+h] and the
                    input is the step-major flattened sequence
* ``activation``  - elementwise hard_sigmoid / hard_tanh / relu

``infer_float`` is the float64 reference the rest of the toolchain is
checked against.  Recurrent gates use hard activations (clamped linear
segments) because those are what the generated hardware computes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

HARD_SIGMOID = "hard_sigmoid"
HARD_TANH = "hard_tanh"
RELU = "relu"
ACTIVATION_KINDS = (HARD_SIGMOID, HARD_TANH, RELU)

LINEAR_KIND = "linear"
LSTM_KIND = "lstm"
ACTIVATION_KIND = "activation"


class ModelError(Exception):
    """Base class for model ingestion and inference failures."""


class MalformedDocument(ModelError):
    """Document is not valid JSON or violates the schema."""


class UnknownLayerKind(ModelError):
    """Layer kind (or activation function) outside the supported set."""


class ShapeMismatch(ModelError):
    """Declared dimensions disagree with tensors or with the layer chain."""

    def __init__(self, message: str, layer: int):
        super().__init__(message)
        self.layer = layer


class InputLengthMismatch(ModelError):
    """Inference input vector does not match the model's input length."""


@dataclass(frozen=True, eq=False)
class Linear:
    in_features: int
    out_features: int
    weights: np.ndarray  # [out_features, in_features]
    bias: np.ndarray  # [out_features]

    kind = LINEAR_KIND

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class Lstm:
    input_size: int
    hidden_size: int
    steps: int
    gate_weights: np.ndarray  # [4*hidden_size, input_size+hidden_size], rows i,f,g,o
    gate_bias: np.ndarray  # [4*hidden_size]

    kind = LSTM_KIND

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "gate_weights", np.asarray(self.gate_weights, dtype=np.float64)
        )
        object.__setattr__(self, "gate_bias", np.asarray(self.gate_bias, dtype=np.float64))


@dataclass(frozen=True)
class Activation:
    activation: str

    kind = ACTIVATION_KIND


LayerSpec = Linear | Lstm | Activation


@dataclass(frozen=True, eq=False)
class ModelGraph:
    name: str
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]

    @property
    def input_len(self) -> int:
        return int(np.prod(self.input_shape)) if self.input_shape else 0

    @property
    def output_len(self) -> int:
        return io_lengths(self)[-1][1] if self.layers else self.input_len


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    layer: int | None = None


# ---------------------------------------------------------------------------
# shape bookkeeping
# ---------------------------------------------------------------------------


def layer_io(layer: LayerSpec, incoming: int) -> tuple[int, int]:
    """Return (expected_input_len, output_len) for one layer.

    Activation layers have no dimensions of their own; they inherit the
    incoming length.
    """
    if isinstance(layer, Linear):
        return layer.in_features, layer.out_features
    if isinstance(layer, Lstm):
        return layer.steps * layer.input_size, layer.hidden_size
    return incoming, incoming


def io_lengths(graph: ModelGraph) -> list[tuple[int, int]]:
    """Per-layer (input_len, output_len) assuming a valid chain."""
    lens = []
    cur = graph.input_len
    for layer in graph.layers:
        expected, out = layer_io(layer, cur)
        lens.append((expected, out))
        cur = out
    return lens


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _tensor_issues(name: str, arr: np.ndarray, shape: tuple[int, ...], idx: int) -> list[Diagnostic]:
    issues = []
    if arr.shape != shape:
        issues.append(
            Diagnostic(
                "error",
                "ShapeMismatch",
                f"layer {idx}: {name} has shape {list(arr.shape)}, expected {list(shape)}",
                idx,
            )
        )
    elif not np.all(np.isfinite(arr)):
        issues.append(
            Diagnostic(
                "error",
                "NonFiniteWeight",
                f"layer {idx}: {name} contains a non-finite value",
                idx,
            )
        )
    return issues


def validate(graph: ModelGraph) -> list[Diagnostic]:
    """Check every structural invariant; diagnostics are ordered by layer."""
    issues: list[Diagnostic] = []
    if not graph.layers:
        issues.append(Diagnostic("error", "EmptyGraph", "model has no layers", None))
    if not graph.input_shape or any(d < 1 for d in graph.input_shape):
        issues.append(
            Diagnostic(
                "error",
                "BadInputShape",
                f"input_shape {list(graph.input_shape)} must be non-empty positive integers",
                None,
            )
        )

    cur = graph.input_len
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, Linear):
            if layer.in_features < 1 or layer.out_features < 1:
                issues.append(
                    Diagnostic(
                        "error",
                        "DimensionZero",
                        f"layer {idx}: linear dims {layer.in_features}x{layer.out_features} must be >= 1",
                        idx,
                    )
                )
            else:
                issues += _tensor_issues(
                    "weights", layer.weights, (layer.out_features, layer.in_features), idx
                )
                issues += _tensor_issues("bias", layer.bias, (layer.out_features,), idx)
        elif isinstance(layer, Lstm):
            if layer.input_size < 1 or layer.hidden_size < 1 or layer.steps < 1:
                issues.append(
                    Diagnostic(
                        "error",
                        "DimensionZero",
                        f"layer {idx}: lstm dims in={layer.input_size} h={layer.hidden_size} "
                        f"steps={layer.steps} must be >= 1",
                        idx,
                    )
                )
            else:
                h = layer.hidden_size
                issues += _tensor_issues(
                    "gate_weights",
                    layer.gate_weights,
                    (4 * h, layer.input_size + h),
                    idx,
                )
                issues += _tensor_issues("gate_bias", layer.gate_bias, (4 * h,), idx)
        elif isinstance(layer, Activation):
            if layer.activation not in ACTIVATION_KINDS:
                issues.append(
                    Diagnostic(
                        "error",
                        "UnknownActivation",
                        f"layer {idx}: activation {layer.activation!r} not in {list(ACTIVATION_KINDS)}",
                        idx,
                    )
                )

        expected, out = layer_io(layer, cur)
        if expected != cur:
            issues.append(
                Diagnostic(
                    "error",
                    "ShapeMismatch",
                    f"layer {idx}: expects input length {expected}, chain provides {cur}",
                    idx,
                )
            )
        cur = out

    issues.sort(key=lambda d: (-1 if d.layer is None else d.layer))
    return issues


# ---------------------------------------------------------------------------
# parse / serialize
# ---------------------------------------------------------------------------


def _require(entry: dict, key: str, idx: int):
    if key not in entry:
        raise MalformedDocument(f"layer {idx}: missing required key {key!r}")
    return entry[key]


def _as_array(value, idx: int, key: str) -> np.ndarray:
    try:
        return np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise MalformedDocument(f"layer {idx}: {key} is not a numeric array: {exc}") from exc


def build_graph(document: bytes | str) -> ModelGraph:
    """Structurally parse an interchange JSON document, without validation.

    Raises MalformedDocument or UnknownLayerKind on structural problems;
    shape consistency is left to ``validate``.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be a JSON object")
    for key in ("name", "input_shape", "layers"):
        if key not in doc:
            raise MalformedDocument(f"missing top-level key {key!r}")
    name = doc["name"]
    if not isinstance(name, str):
        raise MalformedDocument("name must be a string")
    shape = doc["input_shape"]
    if not isinstance(shape, list) or not all(isinstance(d, int) for d in shape):
        raise MalformedDocument("input_shape must be a list of integers")
    if not isinstance(doc["layers"], list):
        raise MalformedDocument("layers must be a list")

    layers: list[LayerSpec] = []
    for idx, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict):
            raise MalformedDocument(f"layer {idx}: must be a JSON object")
        kind = entry.get("kind")
        if kind == LINEAR_KIND:
            layers.append(
                Linear(
                    in_features=int(_require(entry, "in_features", idx)),
                    out_features=int(_require(entry, "out_features", idx)),
                    weights=_as_array(_require(entry, "weights", idx), idx, "weights"),
                    bias=_as_array(_require(entry, "bias", idx), idx, "bias"),
                )
            )
        elif kind == LSTM_KIND:
            layers.append(
                Lstm(
                    input_size=int(_require(entry, "input_size", idx)),
                    hidden_size=int(_require(entry, "hidden_size", idx)),
                    steps=int(_require(entry, "steps", idx)),
                    gate_weights=_as_array(
                        _require(entry, "gate_weights", idx), idx, "gate_weights"
                    ),
                    gate_bias=_as_array(_require(entry, "gate_bias", idx), idx, "gate_bias"),
                )
            )
        elif kind == ACTIVATION_KIND:
            fn = _require(entry, "activation", idx)
            if fn not in ACTIVATION_KINDS:
                raise UnknownLayerKind(f"layer {idx}: unsupported activation {fn!r}")
            layers.append(Activation(activation=fn))
        else:
            raise UnknownLayerKind(f"layer {idx}: unsupported kind {kind!r}")

    return ModelGraph(name=name, input_shape=tuple(shape), layers=tuple(layers))


def parse_model(document: bytes | str) -> ModelGraph:
    """Parse and validate an interchange JSON document."""
    graph = build_graph(document)
    errors = [d for d in validate(graph) if d.severity == "error"]
    if errors:
        first = errors[0]
        if first.code == "ShapeMismatch":
            raise ShapeMismatch(first.message, first.layer if first.layer is not None else -1)
        raise MalformedDocument("; ".join(d.message for d in errors))
    return graph


def to_document(graph: ModelGraph) -> dict:
    """Plain-dict form of a graph, ready for json.dumps."""
    layers = []
    for layer in graph.layers:
        if isinstance(layer, Linear):
            layers.append(
                {
                    "kind": LINEAR_KIND,
                    "in_features": layer.in_features,
                    "out_features": layer.out_features,
                    "weights": layer.weights.tolist(),
                    "bias": layer.bias.tolist(),
                }
            )
        elif isinstance(layer, Lstm):
            layers.append(
                {
                    "kind": LSTM_KIND,
                    "input_size": layer.input_size,
                    "hidden_size": layer.hidden_size,
                    "steps": layer.steps,
                    "gate_weights": layer.gate_weights.tolist(),
                    "gate_bias": layer.gate_bias.tolist(),
                }
            )
        else:
            layers.append({"kind": ACTIVATION_KIND, "activation": layer.activation})
    return {"name": graph.name, "input_shape": list(graph.input_shape), "layers": layers}


def serialize_model(graph: ModelGraph) -> bytes:
    """Inverse of parse_model: float values round-trip exactly."""
    return (json.dumps(to_document(graph), indent=2) + "\n").encode("utf-8")


def graphs_equal(a: ModelGraph, b: ModelGraph) -> bool:
    if a.name != b.name or a.input_shape != b.input_shape or len(a.layers) != len(b.layers):
        return False
    for la, lb in zip(a.layers, b.layers):
        if type(la) is not type(lb):
            return False
        if isinstance(la, Linear):
            if (
                la.in_features != lb.in_features
                or la.out_features != lb.out_features
                or not np.array_equal(la.weights, lb.weights)
                or not np.array_equal(la.bias, lb.bias)
            ):
                return False
        elif isinstance(la, Lstm):
            if (
                la.input_size != lb.input_size
                or la.hidden_size != lb.hidden_size
                or la.steps != lb.steps
                or not np.array_equal(la.gate_weights, lb.gate_weights)
                or not np.array_equal(la.gate_bias, lb.gate_bias)
            ):
                return False
        elif la.activation != lb.activation:
            return False
    return True


# ---------------------------------------------------------------------------
# operation counting
# ---------------------------------------------------------------------------


def op_count(graph: ModelGraph) -> int:
    """Total scalar operations per inference.

    One multiply-accumulate is 2 ops, a bias add is 1, an activation
    evaluation is 1.  Per layer:

    * linear:     2*in*out + out
    * lstm:       steps * (8*h*(in+h) + 13*h)
                  (gate MACs and bias adds, 4h elementwise mul/add for the
                  cell update, 5h activation evaluations)
    * activation: element count
    """
    total = 0
    for layer, (in_len, _) in zip(graph.layers, io_lengths(graph)):
        if isinstance(layer, Linear):
            total += 2 * layer.in_features * layer.out_features + layer.out_features
        elif isinstance(layer, Lstm):
            h = layer.hidden_size
            total += layer.steps * (8 * h * (layer.input_size + h) + 13 * h)
        else:
            total += in_len
    return total


# ---------------------------------------------------------------------------
# reference float inference
# ---------------------------------------------------------------------------


def hard_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.clip(x / 4.0 + 0.5, 0.0, 1.0)


def hard_tanh(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


_ACTIVATION_FNS = {HARD_SIGMOID: hard_sigmoid, HARD_TANH: hard_tanh, RELU: relu}


def _lstm_forward_float(layer: Lstm, x: np.ndarray) -> np.ndarray:
    h = np.zeros(layer.hidden_size)
    c = np.zeros(layer.hidden_size)
    hs = layer.hidden_size
    for t in range(layer.steps):
        xt = x[t * layer.input_size : (t + 1) * layer.input_size]
        z = layer.gate_weights @ np.concatenate([xt, h]) + layer.gate_bias
        i = hard_sigmoid(z[0:hs])
        f = hard_sigmoid(z[hs : 2 * hs])
        g = hard_tanh(z[2 * hs : 3 * hs])
        o = hard_sigmoid(z[3 * hs : 4 * hs])
        c = f * c + i * g
        h = o * hard_tanh(c)
    return h


def infer_float(graph: ModelGraph, x: Sequence[float]) -> np.ndarray:
    """Float64 reference forward pass over the whole chain."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != graph.input_len:
        raise InputLengthMismatch(
            f"expected input length {graph.input_len}, got {vec.shape}"
        )
    if not np.all(np.isfinite(vec)):
        raise InputLengthMismatch("input contains non-finite values")
    for layer in graph.layers:
        if isinstance(layer, Linear):
            vec = layer.weights @ vec + layer.bias
        elif isinstance(layer, Lstm):
            vec = _lstm_forward_float(layer, vec)
        else:
            vec = _ACTIVATION_FNS[layer.activation](vec)
    return vec
