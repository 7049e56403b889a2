"""Two's-complement fixed-point formats and model quantization.

A format Qn.f stores a real as an n-bit signed integer code with f
fractional bits: value = code * 2^-f, codes in [-2^(n-1), 2^(n-1)-1].
Weight quantization rounds half to even and saturates; values never wrap.
The in-datapath rounding (round half up) lives in fixsim, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model_ir
from .model_ir import Activation, Linear, Lstm, ModelGraph


class NonFiniteInput(ValueError):
    """Quantization input is NaN or infinite."""


class CodeOutOfRange(ValueError):
    """Integer code outside the format's representable range."""


@dataclass(frozen=True)
class FixedPointFormat:
    total_bits: int
    frac_bits: int

    def __post_init__(self) -> None:
        if not 2 <= self.total_bits <= 32:
            raise ValueError(f"total_bits {self.total_bits} outside [2, 32]")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(
                f"frac_bits {self.frac_bits} outside [0, {self.total_bits - 1}]"
            )

    @property
    def min_code(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_code(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return math.ldexp(self.min_code, -self.frac_bits)

    @property
    def max_value(self) -> float:
        return math.ldexp(self.max_code, -self.frac_bits)

    @classmethod
    def from_flag(cls, text: str) -> "FixedPointFormat":
        """Parse the CLI notation, e.g. '16.8' -> 16 total bits, 8 fractional."""
        head, _, tail = text.partition(".")
        try:
            return cls(int(head), int(tail))
        except ValueError as exc:
            raise ValueError(f"bad fixed-point format {text!r}: {exc}") from exc

    def __str__(self) -> str:
        return f"{self.total_bits}.{self.frac_bits}"


DEFAULT_FORMAT = FixedPointFormat(16, 8)


def quantize_value(x: float, fmt: FixedPointFormat) -> tuple[int, bool]:
    """Quantize one real; returns (code, saturated).

    Scaling by 2^f is exact in binary floating point, so Python's
    round-half-to-even on the scaled value is the exact grid rounding.
    """
    x = float(x)
    if not math.isfinite(x):
        raise NonFiniteInput(f"cannot quantize non-finite value {x!r}")
    scaled = x * float(1 << fmt.frac_bits)
    code = round(scaled)
    if code > fmt.max_code:
        return fmt.max_code, True
    if code < fmt.min_code:
        return fmt.min_code, True
    return code, False


def to_fixed(x: float, fmt: FixedPointFormat) -> int:
    return quantize_value(x, fmt)[0]


def dequantize(code: int, fmt: FixedPointFormat) -> float:
    """Exact real value of a code (code * 2^-f is always a double)."""
    code = int(code)
    if not fmt.min_code <= code <= fmt.max_code:
        raise CodeOutOfRange(f"code {code} outside [{fmt.min_code}, {fmt.max_code}]")
    return math.ldexp(code, -fmt.frac_bits)


# ---------------------------------------------------------------------------
# quantized model containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantizedTensor:
    codes: tuple[int, ...]  # flat, row-major
    shape: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.codes)


@dataclass(frozen=True)
class QuantizedLinear:
    in_features: int
    out_features: int
    weights: QuantizedTensor  # [out, in]
    bias: QuantizedTensor  # [out]


@dataclass(frozen=True)
class QuantizedLstm:
    input_size: int
    hidden_size: int
    steps: int
    gate_weights: QuantizedTensor  # [4h, in+h]
    gate_bias: QuantizedTensor  # [4h]


QuantizedLayer = QuantizedLinear | QuantizedLstm | Activation


@dataclass(frozen=True)
class QuantizedModel:
    graph: ModelGraph
    layers: tuple[QuantizedLayer, ...]
    fmt: FixedPointFormat


@dataclass(frozen=True)
class TensorStats:
    name: str
    max_abs_error: float
    mse: float
    saturations: int


@dataclass(frozen=True)
class QuantizationReport:
    fmt: FixedPointFormat
    tensors: tuple[TensorStats, ...]

    @property
    def total_saturations(self) -> int:
        return sum(t.saturations for t in self.tensors)

    @property
    def worst_max_abs_error(self) -> float:
        return max((t.max_abs_error for t in self.tensors), default=0.0)

    @property
    def worst_mse(self) -> float:
        return max((t.mse for t in self.tensors), default=0.0)

    def to_dict(self) -> dict:
        return {
            "format": str(self.fmt),
            "tensors": [
                {
                    "name": t.name,
                    "max_abs_error": t.max_abs_error,
                    "mse": t.mse,
                    "saturations": t.saturations,
                }
                for t in self.tensors
            ],
            "total_saturations": self.total_saturations,
            "worst_max_abs_error": self.worst_max_abs_error,
            "worst_mse": self.worst_mse,
        }


def quantize_tensor(
    name: str, arr: np.ndarray, fmt: FixedPointFormat
) -> tuple[QuantizedTensor, TensorStats]:
    flat = np.asarray(arr, dtype=np.float64).reshape(-1)
    codes = []
    saturations = 0
    max_err = 0.0
    sq_sum = 0.0
    for x in flat:
        try:
            code, saturated = quantize_value(float(x), fmt)
        except NonFiniteInput as exc:
            raise NonFiniteInput(f"{name}: {exc}") from exc
        codes.append(code)
        saturations += saturated
        err = abs(float(x) - dequantize(code, fmt))
        max_err = max(max_err, err)
        sq_sum += err * err
    mse = sq_sum / len(flat) if len(flat) else 0.0
    tensor = QuantizedTensor(codes=tuple(codes), shape=tuple(arr.shape))
    return tensor, TensorStats(name, max_err, mse, saturations)


def quantize_model(
    graph: ModelGraph, fmt: FixedPointFormat
) -> tuple[QuantizedModel, QuantizationReport]:
    """Quantize every weight tensor; error stats are reported per tensor.

    With zero saturations the max abs error is at most 2^-(f+1) (half of
    one code step), which the report consumer may rely on.
    """
    layers: list[QuantizedLayer] = []
    stats: list[TensorStats] = []
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, Linear):
            w, ws = quantize_tensor(f"layers[{idx}].weights", layer.weights, fmt)
            b, bs = quantize_tensor(f"layers[{idx}].bias", layer.bias, fmt)
            layers.append(
                QuantizedLinear(layer.in_features, layer.out_features, w, b)
            )
            stats += [ws, bs]
        elif isinstance(layer, Lstm):
            w, ws = quantize_tensor(
                f"layers[{idx}].gate_weights", layer.gate_weights, fmt
            )
            b, bs = quantize_tensor(f"layers[{idx}].gate_bias", layer.gate_bias, fmt)
            layers.append(
                QuantizedLstm(
                    layer.input_size, layer.hidden_size, layer.steps, w, b
                )
            )
            stats += [ws, bs]
        else:
            layers.append(layer)
    qmodel = QuantizedModel(graph=graph, layers=tuple(layers), fmt=fmt)
    return qmodel, QuantizationReport(fmt=fmt, tensors=tuple(stats))


# ---------------------------------------------------------------------------
# portable payload (embedded in accelerator manifests)
# ---------------------------------------------------------------------------


def model_payload(qmodel: QuantizedModel) -> dict:
    """JSON-safe dict carrying structure plus integer weight codes."""
    layers = []
    for layer in qmodel.layers:
        if isinstance(layer, QuantizedLinear):
            layers.append(
                {
                    "kind": model_ir.LINEAR_KIND,
                    "in_features": layer.in_features,
                    "out_features": layer.out_features,
                    "weights": list(layer.weights.codes),
                    "bias": list(layer.bias.codes),
                }
            )
        elif isinstance(layer, QuantizedLstm):
            layers.append(
                {
                    "kind": model_ir.LSTM_KIND,
                    "input_size": layer.input_size,
                    "hidden_size": layer.hidden_size,
                    "steps": layer.steps,
                    "gate_weights": list(layer.gate_weights.codes),
                    "gate_bias": list(layer.gate_bias.codes),
                }
            )
        else:
            layers.append(
                {"kind": model_ir.ACTIVATION_KIND, "activation": layer.activation}
            )
    return {
        "name": qmodel.graph.name,
        "input_shape": list(qmodel.graph.input_shape),
        "format": {"total_bits": qmodel.fmt.total_bits, "frac_bits": qmodel.fmt.frac_bits},
        "layers": layers,
    }


def model_from_payload(payload: dict) -> QuantizedModel:
    """Rebuild a QuantizedModel from a manifest payload.

    The reconstructed graph carries dequantized float weights, so the
    structural metadata (shapes, op counts) is intact.
    """
    fmt = FixedPointFormat(
        int(payload["format"]["total_bits"]), int(payload["format"]["frac_bits"])
    )
    glayers: list[model_ir.LayerSpec] = []
    qlayers: list[QuantizedLayer] = []
    for entry in payload["layers"]:
        kind = entry["kind"]
        if kind == model_ir.LINEAR_KIND:
            n_in, n_out = int(entry["in_features"]), int(entry["out_features"])
            w = QuantizedTensor(tuple(int(c) for c in entry["weights"]), (n_out, n_in))
            b = QuantizedTensor(tuple(int(c) for c in entry["bias"]), (n_out,))
            if len(w.codes) != n_in * n_out or len(b.codes) != n_out:
                raise CodeOutOfRange("linear payload has wrong code counts")
            qlayers.append(QuantizedLinear(n_in, n_out, w, b))
            glayers.append(
                Linear(
                    n_in,
                    n_out,
                    np.array([dequantize(c, fmt) for c in w.codes]).reshape(n_out, n_in),
                    np.array([dequantize(c, fmt) for c in b.codes]),
                )
            )
        elif kind == model_ir.LSTM_KIND:
            n_in = int(entry["input_size"])
            h = int(entry["hidden_size"])
            steps = int(entry["steps"])
            w = QuantizedTensor(
                tuple(int(c) for c in entry["gate_weights"]), (4 * h, n_in + h)
            )
            b = QuantizedTensor(tuple(int(c) for c in entry["gate_bias"]), (4 * h,))
            if len(w.codes) != 4 * h * (n_in + h) or len(b.codes) != 4 * h:
                raise CodeOutOfRange("lstm payload has wrong code counts")
            qlayers.append(QuantizedLstm(n_in, h, steps, w, b))
            glayers.append(
                Lstm(
                    n_in,
                    h,
                    steps,
                    np.array([dequantize(c, fmt) for c in w.codes]).reshape(
                        4 * h, n_in + h
                    ),
                    np.array([dequantize(c, fmt) for c in b.codes]),
                )
            )
        elif kind == model_ir.ACTIVATION_KIND:
            layer = Activation(activation=entry["activation"])
            qlayers.append(layer)
            glayers.append(layer)
        else:
            raise model_ir.UnknownLayerKind(f"payload layer kind {kind!r}")
    graph = ModelGraph(
        name=str(payload.get("name", "model")),
        input_shape=tuple(int(d) for d in payload["input_shape"]),
        layers=tuple(glayers),
    )
    return QuantizedModel(graph=graph, layers=tuple(qlayers), fmt=fmt)
