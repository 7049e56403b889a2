"""Bit-exact fixed-point inference: the golden reference for generated RTL.

Everything here is plain Python integer arithmetic.  Dot products
accumulate exactly at 2f fractional bits (Python ints are wide enough for
any accumulator the hardware needs: 2n + ceil(log2(in+1)) bits), the bias
is pre-shifted by f and added into the accumulator, and each output
element is rounded exactly once: round half up via add-2^(f-1) then
arithmetic shift right, saturating to the n-bit range.  Saturation, never
wraparound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model_ir import (
    ACTIVATION_KINDS,
    Activation,
    HARD_SIGMOID,
    HARD_TANH,
    InputLengthMismatch,
    RELU,
    io_lengths,
)
from .quantize import (
    FixedPointFormat,
    QuantizedLinear,
    QuantizedLstm,
    QuantizedModel,
    to_fixed,
)


class LengthMismatch(ValueError):
    """Vector lengths disagree with the layer's declared dimensions."""


@dataclass
class InferenceStats:
    ops: int = 0  # scalar multiplies, adds and activation evaluations
    saturations: int = 0  # requantize results clipped to the code range


def mac_dot(
    weights: Sequence[int],
    inputs: Sequence[int],
    fmt: FixedPointFormat,
    bias: int = 0,
) -> int:
    """Exact dot product of code vectors plus pre-shifted bias.

    The result carries 2f fractional bits; no rounding happens here.
    """
    if len(weights) != len(inputs):
        raise LengthMismatch(f"dot product of {len(weights)} weights with {len(inputs)} inputs")
    acc = bias << fmt.frac_bits
    for w, x in zip(weights, inputs):
        acc += w * x
    return acc


def requantize_ex(acc: int, fmt: FixedPointFormat) -> tuple[int, bool]:
    """Round an accumulator (2f fractional bits) back to f; returns (code, saturated)."""
    f = fmt.frac_bits
    q = acc if f == 0 else (acc + (1 << (f - 1))) >> f
    if q > fmt.max_code:
        return fmt.max_code, True
    if q < fmt.min_code:
        return fmt.min_code, True
    return q, False


def requantize(acc: int, fmt: FixedPointFormat) -> int:
    return requantize_ex(acc, fmt)[0]


# ---------------------------------------------------------------------------
# hard activations on codes
# ---------------------------------------------------------------------------


def hard_sigmoid_fixed(x: int, fmt: FixedPointFormat) -> int:
    """clamp(x/4 + 0.5, 0, 1) with an arithmetic shift for the /4."""
    v = (x >> 2) + to_fixed(0.5, fmt)
    one = to_fixed(1.0, fmt)
    if v < 0:
        return 0
    if v > one:
        return one
    return v


def hard_tanh_fixed(x: int, fmt: FixedPointFormat) -> int:
    lo = to_fixed(-1.0, fmt)
    hi = to_fixed(1.0, fmt)
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


def relu_fixed(x: int) -> int:
    return x if x > 0 else 0


def apply_activation_fixed(kind: str, x: int, fmt: FixedPointFormat) -> int:
    if kind == HARD_SIGMOID:
        return hard_sigmoid_fixed(x, fmt)
    if kind == HARD_TANH:
        return hard_tanh_fixed(x, fmt)
    if kind == RELU:
        return relu_fixed(x)
    raise ValueError(f"activation {kind!r} not in {list(ACTIVATION_KINDS)}")


# ---------------------------------------------------------------------------
# layer kernels
# ---------------------------------------------------------------------------


def linear_forward(
    layer: QuantizedLinear,
    x: Sequence[int],
    fmt: FixedPointFormat,
    stats: InferenceStats | None = None,
) -> list[int]:
    """y = requantize(W x + b), exactly one rounding per output element."""
    n_in = layer.in_features
    if len(x) != n_in:
        raise LengthMismatch(f"linear expects {n_in} inputs, got {len(x)}")
    w = layer.weights.codes
    out = []
    for r in range(layer.out_features):
        acc = mac_dot(w[r * n_in : (r + 1) * n_in], x, fmt, bias=layer.bias.codes[r])
        code, sat = requantize_ex(acc, fmt)
        out.append(code)
        if stats is not None:
            stats.ops += 2 * n_in + 1
            stats.saturations += sat
    return out


def lstm_step(
    layer: QuantizedLstm,
    x_t: Sequence[int],
    h: Sequence[int],
    c: Sequence[int],
    fmt: FixedPointFormat,
    stats: InferenceStats | None = None,
) -> tuple[list[int], list[int]]:
    """One recurrent step on codes.

    Gate pre-activations are a linear layer over the concatenated [x, h]
    (rows stacked i, f, g, o).  The cell update accumulates the two
    elementwise products at 2f fractional bits and requantizes once, as
    does the hidden update.
    """
    hs = layer.hidden_size
    concat_len = layer.input_size + hs
    if len(x_t) != layer.input_size:
        raise LengthMismatch(f"lstm step expects {layer.input_size} inputs, got {len(x_t)}")
    if len(h) != hs or len(c) != hs:
        raise LengthMismatch("lstm state length disagrees with hidden_size")

    xs = list(x_t) + list(h)
    w = layer.gate_weights.codes
    z = []
    for r in range(4 * hs):
        acc = mac_dot(w[r * concat_len : (r + 1) * concat_len], xs, fmt, bias=layer.gate_bias.codes[r])
        code, sat = requantize_ex(acc, fmt)
        z.append(code)
        if stats is not None:
            stats.ops += 2 * concat_len + 1
            stats.saturations += sat

    h_next = []
    c_next = []
    for j in range(hs):
        gi = hard_sigmoid_fixed(z[j], fmt)
        gf = hard_sigmoid_fixed(z[hs + j], fmt)
        gg = hard_tanh_fixed(z[2 * hs + j], fmt)
        go = hard_sigmoid_fixed(z[3 * hs + j], fmt)
        cell_acc = gf * c[j] + gi * gg
        c_new, sat_c = requantize_ex(cell_acc, fmt)
        tanh_c = hard_tanh_fixed(c_new, fmt)
        h_new, sat_h = requantize_ex(go * tanh_c, fmt)
        c_next.append(c_new)
        h_next.append(h_new)
        if stats is not None:
            # 4 gate activations + tanh(c'), 2 muls + 1 add for the cell,
            # 1 mul for the hidden update
            stats.ops += 5 + 4
            stats.saturations += sat_c + sat_h
    return h_next, c_next


def lstm_forward(
    layer: QuantizedLstm,
    x: Sequence[int],
    fmt: FixedPointFormat,
    stats: InferenceStats | None = None,
) -> list[int]:
    """Unroll the cell over the step-major flattened input; h and c start at 0."""
    if len(x) != layer.steps * layer.input_size:
        raise LengthMismatch(
            f"lstm expects {layer.steps * layer.input_size} inputs, got {len(x)}"
        )
    h = [0] * layer.hidden_size
    c = [0] * layer.hidden_size
    for t in range(layer.steps):
        x_t = x[t * layer.input_size : (t + 1) * layer.input_size]
        h, c = lstm_step(layer, x_t, h, c, fmt, stats)
    return h


def infer_fixed(qmodel: QuantizedModel, x: Sequence[int]) -> tuple[list[int], InferenceStats]:
    """Run the whole quantized chain; returns (output codes, stats).

    stats.ops matches model_ir.op_count for the same graph; saturations
    counts requantize clips only (activation clamps are the function, not
    an overflow).
    """
    expected = qmodel.graph.input_len
    if len(x) != expected:
        raise InputLengthMismatch(f"expected input length {expected}, got {len(x)}")
    fmt = qmodel.fmt
    stats = InferenceStats()
    vec = [int(v) for v in x]
    for layer in qmodel.layers:
        if isinstance(layer, QuantizedLinear):
            vec = linear_forward(layer, vec, fmt, stats)
        elif isinstance(layer, QuantizedLstm):
            vec = lstm_forward(layer, vec, fmt, stats)
        elif isinstance(layer, Activation):
            vec = [apply_activation_fixed(layer.activation, v, fmt) for v in vec]
            stats.ops += len(vec)
        else:
            raise TypeError(f"unknown quantized layer {type(layer).__name__}")
    return vec, stats


def quantize_input(values: Sequence[float], fmt: FixedPointFormat) -> list[int]:
    """Convenience: quantize a float input vector to codes."""
    return [to_fixed(float(v), fmt) for v in values]


def dequantize_output(codes: Sequence[int], fmt: FixedPointFormat) -> list[float]:
    from .quantize import dequantize

    return [dequantize(int(c), fmt) for c in codes]


def check_io_consistency(qmodel: QuantizedModel) -> None:
    """Raise if the quantized layers disagree with the graph chain."""
    for (in_len, _), layer in zip(io_lengths(qmodel.graph), qmodel.layers):
        if isinstance(layer, QuantizedLinear) and layer.in_features != in_len:
            raise LengthMismatch("quantized linear disagrees with graph chain")
        if isinstance(layer, QuantizedLstm) and layer.steps * layer.input_size != in_len:
            raise LengthMismatch("quantized lstm disagrees with graph chain")
