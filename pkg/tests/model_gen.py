"""Seeded random model generators shared by property tests."""

from __future__ import annotations

import random

import numpy as np

from accelkit import model_ir
from accelkit.quantize import FixedPointFormat, quantize_model


def _random_linear(rng: random.Random, in_len: int, max_dim: int) -> model_ir.Linear:
    out = rng.randint(1, max_dim)
    weights = [[rng.uniform(-1.5, 1.5) for _ in range(in_len)] for _ in range(out)]
    bias = [rng.uniform(-1.0, 1.0) for _ in range(out)]
    return model_ir.Linear(in_len, out, np.array(weights), np.array(bias))


def _random_lstm(rng: random.Random, in_len: int, max_dim: int) -> model_ir.Lstm | None:
    divisors = [d for d in range(1, in_len + 1) if in_len % d == 0 and in_len // d <= 6]
    if not divisors:
        return None
    input_size = rng.choice(divisors)
    steps = in_len // input_size
    h = rng.randint(1, min(4, max_dim))
    gw = [
        [rng.uniform(-1.0, 1.0) for _ in range(input_size + h)] for _ in range(4 * h)
    ]
    gb = [rng.uniform(-0.5, 0.5) for _ in range(4 * h)]
    return model_ir.Lstm(input_size, h, steps, np.array(gw), np.array(gb))


def random_graph(rng: random.Random, max_dim: int = 8, max_layers: int = 3) -> model_ir.ModelGraph:
    """A random valid chain of linear / lstm / activation layers."""
    in_len = rng.randint(1, max_dim)
    layers: list[model_ir.LayerSpec] = []
    cur = in_len
    for _ in range(rng.randint(1, max_layers)):
        roll = rng.random()
        if roll < 0.45:
            layer: model_ir.LayerSpec | None = _random_linear(rng, cur, max_dim)
        elif roll < 0.75:
            layer = _random_lstm(rng, cur, max_dim)
            if layer is None:
                layer = _random_linear(rng, cur, max_dim)
        else:
            layer = model_ir.Activation(rng.choice(model_ir.ACTIVATION_KINDS))
        layers.append(layer)
        cur = model_ir.layer_io(layer, cur)[1]
    if not layers:
        layers.append(_random_linear(rng, cur, max_dim))
    graph = model_ir.ModelGraph(
        name=f"rand{rng.randrange(1 << 30)}", input_shape=(in_len,), layers=tuple(layers)
    )
    assert not model_ir.validate(graph)
    return graph


def random_quantized(rng: random.Random, fmt: FixedPointFormat, max_dim: int = 8):
    """(graph, quantized model) pair for datapath property tests."""
    graph = random_graph(rng, max_dim=max_dim)
    qmodel, _report = quantize_model(graph, fmt)
    return graph, qmodel


def random_input_codes(rng: random.Random, fmt: FixedPointFormat, length: int) -> list[int]:
    """Full-range input codes, including values that will saturate."""
    return [rng.randint(fmt.min_code, fmt.max_code) for _ in range(length)]
