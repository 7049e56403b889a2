"""Interchange format: parsing, validation, op counting, float reference."""

from __future__ import annotations

import json
import random

import numpy as np
import pytest

from accelkit import model_ir
from conftest import load_fixture
from model_gen import random_graph


def _linear(in_f, out_f, fill=0.25):
    return model_ir.Linear(
        in_f, out_f, np.full((out_f, in_f), fill), np.zeros(out_f)
    )


def _lstm(in_s, h, steps, fill=0.1):
    return model_ir.Lstm(
        in_s, h, steps, np.full((4 * h, in_s + h), fill), np.zeros(4 * h)
    )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


class TestParse:
    def test_fixture_round_trip(self):
        for name in ("linear_small.json", "mlp.json", "lstm_tiny.json"):
            graph = model_ir.parse_model(load_fixture(name))
            again = model_ir.parse_model(model_ir.serialize_model(graph))
            assert model_ir.graphs_equal(graph, again), name

    def test_serialized_floats_survive_exactly(self):
        graph = model_ir.ModelGraph(
            "t", (2,), (model_ir.Linear(2, 1, [[1 / 3, -0.1]], [0.7]),)
        )
        again = model_ir.parse_model(model_ir.serialize_model(graph))
        assert again.layers[0].weights[0, 0] == 1 / 3
        assert again.layers[0].bias[0] == 0.7

    def test_not_json(self):
        with pytest.raises(model_ir.MalformedDocument):
            model_ir.parse_model(b"not json {")

    def test_top_level_not_object(self):
        with pytest.raises(model_ir.MalformedDocument):
            model_ir.parse_model(b"[1, 2]")

    @pytest.mark.parametrize("key", ["name", "input_shape", "layers"])
    def test_missing_top_key(self, key):
        doc = json.loads(load_fixture("linear_small.json"))
        del doc[key]
        with pytest.raises(model_ir.MalformedDocument):
            model_ir.parse_model(json.dumps(doc))

    def test_unknown_layer_kind(self):
        doc = json.loads(load_fixture("linear_small.json"))
        doc["layers"][0]["kind"] = "conv2d"
        with pytest.raises(model_ir.UnknownLayerKind):
            model_ir.parse_model(json.dumps(doc))

    def test_unknown_activation(self):
        doc = json.loads(load_fixture("mlp.json"))
        doc["layers"][1]["activation"] = "softmax"
        with pytest.raises(model_ir.UnknownLayerKind):
            model_ir.parse_model(json.dumps(doc))

    def test_missing_layer_key(self):
        doc = json.loads(load_fixture("linear_small.json"))
        del doc["layers"][0]["bias"]
        with pytest.raises(model_ir.MalformedDocument):
            model_ir.parse_model(json.dumps(doc))

    def test_shape_mismatch_reports_layer(self):
        doc = {
            "name": "bad",
            "input_shape": [2],
            "layers": [
                {"kind": "linear", "in_features": 2, "out_features": 1,
                 "weights": [[0.5, 0.5]], "bias": [0.0]},
                {"kind": "linear", "in_features": 3, "out_features": 1,
                 "weights": [[0.5, 0.5, 0.5]], "bias": [0.0]},
            ],
        }
        with pytest.raises(model_ir.ShapeMismatch) as exc_info:
            model_ir.parse_model(json.dumps(doc))
        assert exc_info.value.layer == 1

    def test_non_finite_rejected(self):
        doc = json.loads(load_fixture("linear_small.json"))
        doc["layers"][0]["weights"][0][0] = float("nan")
        with pytest.raises(model_ir.MalformedDocument) as exc_info:
            model_ir.parse_model(
                json.dumps(doc).replace("NaN", "1e999")  # json emits NaN; force Infinity
            )
        assert "non-finite" in str(exc_info.value)


# ---------------------------------------------------------------------------
# validation diagnostics
# ---------------------------------------------------------------------------


class TestValidate:
    def test_clean_fixture_has_no_diagnostics(self):
        for name in ("linear_small.json", "mlp.json", "lstm_tiny.json"):
            graph = model_ir.parse_model(load_fixture(name))
            assert model_ir.validate(graph) == []

    def test_empty_graph(self):
        graph = model_ir.ModelGraph("e", (2,), ())
        codes = [d.code for d in model_ir.validate(graph)]
        assert codes == ["EmptyGraph"]

    @pytest.mark.parametrize("shape", [(), (0,), (2, 0)])
    def test_bad_input_shape(self, shape):
        graph = model_ir.ModelGraph("b", shape, (_linear(2, 1),))
        codes = [d.code for d in model_ir.validate(graph)]
        assert "BadInputShape" in codes

    def test_dimension_zero(self):
        layer = model_ir.Linear(2, 0, np.zeros((0, 2)), np.zeros(0))
        graph = model_ir.ModelGraph("z", (2,), (layer,))
        diags = model_ir.validate(graph)
        assert any(d.code == "DimensionZero" and d.layer == 0 for d in diags)

    def test_lstm_dimension_zero(self):
        layer = model_ir.Lstm(2, 3, 0, np.zeros((12, 5)), np.zeros(12))
        graph = model_ir.ModelGraph("z", (2,), (layer,))
        diags = model_ir.validate(graph)
        assert any(d.code == "DimensionZero" and d.layer == 0 for d in diags)

    def test_weight_shape_mismatch(self):
        layer = model_ir.Linear(2, 1, np.zeros((1, 3)), np.zeros(1))
        graph = model_ir.ModelGraph("s", (2,), (layer,))
        diags = model_ir.validate(graph)
        assert any(d.code == "ShapeMismatch" and d.layer == 0 for d in diags)

    def test_non_finite_weight(self):
        layer = model_ir.Linear(2, 1, np.array([[np.inf, 0.0]]), np.zeros(1))
        graph = model_ir.ModelGraph("n", (2,), (layer,))
        diags = model_ir.validate(graph)
        assert [d.code for d in diags] == ["NonFiniteWeight"]

    def test_unknown_activation_diagnostic(self):
        graph = model_ir.ModelGraph(
            "a", (2,), (_linear(2, 2), model_ir.Activation("gelu"))
        )
        diags = model_ir.validate(graph)
        assert [(d.code, d.layer) for d in diags] == [("UnknownActivation", 1)]

    def test_chain_mismatch_layer_index(self):
        graph = model_ir.ModelGraph("c", (2,), (_linear(2, 3), _linear(4, 1)))
        diags = model_ir.validate(graph)
        assert [(d.code, d.layer) for d in diags] == [("ShapeMismatch", 1)]

    def test_diagnostics_ordered_by_layer(self):
        graph = model_ir.ModelGraph(
            "o",
            (),
            (_linear(2, 2), model_ir.Activation("nope"), _linear(9, 1)),
        )
        diags = model_ir.validate(graph)
        layers = [(-1 if d.layer is None else d.layer) for d in diags]
        assert layers == sorted(layers)
        assert diags[0].code == "BadInputShape"


# ---------------------------------------------------------------------------
# op counting
# ---------------------------------------------------------------------------


def _counted_ops(graph: model_ir.ModelGraph) -> int:
    """Instrumented walk: 2 ops per MAC term, 1 per bias add, 1 per
    activation evaluation, 1 per elementwise multiply/add in the cell."""
    total = 0
    cur = graph.input_len
    for layer in graph.layers:
        if isinstance(layer, model_ir.Linear):
            for _row in range(layer.out_features):
                total += 2 * layer.in_features + 1
            cur = layer.out_features
        elif isinstance(layer, model_ir.Lstm):
            h, width = layer.hidden_size, layer.input_size + layer.hidden_size
            for _step in range(layer.steps):
                for _row in range(4 * h):
                    total += 2 * width + 1  # gate dot products
                for _j in range(h):
                    total += 4  # gate activations i, f, g, o
                    total += 3  # f*c, i*g, their sum
                    total += 1  # tanh(c')
                    total += 1  # o * tanh(c')
            cur = h
        else:
            total += cur
    return total


class TestOpCount:
    def test_linear_example(self):
        graph = model_ir.ModelGraph("l", (4,), (_linear(4, 2),))
        assert model_ir.op_count(graph) == 18

    def test_lstm_example(self):
        graph = model_ir.ModelGraph("m", (4,), (_lstm(4, 3, 1),))
        assert model_ir.op_count(graph) == 207

    def test_activation_counts_elements(self):
        graph = model_ir.ModelGraph(
            "a", (5,), (model_ir.Activation(model_ir.RELU),)
        )
        assert model_ir.op_count(graph) == 5

    def test_chain_is_additive(self):
        graph = model_ir.parse_model(load_fixture("mlp.json"))
        first = model_ir.ModelGraph("f", (4,), graph.layers[:1])
        assert model_ir.op_count(graph) == (
            model_ir.op_count(first) + 3 + (2 * 3 * 2 + 2)
        )

    def test_matches_instrumented_count_exhaustively(self):
        for in_f in range(1, 9):
            for out_f in range(1, 9):
                g = model_ir.ModelGraph("l", (in_f,), (_linear(in_f, out_f),))
                assert model_ir.op_count(g) == _counted_ops(g)
        for in_s in range(1, 5):
            for h in range(1, 5):
                for steps in range(1, 4):
                    g = model_ir.ModelGraph(
                        "m", (steps, in_s), (_lstm(in_s, h, steps),)
                    )
                    assert model_ir.op_count(g) == _counted_ops(g)

    def test_matches_instrumented_count_random_chains(self):
        rng = random.Random(7)
        for _ in range(200):
            graph = random_graph(rng)
            assert model_ir.op_count(graph) == _counted_ops(graph)


# ---------------------------------------------------------------------------
# float reference
# ---------------------------------------------------------------------------


class TestInferFloat:
    def test_linear_small_value(self):
        graph = model_ir.parse_model(load_fixture("linear_small.json"))
        out = model_ir.infer_float(graph, [0.5, 0.25])
        assert out.tolist() == [0.5 * 0.5 - 0.25 * 0.25]

    def test_hard_sigmoid_definition(self):
        xs = np.array([-5.0, -2.0, 0.0, 1.0, 2.0, 5.0])
        expected = np.clip(xs / 4.0 + 0.5, 0.0, 1.0)
        assert np.array_equal(model_ir.hard_sigmoid(xs), expected)

    def test_hard_tanh_definition(self):
        xs = np.array([-3.0, -1.0, -0.25, 0.5, 1.0, 2.0])
        expected = np.clip(xs, -1.0, 1.0)
        assert np.array_equal(model_ir.hard_tanh(xs), expected)

    def test_zero_lstm_outputs_zero(self):
        graph = model_ir.ModelGraph("z", (2, 2), (_lstm(2, 3, 2, fill=0.0),))
        out = model_ir.infer_float(graph, [0.3, -0.2, 0.1, 0.4])
        assert out.tolist() == [0.0, 0.0, 0.0]

    def test_lstm_single_step_by_hand(self):
        # one hidden unit, weights chosen so each gate is easy to evaluate
        gw = np.array(
            [
                [1.0, 0.0],  # i gate: x
                [2.0, 0.0],  # f gate: 2x
                [4.0, 0.0],  # g gate: 4x (saturates hard_tanh)
                [0.0, 0.0],  # o gate: 0
            ]
        )
        gb = np.array([0.0, 0.0, 0.0, 2.0])
        layer = model_ir.Lstm(1, 1, 1, gw, gb)
        graph = model_ir.ModelGraph("h", (1,), (layer,))
        x = 0.5
        i = model_ir.hard_sigmoid(np.array([x]))[0]  # 0.625
        g = model_ir.hard_tanh(np.array([4 * x]))[0]  # 1.0
        o = model_ir.hard_sigmoid(np.array([2.0]))[0]  # 1.0
        c = i * g  # f*0 + i*g
        expected = o * model_ir.hard_tanh(np.array([c]))[0]
        out = model_ir.infer_float(graph, [x])
        assert out.tolist() == [expected]
        assert expected == 0.625

    def test_input_length_mismatch(self):
        graph = model_ir.parse_model(load_fixture("linear_small.json"))
        with pytest.raises(model_ir.InputLengthMismatch):
            model_ir.infer_float(graph, [1.0, 2.0, 3.0])

    def test_mlp_matches_numpy_composition(self):
        graph = model_ir.parse_model(load_fixture("mlp.json"))
        x = np.array([0.2, -0.4, 0.6, -0.8])
        w0, b0 = graph.layers[0].weights, graph.layers[0].bias
        w2, b2 = graph.layers[2].weights, graph.layers[2].bias
        expected = w2 @ np.maximum(w0 @ x + b0, 0.0) + b2
        out = model_ir.infer_float(graph, x)
        assert np.allclose(out, expected, rtol=0, atol=1e-15)


class TestGraphProps:
    def test_io_lengths(self):
        graph = model_ir.parse_model(load_fixture("lstm_tiny.json"))
        assert model_ir.io_lengths(graph) == [(4, 3), (3, 1)]
        assert graph.input_len == 4
        assert graph.output_len == 1

    def test_graphs_equal_detects_weight_change(self):
        graph = model_ir.parse_model(load_fixture("linear_small.json"))
        doc = json.loads(load_fixture("linear_small.json"))
        doc["layers"][0]["weights"][0][0] = 0.50001
        other = model_ir.parse_model(json.dumps(doc))
        assert not model_ir.graphs_equal(graph, other)

    def test_random_graph_serialization_round_trip(self):
        rng = random.Random(11)
        for _ in range(50):
            graph = random_graph(rng)
            again = model_ir.parse_model(model_ir.serialize_model(graph))
            assert model_ir.graphs_equal(graph, again)
