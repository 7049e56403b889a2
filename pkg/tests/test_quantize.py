"""Fixed-point formats and weight quantization."""

from __future__ import annotations

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from accelkit import model_ir, quantize
from conftest import load_fixture
from rational_oracle import code_of

FORMATS = [
    quantize.FixedPointFormat(8, 4),
    quantize.FixedPointFormat(16, 8),
    quantize.FixedPointFormat(18, 10),
]


class TestFormat:
    def test_default_is_16_8(self):
        assert quantize.DEFAULT_FORMAT == quantize.FixedPointFormat(16, 8)

    def test_flag_round_trip(self):
        for fmt in FORMATS:
            assert quantize.FixedPointFormat.from_flag(str(fmt)) == fmt

    def test_code_bounds(self):
        fmt = quantize.FixedPointFormat(16, 8)
        assert fmt.min_code == -32768
        assert fmt.max_code == 32767
        assert fmt.min_value == -128.0
        assert fmt.max_value == 127.99609375

    @pytest.mark.parametrize(
        "total,frac", [(1, 0), (33, 8), (8, 8), (8, -1), (0, 0), (16, 16)]
    )
    def test_invalid_formats_rejected(self, total, frac):
        with pytest.raises(ValueError):
            quantize.FixedPointFormat(total, frac)

    @pytest.mark.parametrize("text", ["16", "a.b", "16.8.2", ""])
    def test_bad_flags_rejected(self, text):
        with pytest.raises(ValueError):
            quantize.FixedPointFormat.from_flag(text)

    def test_extreme_formats_allowed(self):
        quantize.FixedPointFormat(2, 0)
        quantize.FixedPointFormat(2, 1)
        quantize.FixedPointFormat(32, 31)


class TestQuantizeValue:
    def test_one_third(self):
        fmt = quantize.FixedPointFormat(16, 8)
        code, saturated = quantize.quantize_value(1 / 3, fmt)
        assert code == 85
        assert not saturated
        err = abs(quantize.dequantize(code, fmt) - 1 / 3)
        assert err == pytest.approx(0.00130, abs=5e-6)

    def test_tie_rounds_to_even(self):
        fmt = quantize.FixedPointFormat(16, 8)
        # 0.005859375 * 256 = 1.5 exactly: the tie must go to the even code 2
        assert quantize.quantize_value(0.005859375, fmt) == (2, False)
        # -1.5 scaled ties to -2 as well
        assert quantize.quantize_value(-0.005859375, fmt) == (-2, False)
        # 0.5 at f=0 ties down to 0
        assert quantize.to_fixed(0.5, quantize.FixedPointFormat(8, 0)) == 0

    def test_saturation_high(self):
        fmt = quantize.FixedPointFormat(8, 4)
        assert quantize.quantize_value(200.0, fmt) == (127, True)

    def test_saturation_low(self):
        fmt = quantize.FixedPointFormat(8, 4)
        assert quantize.quantize_value(-200.0, fmt) == (-128, True)

    def test_non_finite_rejected(self):
        fmt = quantize.DEFAULT_FORMAT
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(quantize.NonFiniteInput):
                quantize.quantize_value(bad, fmt)

    def test_agrees_with_rational_oracle(self):
        rng = random.Random(101)
        for fmt in FORMATS:
            span = fmt.max_value - fmt.min_value
            for _ in range(2000):
                x = rng.uniform(fmt.min_value - 0.25 * span, fmt.max_value + 0.25 * span)
                code, _ = quantize.quantize_value(x, fmt)
                assert code == code_of(
                    Fraction(x), fmt.total_bits, fmt.frac_bits
                ), (x, fmt)


class TestDequantize:
    def test_min_code_value(self):
        assert quantize.dequantize(-32768, quantize.FixedPointFormat(16, 8)) == -128.0

    def test_out_of_range_code_rejected(self):
        fmt = quantize.FixedPointFormat(8, 4)
        with pytest.raises(quantize.CodeOutOfRange):
            quantize.dequantize(128, fmt)
        with pytest.raises(quantize.CodeOutOfRange):
            quantize.dequantize(-129, fmt)

    def test_grid_round_trip_is_identity(self):
        rng = random.Random(7)
        for fmt in FORMATS:
            for _ in range(2000):
                code = rng.randint(fmt.min_code, fmt.max_code)
                value = quantize.dequantize(code, fmt)
                assert quantize.quantize_value(value, fmt) == (code, False)


class TestProperties:
    def test_half_ulp_bound(self):
        rng = random.Random(13)
        for fmt in FORMATS:
            half_ulp = math.ldexp(1, -(fmt.frac_bits + 1))
            for _ in range(2000):
                x = rng.uniform(fmt.min_value, fmt.max_value)
                code, saturated = quantize.quantize_value(x, fmt)
                if not saturated:
                    assert abs(quantize.dequantize(code, fmt) - x) <= half_ulp

    def test_idempotence(self):
        rng = random.Random(17)
        for fmt in FORMATS:
            for _ in range(2000):
                x = rng.uniform(2 * fmt.min_value, 2 * fmt.max_value)
                code, _ = quantize.quantize_value(x, fmt)
                again, saturated = quantize.quantize_value(
                    quantize.dequantize(code, fmt), fmt
                )
                assert again == code
                assert not saturated

    def test_monotonicity(self):
        rng = random.Random(19)
        for fmt in FORMATS:
            xs = sorted(
                rng.uniform(2 * fmt.min_value, 2 * fmt.max_value) for _ in range(500)
            )
            codes = [quantize.to_fixed(x, fmt) for x in xs]
            assert codes == sorted(codes)


class TestQuantizeModel:
    def test_grid_exact_model_has_zero_error(self):
        graph = model_ir.parse_model(load_fixture("linear_small.json"))
        _qmodel, report = quantize.quantize_model(graph, quantize.DEFAULT_FORMAT)
        assert report.worst_max_abs_error == 0.0
        assert report.worst_mse == 0.0
        assert report.total_saturations == 0

    def test_tensor_names_and_bound(self):
        graph = model_ir.parse_model(load_fixture("lstm_tiny.json"))
        fmt = quantize.DEFAULT_FORMAT
        _qmodel, report = quantize.quantize_model(graph, fmt)
        assert [t.name for t in report.tensors] == [
            "layers[0].gate_weights",
            "layers[0].gate_bias",
            "layers[1].weights",
            "layers[1].bias",
        ]
        assert report.total_saturations == 0
        assert report.worst_max_abs_error <= math.ldexp(1, -(fmt.frac_bits + 1))

    def test_saturations_counted(self):
        graph = model_ir.ModelGraph(
            "s",
            (2,),
            (model_ir.Linear(2, 1, np.array([[300.0, -300.0]]), np.array([0.0])),),
        )
        qmodel, report = quantize.quantize_model(graph, quantize.DEFAULT_FORMAT)
        assert report.total_saturations == 2
        assert qmodel.layers[0].weights.codes == (32767, -32768)

    def test_report_dict_shape(self):
        graph = model_ir.parse_model(load_fixture("mlp.json"))
        _qmodel, report = quantize.quantize_model(graph, quantize.DEFAULT_FORMAT)
        doc = report.to_dict()
        assert doc["format"] == "16.8"
        assert doc["worst_mse"] == report.worst_mse
        assert len(doc["tensors"]) == 4  # two linear layers, weights+bias each

    def test_quantized_codes_match_elementwise_quantization(self):
        graph = model_ir.parse_model(load_fixture("mlp.json"))
        fmt = quantize.DEFAULT_FORMAT
        qmodel, _ = quantize.quantize_model(graph, fmt)
        flat = graph.layers[0].weights.reshape(-1)
        expected = tuple(quantize.to_fixed(float(x), fmt) for x in flat)
        assert qmodel.layers[0].weights.codes == expected


class TestPayload:
    def test_round_trip_codes(self):
        graph = model_ir.parse_model(load_fixture("lstm_tiny.json"))
        fmt = quantize.FixedPointFormat(18, 10)
        qmodel, _ = quantize.quantize_model(graph, fmt)
        payload = quantize.model_payload(qmodel)
        rebuilt = quantize.model_from_payload(payload)
        assert rebuilt.fmt == fmt
        assert rebuilt.layers[0].gate_weights.codes == qmodel.layers[0].gate_weights.codes
        assert rebuilt.layers[1].bias.codes == qmodel.layers[1].bias.codes
        assert model_ir.op_count(rebuilt.graph) == model_ir.op_count(graph)

    def test_rebuilt_graph_weights_are_dequantized_codes(self):
        graph = model_ir.parse_model(load_fixture("linear_small.json"))
        fmt = quantize.DEFAULT_FORMAT
        qmodel, _ = quantize.quantize_model(graph, fmt)
        rebuilt = quantize.model_from_payload(quantize.model_payload(qmodel))
        w = rebuilt.graph.layers[0].weights
        codes = qmodel.layers[0].weights.codes
        assert w[0, 0] == quantize.dequantize(codes[0], fmt)
        assert w[0, 1] == quantize.dequantize(codes[1], fmt)

    def test_payload_is_json_safe(self):
        import json

        graph = model_ir.parse_model(load_fixture("mlp.json"))
        qmodel, _ = quantize.quantize_model(graph, quantize.DEFAULT_FORMAT)
        payload = quantize.model_payload(qmodel)
        assert json.loads(json.dumps(payload)) == payload

    def test_wrong_code_counts_rejected(self):
        graph = model_ir.parse_model(load_fixture("linear_small.json"))
        qmodel, _ = quantize.quantize_model(graph, quantize.DEFAULT_FORMAT)
        payload = quantize.model_payload(qmodel)
        payload["layers"][0]["weights"] = payload["layers"][0]["weights"][:-1]
        with pytest.raises(quantize.CodeOutOfRange):
            quantize.model_from_payload(payload)
