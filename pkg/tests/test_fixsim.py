"""Bit-exact fixed-point inference against hand values and the exact-rational oracle."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from accelkit import fixsim, model_ir, quantize
from accelkit.quantize import FixedPointFormat, model_payload, quantize_model, to_fixed
from conftest import load_fixture
from model_gen import random_input_codes, random_quantized
from rational_oracle import (
    hard_sigmoid_code,
    hard_tanh_code,
    infer_codes,
    requantize_code,
)
from fractions import Fraction

FMT = FixedPointFormat(16, 8)


class TestMacDot:
    def test_products_accumulate_at_double_precision(self):
        # 2*100 + 3*(-50) = 50 at 2f bits; bias 5 enters shifted to 2f
        acc = fixsim.mac_dot([2, 3], [100, -50], FMT, bias=5)
        assert acc == 50 + (5 << 8)

    def test_identity_weight(self):
        assert fixsim.mac_dot([256], [256], FMT) == 65536

    def test_empty_dot_is_bias(self):
        assert fixsim.mac_dot([], [], FMT, bias=3) == 3 << 8

    def test_length_mismatch(self):
        with pytest.raises(fixsim.LengthMismatch):
            fixsim.mac_dot([1, 2], [1], FMT)

    def test_no_intermediate_rounding(self):
        # partial sums exceed the code range freely; only the caller rounds
        acc = fixsim.mac_dot([32767, -32768], [32767, 32767], FMT)
        assert acc == 32767 * 32767 - 32768 * 32767


class TestRequantize:
    def test_exact_multiple(self):
        assert fixsim.requantize(32768, FMT) == 128

    def test_rounds_half_up(self):
        assert fixsim.requantize(128, FMT) == 1  # 0.5 ulp rounds up
        assert fixsim.requantize(127, FMT) == 0
        assert fixsim.requantize(-384, FMT) == -1  # -1.5 ulp rounds toward zero
        assert fixsim.requantize(-385, FMT) == -2

    def test_saturates(self):
        assert fixsim.requantize(1 << 30, FMT) == 32767
        assert fixsim.requantize(-(1 << 30), FMT) == -32768

    def test_zero_frac_bits_is_passthrough(self):
        fmt = FixedPointFormat(8, 0)
        assert fixsim.requantize(5, fmt) == 5
        assert fixsim.requantize(-3, fmt) == -3
        assert fixsim.requantize(200, fmt) == 127

    def test_matches_rational_oracle(self):
        rng = random.Random(23)
        for fmt in (FixedPointFormat(8, 4), FMT, FixedPointFormat(18, 10), FixedPointFormat(8, 0)):
            q2 = Fraction(1, 1 << (2 * fmt.frac_bits))
            for _ in range(2000):
                acc = rng.randint(-(1 << (2 * fmt.total_bits - 2)), 1 << (2 * fmt.total_bits - 2))
                expected = requantize_code(acc * q2, fmt.total_bits, fmt.frac_bits)
                assert fixsim.requantize(acc, fmt) == expected


class TestHardActivations:
    def test_hard_sigmoid_anchors(self):
        assert fixsim.hard_sigmoid_fixed(0, FMT) == 128  # 0.5
        assert fixsim.hard_sigmoid_fixed(512, FMT) == 256  # 2.0 -> 1.0
        assert fixsim.hard_sigmoid_fixed(to_fixed(-3.0, FMT), FMT) == 0
        assert fixsim.hard_sigmoid_fixed(to_fixed(1.0, FMT), FMT) == 192  # 0.75

    def test_hard_tanh_anchors(self):
        assert fixsim.hard_tanh_fixed(to_fixed(0.5, FMT), FMT) == 128
        assert fixsim.hard_tanh_fixed(to_fixed(3.0, FMT), FMT) == 256
        assert fixsim.hard_tanh_fixed(to_fixed(-3.0, FMT), FMT) == -256

    def test_relu(self):
        assert fixsim.relu_fixed(-5) == 0
        assert fixsim.relu_fixed(7) == 7

    def test_unknown_activation_rejected(self):
        with pytest.raises(ValueError):
            fixsim.apply_activation_fixed("softmax", 0, FMT)

    def test_activation_codes_match_oracle(self):
        rng = random.Random(29)
        for fmt in (FixedPointFormat(8, 4), FMT, FixedPointFormat(18, 10), FixedPointFormat(8, 0)):
            for _ in range(2000):
                c = rng.randint(fmt.min_code, fmt.max_code)
                assert fixsim.hard_sigmoid_fixed(c, fmt) == hard_sigmoid_code(
                    c, fmt.total_bits, fmt.frac_bits
                )
                assert fixsim.hard_tanh_fixed(c, fmt) == hard_tanh_code(
                    c, fmt.total_bits, fmt.frac_bits
                )

    def test_outputs_stay_in_activation_range(self):
        for c in range(FMT.min_code, FMT.max_code + 1, 37):
            assert 0 <= fixsim.hard_sigmoid_fixed(c, FMT) <= 256
            assert -256 <= fixsim.hard_tanh_fixed(c, FMT) <= 256


class TestLayerForward:
    def test_linear_half_times_half(self):
        graph = model_ir.ModelGraph(
            "t", (1,), (model_ir.Linear(1, 1, [[0.5]], [0.0]),)
        )
        qmodel, _ = quantize_model(graph, FMT)
        out, stats = fixsim.infer_fixed(qmodel, [to_fixed(0.5, FMT)])
        assert out == [64]  # 0.25
        assert stats.ops == 3
        assert stats.saturations == 0

    def test_linear_bias_only(self):
        graph = model_ir.ModelGraph(
            "b", (1,), (model_ir.Linear(1, 1, [[0.0]], [0.75]),)
        )
        qmodel, _ = quantize_model(graph, FMT)
        out, _ = fixsim.infer_fixed(qmodel, [123])
        assert out == [to_fixed(0.75, FMT)]

    def test_zero_lstm_outputs_zero(self):
        layer = model_ir.Lstm(2, 3, 2, np.zeros((12, 5)), np.zeros(12))
        graph = model_ir.ModelGraph("z", (2, 2), (layer,))
        qmodel, _ = quantize_model(graph, FMT)
        out, stats = fixsim.infer_fixed(qmodel, [100, -50, 25, 75])
        assert out == [0, 0, 0]
        assert stats.ops == model_ir.op_count(graph)

    def test_lstm_single_unit_by_hand(self):
        gw = np.array([[1.0, 0.0], [2.0, 0.0], [4.0, 0.0], [0.0, 0.0]])
        gb = np.array([0.0, 0.0, 0.0, 2.0])
        layer = model_ir.Lstm(1, 1, 1, gw, gb)
        graph = model_ir.ModelGraph("h", (1,), (layer,))
        qmodel, _ = quantize_model(graph, FMT)
        out, _ = fixsim.infer_fixed(qmodel, [to_fixed(0.5, FMT)])
        # i = hsig(0.5) = 0.625, g = htanh(2.0) = 1.0, o = hsig(2.0) = 1.0,
        # c' = 0.625, h = 1.0 * htanh(0.625) = 0.625 -> code 160
        assert out == [160]

    def test_saturations_are_counted(self):
        graph = model_ir.ModelGraph(
            "s", (1,), (model_ir.Linear(1, 1, [[127.0]], [0.0]),)
        )
        qmodel, _ = quantize_model(graph, FMT)
        out, stats = fixsim.infer_fixed(qmodel, [to_fixed(100.0, FMT)])
        assert out == [FMT.max_code]
        assert stats.saturations == 1

    def test_input_length_checked(self):
        graph = model_ir.parse_model(load_fixture("linear_small.json"))
        qmodel, _ = quantize_model(graph, FMT)
        with pytest.raises(model_ir.InputLengthMismatch):
            fixsim.infer_fixed(qmodel, [1, 2, 3])


class TestOracleEquivalence:
    def test_random_models_bit_identical(self):
        rng = random.Random(31)
        for _ in range(200):
            graph, qmodel = random_quantized(rng, FMT)
            payload = model_payload(qmodel)
            x = random_input_codes(rng, FMT, graph.input_len)
            got, _stats = fixsim.infer_fixed(qmodel, x)
            assert got == infer_codes(payload, x)

    def test_other_formats_bit_identical(self):
        rng = random.Random(37)
        for fmt in (FixedPointFormat(8, 4), FixedPointFormat(18, 10), FixedPointFormat(12, 0)):
            for _ in range(50):
                graph, qmodel = random_quantized(rng, fmt)
                payload = model_payload(qmodel)
                x = random_input_codes(rng, fmt, graph.input_len)
                got, _stats = fixsim.infer_fixed(qmodel, x)
                assert got == infer_codes(payload, x)

    def test_ops_match_graph_convention(self):
        rng = random.Random(41)
        for _ in range(100):
            graph, qmodel = random_quantized(rng, FMT)
            x = random_input_codes(rng, FMT, graph.input_len)
            _out, stats = fixsim.infer_fixed(qmodel, x)
            assert stats.ops == model_ir.op_count(graph)


class TestFloatAgreement:
    def test_linear_error_bound_sample(self):
        # |dequantized fixed - float on dequantized weights| <= (in+1) * 2^-(f+1)
        rng = random.Random(43)
        for _ in range(50):
            n_in = rng.randint(1, 16)
            n_out = rng.randint(1, 8)
            weights = np.array(
                [[rng.uniform(-1.0, 1.0 - 1e-9) for _ in range(n_in)] for _ in range(n_out)]
            )
            bias = np.array([rng.uniform(-1.0, 1.0 - 1e-9) for _ in range(n_out)])
            graph = model_ir.ModelGraph(
                "e", (n_in,), (model_ir.Linear(n_in, n_out, weights, bias),)
            )
            qmodel, _ = quantize_model(graph, FMT)
            xs = [rng.uniform(-1.0, 1.0 - 1e-9) for _ in range(n_in)]
            codes = fixsim.quantize_input(xs, FMT)
            out, stats = fixsim.infer_fixed(qmodel, codes)
            assert stats.saturations == 0
            deq_graph = quantize.model_from_payload(model_payload(qmodel)).graph
            reference = model_ir.infer_float(deq_graph, fixsim.dequantize_output(codes, FMT))
            bound = (n_in + 1) * math.ldexp(1, -(FMT.frac_bits + 1))
            for got_code, ref in zip(out, reference):
                assert abs(quantize.dequantize(got_code, FMT) - float(ref)) <= bound


class TestIoHelpers:
    def test_quantize_dequantize_round_trip(self):
        values = [0.5, -0.25, 1.0, -1.0]
        codes = fixsim.quantize_input(values, FMT)
        assert codes == [128, -64, 256, -256]
        assert fixsim.dequantize_output(codes, FMT) == values

    def test_io_consistency_accepts_fixtures(self):
        for name in ("linear_small.json", "mlp.json", "lstm_tiny.json"):
            graph = model_ir.parse_model(load_fixture(name))
            qmodel, _ = quantize_model(graph, FMT)
            fixsim.check_io_consistency(qmodel)
