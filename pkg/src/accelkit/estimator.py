"""Latency, power, energy-efficiency and resource estimation.

The cycle model assumes one time-multiplexed MAC group of width P
(``parallel_macs``) shared across a layer's outputs, plus a fixed
per-layer control overhead K (``layer_overhead``):

* linear:     ceil(in/P) * out + K
* lstm:       steps * (ceil((in+h)/P) * 4h + 9h) + K
* activation: ceil(len/P) + K

Derived quantities use the plain physical identities

    time_us   = cycles / clock_mhz
    energy_uj = power_mw * time_us * 1e-3
    gop_per_j = ops / (energy_uj * 1e-6) / 1e9

Resource numbers are estimates from documented coefficients, not a
synthesis result: BRAM bits count every stored weight code at n bits,
DSP slices equal P (one shared MAC group), LUT/FF counts are affine
per-layer cost lines.  Device capacities come from ``data/devices.json``
and are configuration values, not measurements.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

from .model_ir import Activation, ModelGraph, io_lengths, op_count
from .quantize import QuantizedLinear, QuantizedLstm, QuantizedModel


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    """Generation/scheduling knobs shared by the estimator and the RTL generator."""

    parallel_macs: int = 1
    clock_mhz: float = 100.0
    layer_overhead: int = 10

    def __post_init__(self) -> None:
        if self.parallel_macs < 1:
            raise EstimatorError(f"parallel_macs {self.parallel_macs} must be >= 1")
        if self.clock_mhz <= 0:
            raise EstimatorError(f"clock_mhz {self.clock_mhz} must be positive")
        if self.layer_overhead < 0:
            raise EstimatorError(f"layer_overhead {self.layer_overhead} must be >= 0")


@dataclass(frozen=True)
class ResourceEstimate:
    luts: int
    ffs: int
    bram_bits: int
    dsp_slices: int

    def fits_in(self, capacity: "ResourceEstimate") -> bool:
        return (
            self.luts <= capacity.luts
            and self.ffs <= capacity.ffs
            and self.bram_bits <= capacity.bram_bits
            and self.dsp_slices <= capacity.dsp_slices
        )

    def first_overflow(self, capacity: "ResourceEstimate") -> str | None:
        for name in ("luts", "ffs", "bram_bits", "dsp_slices"):
            if getattr(self, name) > getattr(capacity, name):
                return name
        return None

    def to_dict(self) -> dict:
        return {
            "luts": self.luts,
            "ffs": self.ffs,
            "bram_bits": self.bram_bits,
            "dsp_slices": self.dsp_slices,
        }


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    capacity: ResourceEstimate
    default_clock_mhz: float = 100.0


@dataclass(frozen=True)
class CostCoefficients:
    """Rough per-layer LUT/FF cost lines (configuration, not synthesis data)."""

    base_luts: int = 120
    base_ffs: int = 60
    linear_luts: tuple[int, int, int] = (150, 60, 2)  # a + b*P + c*n
    linear_ffs: tuple[int, int, int] = (70, 1, 1)  # a + b*n + c*acc_bits
    lstm_luts: tuple[int, int, int] = (400, 60, 8)  # a + b*P + c*n
    lstm_ffs: tuple[int, int, int] = (150, 6, 1)  # a + b*h*n + c*acc_bits
    activation_luts: tuple[int, int] = (30, 2)  # a + b*n
    activation_ffs: tuple[int, int] = (20, 1)  # a + b*n


DEFAULT_COEFFICIENTS = CostCoefficients()


# ---------------------------------------------------------------------------
# cycle / time / energy model
# ---------------------------------------------------------------------------


def accumulator_bits(fmt_total_bits: int, max_in: int) -> int:
    """Width that holds any dot product exactly: 2n + ceil(log2(max_in+1))."""
    return 2 * fmt_total_bits + max(1, math.ceil(math.log2(max_in + 1)))


def cycle_count(qmodel: QuantizedModel, cfg: GenConfig) -> int:
    """Cycles for one inference under the time-multiplexed schedule."""
    p = cfg.parallel_macs
    k = cfg.layer_overhead
    total = 0
    for layer, (in_len, _) in zip(qmodel.layers, io_lengths(qmodel.graph)):
        if isinstance(layer, QuantizedLinear):
            total += math.ceil(layer.in_features / p) * layer.out_features + k
        elif isinstance(layer, QuantizedLstm):
            h = layer.hidden_size
            per_step = math.ceil((layer.input_size + h) / p) * 4 * h + 9 * h
            total += layer.steps * per_step + k
        else:
            total += math.ceil(in_len / p) + k
    return total


def inference_time_us(cycles: int, clock_mhz: float) -> float:
    if clock_mhz <= 0:
        raise EstimatorError(f"clock_mhz {clock_mhz} must be positive")
    if cycles < 0:
        raise EstimatorError(f"cycles {cycles} must be >= 0")
    return cycles / clock_mhz


def energy_uj(power_mw: float, time_us: float) -> float:
    if power_mw < 0 or time_us < 0:
        raise EstimatorError("power and time must be non-negative")
    return power_mw * time_us * 1e-3


def efficiency_gop_per_j(ops: int, energy: float) -> float:
    """ops per joule, scaled to GOP/J."""
    if energy <= 0:
        raise EstimatorError(f"energy {energy} uJ must be positive")
    return ops / (energy * 1e-6) / 1e9


# ---------------------------------------------------------------------------
# resources
# ---------------------------------------------------------------------------


def resource_estimate(
    qmodel: QuantizedModel,
    cfg: GenConfig,
    device: DeviceProfile | None = None,
    coeffs: CostCoefficients = DEFAULT_COEFFICIENTS,
) -> tuple[ResourceEstimate, bool]:
    """Estimate (resources, fits).  fits is True when no device is given."""
    n = qmodel.fmt.total_bits
    p = cfg.parallel_macs
    luts = coeffs.base_luts
    ffs = coeffs.base_ffs
    bram_bits = 0
    max_in = 1
    for layer, (in_len, _) in zip(qmodel.layers, io_lengths(qmodel.graph)):
        if isinstance(layer, QuantizedLinear):
            bram_bits += (len(layer.weights) + len(layer.bias)) * n
            max_in = max(max_in, layer.in_features)
            a, b, c = coeffs.linear_luts
            luts += a + b * p + c * n
            a, b, c = coeffs.linear_ffs
            ffs += a + b * n + c * accumulator_bits(n, layer.in_features)
        elif isinstance(layer, QuantizedLstm):
            bram_bits += (len(layer.gate_weights) + len(layer.gate_bias)) * n
            concat = layer.input_size + layer.hidden_size
            max_in = max(max_in, concat)
            a, b, c = coeffs.lstm_luts
            luts += a + b * p + c * n
            a, b, c = coeffs.lstm_ffs
            ffs += a + b * layer.hidden_size * n + c * accumulator_bits(n, concat)
        else:
            a, b = coeffs.activation_luts
            luts += a + b * n
            a, b = coeffs.activation_ffs
            ffs += a + b * n
    est = ResourceEstimate(luts=luts, ffs=ffs, bram_bits=bram_bits, dsp_slices=p)
    fits = True if device is None else est.fits_in(device.capacity)
    return est, fits


# ---------------------------------------------------------------------------
# performance reports
# ---------------------------------------------------------------------------

REPORT_SOURCES = ("estimated", "measured")


@dataclass(frozen=True)
class PerformanceReport:
    source: str  # "estimated" | "measured"
    power_mw: float
    time_per_inference_us: float
    ops: int
    energy_uj: float
    gop_per_j: float
    channels: tuple[float, ...] | None = None  # per-channel mW, optional

    def to_dict(self) -> dict:
        doc = {
            "source": self.source,
            "power_mw": self.power_mw,
            "time_per_inference_us": self.time_per_inference_us,
            "ops": self.ops,
            "energy_uj": self.energy_uj,
            "gop_per_j": self.gop_per_j,
        }
        doc["channels"] = list(self.channels) if self.channels is not None else None
        return doc

    def to_json(self) -> bytes:
        return (json.dumps(self.to_dict(), indent=2) + "\n").encode("utf-8")

    @classmethod
    def from_dict(cls, doc: dict) -> "PerformanceReport":
        if not isinstance(doc, dict):
            raise EstimatorError(f"report must be a JSON object, got {type(doc).__name__}")
        if doc.get("source") not in REPORT_SOURCES:
            raise EstimatorError(f"report source {doc.get('source')!r} not in {REPORT_SOURCES}")
        channels = doc.get("channels")
        return cls(
            source=doc["source"],
            power_mw=float(doc["power_mw"]),
            time_per_inference_us=float(doc["time_per_inference_us"]),
            ops=int(doc["ops"]),
            energy_uj=float(doc["energy_uj"]),
            gop_per_j=float(doc["gop_per_j"]),
            channels=tuple(float(c) for c in channels) if channels is not None else None,
        )

    @classmethod
    def from_json(cls, data: bytes | str) -> "PerformanceReport":
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise EstimatorError(f"report is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def make_report(
    source: str,
    power_mw: float,
    time_us: float,
    ops: int,
    channels: tuple[float, ...] | None = None,
) -> PerformanceReport:
    """Compose a report whose derived fields are internally consistent."""
    if source not in REPORT_SOURCES:
        raise EstimatorError(f"source {source!r} not in {REPORT_SOURCES}")
    energy = energy_uj(power_mw, time_us)
    return PerformanceReport(
        source=source,
        power_mw=power_mw,
        time_per_inference_us=time_us,
        ops=ops,
        energy_uj=energy,
        gop_per_j=efficiency_gop_per_j(ops, energy),
        channels=channels,
    )


def build_report(
    qmodel: QuantizedModel,
    cfg: GenConfig,
    power_mw: float,
) -> PerformanceReport:
    """Estimated report straight from a quantized model and config."""
    cycles = cycle_count(qmodel, cfg)
    time_us = inference_time_us(cycles, cfg.clock_mhz)
    return make_report("estimated", power_mw, time_us, op_count(qmodel.graph))


# ---------------------------------------------------------------------------
# device profiles
# ---------------------------------------------------------------------------


def _profile_from_entry(name: str, entry: dict) -> DeviceProfile:
    cap = ResourceEstimate(
        luts=int(entry["luts"]),
        ffs=int(entry["ffs"]),
        bram_bits=int(entry["bram_bits"]),
        dsp_slices=int(entry["dsp_slices"]),
    )
    return DeviceProfile(
        name=name,
        capacity=cap,
        default_clock_mhz=float(entry.get("default_clock_mhz", 100.0)),
    )


def load_devices(path: str | Path | None = None) -> dict[str, DeviceProfile]:
    """Load device profiles; defaults ship with the package as devices.json."""
    if path is None:
        text = (
            importlib_resources.files("accelkit")
            .joinpath("data/devices.json")
            .read_text("utf-8")
        )
    else:
        text = Path(path).read_text("utf-8")
    doc = json.loads(text)
    return {name: _profile_from_entry(name, entry) for name, entry in doc.items()}
