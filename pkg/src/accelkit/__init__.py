"""accelkit: small-model FPGA accelerator toolchain.

Translate trained Linear/LSTM/hard-activation models into fixed-point
VHDL accelerators, estimate their latency, power, and energy efficiency,
and verify them end to end against a simulated power-monitored device.

Modules:

* ``model_ir``      - JSON interchange format, validation, float reference
* ``quantize``      - fixed-point formats and model quantization
* ``fixsim``        - bit-exact fixed-point inference (the RTL oracle)
* ``estimator``     - cycle/latency/energy/resource models and reports
* ``rtlgen``        - VHDL generation, testbenches, manifests
* ``nodeprotocol``  - framed binary wire protocol with CRC-8
* ``nodesim``       - simulated measurement node (FSM, meters, TCP server)
* ``cli``           - translate / estimate / node-sim / measure / compare
"""

from .estimator import (
    GenConfig,
    PerformanceReport,
    ResourceEstimate,
    build_report,
    cycle_count,
    efficiency_gop_per_j,
    energy_uj,
    inference_time_us,
    load_devices,
    make_report,
)
from .fixsim import InferenceStats, infer_fixed
from .model_ir import (
    Activation,
    Diagnostic,
    Linear,
    Lstm,
    ModelGraph,
    infer_float,
    op_count,
    parse_model,
    serialize_model,
    validate,
)
from .quantize import (
    DEFAULT_FORMAT,
    FixedPointFormat,
    QuantizationReport,
    QuantizedModel,
    dequantize,
    quantize_model,
    to_fixed,
)
from .rtlgen import AcceleratorManifest, ResourceOverflow, RtlBundle, generate_rtl, write_bundle

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "AcceleratorManifest",
    "DEFAULT_FORMAT",
    "Diagnostic",
    "FixedPointFormat",
    "GenConfig",
    "InferenceStats",
    "Linear",
    "Lstm",
    "ModelGraph",
    "PerformanceReport",
    "QuantizationReport",
    "QuantizedModel",
    "ResourceEstimate",
    "ResourceOverflow",
    "RtlBundle",
    "build_report",
    "cycle_count",
    "dequantize",
    "efficiency_gop_per_j",
    "energy_uj",
    "generate_rtl",
    "infer_fixed",
    "infer_float",
    "inference_time_us",
    "load_devices",
    "make_report",
    "op_count",
    "parse_model",
    "quantize_model",
    "serialize_model",
    "to_fixed",
    "validate",
    "write_bundle",
    "__version__",
]
