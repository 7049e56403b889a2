"""Command-line workflow: translate, estimate, node-sim, measure, compare.

The five subcommands chain into the development loop the toolchain is
built around: translate a model into an RTL bundle, estimate its
latency/energy from the manifest, bring up a simulated measurement node,
measure against that node over the wire protocol, and compare the two
reports against acceptance thresholds.  Two auxiliary subcommands,
validate and infer, expose the model checker and the reference
interpreters to external tooling (exporters, CI scripts).

Exit codes form a stable contract for scripting:

    0  success / comparison verdict PASS
    1  comparison verdict FAIL
    2  input errors (bad files, validation diagnostics, mismatched reports)
    3  resource overflow (model does not fit the target device)
    4  connectivity (node unreachable or protocol session failed)
    5  correctness mismatch (device outputs differ from local simulation)
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from dataclasses import dataclass
from pathlib import Path

from . import fixsim, model_ir, nodesim
from .estimator import GenConfig, PerformanceReport, load_devices, make_report
from .nodesim import (
    FPGA_CORE_CHANNEL,
    NUM_CHANNELS,
    STATE_RUNNING,
    DeviceError,
    NodeClient,
    PowerProfile,
    SimNode,
)
from .quantize import DEFAULT_FORMAT, FixedPointFormat, model_from_payload, quantize_model
from .rtlgen import (
    MANIFEST_NAME,
    AcceleratorManifest,
    ResourceOverflow,
    generate_rtl,
    write_bundle,
)

LOGGER = logging.getLogger("accelkit.cli")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_RESOURCE = 3
EXIT_CONNECT = 4
EXIT_MISMATCH = 5

ESTIMATED_REPORT_NAME = "report.estimated.json"
MEASURED_REPORT_NAME = "report.measured.json"


def _err(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    """Acceptance limits for the translate and compare stages."""

    max_quant_mse: float | None = None
    min_gop_per_j: float | None = None
    max_time_us: float | None = None

    def __post_init__(self) -> None:
        for name in ("max_quant_mse", "min_gop_per_j", "max_time_us"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"threshold {name} must be nonnegative, got {value}")


def load_thresholds(path: str | Path) -> Thresholds:
    doc = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(doc, dict):
        raise ValueError("thresholds file must hold a JSON object")
    known = {"max_quant_mse", "min_gop_per_j", "max_time_us"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown threshold keys: {sorted(unknown)}")
    return Thresholds(**{k: float(v) for k, v in doc.items()})


# ---------------------------------------------------------------------------
# translate
# ---------------------------------------------------------------------------


def cmd_translate(args: argparse.Namespace) -> int:
    model_path = Path(args.model)
    try:
        document = model_path.read_bytes()
    except OSError as exc:
        _err(f"MissingModel: cannot read {model_path}: {exc}")
        return EXIT_INPUT
    try:
        graph = model_ir.parse_model(document)
    except model_ir.ModelError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT

    try:
        fmt = FixedPointFormat.from_flag(args.fixed)
        cfg = GenConfig(parallel_macs=args.parallel_macs, clock_mhz=args.clock)
    except ValueError as exc:
        _err(f"BadConfig: {exc}")
        return EXIT_INPUT

    device = None
    if args.device is not None:
        try:
            devices = load_devices(args.devices)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            _err(f"BadDeviceFile: {exc}")
            return EXIT_INPUT
        if args.device not in devices:
            _err(
                f"UnknownDevice: {args.device!r}; available: {', '.join(sorted(devices))}"
            )
            return EXIT_INPUT
        device = devices[args.device]

    thresholds = Thresholds()
    if args.thresholds is not None:
        try:
            thresholds = load_thresholds(args.thresholds)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            _err(f"BadThresholds: {exc}")
            return EXIT_INPUT

    qmodel, quant_report = quantize_model(graph, fmt)
    if (
        thresholds.max_quant_mse is not None
        and quant_report.worst_mse > thresholds.max_quant_mse
    ):
        _err(
            "QuantizationLoss: worst tensor mse "
            f"{quant_report.worst_mse:.3e} exceeds max_quant_mse "
            f"{thresholds.max_quant_mse:.3e}"
        )
        return EXIT_INPUT

    try:
        bundle = generate_rtl(
            qmodel,
            cfg,
            device=device,
            force=args.force,
            quantization=quant_report.to_dict(),
        )
    except ResourceOverflow as exc:
        _err(f"ResourceOverflow: {exc}")
        return EXIT_RESOURCE

    out_dir = Path(args.out)
    paths = write_bundle(bundle, out_dir)
    manifest = bundle.manifest
    res = manifest.resources
    print(f"wrote {len(paths)} files to {out_dir}")
    print(
        f"format {fmt}, {cfg.parallel_macs} parallel MAC(s), "
        f"{cfg.clock_mhz:g} MHz"
    )
    print(f"cycles per inference: {manifest.cycles_per_inference}")
    print(f"ops per inference: {manifest.ops}")
    print(
        f"resources: {res.luts} LUTs, {res.ffs} FFs, "
        f"{res.bram_bits} BRAM bits, {res.dsp_slices} DSP slices"
    )
    print(
        f"quantization: worst mse {quant_report.worst_mse:.3e}, "
        f"{quant_report.total_saturations} saturated code(s)"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _load_manifest(build_dir: str | Path) -> AcceleratorManifest:
    path = Path(build_dir) / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} under {build_dir}")
    return AcceleratorManifest.from_json(path.read_bytes())


def _load_power_profile(path: str | None) -> PowerProfile:
    if path is None:
        return PowerProfile.default()
    return PowerProfile.load(path)


def cmd_estimate(args: argparse.Namespace) -> int:
    try:
        manifest = _load_manifest(args.build)
    except FileNotFoundError as exc:
        _err(f"MissingManifest: {exc}")
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _err(f"BadManifest: {exc}")
        return EXIT_INPUT
    try:
        profile = _load_power_profile(args.power_profile)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        _err(f"BadPowerProfile: {exc}")
        return EXIT_INPUT

    power_mw = profile.power_mw(STATE_RUNNING, FPGA_CORE_CHANNEL)
    time_us = manifest.cycles_per_inference / manifest.clock_mhz
    report = make_report("estimated", power_mw, time_us, manifest.ops)

    out_path = Path(args.out) if args.out else Path(args.build) / ESTIMATED_REPORT_NAME
    out_path.write_bytes(report.to_json())
    sys.stdout.write(report.to_json().decode("utf-8"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# node-sim
# ---------------------------------------------------------------------------


def cmd_node_sim(args: argparse.Namespace) -> int:
    try:
        profile = _load_power_profile(args.power_profile)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        _err(f"BadPowerProfile: {exc}")
        return EXIT_INPUT
    node = SimNode(
        profile=profile,
        noise_mw=args.noise_mw,
        seed=args.seed,
        config_time_us=args.config_time_us,
    )
    try:
        nodesim.serve_forever(node, args.host, args.port, wallclock=args.wallclock)
    except KeyboardInterrupt:
        return EXIT_OK
    except OSError as exc:
        _err(f"ConnectionFailed: cannot listen on {args.host}:{args.port}: {exc}")
        return EXIT_CONNECT
    return EXIT_OK


# ---------------------------------------------------------------------------
# measure
# ---------------------------------------------------------------------------


def _parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"address {text!r} must look like HOST:PORT")
    return host, int(port)


def cmd_measure(args: argparse.Namespace) -> int:
    try:
        host, port = _parse_addr(args.addr)
    except ValueError as exc:
        _err(f"BadAddress: {exc}")
        return EXIT_INPUT
    build_dir = Path(args.build)
    manifest_path = build_dir / MANIFEST_NAME
    try:
        manifest_bytes = manifest_path.read_bytes()
        manifest = AcceleratorManifest.from_json(manifest_bytes)
        qmodel = model_from_payload(manifest.model)
    except FileNotFoundError:
        _err(f"MissingManifest: no {MANIFEST_NAME} under {build_dir}")
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _err(f"BadManifest: {exc}")
        return EXIT_INPUT
    if args.runs < 1:
        _err(f"BadRuns: --runs must be >= 1, got {args.runs}")
        return EXIT_INPUT

    try:
        client = NodeClient(host, port, timeout_s=args.timeout)
    except OSError as exc:
        _err(f"ConnectionFailed: cannot connect to {host}:{port}: {exc}")
        return EXIT_CONNECT

    rng = random.Random(args.seed)
    fmt = qmodel.fmt
    lo, hi = fmt.min_code // 4, fmt.max_code // 4
    total_ns = 0
    try:
        with client:
            client.ping()
            client.load_manifest(manifest_bytes)
            client.fpga_on()
            for ch in range(NUM_CHANNELS):  # clear the meters before the batch
                client.read_channel(ch)
            for run in range(args.runs):
                vec = [rng.randint(lo, hi) for _ in range(manifest.input_len)]
                device_out, elapsed_ns = client.infer(vec)
                local_out, _ = fixsim.infer_fixed(qmodel, vec)
                if device_out != local_out:
                    _err(
                        f"OutputMismatch: run {run}: device returned {device_out}, "
                        f"local simulation returned {local_out}"
                    )
                    return EXIT_MISMATCH
                total_ns += elapsed_ns
            channels = []
            for ch in range(NUM_CHANNELS):
                avg_uw, _samples = client.read_channel(ch)
                channels.append(avg_uw / 1000.0)
    except DeviceError as exc:
        _err(f"DeviceError: {exc}")
        return EXIT_CONNECT
    except (ConnectionError, OSError) as exc:
        _err(f"ConnectionFailed: {exc}")
        return EXIT_CONNECT

    time_us = total_ns / args.runs / 1000.0
    report = make_report(
        "measured",
        power_mw=channels[FPGA_CORE_CHANNEL],
        time_us=time_us,
        ops=manifest.ops,
        channels=tuple(channels),
    )
    out_path = Path(args.out) if args.out else build_dir / MEASURED_REPORT_NAME
    out_path.write_bytes(report.to_json())
    sys.stdout.write(report.to_json().decode("utf-8"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

_TABLE_ROWS = (
    ("Power (mW)", "power_mw"),
    ("Time per inference (us)", "time_per_inference_us"),
    ("Energy efficiency (GOP/J)", "gop_per_j"),
)


def render_comparison(est: PerformanceReport, meas: PerformanceReport) -> str:
    lines = [
        f"{'Metric':<28}{'From Estimation':>16}{'From Device':>14}"
        f"{'Delta':>12}{'Delta %':>10}"
    ]
    for label, attr in _TABLE_ROWS:
        a = getattr(est, attr)
        b = getattr(meas, attr)
        delta = b - a
        pct = f"{delta / a * 100.0:+.1f}%" if a != 0 else "n/a"
        lines.append(f"{label:<28}{a:>16.3f}{b:>14.3f}{delta:>+12.3f}{pct:>10}")
    return "\n".join(lines) + "\n"


def cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for path, expected in ((args.estimated, "estimated"), (args.measured, "measured")):
        try:
            report = PerformanceReport.from_json(Path(path).read_bytes())
        except (OSError, ValueError, KeyError) as exc:
            _err(f"BadReport: {path}: {exc}")
            return EXIT_INPUT
        if report.source != expected:
            _err(f"BadReport: {path}: expected source {expected!r}, got {report.source!r}")
            return EXIT_INPUT
        reports.append(report)
    est, meas = reports

    sys.stdout.write(render_comparison(est, meas))

    if est.ops != meas.ops:
        _err(
            f"OpsMismatch: estimated report counts {est.ops} ops but measured "
            f"report counts {meas.ops}; reports refer to different models"
        )
        return EXIT_INPUT

    thresholds = Thresholds()
    if args.thresholds is not None:
        try:
            thresholds = load_thresholds(args.thresholds)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            _err(f"BadThresholds: {exc}")
            return EXIT_INPUT

    failures = []
    if (
        thresholds.min_gop_per_j is not None
        and meas.gop_per_j < thresholds.min_gop_per_j
    ):
        failures.append(
            f"measured efficiency {meas.gop_per_j:.4f} GOP/J below "
            f"min_gop_per_j {thresholds.min_gop_per_j:.4f}"
        )
    if (
        thresholds.max_time_us is not None
        and meas.time_per_inference_us > thresholds.max_time_us
    ):
        failures.append(
            f"measured time {meas.time_per_inference_us:.4f} us above "
            f"max_time_us {thresholds.max_time_us:.4f}"
        )
    if failures:
        print("VERDICT: FAIL (" + "; ".join(failures) + ")")
        return EXIT_FAIL
    print("VERDICT: PASS")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate / infer (hooks for external tooling)
# ---------------------------------------------------------------------------


def _diagnostic_dict(diag: model_ir.Diagnostic) -> dict:
    return {
        "severity": diag.severity,
        "code": diag.code,
        "message": diag.message,
        "layer": diag.layer,
    }


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        document = Path(args.model).read_bytes()
    except OSError as exc:
        _err(f"MissingModel: {exc}")
        return EXIT_INPUT
    try:
        graph = model_ir.build_graph(document)
        diagnostics = model_ir.validate(graph)
    except model_ir.ModelError as exc:
        diagnostics = [
            model_ir.Diagnostic(
                severity="error",
                code=type(exc).__name__,
                message=str(exc),
                layer=getattr(exc, "layer", None),
            )
        ]
    if args.json:
        doc = {"diagnostics": [_diagnostic_dict(d) for d in diagnostics]}
        print(json.dumps(doc, indent=2))
    else:
        for diag in diagnostics:
            where = f"layer {diag.layer}" if diag.layer is not None else "model"
            print(f"{diag.severity} {where} {diag.code}: {diag.message}")
        if not diagnostics:
            print("ok: no diagnostics")
    has_errors = any(d.severity == "error" for d in diagnostics)
    return EXIT_INPUT if has_errors else EXIT_OK


def _read_input_vectors(path: str) -> list[list[float]]:
    if path == "-":
        doc = json.load(sys.stdin)
    else:
        doc = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(doc, list):
        raise ValueError("input must be a JSON array")
    if doc and all(isinstance(v, (int, float)) for v in doc):
        doc = [doc]  # single flat vector
    vectors = []
    for entry in doc:
        if not isinstance(entry, list) or not all(
            isinstance(v, (int, float)) for v in entry
        ):
            raise ValueError("each input vector must be a JSON array of numbers")
        vectors.append([float(v) for v in entry])
    return vectors


def cmd_infer(args: argparse.Namespace) -> int:
    try:
        graph = model_ir.parse_model(Path(args.model).read_bytes())
    except OSError as exc:
        _err(f"MissingModel: {exc}")
        return EXIT_INPUT
    except model_ir.ModelError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    try:
        vectors = _read_input_vectors(args.input)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        _err(f"BadInput: {exc}")
        return EXIT_INPUT

    outputs = []
    try:
        if args.fixed is not None:
            fmt = FixedPointFormat.from_flag(args.fixed)
            qmodel, _ = quantize_model(graph, fmt)
            for vec in vectors:
                codes = fixsim.quantize_input(vec, fmt)
                out_codes, _stats = fixsim.infer_fixed(qmodel, codes)
                outputs.append(fixsim.dequantize_output(out_codes, fmt))
        else:
            for vec in vectors:
                outputs.append([float(v) for v in model_ir.infer_float(graph, vec)])
    except (model_ir.ModelError, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    print(json.dumps({"outputs": outputs}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accelkit",
        description="Neural accelerator toolchain: translate, estimate, measure, compare.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="enable info-level logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("translate", help="generate an RTL bundle from a model file")
    p.add_argument("--model", required=True, help="interchange model JSON")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--fixed", default=str(DEFAULT_FORMAT), help="fixed-point format N.F")
    p.add_argument(
        "--parallel-macs", "--p", dest="parallel_macs", type=int, default=1,
        help="physical MAC lanes per layer",
    )
    p.add_argument("--clock", type=float, default=100.0, help="target clock in MHz")
    p.add_argument("--device", default=None, help="device profile name")
    p.add_argument("--devices", default=None, help="device profile JSON file")
    p.add_argument("--thresholds", default=None, help="thresholds JSON file")
    p.add_argument(
        "--force", action="store_true",
        help="emit the bundle even if it does not fit the device",
    )
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("estimate", help="derive a performance report from a bundle")
    p.add_argument("--build", required=True, help="bundle directory from translate")
    p.add_argument("--power-profile", default=None, help="power profile JSON file")
    p.add_argument("--out", default=None, help="report path (default: build dir)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("node-sim", help="serve a simulated measurement node")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=nodesim.DEFAULT_PORT)
    p.add_argument("--power-profile", default=None, help="power profile JSON file")
    p.add_argument("--noise-mw", type=float, default=0.0, help="gaussian power noise")
    p.add_argument("--seed", type=int, default=0, help="noise RNG seed")
    p.add_argument(
        "--config-time-us", type=float, default=nodesim.DEFAULT_CONFIG_TIME_US,
        help="simulated FPGA configuration dwell",
    )
    p.add_argument(
        "--wallclock", action="store_true",
        help="advance simulated time from wall-clock stream ticks (demo mode)",
    )
    p.set_defaults(func=cmd_node_sim)

    p = sub.add_parser("measure", help="measure a bundle against a running node")
    p.add_argument("--addr", required=True, help="node address HOST:PORT")
    p.add_argument("--build", required=True, help="bundle directory from translate")
    p.add_argument("--runs", type=int, default=100, help="inference batch size")
    p.add_argument("--seed", type=int, default=1, help="input vector RNG seed")
    p.add_argument("--timeout", type=float, default=10.0, help="socket timeout seconds")
    p.add_argument("--out", default=None, help="report path (default: build dir)")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("compare", help="compare estimated and measured reports")
    p.add_argument("estimated", help="estimated report JSON")
    p.add_argument("measured", help="measured report JSON")
    p.add_argument("--thresholds", default=None, help="thresholds JSON file")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="list model diagnostics")
    p.add_argument("--model", required=True, help="interchange model JSON")
    p.add_argument("--json", action="store_true", help="emit diagnostics as JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("infer", help="run the reference interpreter on input vectors")
    p.add_argument("--model", required=True, help="interchange model JSON")
    p.add_argument("--input", required=True, help="JSON vector file, or - for stdin")
    p.add_argument(
        "--fixed", default=None,
        help="run the fixed-point path in format N.F instead of float",
    )
    p.set_defaults(func=cmd_infer)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
