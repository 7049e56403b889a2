"""Simulated power-monitored device that hosts generated accelerators.

The device models a microcontroller plus FPGA pair whose supply rails are
monitored by accumulate/latch/clear energy meters (eight channels, like a
pair of four-channel PAC193x power monitors).  The FPGA power state drives
which per-channel power vector is billed:

    Off -> Configuring -> Idle <-> Running

Running is reachable only from Idle, and only while a manifest (the
bitfile stand-in) is loaded.  Time is simulated, not wall-clock: it
advances by exactly cycles/clock_mhz during an inference and by the
configuration dwell during power-up, so measurements are reproducible.

Meters integrate in integer picojoules (mW * us * 1000) into a 48-bit
wrapping accumulator per channel.  The nominal register unit is the
nanojoule; the LSB is kept three decimal orders finer so that integer-mW
power over fractional-microsecond dwells (for example 57.25 us at 71 mW)
accumulates without rounding error and split steps stay additive.  A
channel read latches and clears atomically and reports
round(energy_pj / window_us) microwatts, which equals
energy_nj / window_us * 1000 rounded.

An optional wall-clock ticker exists only to make demo streaming move.
"""

from __future__ import annotations

import json
import logging
import random
import socket
import socketserver
import threading
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path

from . import estimator, fixsim, nodeprotocol as proto
from .quantize import QuantizedModel, model_from_payload
from .rtlgen import AcceleratorManifest

LOGGER = logging.getLogger("accelkit.nodesim")

CHANNELS = (
    "mcu",
    "fpga_core",
    "fpga_io",
    "sensors",
    "extension",
    "flash",
    "supply_overhead",
    "battery_total",
)
NUM_CHANNELS = len(CHANNELS)
FPGA_CORE_CHANNEL = 1

STATE_OFF = "fpga_off"
STATE_CONFIGURING = "fpga_configuring"
STATE_IDLE = "fpga_idle"
STATE_RUNNING = "fpga_running"
STATES = (STATE_OFF, STATE_CONFIGURING, STATE_IDLE, STATE_RUNNING)

ACC_MASK = (1 << 48) - 1  # meters wrap at 48 bits, like the real register file

DEFAULT_PORT = 7070
DEFAULT_CONFIG_TIME_US = 1000.0


class NodeError(Exception):
    """Device-side failure; carries the protocol error code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class FpgaOff(NodeError):
    def __init__(self):
        super().__init__(proto.ERR_FPGA_OFF, "fpga is not in the idle state")


class NoManifest(NodeError):
    def __init__(self):
        super().__init__(proto.ERR_NO_MANIFEST, "no manifest loaded")


class BadInputLength(NodeError):
    def __init__(self, expected: int, got: int):
        super().__init__(
            proto.ERR_BAD_LENGTH, f"inference expects {expected} codes, got {got}"
        )


@dataclass(frozen=True)
class PowerProfile:
    """Per-channel mW for each composite device state."""

    states: dict[str, tuple[float, ...]]

    def __post_init__(self) -> None:
        for state in STATES:
            if state not in self.states:
                raise ValueError(f"power profile is missing state {state!r}")
            if len(self.states[state]) != NUM_CHANNELS:
                raise ValueError(
                    f"state {state!r} must list {NUM_CHANNELS} channel powers"
                )

    def power_mw(self, state: str, channel: int) -> float:
        return self.states[state][channel]

    @classmethod
    def from_dict(cls, doc: dict) -> "PowerProfile":
        return cls(
            states={
                str(k): tuple(float(x) for x in v) for k, v in doc.items()
            }
        )

    @classmethod
    def load(cls, path: str | Path) -> "PowerProfile":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    @classmethod
    def default(cls) -> "PowerProfile":
        text = (
            importlib_resources.files("accelkit")
            .joinpath("data/default_profile.json")
            .read_text("utf-8")
        )
        return cls.from_dict(json.loads(text))


@dataclass
class ChannelMeter:
    """Accumulate/latch/clear energy register, picojoule LSB."""

    energy_pj: int = 0
    samples: int = 0
    window_us: float = 0.0
    latched_energy_pj: int = 0
    latched_samples: int = 0
    latched_window_us: float = 0.0

    def add(self, pj: int) -> None:
        self.energy_pj = (self.energy_pj + pj) & ACC_MASK
        self.samples += 1

    def latch_and_clear(self) -> tuple[int, int, float]:
        """Atomically snapshot and reset the live registers."""
        self.latched_energy_pj = self.energy_pj
        self.latched_samples = self.samples
        self.latched_window_us = self.window_us
        self.energy_pj = 0
        self.samples = 0
        self.window_us = 0.0
        return self.latched_energy_pj, self.latched_samples, self.latched_window_us


class SimNode:
    """Authoritative device model; every mutation happens under one lock."""

    def __init__(
        self,
        profile: PowerProfile | None = None,
        noise_mw: float = 0.0,
        seed: int = 0,
        config_time_us: float = DEFAULT_CONFIG_TIME_US,
    ):
        self.profile = profile or PowerProfile.default()
        self.noise_mw = float(noise_mw)
        self.config_time_us = float(config_time_us)
        self._rng = random.Random(seed)
        self._lock = threading.RLock()
        self.state = STATE_OFF
        self.manifest: AcceleratorManifest | None = None
        self.qmodel: QuantizedModel | None = None
        self.sim_time_us = 0.0
        self.meters = [ChannelMeter() for _ in range(NUM_CHANNELS)]

    # -- simulated time ----------------------------------------------------

    def step_time(self, dt_us: float) -> None:
        """Advance simulated time, billing the current state's power."""
        if dt_us < 0:
            raise ValueError(f"dt_us {dt_us} must be >= 0")
        with self._lock:
            for ch, meter in enumerate(self.meters):
                power = self.profile.power_mw(self.state, ch)
                if self.noise_mw:
                    power = max(0.0, power + self._rng.gauss(0.0, self.noise_mw))
                meter.add(round(power * dt_us * 1000.0))  # mW * us = nJ = 1000 pJ
                meter.window_us += dt_us
            self.sim_time_us += dt_us

    def read_channel(self, channel: int) -> tuple[int, int]:
        """Latch-and-clear read; returns (average uW over the window, samples)."""
        if not 0 <= channel < NUM_CHANNELS:
            raise NodeError(proto.ERR_BAD_CHANNEL, f"channel {channel} out of range")
        with self._lock:
            energy_pj, samples, window_us = self.meters[channel].latch_and_clear()
        if samples == 0 or window_us <= 0.0:
            return 0, 0
        # pJ / us = uW
        return round(energy_pj / window_us), samples

    def instantaneous_uw(self) -> list[int]:
        with self._lock:
            return [
                round(self.profile.power_mw(self.state, ch) * 1000.0)
                for ch in range(NUM_CHANNELS)
            ]

    # -- control-plane operations ------------------------------------------

    def load_manifest(self, manifest_json: bytes) -> None:
        """Stage an accelerator image; allowed in any power state."""
        try:
            manifest = AcceleratorManifest.from_json(manifest_json)
            qmodel = model_from_payload(manifest.model)
        except Exception as exc:
            raise NodeError(proto.ERR_BAD_LENGTH, f"undecodable manifest: {exc}") from exc
        with self._lock:
            self.manifest = manifest
            self.qmodel = qmodel

    def fpga_on(self) -> None:
        with self._lock:
            if self.state != STATE_OFF:
                return
            self.state = STATE_CONFIGURING
            self.step_time(self.config_time_us)
            self.state = STATE_IDLE

    def fpga_off(self) -> None:
        with self._lock:
            self.state = STATE_OFF

    def run_inference(self, codes: list[int]) -> tuple[list[int], float]:
        """Execute one inference; returns (output codes, elapsed microseconds)."""
        with self._lock:
            if self.state != STATE_IDLE:
                raise FpgaOff()
            if self.manifest is None or self.qmodel is None:
                raise NoManifest()
            if len(codes) != self.manifest.input_len:
                raise BadInputLength(self.manifest.input_len, len(codes))
            fmt = self.qmodel.fmt
            mask = (1 << fmt.total_bits) - 1
            sign = 1 << (fmt.total_bits - 1)
            clipped = [((c & mask) ^ sign) - sign for c in codes]  # bus truncation
            elapsed_us = self.manifest.cycles_per_inference / self.manifest.clock_mhz
            self.state = STATE_RUNNING
            try:
                self.step_time(elapsed_us)
                out, _ = fixsim.infer_fixed(self.qmodel, clipped)
            finally:
                self.state = STATE_IDLE
            return out, elapsed_us

    def measure_report(self, runs: int) -> estimator.PerformanceReport:
        """Run a measurement batch locally (no protocol round-trips)."""
        with self._lock:
            if self.manifest is None or self.qmodel is None:
                raise NoManifest()
            if self.state != STATE_IDLE:
                raise FpgaOff()
            if runs < 1:
                raise ValueError("runs must be >= 1")
            for ch in range(NUM_CHANNELS):
                self.meters[ch].latch_and_clear()
            t0 = self.sim_time_us
            rng = random.Random(runs)
            fmt = self.qmodel.fmt
            for _ in range(runs):
                vec = [
                    rng.randint(fmt.min_code // 4, fmt.max_code // 4)
                    for _ in range(self.manifest.input_len)
                ]
                self.run_inference(vec)
            elapsed = self.sim_time_us - t0
            channels = []
            for ch in range(NUM_CHANNELS):
                avg_uw, _ = self.read_channel(ch)
                channels.append(avg_uw / 1000.0)
        return estimator.make_report(
            "measured",
            power_mw=channels[FPGA_CORE_CHANNEL],
            time_us=elapsed / runs,
            ops=self.manifest.ops,
            channels=tuple(channels),
        )

    # -- protocol ------------------------------------------------------------

    def handle_frame(self, frame: bytes) -> bytes:
        """Decode and execute one frame; always returns a response frame."""
        try:
            cmd, payload = proto.decode_frame(frame)
        except proto.FrameError as exc:
            return proto.encode_frame(proto.RESP_ERR, bytes([exc.code]))
        try:
            with self._lock:
                return self._dispatch(cmd, payload)
        except NodeError as exc:
            return proto.encode_frame(proto.RESP_ERR, bytes([exc.code]))
        except proto.FrameError as exc:
            return proto.encode_frame(proto.RESP_ERR, bytes([exc.code]))
        except Exception:  # never let a malformed request kill the device loop
            LOGGER.exception("internal error handling cmd %#04x", cmd)
            return proto.encode_frame(proto.RESP_ERR, bytes([proto.ERR_BAD_LENGTH]))

    def _dispatch(self, cmd: int, payload: bytes) -> bytes:
        if cmd == proto.CMD_PING:
            return proto.encode_frame(proto.RESP_PONG)
        if cmd == proto.CMD_LOAD_MANIFEST:
            self.load_manifest(payload)
            return proto.encode_frame(proto.RESP_ACK)
        if cmd == proto.CMD_FPGA_ON:
            self.fpga_on()
            return proto.encode_frame(proto.RESP_ACK)
        if cmd == proto.CMD_FPGA_OFF:
            self.fpga_off()
            return proto.encode_frame(proto.RESP_ACK)
        if cmd == proto.CMD_INFER:
            codes = proto.unpack_infer_request(payload)
            out, elapsed_us = self.run_inference(codes)
            return proto.encode_frame(
                proto.RESP_INFER, proto.pack_infer_response(out, round(elapsed_us * 1000.0))
            )
        if cmd == proto.CMD_READ_CH:
            if len(payload) != 1:
                raise proto.FrameError(proto.ERR_BAD_LENGTH, "READ_CH payload must be 1 byte")
            avg_uw, samples = self.read_channel(payload[0])
            return proto.encode_frame(proto.RESP_READ_CH, proto.pack_read_response(avg_uw, samples))
        if cmd == proto.CMD_STREAM_START:
            if len(payload) != 2:
                raise proto.FrameError(proto.ERR_BAD_LENGTH, "STREAM_START payload must be 2 bytes")
            interval_ms = int.from_bytes(payload, "little")
            if interval_ms < 1:
                raise proto.FrameError(proto.ERR_BAD_LENGTH, "stream interval must be >= 1 ms")
            # immediate snapshot; a serving transport schedules the periodic ticks
            return proto.encode_frame(
                proto.RESP_STREAM, proto.pack_stream_sample(self.instantaneous_uw())
            )
        if cmd == proto.CMD_STREAM_STOP:
            return proto.encode_frame(proto.RESP_ACK)
        raise NodeError(proto.ERR_UNKNOWN_CMD, f"unknown command {cmd:#04x}")


# ---------------------------------------------------------------------------
# TCP transport
# ---------------------------------------------------------------------------


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        server: NodeServer = self.server  # type: ignore[assignment]
        node = server.node
        deframer = proto.Deframer()
        stream_stop = threading.Event()
        stream_thread: threading.Thread | None = None
        send_lock = threading.Lock()

        def send(data: bytes) -> None:
            with send_lock:
                self.request.sendall(data)

        def stream_loop(interval_s: float) -> None:
            while not stream_stop.wait(interval_s):
                if server.wallclock:
                    node.step_time(interval_s * 1e6)
                try:
                    send(
                        proto.encode_frame(
                            proto.RESP_STREAM,
                            proto.pack_stream_sample(node.instantaneous_uw()),
                        )
                    )
                except OSError:
                    return

        try:
            while True:
                try:
                    data = self.request.recv(4096)
                except OSError:
                    return
                if not data:
                    return
                for frame in deframer.feed(data):
                    response = node.handle_frame(frame)
                    try:
                        cmd, payload = proto.decode_frame(frame)
                    except proto.FrameError:
                        cmd, payload = None, b""
                    if cmd == proto.CMD_STREAM_START and response[1:2] == bytes(
                        [proto.RESP_STREAM]
                    ):
                        interval_ms = int.from_bytes(payload, "little")
                        if stream_thread is None or not stream_thread.is_alive():
                            stream_stop.clear()
                            stream_thread = threading.Thread(
                                target=stream_loop,
                                args=(interval_ms / 1000.0,),
                                daemon=True,
                            )
                            stream_thread.start()
                    elif cmd == proto.CMD_STREAM_STOP:
                        stream_stop.set()
                    try:
                        send(response)
                    except OSError:
                        return
        finally:
            stream_stop.set()


class NodeServer(socketserver.ThreadingTCPServer):
    """TCP front end; all device state mutation is serialized by SimNode's lock."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, node: SimNode, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 wallclock: bool = False):
        self.node = node
        self.wallclock = wallclock
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return str(host), int(port)


def serve_forever(
    node: SimNode, host: str, port: int, wallclock: bool = False
) -> None:
    with NodeServer(node, host, port, wallclock=wallclock) as server:
        LOGGER.info("node simulator listening on %s:%d", *server.address)
        server.serve_forever()


# ---------------------------------------------------------------------------
# host-side client
# ---------------------------------------------------------------------------


class DeviceError(Exception):
    """Raised by the client when the device answers 0xFF."""

    def __init__(self, code: int):
        super().__init__(f"device error {code:#04x}: {proto.ERR_NAMES.get(code, 'unknown')}")
        self.code = code


class NodeClient:
    """Small blocking client used by the measurement workflow."""

    def __init__(self, host: str, port: int, timeout_s: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=timeout_s)
        self._deframer = proto.Deframer()
        self._pending: list[bytes] = []

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "NodeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _next_frame(self) -> tuple[int, bytes]:
        while not self._pending:
            data = self._sock.recv(4096)
            if not data:
                raise ConnectionError("device closed the connection")
            self._pending.extend(self._deframer.feed(data))
        frame = self._pending.pop(0)
        return proto.decode_frame(frame)

    def request(self, cmd: int, payload: bytes = b"") -> tuple[int, bytes]:
        self._sock.sendall(proto.encode_frame(cmd, payload))
        resp_cmd, resp_payload = self._next_frame()
        if resp_cmd == proto.RESP_ERR and len(resp_payload) == 1:
            raise DeviceError(resp_payload[0])
        return resp_cmd, resp_payload

    def ping(self) -> None:
        cmd, _ = self.request(proto.CMD_PING)
        if cmd != proto.RESP_PONG:
            raise ConnectionError(f"expected PONG, got {cmd:#04x}")

    def load_manifest(self, manifest_json: bytes) -> None:
        self.request(proto.CMD_LOAD_MANIFEST, manifest_json)

    def fpga_on(self) -> None:
        self.request(proto.CMD_FPGA_ON)

    def fpga_off(self) -> None:
        self.request(proto.CMD_FPGA_OFF)

    def infer(self, codes: list[int]) -> tuple[list[int], int]:
        cmd, payload = self.request(proto.CMD_INFER, proto.pack_infer_request(codes))
        if cmd != proto.RESP_INFER:
            raise ConnectionError(f"expected infer response, got {cmd:#04x}")
        return proto.unpack_infer_response(payload)

    def read_channel(self, channel: int) -> tuple[int, int]:
        cmd, payload = self.request(proto.CMD_READ_CH, bytes([channel]))
        if cmd != proto.RESP_READ_CH:
            raise ConnectionError(f"expected read response, got {cmd:#04x}")
        return proto.unpack_read_response(payload)
