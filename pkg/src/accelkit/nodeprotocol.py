"""Framed binary wire protocol between host tools and the measurement node.

Frame layout (little-endian multi-byte fields)::

    0xEA | cmd:u8 | length:u16 | payload[length] | crc8

The checksum is CRC-8, polynomial 0x07, init 0x00, MSB first, computed
over cmd, length and payload (not the magic byte).

Commands and responses:

    0x01 PING                          -> 0x81 PONG
    0x02 LOAD_MANIFEST (manifest JSON) -> 0x82 ACK
    0x03 FPGA_ON                       -> 0x82 ACK
    0x04 FPGA_OFF                      -> 0x82 ACK
    0x05 INFER (u16 count, count*i32)  -> 0x85 (u16 count, count*i32, u32 elapsed_ns)
    0x06 READ_CH (u8 channel)          -> 0x86 (u32 avg_uw, u32 samples)
    0x07 STREAM_START (u16 interval_ms)-> periodic 0x87 (8 * u32 uW)
    0x08 STREAM_STOP                   -> 0x82 ACK
    any failure                        -> 0xFF (u8 error code)

Error codes: 0x01 bad checksum, 0x02 unknown command, 0x03 fpga off,
0x04 no manifest, 0x05 bad channel, 0x06 bad length/payload.
"""

from __future__ import annotations

import struct

MAGIC = 0xEA

CMD_PING = 0x01
CMD_LOAD_MANIFEST = 0x02
CMD_FPGA_ON = 0x03
CMD_FPGA_OFF = 0x04
CMD_INFER = 0x05
CMD_READ_CH = 0x06
CMD_STREAM_START = 0x07
CMD_STREAM_STOP = 0x08

RESP_PONG = 0x81
RESP_ACK = 0x82
RESP_INFER = 0x85
RESP_READ_CH = 0x86
RESP_STREAM = 0x87
RESP_ERR = 0xFF

ERR_BAD_CRC = 0x01
ERR_UNKNOWN_CMD = 0x02
ERR_FPGA_OFF = 0x03
ERR_NO_MANIFEST = 0x04
ERR_BAD_CHANNEL = 0x05
ERR_BAD_LENGTH = 0x06

ERR_NAMES = {
    ERR_BAD_CRC: "bad checksum",
    ERR_UNKNOWN_CMD: "unknown command",
    ERR_FPGA_OFF: "fpga off",
    ERR_NO_MANIFEST: "no manifest loaded",
    ERR_BAD_CHANNEL: "bad channel",
    ERR_BAD_LENGTH: "bad length",
}

MAX_PAYLOAD = 0xFFFF


class FrameError(Exception):
    """Carries the protocol error code the peer should be sent."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def crc8(data: bytes) -> int:
    """CRC-8, poly 0x07, init 0x00, no reflection (check('123456789') = 0xF4)."""
    crc = 0x00
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


def encode_frame(cmd: int, payload: bytes = b"") -> bytes:
    if not 0 <= cmd <= 0xFF:
        raise ValueError(f"command {cmd:#x} out of range")
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    body = struct.pack("<BH", cmd, len(payload)) + payload
    return bytes([MAGIC]) + body + bytes([crc8(body)])


def decode_frame(frame: bytes) -> tuple[int, bytes]:
    """Validate one raw frame; returns (cmd, payload) or raises FrameError."""
    if len(frame) < 5:
        raise FrameError(ERR_BAD_LENGTH, f"frame of {len(frame)} bytes is too short")
    if frame[0] != MAGIC:
        raise FrameError(ERR_BAD_LENGTH, f"bad magic byte {frame[0]:#04x}")
    cmd, length = struct.unpack_from("<BH", frame, 1)
    if len(frame) != 4 + length + 1:
        raise FrameError(
            ERR_BAD_LENGTH, f"declared payload {length}, frame has {len(frame) - 5}"
        )
    body = frame[1:-1]
    if crc8(body) != frame[-1]:
        raise FrameError(ERR_BAD_CRC, "checksum mismatch")
    return cmd, frame[4:-1]


class Deframer:
    """Byte-stream reassembler that survives garbage between frames.

    feed() returns complete raw candidate frames (magic through crc byte);
    the caller still runs decode_frame on each, so corrupted frames get an
    error response instead of silently vanishing.  A candidate that fails
    its checksum is surfaced exactly once and then rescanned from the byte
    after its magic, so a stray magic byte with a bogus length cannot
    swallow the valid frames that follow it.
    """

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf += data
        frames = []
        while True:
            start = self._buf.find(bytes([MAGIC]))
            if start < 0:
                self._buf.clear()
                break
            if start:
                del self._buf[:start]
            if len(self._buf) < 4:
                break
            length = struct.unpack_from("<H", self._buf, 2)[0]
            total = 4 + length + 1
            if len(self._buf) < total:
                break
            candidate = bytes(self._buf[:total])
            frames.append(candidate)
            if crc8(candidate[1:-1]) == candidate[-1]:
                del self._buf[:total]
            else:
                del self._buf[:1]  # resync: do not trust the bogus length
        return frames

    def pending(self) -> int:
        return len(self._buf)


# ---------------------------------------------------------------------------
# payload packers shared by device and host
# ---------------------------------------------------------------------------


def pack_infer_request(codes: list[int]) -> bytes:
    return struct.pack("<H", len(codes)) + struct.pack(f"<{len(codes)}i", *codes)


def unpack_infer_request(payload: bytes) -> list[int]:
    if len(payload) < 2:
        raise FrameError(ERR_BAD_LENGTH, "infer payload too short")
    (count,) = struct.unpack_from("<H", payload, 0)
    if len(payload) != 2 + 4 * count:
        raise FrameError(
            ERR_BAD_LENGTH, f"infer declares {count} codes, payload has {len(payload) - 2} bytes"
        )
    return list(struct.unpack_from(f"<{count}i", payload, 2))


def pack_infer_response(codes: list[int], elapsed_ns: int) -> bytes:
    return (
        struct.pack("<H", len(codes))
        + struct.pack(f"<{len(codes)}i", *codes)
        + struct.pack("<I", elapsed_ns & 0xFFFFFFFF)
    )


def unpack_infer_response(payload: bytes) -> tuple[list[int], int]:
    if len(payload) < 6:
        raise FrameError(ERR_BAD_LENGTH, "infer response too short")
    (count,) = struct.unpack_from("<H", payload, 0)
    if len(payload) != 2 + 4 * count + 4:
        raise FrameError(ERR_BAD_LENGTH, "infer response length mismatch")
    codes = list(struct.unpack_from(f"<{count}i", payload, 2))
    (elapsed_ns,) = struct.unpack_from("<I", payload, 2 + 4 * count)
    return codes, elapsed_ns


def pack_read_response(avg_uw: int, samples: int) -> bytes:
    return struct.pack("<II", avg_uw & 0xFFFFFFFF, samples & 0xFFFFFFFF)


def unpack_read_response(payload: bytes) -> tuple[int, int]:
    if len(payload) != 8:
        raise FrameError(ERR_BAD_LENGTH, "read response must be 8 bytes")
    avg_uw, samples = struct.unpack("<II", payload)
    return avg_uw, samples


def pack_stream_sample(uw_per_channel: list[int]) -> bytes:
    if len(uw_per_channel) != 8:
        raise ValueError("stream sample needs exactly 8 channels")
    return struct.pack("<8I", *(v & 0xFFFFFFFF for v in uw_per_channel))


def unpack_stream_sample(payload: bytes) -> list[int]:
    if len(payload) != 32:
        raise FrameError(ERR_BAD_LENGTH, "stream sample must be 32 bytes")
    return list(struct.unpack("<8I", payload))
