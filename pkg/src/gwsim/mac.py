"""LoRaWAN MAC frames with a keyed integrity code.

Wire layout (ACK case is exactly 12 bytes)::

    byte 0      MHDR
    bytes 1-4   DevAddr
    byte 5      FCtrl   (0x20 = ACK)
    bytes 6-7   FCnt    (little-endian)
    8..n-4      payload (empty for a bare ACK)
    last 4      MIC

The MIC is an HMAC-SHA256 tag truncated to 4 bytes.  In ``MicMode.V1_1`` the
counter of the uplink being acknowledged enters the tag of an ACK downlink, so
an ACK cannot be re-targeted at a different uplink.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, replace

MHDR_UNCONFIRMED_UP = 0x40
MHDR_UNCONFIRMED_DOWN = 0x60
MHDR_CONFIRMED_UP = 0x80
MHDR_CONFIRMED_DOWN = 0xA0

FCTRL_ACK = 0x20
MIC_LEN = 4
MIN_FRAME_LEN = 12

_FHDR = struct.Struct("<B4sBH")


class MicMode(enum.Enum):
    V1_0 = "v1_0"
    V1_1 = "v1_1"


class Direction(enum.IntEnum):
    UP = 0
    DOWN = 1


class AckVerdict(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED_COUNTER = "rejected_counter"
    REJECTED_MIC = "rejected_mic"


class FrameError(ValueError):
    pass


class MissingAckedCounter(ValueError):
    pass


@dataclass(frozen=True)
class DevAddr:
    raw: bytes

    def __post_init__(self):
        if not isinstance(self.raw, (bytes, bytearray)) or len(self.raw) != 4:
            raise ValueError("DevAddr must be exactly 4 bytes")
        object.__setattr__(self, "raw", bytes(self.raw))

    @classmethod
    def parse(cls, text: str) -> "DevAddr":
        return cls(bytes.fromhex(text.replace(":", "")))

    def __str__(self) -> str:
        return self.raw.hex()


@dataclass(frozen=True)
class NwkSKey:
    raw: bytes

    def __post_init__(self):
        if not isinstance(self.raw, (bytes, bytearray)) or len(self.raw) != 16:
            raise ValueError("NwkSKey must be exactly 16 bytes")
        object.__setattr__(self, "raw", bytes(self.raw))

    def __repr__(self) -> str:
        # keep key material out of logs and tracebacks
        return "NwkSKey(<redacted>)"


@dataclass(frozen=True)
class MacFrame:
    mhdr: int
    dev_addr: DevAddr
    fctrl: int
    fcnt: int
    payload: bytes = b""
    mic: bytes = b"\x00" * MIC_LEN

    def __post_init__(self):
        if not 0 <= self.mhdr <= 0xFF or not 0 <= self.fctrl <= 0xFF:
            raise ValueError("mhdr and fctrl are single bytes")
        if not 0 <= self.fcnt <= 0xFFFF:
            raise ValueError("fcnt must fit in 16 bits")
        if len(self.mic) != MIC_LEN:
            raise ValueError("mic must be 4 bytes")
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "mic", bytes(self.mic))

    @property
    def is_ack(self) -> bool:
        return bool(self.fctrl & FCTRL_ACK)

    @property
    def is_confirmed_up(self) -> bool:
        return self.mhdr == MHDR_CONFIRMED_UP

    @property
    def is_uplink(self) -> bool:
        return self.mhdr in (MHDR_UNCONFIRMED_UP, MHDR_CONFIRMED_UP)


def serialize_frame(frame: MacFrame) -> bytes:
    return _FHDR.pack(frame.mhdr, frame.dev_addr.raw, frame.fctrl, frame.fcnt) + frame.payload + frame.mic


def parse_frame(raw: bytes) -> MacFrame:
    raw = bytes(raw)
    if len(raw) < MIN_FRAME_LEN:
        raise FrameError(f"MAC frame truncated: {len(raw)} < {MIN_FRAME_LEN} bytes")
    mhdr, addr, fctrl, fcnt = _FHDR.unpack_from(raw)
    return MacFrame(mhdr, DevAddr(addr), fctrl, fcnt, raw[_FHDR.size:-MIC_LEN], raw[-MIC_LEN:])


def peek_dev_addr(raw: bytes) -> DevAddr | None:
    """DevAddr from a possibly damaged frame; the header precedes the damaged tail."""
    return DevAddr(raw[1:5]) if len(raw) >= 5 else None


def keyed_mac(key: bytes, message: bytes) -> bytes:
    return hmac.new(key, message, hashlib.sha256).digest()


def mic_input(frame: MacFrame, direction: Direction, mode: MicMode, acked_fcnt: int | None) -> bytes:
    msg = (bytes([direction, frame.mhdr]) + frame.dev_addr.raw + struct.pack("<H", frame.fcnt)
           + bytes([frame.fctrl]) + frame.payload)
    if mode is MicMode.V1_1 and direction is Direction.DOWN and frame.is_ack:
        if acked_fcnt is None:
            raise MissingAckedCounter("V1_1 ACK integrity code needs the acknowledged uplink counter")
        msg += struct.pack("<H", acked_fcnt)
    return msg


def compute_mic(key: NwkSKey, frame: MacFrame, direction: Direction, mode: MicMode,
                acked_fcnt: int | None = None) -> bytes:
    """MIC over everything but the frame's own MIC field.

    ``acked_fcnt`` is ignored in V1_0 and required for V1_1 downlink ACKs.
    """
    return keyed_mac(key.raw, mic_input(frame, Direction(direction), mode, acked_fcnt))[:MIC_LEN]


def sign(key: NwkSKey, frame: MacFrame, direction: Direction, mode: MicMode,
         acked_fcnt: int | None = None) -> MacFrame:
    return replace(frame, mic=compute_mic(key, frame, direction, mode, acked_fcnt))


def build_uplink(key: NwkSKey, dev_addr: DevAddr, fcnt: int, payload: bytes, *, confirmed: bool = True) -> MacFrame:
    mhdr = MHDR_CONFIRMED_UP if confirmed else MHDR_UNCONFIRMED_UP
    return sign(key, MacFrame(mhdr, dev_addr, 0, fcnt, payload), Direction.UP, MicMode.V1_0)


def build_ack(key: NwkSKey, dev_addr: DevAddr, downlink_fcnt: int, mode: MicMode,
              acked_fcnt: int | None = None) -> MacFrame:
    frame = MacFrame(MHDR_UNCONFIRMED_DOWN, dev_addr, FCTRL_ACK, downlink_fcnt, b"")
    return sign(key, frame, Direction.DOWN, mode, acked_fcnt)


def verify_uplink(key: NwkSKey, frame: MacFrame) -> bool:
    return hmac.compare_digest(compute_mic(key, frame, Direction.UP, MicMode.V1_0), frame.mic)


def verify_ack(key: NwkSKey, frame: MacFrame, device_last_down_fcnt: int | None, mode: MicMode,
               expected_acked_fcnt: int | None) -> AckVerdict:
    """Device-side acceptance of a downlink.

    The counter must be strictly larger than the last one the device accepted
    (``None`` means nothing received yet); then the MIC is recomputed, in V1_1
    with the counter of the uplink the device is waiting on.
    """
    if device_last_down_fcnt is not None and frame.fcnt <= device_last_down_fcnt:
        return AckVerdict.REJECTED_COUNTER
    try:
        expected = compute_mic(key, frame, Direction.DOWN, mode, expected_acked_fcnt)
    except MissingAckedCounter:
        return AckVerdict.REJECTED_MIC
    if not hmac.compare_digest(expected, frame.mic):
        return AckVerdict.REJECTED_MIC
    return AckVerdict.ACCEPTED
