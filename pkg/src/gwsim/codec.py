"""Semtech packet-forwarder UDP protocol: datagram framing and JSON bodies.

Header layout (all kinds)::

    byte 0      protocol version
    bytes 1-2   token (big-endian)
    byte 3      message identifier
    bytes 4-11  gateway EUI (PUSH_DATA, PULL_DATA, TX_ACK only)
    12-end      JSON body (PUSH_DATA, TX_ACK) / 4-end for PULL_RESP

This module is the only place that turns protocol messages into bytes.
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
import re
import struct
from dataclasses import dataclass

DEFAULT_VERSION = 2
SUPPORTED_VERSIONS = frozenset({1, 2})

HEADER_LEN = 4
EUI_LEN = 8
EUI_HEADER_LEN = HEADER_LEN + EUI_LEN

_HEADER = struct.Struct(">BHB")


class DatagramKind(enum.IntEnum):
    PUSH_DATA = 0x00
    PUSH_ACK = 0x01
    PULL_DATA = 0x02
    PULL_RESP = 0x03
    PULL_ACK = 0x04
    TX_ACK = 0x05


# kinds whose header carries the gateway EUI
EUI_KINDS = frozenset({DatagramKind.PUSH_DATA, DatagramKind.PULL_DATA, DatagramKind.TX_ACK})
# kinds that never carry a body
BODYLESS_KINDS = frozenset({DatagramKind.PUSH_ACK, DatagramKind.PULL_ACK, DatagramKind.PULL_DATA})


class CodecError(ValueError):
    """Base class for every classified decode/encode failure."""


class ShortDatagramError(CodecError):
    pass


class UnknownKindError(CodecError):
    pass


class KindLengthError(CodecError):
    """Datagram length does not fit the layout of its kind."""


class VersionError(CodecError):
    pass


class BodyNotAllowedError(CodecError):
    pass


class PayloadError(CodecError):
    """JSON body could not be turned into packet metadata."""


class MalformedJsonError(PayloadError):
    pass


class SchemaError(PayloadError):
    pass


class StatRangeError(PayloadError):
    pass


class SizeMismatchError(PayloadError):
    pass


@dataclass(frozen=True, order=True)
class GatewayEui:
    raw: bytes

    def __post_init__(self):
        if not isinstance(self.raw, (bytes, bytearray)) or len(self.raw) != EUI_LEN:
            raise ValueError(f"gateway EUI must be exactly {EUI_LEN} bytes")
        object.__setattr__(self, "raw", bytes(self.raw))

    @classmethod
    def parse(cls, text: str) -> "GatewayEui":
        """Accept ``eui-0102...``, plain hex, or colon separated hex."""
        s = text.strip().lower()
        if s.startswith("eui-"):
            s = s[4:]
        s = s.replace(":", "").replace("-", "")
        try:
            return cls(bytes.fromhex(s))
        except ValueError as exc:
            raise ValueError(f"not a gateway EUI: {text!r}") from exc

    @property
    def hex(self) -> str:
        return self.raw.hex()

    def __str__(self) -> str:
        return "eui-" + self.raw.hex()


@dataclass(frozen=True)
class Datagram:
    kind: DatagramKind
    token: int
    eui: GatewayEui | None = None
    body: bytes = b""
    version: int = DEFAULT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "kind", DatagramKind(self.kind))
        if not 0 <= self.token <= 0xFFFF:
            raise ValueError("token must fit in 16 bits")
        if not 0 <= self.version <= 0xFF:
            raise ValueError("version must fit in 8 bits")
        if (self.kind in EUI_KINDS) != (self.eui is not None):
            raise ValueError(f"{self.kind.name} {'requires' if self.kind in EUI_KINDS else 'forbids'} an EUI")
        object.__setattr__(self, "body", bytes(self.body))


def encode_datagram(d: Datagram) -> bytes:
    if d.body and d.kind in BODYLESS_KINDS:
        raise BodyNotAllowedError(f"{d.kind.name} cannot carry a body")
    out = _HEADER.pack(d.version, d.token, int(d.kind))
    if d.eui is not None:
        out += d.eui.raw
    return out + d.body


def decode_datagram(raw: bytes) -> Datagram:
    raw = bytes(raw)
    if len(raw) < HEADER_LEN:
        raise ShortDatagramError(f"datagram of {len(raw)} bytes is shorter than the {HEADER_LEN}-byte header")
    version, token, ident = _HEADER.unpack_from(raw)
    try:
        kind = DatagramKind(ident)
    except ValueError:
        raise UnknownKindError(f"unknown message identifier 0x{ident:02x}") from None
    if version not in SUPPORTED_VERSIONS:
        raise VersionError(f"unsupported protocol version {version}")

    if kind in EUI_KINDS:
        if len(raw) < EUI_HEADER_LEN:
            raise KindLengthError(f"{kind.name} needs at least {EUI_HEADER_LEN} bytes, got {len(raw)}")
        eui = GatewayEui(raw[HEADER_LEN:EUI_HEADER_LEN])
        body = raw[EUI_HEADER_LEN:]
    else:
        eui = None
        body = raw[HEADER_LEN:]
    if body and kind in BODYLESS_KINDS:
        raise KindLengthError(f"{kind.name} must be exactly {len(raw) - len(body)} bytes, got {len(raw)}")
    return Datagram(kind=kind, token=token, eui=eui, body=body, version=version)


# --- JSON bodies -------------------------------------------------------------

_DATR = re.compile(r"^SF(\d{1,2})BW125$")
STAT_VALUES = frozenset({1, 0, -1})


def datr_for_sf(sf: int) -> str:
    return f"SF{sf}BW125"


def sf_from_datr(datr) -> int:
    m = _DATR.match(datr) if isinstance(datr, str) else None
    if not m:
        raise SchemaError(f"bad datarate {datr!r}")
    sf = int(m.group(1))
    if not 7 <= sf <= 12:
        raise SchemaError(f"spreading factor {sf} outside 7..12")
    return sf


def _check_data(data: str, size: int) -> bytes:
    try:
        decoded = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError, TypeError) as exc:
        raise SizeMismatchError(f"data is not base64: {exc}") from None
    if len(decoded) != size:
        raise SizeMismatchError(f"data decodes to {len(decoded)} bytes, size says {size}")
    return decoded


@dataclass(frozen=True)
class RxPacketMeta:
    stat: int
    freq: float
    sf: int
    data: str
    size: int

    def __post_init__(self):
        if self.stat not in STAT_VALUES or isinstance(self.stat, bool):
            raise StatRangeError(f"stat must be one of 1, 0, -1, got {self.stat!r}")
        if not 7 <= self.sf <= 12:
            raise SchemaError(f"spreading factor {self.sf} outside 7..12")
        _check_data(self.data, self.size)

    @classmethod
    def from_frame(cls, frame: bytes, *, stat: int, freq: float, sf: int) -> "RxPacketMeta":
        return cls(stat=stat, freq=freq, sf=sf, data=base64.b64encode(frame).decode("ascii"), size=len(frame))

    def payload(self) -> bytes:
        return base64.b64decode(self.data)


@dataclass(frozen=True)
class TxPacketMeta:
    freq: float
    sf: int
    data: str
    size: int

    def __post_init__(self):
        if not 7 <= self.sf <= 12:
            raise SchemaError(f"spreading factor {self.sf} outside 7..12")
        _check_data(self.data, self.size)

    @classmethod
    def from_frame(cls, frame: bytes, *, freq: float, sf: int) -> "TxPacketMeta":
        return cls(freq=freq, sf=sf, data=base64.b64encode(frame).decode("ascii"), size=len(frame))

    def payload(self) -> bytes:
        return base64.b64decode(self.data)


def _dumps(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def _loads(body: bytes):
    try:
        return json.loads(bytes(body).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, RecursionError) as exc:
        raise MalformedJsonError(str(exc)) from None


def encode_rxpk(pkts) -> bytes:
    return _dumps({"rxpk": [
        {"stat": p.stat, "freq": p.freq, "datr": datr_for_sf(p.sf), "size": p.size, "data": p.data}
        for p in pkts
    ]})


def _number(obj: dict, key: str, kinds=(int, float)):
    try:
        value = obj[key]
    except KeyError:
        raise SchemaError(f"missing key {key!r}") from None
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise SchemaError(f"{key!r} has wrong type {type(value).__name__}")
    return value


def _string(obj: dict, key: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise SchemaError(f"missing or non-text {key!r}")
    return value


def parse_rxpk(body: bytes) -> list[RxPacketMeta]:
    doc = _loads(body)
    if not isinstance(doc, dict) or not isinstance(doc.get("rxpk"), list):
        raise SchemaError("body has no rxpk array")
    out = []
    for item in doc["rxpk"]:
        if not isinstance(item, dict):
            raise SchemaError("rxpk element is not an object")
        stat = _number(item, "stat", int)
        if stat not in STAT_VALUES:
            raise StatRangeError(f"stat must be one of 1, 0, -1, got {stat}")
        out.append(RxPacketMeta(
            stat=stat,
            freq=_number(item, "freq"),
            sf=sf_from_datr(item.get("datr")),
            data=_string(item, "data"),
            size=_number(item, "size", int),
        ))
    return out


def encode_txpk(pkt: TxPacketMeta) -> bytes:
    return _dumps({"txpk": {"freq": pkt.freq, "datr": datr_for_sf(pkt.sf), "size": pkt.size, "data": pkt.data}})


def parse_txpk(body: bytes) -> TxPacketMeta:
    doc = _loads(body)
    if not isinstance(doc, dict) or not isinstance(doc.get("txpk"), dict):
        raise SchemaError("body has no txpk object")
    item = doc["txpk"]
    return TxPacketMeta(
        freq=_number(item, "freq"),
        sf=sf_from_datr(item.get("datr")),
        data=_string(item, "data"),
        size=_number(item, "size", int),
    )


def encode_tx_ack_status(error: str = "NONE") -> bytes:
    return _dumps({"txpk_ack": {"error": error}})


# --- convenience constructors ------------------------------------------------

def push_data(token: int, eui: GatewayEui, pkts, version: int = DEFAULT_VERSION) -> Datagram:
    return Datagram(DatagramKind.PUSH_DATA, token, eui, encode_rxpk(pkts), version)


def pull_data(token: int, eui: GatewayEui, version: int = DEFAULT_VERSION) -> Datagram:
    return Datagram(DatagramKind.PULL_DATA, token, eui, b"", version)


def pull_resp(token: int, pkt: TxPacketMeta, version: int = DEFAULT_VERSION) -> Datagram:
    return Datagram(DatagramKind.PULL_RESP, token, None, encode_txpk(pkt), version)


def tx_ack(token: int, eui: GatewayEui, body: bytes = b"", version: int = DEFAULT_VERSION) -> Datagram:
    return Datagram(DatagramKind.TX_ACK, token, eui, body, version)


def ack_for(d: Datagram) -> Datagram:
    """PUSH_ACK / PULL_ACK echoing the token of an incoming PUSH_DATA / PULL_DATA."""
    kind = {DatagramKind.PUSH_DATA: DatagramKind.PUSH_ACK,
            DatagramKind.PULL_DATA: DatagramKind.PULL_ACK}[d.kind]
    return Datagram(kind, d.token, None, b"", d.version)
