"""Fixed-layout bus frames and typed message codecs.

The supervisor and the drive unit talk over a small in-process bus whose
frames mirror classic CAN data frames: an 11-bit identifier, a data length
code (dlc), and up to 8 payload bytes. Multi-byte fields are big-endian.
Lower ids win arbitration on real hardware, so the emergency stop gets the
lowest id even though the simulated transport never contends.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

FRAME_WIRE_SIZE = 11
MAX_FRAME_ID = 0x7FF
MAX_DLC = 8

ID_ESTOP = 0x001
ID_VEL_CMD = 0x101
ID_ENC_FEEDBACK = 0x201
ID_MOTOR_TELEM = 0x301
ID_HEARTBEAT = 0x701

HEARTBEAT_SOURCE_SUPERVISOR = 0x01
HEARTBEAT_SOURCE_DRIVE = 0x02

FAULT_OVERTEMP_LEFT = 0x01
FAULT_OVERTEMP_RIGHT = 0x02
FAULT_OVERCURRENT = 0x04

VEL_FLAG_BRAKE = 0x01


class BusError(Exception):
    """Base class for every bus protocol failure."""


class FieldValidationError(BusError):
    """A message field is outside its declared range; names the field."""


class UnknownMessageError(BusError):
    """Frame id is not in the message registry."""


class MalformedFrameError(BusError):
    """Frame dlc does not match the registered layout for its id."""


class FramingError(BusError):
    """Serialized frame byte string has the wrong length."""


class FrameInvariantError(BusError):
    """Frame fields break the frame invariants (id or dlc out of range)."""


class Frame:
    """One bus frame: 11-bit id, dlc, and an 8-byte data buffer.

    Bytes past dlc are forced to zero so frame identity is byte-exact.
    """

    __slots__ = ("id", "dlc", "data")

    def __init__(self, frame_id: int, dlc: int, data: bytes = b""):
        if not 0 <= frame_id <= MAX_FRAME_ID:
            raise FrameInvariantError(f"frame id {frame_id:#x} exceeds 11 bits")
        if not 0 <= dlc <= MAX_DLC:
            raise FrameInvariantError(f"dlc {dlc} out of range 0..8")
        if len(data) > MAX_DLC:
            raise FrameInvariantError(f"data length {len(data)} exceeds 8 bytes")
        if len(data) > dlc and any(data[dlc:]):
            raise FrameInvariantError("data bytes beyond dlc must be zero")
        self.id = frame_id
        self.dlc = dlc
        self.data = bytes(data[:dlc]) + b"\x00" * (MAX_DLC - min(len(data), dlc))

    @classmethod
    def _trusted(cls, frame_id: int, dlc: int, padded_data: bytes) -> "Frame":
        # Internal fast path: caller guarantees invariants and 8-byte data.
        f = object.__new__(cls)
        f.id = frame_id
        f.dlc = dlc
        f.data = padded_data
        return f

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return self.id == other.id and self.dlc == other.dlc and self.data == other.data

    def __hash__(self) -> int:
        return hash((self.id, self.dlc, self.data))

    def __repr__(self) -> str:
        return f"Frame(id=0x{self.id:03X}, dlc={self.dlc}, data={self.data.hex(' ')})"


@dataclass(frozen=True, slots=True)
class VelCmd:
    """Wheel speed command in 0.1 RPM units; flags bit0 engages the brake."""

    left_rpm_d: int
    right_rpm_d: int
    flags: int = 0


@dataclass(frozen=True, slots=True)
class EncFeedback:
    """Signed encoder tick deltas since the previous feedback message."""

    left_delta: int
    right_delta: int
    seq: int = 0


@dataclass(frozen=True, slots=True)
class MotorTelem:
    """Winding temperatures, duty (load factor 0-100), and fault bits."""

    temp_left_c: int
    temp_right_c: int
    duty_left: int
    duty_right: int
    fault_flags: int = 0


@dataclass(frozen=True, slots=True)
class Estop:
    asserted: int = 1


@dataclass(frozen=True, slots=True)
class Heartbeat:
    source: int
    counter: int = 0


BusMessage = Union[VelCmd, EncFeedback, MotorTelem, Estop, Heartbeat]

_S16 = (-32768, 32767)
_S8 = (-128, 127)
_U8 = (0, 255)
_DUTY = (0, 100)

# id, dlc, wire codec, field names, per-field (lo, hi) ranges
_CODECS = {
    VelCmd: (ID_VEL_CMD, 5, struct.Struct(">hhB"),
             ("left_rpm_d", "right_rpm_d", "flags"), (_S16, _S16, _U8)),
    EncFeedback: (ID_ENC_FEEDBACK, 5, struct.Struct(">hhB"),
                  ("left_delta", "right_delta", "seq"), (_S16, _S16, _U8)),
    MotorTelem: (ID_MOTOR_TELEM, 5, struct.Struct(">bbBBB"),
                 ("temp_left_c", "temp_right_c", "duty_left", "duty_right", "fault_flags"),
                 (_S8, _S8, _DUTY, _DUTY, _U8)),
    Estop: (ID_ESTOP, 1, struct.Struct(">B"), ("asserted",), (_U8,)),
    Heartbeat: (ID_HEARTBEAT, 2, struct.Struct(">BB"), ("source", "counter"), (_U8, _U8)),
}

_BY_ID = {spec[0]: (cls,) + spec[1:] for cls, spec in _CODECS.items()}

_PAD = {dlc: b"\x00" * (MAX_DLC - dlc) for dlc in range(MAX_DLC + 1)}

_WIRE = struct.Struct(">HB8s")


def pack_message(msg: BusMessage) -> Frame:
    """Lay a typed message out into its fixed-id frame."""
    try:
        frame_id, dlc, codec, names, ranges = _CODECS[type(msg)]
    except KeyError:
        raise UnknownMessageError(f"not a bus message: {type(msg).__name__}") from None
    values = tuple(getattr(msg, n) for n in names)
    for name, value, (lo, hi) in zip(names, values, ranges):
        if not lo <= value <= hi:
            raise FieldValidationError(
                f"{type(msg).__name__}.{name}={value} outside [{lo}, {hi}]")
    return Frame._trusted(frame_id, dlc, codec.pack(*values) + _PAD[dlc])


def unpack_message(f: Frame) -> BusMessage:
    """Inverse of pack_message for every registered frame id."""
    entry = _BY_ID.get(f.id)
    if entry is None:
        raise UnknownMessageError(f"no message registered for id 0x{f.id:03X}")
    cls, dlc, codec, names, ranges = entry
    if f.dlc != dlc:
        raise MalformedFrameError(
            f"{cls.__name__} expects dlc {dlc}, frame has {f.dlc}")
    values = codec.unpack(f.data[:dlc])
    for name, value, (lo, hi) in zip(names, values, ranges):
        if not lo <= value <= hi:
            raise FieldValidationError(
                f"{cls.__name__}.{name}={value} outside [{lo}, {hi}]")
    return cls(*values)


def serialize_frame(f: Frame) -> bytes:
    """Fixed 11-byte wire image: [id_hi][id_lo][dlc][data0..data7]."""
    return _WIRE.pack(f.id, f.dlc, f.data)


def deserialize_frame(b: bytes) -> Frame:
    """Inverse of serialize_frame; enforces the frame invariants."""
    if len(b) != FRAME_WIRE_SIZE:
        raise FramingError(f"frame must be {FRAME_WIRE_SIZE} bytes, got {len(b)}")
    frame_id, dlc, data = _WIRE.unpack(b)
    if frame_id > MAX_FRAME_ID:
        raise FrameInvariantError(f"frame id {frame_id:#x} exceeds 11 bits")
    if dlc > MAX_DLC:
        raise FrameInvariantError(f"dlc {dlc} out of range 0..8")
    if any(data[dlc:]):
        raise FrameInvariantError("data bytes beyond dlc must be zero")
    return Frame._trusted(frame_id, dlc, data)
