"""Binary wire format for coordinator packets.

Every record is a little-endian ``u32`` payload length followed by the payload:

    StatePacket    (28 bytes): u32 index, f64 x_long, f64 x_lat, f64 v
    NeighborPacket (49 bytes): u8 presence mask (bit 0: i_p, bit 1: i_c),
                               f64 x_ip_long, x_ip_lat, v_ip, x_ic_long, x_ic_lat, v_ic

Absent partner fields are written as NaN and decoded as ``None``. The payload
length identifies the record type.
"""
from __future__ import annotations

import math
import struct
from typing import Iterator, Union

from .coordinator import NeighborPacket, StatePacket

_LEN = struct.Struct("<I")
_STATE = struct.Struct("<Iddd")
_NEIGHBOR = struct.Struct("<B6d")
_NAN3 = (math.nan, math.nan, math.nan)

Packet = Union[StatePacket, NeighborPacket]


class CodecError(ValueError):
    pass


def encode(pkt: Packet) -> bytes:
    if isinstance(pkt, StatePacket):
        body = _STATE.pack(pkt.index, pkt.x_long, pkt.x_lat, pkt.v)
    elif isinstance(pkt, NeighborPacket):
        mask = (pkt.ip is not None) | ((pkt.ic is not None) << 1)
        body = _NEIGHBOR.pack(mask, *(pkt.ip or _NAN3), *(pkt.ic or _NAN3))
    else:
        raise TypeError(f"cannot encode {type(pkt).__name__}")
    return _LEN.pack(len(body)) + body


def _decode_body(body: bytes) -> Packet:
    if len(body) == _STATE.size:
        return StatePacket(*_STATE.unpack(body))
    if len(body) == _NEIGHBOR.size:
        mask, *vals = _NEIGHBOR.unpack(body)
        if mask & ~0b11:
            raise CodecError(f"bad presence mask {mask:#x}")
        return NeighborPacket(tuple(vals[:3]) if mask & 1 else None,
                              tuple(vals[3:]) if mask & 2 else None)
    raise CodecError(f"unknown record length {len(body)}")


def decode(data: bytes) -> Packet:
    pkts = list(iter_decode(data))
    if len(pkts) != 1:
        raise CodecError(f"expected one record, found {len(pkts)}")
    return pkts[0]


def iter_decode(data: bytes) -> Iterator[Packet]:
    pos = 0
    while pos < len(data):
        if pos + _LEN.size > len(data):
            raise CodecError("truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if pos + n > len(data):
            raise CodecError("truncated record")
        yield _decode_body(data[pos:pos + n])
        pos += n
