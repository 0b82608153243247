"""FIFO queue over the control zone and the state-packet routing around it."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from .model import Lane

log = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class QueueEntry:
    index: int
    vid: int
    lane: Lane
    t_entry: float


@dataclass(frozen=True)
class StatePacket:
    index: int
    x_long: float
    x_lat: float
    v: float


@dataclass(frozen=True)
class NeighborPacket:
    ip: Optional[tuple] = None   # (x_long, x_lat, v)
    ic: Optional[tuple] = None


class Coordinator:
    """Queue table S(t): index 0 is the vehicle that last crossed the merging point."""

    def __init__(self):
        self._entries: list[QueueEntry] = []
        self.protocol_errors: list[str] = []
        self._nbr_cache: Optional[dict] = None

    # -- queue table ---------------------------------------------------------
    @property
    def table(self) -> tuple:
        return tuple(self._entries)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, vid) -> bool:
        return any(e.vid == vid for e in self._entries)

    def entry(self, vid: int) -> QueueEntry:
        for e in self._entries:
            if e.vid == vid:
                return e
        raise KeyError(vid)

    def at(self, index: int) -> Optional[QueueEntry]:
        if not self._entries:
            return None
        k = index - self._entries[0].index
        if 0 <= k < len(self._entries):
            return self._entries[k]
        return None

    def index_of(self, vid: int) -> int:
        return self.entry(vid).index

    def admit(self, vid: int, lane: Lane, t: float) -> int:
        if vid in self:
            raise ProtocolError(f"vehicle {vid} already queued")
        index = self._entries[-1].index + 1 if self._entries else 1
        self._entries.append(QueueEntry(index, vid, Lane(lane), t))
        self._nbr_cache = None
        return index

    def admit_batch(self, requests) -> list[int]:
        """Admit simultaneous arrivals ordered by timestamp, then lane."""
        ordered = sorted(requests, key=lambda r: (r[2], Lane(r[1]).order, r[0]))
        return [self.admit(vid, lane, t) for vid, lane, t in ordered]

    def cross_mp(self, vid: int, strict: bool = False) -> tuple:
        """Vehicle ``vid`` crossed the merging point: shift indices down by one."""
        head = self.at(1)
        if head is None or head.vid != vid:
            msg = f"FIFO violation: vehicle {vid} crossed while index 1 is {head and head.vid}"
            if strict:
                raise ProtocolError(msg)
            log.warning(msg)
            self.protocol_errors.append(msg)
            self._reorder_to_head(vid)
        shifted = [QueueEntry(e.index - 1, e.vid, e.lane, e.t_entry) for e in self._entries]
        self._entries = [e for e in shifted if e.index >= 0]
        self._nbr_cache = None
        return self.table

    def _reorder_to_head(self, vid):
        me = self.entry(vid)
        base = 1
        rest = [e for e in self._entries if e.vid != vid and e.index >= base]
        low = [e for e in self._entries if e.index < base]
        moved = [QueueEntry(base, me.vid, me.lane, me.t_entry)]
        moved += [QueueEntry(base + 1 + k, e.vid, e.lane, e.t_entry) for k, e in enumerate(rest)]
        self._entries = low + moved
        self._nbr_cache = None

    def drop(self, vid: int):
        """Remove a vehicle outright (used when a run is truncated)."""
        self._entries = [e for e in self._entries if e.vid != vid]
        self._nbr_cache = None

    # -- neighbors -----------------------------------------------------------
    def resolve_neighbors(self, index: int) -> tuple[Optional[int], Optional[int]]:
        """(i_p, i_c): same-lane vehicle directly ahead, and index i-1 when it is in the other lane."""
        me = self.at(index)
        if me is None:
            raise KeyError(index)
        ip = ic = None
        for e in reversed(self._entries):
            if e.index < index and e.lane == me.lane:
                ip = e.vid
                break
        prev = self.at(index - 1)
        if prev is not None and prev.lane != me.lane:
            ic = prev.vid
        return ip, ic

    def neighbor_map(self) -> dict:
        """vehicle id -> (i_p, i_c) for every vehicle still in the zone (index >= 1)."""
        if self._nbr_cache is None:
            self._nbr_cache = {e.vid: self.resolve_neighbors(e.index)
                               for e in self._entries if e.index >= 1}
        return self._nbr_cache

    # -- routing -------------------------------------------------------------
    def route_update(self, origin: StatePacket) -> list[tuple[int, NeighborPacket]]:
        """Deliver an origin's state to the (at most two) vehicles constrained by it."""
        src = self.at(origin.index)
        if src is None:
            raise KeyError(origin.index)
        payload = (origin.x_long, origin.x_lat, origin.v)
        out = []
        nmap = self.neighbor_map()
        for e in self._entries:
            if e.index <= origin.index:
                continue
            ip, ic = nmap[e.vid]
            if ip == src.vid or ic == src.vid:
                out.append((e.vid, NeighborPacket(payload if ip == src.vid else None,
                                                  payload if ic == src.vid else None)))
        return out


class MessageBus:
    """In-process stand-in for the V2I transport.

    Packets published during a tick are delivered at ``flush`` in ascending
    origin index. Inboxes hold the partner fields delivered in the latest flush.
    """

    def __init__(self, coordinator: Coordinator, codec=None):
        self.coord = coordinator
        self.codec = codec
        self._outbox: list[StatePacket] = []
        self.inbox: dict[int, dict] = {}
        self.delivered = 0

    def publish(self, pkt: StatePacket):
        self._outbox.append(pkt)

    def flush(self):
        pending, self._outbox = sorted(self._outbox, key=lambda p: p.index), []
        self.inbox = {}
        for pkt in pending:
            if self.codec is not None:
                pkt = self.codec.decode(self.codec.encode(pkt))
            for dest, npkt in self.coord.route_update(pkt):
                if self.codec is not None:
                    npkt = self.codec.decode(self.codec.encode(npkt))
                box = self.inbox.setdefault(dest, {})
                if npkt.ip is not None:
                    box["ip"] = npkt.ip
                if npkt.ic is not None:
                    box["ic"] = npkt.ic
                self.delivered += 1

    def forget(self, vid: int):
        self.inbox.pop(vid, None)
