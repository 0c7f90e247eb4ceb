"""Messages and their NIC packetization (64 B packets, 16 B payload flits)."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Hashable

from .routing import RoutingMode
from .topology import NodeId

PACKET_BYTES = 64
FLIT_PAYLOAD_BYTES = 16
MAX_PUT_FLITS = 1 + PACKET_BYTES // FLIT_PAYLOAD_BYTES


class ZeroSize(ValueError):
    pass


class MessageKind(str, Enum):
    PUT = "PUT"
    GET = "GET"


@dataclass(frozen=True)
class Message:
    src: NodeId
    dst: NodeId
    size: int
    kind: MessageKind = MessageKind.PUT
    mode: RoutingMode = RoutingMode.ADAPTIVE_0
    tag: Hashable = None

    def __post_init__(self):
        if self.size < 1:
            raise ZeroSize(f"message size must be >= 1 byte, got {self.size}")
        object.__setattr__(self, "kind", MessageKind(self.kind))
        object.__setattr__(self, "mode", RoutingMode.parse(self.mode))

    @property
    def loopback(self) -> bool:
        return self.src == self.dst


def payload_flits(nbytes: int) -> int:
    return -(-nbytes // FLIT_PAYLOAD_BYTES)


def packet_sizes(size: int) -> list[int]:
    """Payload bytes carried by each 64 B packet of a message."""
    if size < 1:
        raise ZeroSize(size)
    full, rest = divmod(size, PACKET_BYTES)
    return [PACKET_BYTES] * full + ([rest] if rest else [])


def request_flits(chunk: int, kind: MessageKind) -> int:
    if kind is MessageKind.GET:
        return 1
    return 1 + payload_flits(chunk)


def response_flits(chunk: int, kind: MessageKind) -> int:
    if kind is MessageKind.GET:
        return 1 + payload_flits(chunk)
    return 1


def flit_counts(size: int, kind: MessageKind | str = MessageKind.PUT) -> tuple[int, int]:
    """Return ``(f, p)``: total request flits and packet count."""
    kind = MessageKind(kind)
    p, rest = divmod(size, PACKET_BYTES)
    if size < 1:
        raise ZeroSize(size)
    if kind is MessageKind.GET:
        p += bool(rest)
        return p, p
    f = p * MAX_PUT_FLITS
    if rest:
        p += 1
        f += 1 + payload_flits(rest)
    return f, p
