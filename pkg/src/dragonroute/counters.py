"""NIC request counters and the counter-driven transmission-time model.

All times are NIC cycles.  ``L`` is the mean request/response latency per
packet, ``s`` the mean back-pressure stall per request flit, ``f`` the request
flit count of a message and ``p`` its packet count.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .packets import Message, flit_counts

OUTSTANDING_WINDOW = 1024

CSV_NAMES = {
    "req_flits": "REQ_FLITS",
    "req_flits_stalled_cycles": "REQ_FLITS_STALLED",
    "req_packets": "REQ_PACKETS",
    "req_packets_cum_latency": "REQ_CUM_LATENCY",
}


class NoPackets(ValueError):
    pass


@dataclass(frozen=True)
class NicCounters:
    req_flits: int = 0
    req_flits_stalled_cycles: int = 0
    req_packets: int = 0
    req_packets_cum_latency: int = 0

    def __sub__(self, other: NicCounters) -> NicCounters:
        return NicCounters(*(getattr(self, f.name) - getattr(other, f.name) for f in fields(self)))

    def __add__(self, other: NicCounters) -> NicCounters:
        return NicCounters(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def __ge__(self, other: NicCounters) -> bool:
        return all(getattr(self, f.name) >= getattr(other, f.name) for f in fields(self))

    def as_csv(self) -> dict[str, int]:
        return {CSV_NAMES[f.name]: getattr(self, f.name) for f in fields(self)}

    def latency_us(self, cycles_per_us: float) -> float:
        return self.req_packets_cum_latency / cycles_per_us


@dataclass(frozen=True)
class ModelInputs:
    L: float
    s: float
    f: int
    p: int
    k: float = 5.0

    @property
    def rtt(self) -> float:
        return self.L


def snapshot(nic) -> NicCounters:
    """Point-in-time copy of a NIC's counters.

    ``nic`` is anything exposing the four counter attributes, e.g. the
    simulator's per-node state.
    """
    return NicCounters(
        nic.req_flits, nic.req_flits_stalled_cycles, nic.req_packets, nic.req_packets_cum_latency
    )


def derive_inputs(before: NicCounters, after: NicCounters, msg: Message | None = None) -> ModelInputs:
    delta = after - before
    if delta.req_packets <= 0:
        raise NoPackets("no request packets completed in the interval")
    L = delta.req_packets_cum_latency / delta.req_packets
    s = delta.req_flits_stalled_cycles / delta.req_flits if delta.req_flits else 0.0
    if msg is not None:
        f, p = flit_counts(msg.size, msg.kind)
    else:
        f, p = delta.req_flits, delta.req_packets
    return ModelInputs(L=L, s=s, f=f, p=p, k=f / p)


def predict_tmsg(inputs: ModelInputs) -> float:
    """Transmission time including one latency per 1024-packet window."""
    return (inputs.p + OUTSTANDING_WINDOW / 2) / OUTSTANDING_WINDOW * inputs.L + inputs.f * (inputs.s + 1)


def predict_tmsg_small(inputs: ModelInputs) -> float:
    """Single-window form: half a round trip plus serialization."""
    return inputs.L / 2 + inputs.f * (inputs.s + 1)


def tmsg(L: float, s: float, f: int, p: int) -> float:
    return predict_tmsg(ModelInputs(L, s, f, p))
