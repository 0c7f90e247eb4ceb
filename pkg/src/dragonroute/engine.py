"""Cycle-quantized flit-level simulator of a Dragonfly with Aries-style NICs.

Model summary
-------------
* Every directed link (NIC->router, router->router, router->NIC) is a
  channel with a latency, a number of parallel lanes and a flit interval.
* The receiving end of each channel has one input queue per virtual channel,
  ``queue_capacity`` flits deep, guarded by credits.  Credits travel back with
  the channel latency, so upstream routers see slightly stale occupancy.
* Virtual channels are indexed by the number of channels a packet has already
  crossed, which keeps the buffer dependency graph acyclic.  Responses use a
  separate block of virtual channels.
* Routers forward wormhole style: a packet's head claims an output virtual
  channel which stays locked until its tail has passed.
* NICs transmit one flit per cycle, keep at most ``max_outstanding`` request
  packets unacknowledged, and serve their messages in FIFO order.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

from .counters import NicCounters, OUTSTANDING_WINDOW
from .packets import Message, MessageKind, packet_sizes, request_flits, response_flits
from .routing import DEFAULT_BIAS, BiasProfile, RouteDecision, RoutingMode, choose_route
from .topology import NodeId, Path, RouterId, Topology

REQ_VCS = 16
RESP_VC_BASE = REQ_VCS
NUM_VCS = REQ_VCS + 8
# adaptive packets may change their mind at the first two routers only
REROUTE_HOPS = 2


class SimulationError(RuntimeError):
    pass


class LivelockGuard(SimulationError):
    """Cycle ceiling exceeded; usually a flow-control bug or a deadlock."""


class UnknownTag(KeyError):
    pass


class NotYetDelivered(SimulationError):
    pass


class Packet:
    __slots__ = (
        "pid", "rec", "index", "nflits", "response", "request", "src_node", "dst_node",
        "dst_router", "path", "pos", "hops", "committed", "mode", "flow_key", "decision",
        "first_flit_cycle", "inject_cycle", "response_cycle", "vc_base", "chunk",
    )

    def __init__(self, pid, rec, index, nflits, src_node, dst_node, dst_router, mode,
                 flow_key, vc_base=0, response=False, request=None, chunk=0):
        self.pid = pid
        self.rec = rec
        self.index = index
        self.nflits = nflits
        self.response = response
        self.request = request
        self.src_node = src_node
        self.dst_node = dst_node
        self.dst_router = dst_router
        self.path = None
        self.pos = 0
        self.hops = 0
        self.committed = False
        self.mode = mode
        self.flow_key = flow_key
        self.decision = None
        self.first_flit_cycle = -1
        self.inject_cycle = -1
        self.response_cycle = -1
        self.vc_base = vc_base
        self.chunk = chunk


@dataclass
class MessageRecord:
    """Per-message bookkeeping; counters here are this message's share."""

    msg: Message
    tag: Hashable
    src: int
    dst: int
    rx_cycle: int
    chunks: list[int]
    next_chunk: int = 0
    packets_sent: int = 0
    delivered_packets: int = 0
    responses: int = 0
    delivered_cycle: int | None = None
    complete_cycle: int | None = None
    last_flit_cycle: int = -1
    req_flits: int = 0
    stalled: int = 0
    cum_latency: int = 0
    minimal_packets: int = 0
    routed_packets: int = 0
    decisions: list[RouteDecision] = field(default_factory=list)

    @property
    def num_packets(self) -> int:
        return len(self.chunks)

    @property
    def counters(self) -> NicCounters:
        return NicCounters(self.req_flits, self.stalled, self.packets_sent, self.cum_latency)

    @property
    def tmsg(self) -> int | None:
        if self.delivered_cycle is None:
            return None
        return self.delivered_cycle - self.rx_cycle


class NicState:
    __slots__ = (
        "node", "msgs", "cur", "cur_pkt", "cur_flit", "resp", "resp_flit", "outstanding",
        "req_flits", "req_flits_stalled_cycles", "req_packets", "req_packets_cum_latency",
        "max_outstanding_seen",
    )

    def __init__(self, node):
        self.node = node
        self.msgs: deque[MessageRecord] = deque()
        self.cur: MessageRecord | None = None
        self.cur_pkt: Packet | None = None
        self.cur_flit = 0
        self.resp: deque[Packet] = deque()
        self.resp_flit = 0
        self.outstanding = 0
        self.req_flits = 0
        self.req_flits_stalled_cycles = 0
        self.req_packets = 0
        self.req_packets_cum_latency = 0
        self.max_outstanding_seen = 0

    @property
    def counters(self) -> NicCounters:
        return NicCounters(self.req_flits, self.req_flits_stalled_cycles,
                           self.req_packets, self.req_packets_cum_latency)

    def busy(self) -> bool:
        return bool(self.resp or self.cur_pkt or self.cur or self.msgs)


def packetize(msg: Message) -> list[Packet]:
    """Standalone packetization; the simulator builds packets lazily the same way."""
    out = []
    for i, chunk in enumerate(packet_sizes(msg.size)):
        out.append(Packet(i, msg.tag, i, request_flits(chunk, msg.kind), msg.src, msg.dst,
                          msg.dst.router, msg.mode, None, chunk=chunk))
    return out


class Simulator:
    def __init__(
        self,
        topology: Topology,
        *,
        seed: int = 0,
        bias: BiasProfile = DEFAULT_BIAS,
        max_cycles: int = 50_000_000,
        max_outstanding: int = OUTSTANDING_WINDOW,
        nic_latency: int = 1,
        record_events: bool = False,
        check_invariants: bool = False,
        keep_decisions: bool = False,
    ):
        self.topology = topology
        self.bias = bias
        self.rng = random.Random(seed)
        self.max_cycles = max_cycles
        self.max_outstanding = max_outstanding
        self.record_events = record_events
        self.check_invariants = check_invariants
        self.keep_decisions = keep_decisions
        self.events: list[str] = []
        self.now = 0
        self.last_delivery_cycle = 0
        self.Q = topology.config.queue_capacity

        cfg = topology.config
        self.ch_latency: list[int] = []
        self.ch_interval: list[int] = []
        self.ch_lane_free: list[list[int]] = []
        self.ch_global: list[bool] = []
        self.ch_router: list[RouterId | None] = []  # receiving router, None for NIC sinks
        self.ch_sink: list[int] = []  # receiving node for ejection channels, else -1
        self.chan_of: dict[tuple[RouterId, RouterId], int] = {}

        def add_channel(latency, lanes, interval, is_global, router, sink):
            self.ch_latency.append(latency)
            self.ch_interval.append(interval)
            self.ch_lane_free.append([0] * lanes)
            self.ch_global.append(is_global)
            self.ch_router.append(router)
            self.ch_sink.append(sink)
            return len(self.ch_latency) - 1

        for (u, v), lanes in sorted(topology.link_lanes.items()):
            kind = topology.link_kind[(u, v)]
            self.chan_of[(u, v)] = add_channel(
                cfg.link_cycle_cost, lanes, cfg.router_flit_interval, kind == "global", v, -1
            )
        self.node_ids = topology.nodes
        self.node_router = [n.router for n in topology.nodes]
        self.inj_ch = [add_channel(nic_latency, 1, 1, False, r, -1) for r in self.node_router]
        self.ej_ch = [add_channel(nic_latency, 1, 1, False, None, i)
                      for i in range(len(topology.nodes))]
        nch = len(self.ch_latency)
        self.used = [0] * nch  # flits sent whose credit has not come back
        self.pending = [0] * nch  # flits granted this output but not yet sent

        self.queues: dict[int, deque] = {}
        self.credits: dict[int, int] = {}
        self.inflight_flits: dict[int, int] = {}
        self.inflight_credits: dict[int, int] = {}
        self.buf_route: dict[int, tuple[int, int]] = {}
        self.out_lock: dict[int, Packet] = {}
        self.active: set[int] = set()

        self.nics = [NicState(i) for i in range(len(topology.nodes))]
        self.active_nics: set[int] = set()
        self.records: dict[Hashable, MessageRecord] = {}
        self._auto_tag = 0
        self._pid = 0

        self._calendar: dict[int, list] = {}
        self._heap: list[int] = []
        self._delivery_cbs: list[Callable[[MessageRecord, int], None]] = []
        self._complete_cbs: list[Callable[[MessageRecord, int], None]] = []

        self.flits_injected = 0
        self.flits_delivered = 0
        self.flits_on_links = 0
        self.requests_sent = 0
        self.responses_received = 0

    # -- public API ---------------------------------------------------------

    def on_delivery(self, fn: Callable[[MessageRecord, int], None]):
        self._delivery_cbs.append(fn)

    def on_complete(self, fn: Callable[[MessageRecord, int], None]):
        self._complete_cbs.append(fn)

    def call_at(self, cycle: int, fn: Callable[[int], None]):
        self._schedule(max(cycle, self.now), ("call", fn))

    def inject(self, msg: Message, at_cycle: int | None = None) -> Hashable:
        """Hand ``msg`` to its source NIC at ``at_cycle``; returns the message tag."""
        at = self.now if at_cycle is None else at_cycle
        if at < self.now:
            raise SimulationError(f"cannot inject at cycle {at} < current cycle {self.now}")
        tag = msg.tag
        if tag is None:
            tag = ("auto", self._auto_tag)
            self._auto_tag += 1
        if tag in self.records:
            raise SimulationError(f"duplicate message tag {tag!r}")
        src = self.topology.node_index(msg.src)
        dst = self.topology.node_index(msg.dst)
        rec = MessageRecord(msg, tag, src, dst, at, packet_sizes(msg.size))
        self.records[tag] = rec
        if src == dst:
            self._schedule(at, ("loop", rec))
        else:
            # one cycle for the NIC to packetize before the first flit leaves
            self._schedule(at + 1, ("msg", rec))
        if self.record_events:
            self.events.append(f"{at},INJECT,nic{src},{tag}")
        return tag

    def message(self, tag) -> MessageRecord:
        try:
            return self.records[tag]
        except KeyError:
            raise UnknownTag(tag) from None

    def measure_tmsg(self, tag) -> int:
        rec = self.message(tag)
        if rec.delivered_cycle is None:
            raise NotYetDelivered(tag)
        return rec.delivered_cycle - rec.rx_cycle

    def nic_counters(self, node: NodeId | int) -> NicCounters:
        idx = node if isinstance(node, int) else self.topology.node_index(node)
        return self.nics[idx].counters

    # congestion view used by the routing module
    def queued_flits(self, u: RouterId, v: RouterId) -> int:
        return self.pending[self.chan_of[(u, v)]]

    def credit_deficit(self, u: RouterId, v: RouterId) -> int:
        return self.used[self.chan_of[(u, v)]]

    def idle(self) -> bool:
        return not (self._heap or self.active or self.active_nics)

    def run_until_idle(self) -> int:
        while not self.idle():
            self._cycle()
        return self.last_delivery_cycle

    def run_until(self, cycle: int) -> None:
        while not self.idle() and self.now <= cycle:
            self._cycle()

    # -- internals ----------------------------------------------------------

    def _schedule(self, cycle: int, ev):
        bucket = self._calendar.get(cycle)
        if bucket is None:
            self._calendar[cycle] = [ev]
            heapq.heappush(self._heap, cycle)
        else:
            bucket.append(ev)

    def _credits(self, b: int) -> int:
        c = self.credits.get(b)
        if c is None:
            c = self.credits[b] = self.Q
        return c

    def _take_lane(self, ch: int, t: int) -> bool:
        lanes = self.ch_lane_free[ch]
        for i, free in enumerate(lanes):
            if free <= t:
                lanes[i] = t + self.ch_interval[ch]
                return True
        return False

    def _lane_wake(self, ch: int) -> int:
        return min(self.ch_lane_free[ch])

    def _send(self, ch: int, vc: int, entry, t: int):
        """Put a flit on channel ``ch`` toward virtual channel ``vc``."""
        self.used[ch] += 1
        self.flits_on_links += 1
        arrive = t + self.ch_latency[ch]
        sink = self.ch_sink[ch]
        if sink >= 0:
            self._schedule(arrive, ("dlv", ch, entry))
        else:
            b = ch * NUM_VCS + vc
            self.credits[b] = self._credits(b) - 1
            self.inflight_flits[b] = self.inflight_flits.get(b, 0) + 1
            self._schedule(arrive, ("arr", b, entry))

    def _cycle(self):
        t = self.now
        if t > self.max_cycles:
            raise LivelockGuard(f"simulation exceeded {self.max_cycles} cycles")
        if self._heap and self._heap[0] == t:
            heapq.heappop(self._heap)
            for ev in self._calendar.pop(t):
                self._apply(ev, t)

        moved = False
        wake = None
        blocked: list[NicState] = []

        for n in sorted(self.active_nics):
            nic = self.nics[n]
            result = self._nic_step(nic, t)
            if result == 1:
                moved = True
            elif result == -1:
                blocked.append(nic)
            if not nic.busy():
                self.active_nics.discard(n)

        if self.active:
            order = sorted(self.active)
            k = t % len(order)
            for b in order[k:] + order[:k]:
                res = self._router_step(b, t)
                if res is True:
                    moved = True
                elif res is not None and res is not False:
                    wake = res if wake is None else min(wake, res)

        if self.check_invariants:
            self.verify()

        if moved or self.idle():
            self.now = t + 1
            return
        nxt = self._heap[0] if self._heap else None
        if wake is not None and (nxt is None or wake < nxt):
            nxt = wake
        if nxt is None:
            raise LivelockGuard(f"network stuck at cycle {t} with flits queued")
        nxt = max(nxt, t + 1)
        skipped = nxt - t - 1
        if skipped:
            for nic in blocked:
                nic.req_flits_stalled_cycles += skipped
                rec = nic.cur_pkt.rec if nic.cur_pkt else nic.cur
                rec.stalled += skipped
        self.now = nxt

    def _apply(self, ev, t: int):
        kind = ev[0]
        if kind == "arr":
            _, b, entry = ev
            q = self.queues.get(b)
            if q is None:
                q = self.queues[b] = deque()
            q.append(entry)
            self.inflight_flits[b] -= 1
            self.flits_on_links -= 1
            self.active.add(b)
        elif kind == "cr":
            _, b, ch = ev
            self.credits[b] += 1
            self.inflight_credits[b] -= 1
            self.used[ch] -= 1
        elif kind == "dlv":
            _, ch, entry = ev
            self.used[ch] -= 1
            self.flits_on_links -= 1
            self._deliver(self.ch_sink[ch], entry, t)
        elif kind == "msg":
            rec = ev[1]
            nic = self.nics[rec.src]
            nic.msgs.append(rec)
            self.active_nics.add(rec.src)
        elif kind == "resp":
            pkt = ev[1]
            self.nics[pkt.src_node].resp.append(pkt)
            self.active_nics.add(pkt.src_node)
        elif kind == "loop":
            rec = ev[1]
            rec.delivered_cycle = rec.complete_cycle = t
            for cb in self._delivery_cbs:
                cb(rec, t)
            for cb in self._complete_cbs:
                cb(rec, t)
        elif kind == "call":
            ev[1](t)

    def _new_request(self, nic: NicState, rec: MessageRecord, t: int) -> Packet:
        i = rec.next_chunk
        chunk = rec.chunks[i]
        rec.next_chunk += 1
        kind = rec.msg.kind
        mode = rec.msg.mode
        if mode is RoutingMode.IN_ORDER:
            key = (rec.src, rec.dst)
        else:
            key = (rec.src, rec.dst, rec.tag, i)
        pkt = Packet(self._pid, rec, i, request_flits(chunk, kind), rec.src, rec.dst,
                     self.node_router[rec.dst], mode, key, chunk=chunk)
        self._pid += 1
        pkt.inject_cycle = t
        pkt.first_flit_cycle = t
        nic.outstanding += 1
        nic.max_outstanding_seen = max(nic.max_outstanding_seen, nic.outstanding)
        nic.req_packets += 1
        rec.packets_sent += 1
        self.requests_sent += 1
        return pkt

    def _nic_step(self, nic: NicState, t: int) -> int:
        """1 if a flit left, -1 if a request flit was credit-blocked, else 0."""
        ch = self.inj_ch[nic.node]
        if self.ch_lane_free[ch][0] > t:
            return 0
        base = ch * NUM_VCS
        if nic.resp:
            b = base + RESP_VC_BASE
            if self._credits(b) > 0:
                pkt = nic.resp[0]
                k = nic.resp_flit
                self._take_lane(ch, t)
                self._send(ch, RESP_VC_BASE, (pkt, k), t)
                self.flits_injected += 1
                if self.record_events:
                    self.events.append(f"{t},RESP_FLIT,nic{nic.node},{pkt.pid}")
                if k + 1 == pkt.nflits:
                    nic.resp.popleft()
                    nic.resp_flit = 0
                else:
                    nic.resp_flit = k + 1
                return 1

        if nic.cur_pkt is None:
            if nic.cur is None and nic.msgs:
                nic.cur = nic.msgs.popleft()
            if nic.cur is None or nic.outstanding >= self.max_outstanding:
                return 0
        if self._credits(base) <= 0:
            nic.req_flits_stalled_cycles += 1
            rec = nic.cur_pkt.rec if nic.cur_pkt else nic.cur
            rec.stalled += 1
            return -1
        if nic.cur_pkt is None:
            nic.cur_pkt = self._new_request(nic, nic.cur, t)
            nic.cur_flit = 0
            if nic.cur.next_chunk == nic.cur.num_packets:
                nic.cur = None
        pkt = nic.cur_pkt
        k = nic.cur_flit
        self._take_lane(ch, t)
        self._send(ch, 0, (pkt, k), t)
        self.flits_injected += 1
        nic.req_flits += 1
        pkt.rec.req_flits += 1
        pkt.rec.last_flit_cycle = t
        if self.record_events:
            self.events.append(f"{t},REQ_FLIT,nic{nic.node},{pkt.pid}")
        if k + 1 == pkt.nflits:
            nic.cur_pkt = None
            nic.cur_flit = 0
        else:
            nic.cur_flit = k + 1
        return 1

    def _route(self, pkt: Packet, r: RouterId, t: int) -> tuple[int, int]:
        if r == pkt.dst_router:
            oc = self.ej_ch[pkt.dst_node]
            return oc, oc * NUM_VCS
        mode = pkt.mode
        reroute = (
            pkt.path is None
            or (mode.adaptive and not pkt.committed and not pkt.response and pkt.hops < REROUTE_HOPS)
        )
        if reroute:
            decision = choose_route(
                self.topology, mode, r, pkt.dst_router, pkt.hops, pkt.flow_key,
                self.rng, self, self.bias,
            )
            pkt.decision = decision
            pkt.path = decision.path
            pkt.pos = 0
            if self.record_events:
                self.events.append(
                    f"{t},ROUTE,{r.group}.{r.chassis}.{r.blade},{pkt.pid},{decision.path.cls.value}"
                )
        nxt = pkt.path.hops[pkt.pos + 1]
        pkt.pos += 1
        oc = self.chan_of[(r, nxt)]
        pkt.hops += 1
        if self.ch_global[oc]:
            pkt.committed = True
        return oc, oc * NUM_VCS + pkt.vc_base + pkt.hops

    def _router_step(self, b: int, t: int):
        """True if a flit moved, an int wake-up cycle if lane-blocked, else None."""
        q = self.queues[b]
        pkt, k = q[0]
        route = self.buf_route.get(b)
        if route is None:
            if k != 0:
                raise SimulationError("body flit at queue head without a route")
            ch_in = b // NUM_VCS
            route = self._route(pkt, self.ch_router[ch_in], t)
            self.buf_route[b] = route
            self.pending[route[0]] += pkt.nflits
        oc, ob = route
        holder = self.out_lock.get(ob)
        if holder is None:
            self.out_lock[ob] = pkt
        elif holder is not pkt:
            return None
        sink = self.ch_sink[oc] >= 0
        if not sink and self._credits(ob) <= 0:
            return None
        if not self._take_lane(oc, t):
            return self._lane_wake(oc)

        q.popleft()
        self._send(oc, ob % NUM_VCS, (pkt, k), t)
        self.pending[oc] -= 1
        ch_in = b // NUM_VCS
        self.inflight_credits[b] = self.inflight_credits.get(b, 0) + 1
        self._schedule(t + self.ch_latency[ch_in], ("cr", b, ch_in))
        if k + 1 == pkt.nflits:
            del self.out_lock[ob]
            del self.buf_route[b]
        if not q:
            self.active.discard(b)
        return True

    def _deliver(self, node: int, entry, t: int):
        pkt, k = entry
        self.flits_delivered += 1
        self.last_delivery_cycle = max(self.last_delivery_cycle, t)
        if k + 1 != pkt.nflits:
            return
        rec = pkt.rec
        if not pkt.response:
            if self.record_events:
                self.events.append(f"{t},DELIVER,nic{node},{pkt.pid}")
            rec.delivered_packets += 1
            if pkt.decision is not None:
                rec.routed_packets += 1
                rec.minimal_packets += pkt.decision.is_minimal
                if self.keep_decisions:
                    rec.decisions.append(pkt.decision)
            chunk = pkt.chunk
            resp = Packet(self._pid, rec, pkt.index, response_flits(chunk, rec.msg.kind),
                          node, pkt.src_node, self.node_router[pkt.src_node],
                          RoutingMode.MIN_HASH, ("resp", pkt.pid), vc_base=RESP_VC_BASE,
                          response=True, request=pkt)
            self._pid += 1
            self._schedule(t + 1, ("resp", resp))
            if rec.delivered_packets == rec.num_packets and rec.msg.kind is MessageKind.PUT:
                rec.delivered_cycle = t
                for cb in self._delivery_cbs:
                    cb(rec, t)
        else:
            req = pkt.request
            req.response_cycle = t
            latency = t - req.first_flit_cycle
            nic = self.nics[node]
            nic.req_packets_cum_latency += latency
            nic.outstanding -= 1
            rec.cum_latency += latency
            rec.responses += 1
            self.responses_received += 1
            if self.record_events:
                self.events.append(f"{t},RESPONSE,nic{node},{req.pid}")
            if nic.busy():
                self.active_nics.add(node)
            if rec.responses == rec.num_packets:
                rec.complete_cycle = t
                if rec.msg.kind is MessageKind.GET:
                    rec.delivered_cycle = t
                    for cb in self._delivery_cbs:
                        cb(rec, t)
                for cb in self._complete_cbs:
                    cb(rec, t)

    # -- invariants ---------------------------------------------------------

    def queued_total(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def verify(self):
        """Raise AssertionError if any flow-control invariant is broken."""
        queued = self.queued_total()
        if self.flits_injected != self.flits_delivered + queued + self.flits_on_links:
            raise AssertionError(
                f"flit conservation broken at cycle {self.now}: injected={self.flits_injected} "
                f"delivered={self.flits_delivered} queued={queued} on_links={self.flits_on_links}"
            )
        Q = self.Q
        for b, c in self.credits.items():
            held = len(self.queues.get(b, ()))
            if held > Q:
                raise AssertionError(f"queue {b} holds {held} > {Q} flits")
            if c < 0:
                raise AssertionError(f"negative credits on {b}")
            total = c + held + self.inflight_flits.get(b, 0) + self.inflight_credits.get(b, 0)
            if total != Q:
                raise AssertionError(f"credit accounting broken on {b}: {total} != {Q}")
        for nic in self.nics:
            if nic.outstanding > self.max_outstanding or nic.outstanding < 0:
                raise AssertionError(f"nic{nic.node} outstanding={nic.outstanding}")

    def all_acknowledged(self) -> bool:
        return self.requests_sent == self.responses_received and all(
            r.responses == r.num_packets for r in self.records.values() if r.src != r.dst
        )


def simulate(topology: Topology, messages: Iterable[tuple[Message, int]], **kwargs) -> Simulator:
    """Inject ``(message, cycle)`` pairs, run to completion, return the simulator."""
    sim = Simulator(topology, **kwargs)
    for msg, at in messages:
        sim.inject(msg, at)
    sim.run_until_idle()
    return sim
