"""Deterministic event simulation of flooding dissemination.

Time is integer microseconds. Every stochastic quantity comes from one
`random.Random(config.seed)` stream with a fixed draw order, so a run is a
pure function of (topology, assignment, config):

1. per-source phase offsets, ascending source id;
2. jitter and channel for every origination copy, ascending (source, packet,
   copy);
3. event-stream draws at frame ends: receivers are visited in ascending id,
   and each receiver's loss draw (when the model has one) and forward
   jitter/channel draws complete before the next receiver is considered.

Radio model: frames have one fixed duration and one advertising channel.
A frame is received by an in-range listener unless a same-channel frame
from another in-range transmitter overlaps it in time (collision), the
listener is itself transmitting during the frame (half-duplex), or an
independent loss draw discards it. Only relays and the sink listen; a
non-relay barrel wakes to transmit its own packets and sleeps otherwise,
so receptions at non-relays are not modeled. Collision beats half-duplex
beats loss beats the duplicate cache when classifying an attempt.

Dissemination: a source transmits each packet as one or more identical
copies (its repeat plan), each copy independently jittered. A relay hearing
a packet for the first time forwards it exactly once, one jittered frame
with ttl-1, while later copies die in the duplicate cache. The sink counts
the first arrival of each (source, packet).

The engine stops at sim_time: frames that would end after it are never
resolved and their airtime is clipped for the duty-cycle accounting.
"""
from __future__ import annotations

import heapq
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .relay_selection import RelayAssignment
from .topology import Topology

RECEPTION_MODELS = ("collision_only", "independent_loss")
REPEAT_MODES = ("distance_scaled", "fixed")

# Refuse runs that would spin forever (misconfigured feedback loops), and
# refuse silently truncating an event trace the caller asked for.
DEFAULT_MAX_EVENTS = 100_000_000
EVENT_LOG_CAP = 1_000_000

_ORIGIN, _TX_START, _FRAME_END = 0, 1, 2


class SimulationError(RuntimeError):
    """Raised when a run exceeds its event budget or trace capacity."""


@dataclass(frozen=True)
class RepeatPolicy:
    """How many copies of each packet a source transmits.

    distance_scaled: ceil(distance-to-sink / range), minimum 1, so far nodes
    push harder against the thinner delivery odds of a long flood path.
    fixed: the same count everywhere.
    """

    mode: str = "distance_scaled"
    fixed_count: int = 1


@dataclass(frozen=True)
class ChannelConfig:
    """Link-layer timing and reception model for advertising frames."""

    n_adv_channels: int = 3
    frame_duration_us: int = 1100
    adv_jitter_ms: float = 12.0
    reception_model: str = "collision_only"
    loss_p: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation run: traffic, radio, and replication settings."""

    app_rate_pps: float = 1.0
    sim_time_s: float = 20.0
    seed: int = 0
    ttl: int = 127
    range_r_m: float = 100.0
    tx_power_dbm: float = 20.0  # recorded for provenance; unit disk ignores it
    repeat_policy: RepeatPolicy = field(default_factory=RepeatPolicy)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    emit_events: bool = False
    max_events: int = DEFAULT_MAX_EVENTS


@dataclass(frozen=True)
class SimResult:
    """Per-node counters and duty-cycle fractions for one run.

    Tuples are indexed by node id (sink last). events is empty unless the
    scenario asked for a trace; entries are (time_us, node, kind, source,
    packet, channel) with kind in origin/tx/rx/deliver and channel -1 where
    not applicable.
    """

    sim_time_us: int
    seed: int
    relays: tuple[int, ...]
    app_sent: tuple[int, ...]
    net_transmissions: tuple[int, ...]
    relayed_count: tuple[int, ...]
    delivered_by_source: tuple[int, ...]
    deliveries: tuple[tuple[int, int, int, int], ...]  # (source, packet, time_us, hops)
    t_tx_frac: tuple[float, ...]
    t_listen_frac: tuple[float, ...]
    t_sleep_frac: tuple[float, ...]
    max_hops: int
    processed_events: int
    events: tuple[tuple, ...] = ()


class Frame:
    __slots__ = ("start", "end", "tx", "channel", "source", "pkt", "ttl", "hops")

    def __init__(self, start, end, tx, channel, source, pkt, ttl, hops):
        self.start = start
        self.end = end
        self.tx = tx
        self.channel = channel
        self.source = source
        self.pkt = pkt
        self.ttl = ttl
        self.hops = hops


def plan_transmissions(topology: Topology, policy: RepeatPolicy) -> tuple[int, ...]:
    """Copies per packet for every barrel under the given repeat policy."""
    if policy.mode == "fixed":
        if policy.fixed_count < 1:
            raise ValueError("fixed_count must be >= 1")
        return tuple(policy.fixed_count for _ in topology.barrels)
    if policy.mode != "distance_scaled":
        raise ValueError(f"unknown repeat mode {policy.mode!r}")
    return tuple(
        max(1, math.ceil(topology.distance(i, topology.sink) / topology.range_r))
        for i in topology.barrels
    )


def resolve_receptions(
    adjacency: tuple[int, ...],
    listener_mask: int,
    frame: Frame,
    concurrent,
) -> tuple[int, int, int]:
    """Classify the in-range listeners of a finished frame.

    concurrent is an iterable of frames (any channel) that may overlap it;
    non-overlapping entries are filtered here. Returns bitmasks
    (clear, jammed, busy): jammed listeners saw a same-channel overlap from
    another in-range transmitter, busy listeners were themselves on air, and
    the rest hear the frame cleanly. Jam wins when both apply.
    """
    jam = 0
    on_air = 0
    for g in concurrent:
        if g is frame:
            continue
        if g.start < frame.end and g.end > frame.start:
            on_air |= 1 << g.tx
            if g.channel == frame.channel:
                jam |= adjacency[g.tx]
    reach = adjacency[frame.tx] & listener_mask
    return reach & ~jam & ~on_air, reach & jam, reach & on_air & ~jam


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _validate(topology: Topology, assignment: RelayAssignment, config: ScenarioConfig):
    if topology.range_r != config.range_r_m:
        raise ValueError(
            f"topology built at range {topology.range_r} but scenario says "
            f"{config.range_r_m}; rebuild the topology at the scenario range"
        )
    if len(assignment.chosen) != topology.node_count:
        raise ValueError("assignment does not match topology size")
    for r in assignment.relays:
        if not (0 <= r < topology.sink):
            raise ValueError(f"relay {r} is not a barrel")
    if config.sim_time_s <= 0:
        raise ValueError("sim_time_s must be positive")
    if config.app_rate_pps <= 0:
        raise ValueError("app_rate_pps must be positive")
    if config.ttl < 1:
        raise ValueError("ttl must be >= 1")
    ch = config.channel
    if ch.frame_duration_us < 1:
        raise ValueError("frame_duration_us must be >= 1")
    if ch.n_adv_channels < 1:
        raise ValueError("n_adv_channels must be >= 1")
    if ch.adv_jitter_ms < 0:
        raise ValueError("adv_jitter_ms must be >= 0")
    if ch.reception_model not in RECEPTION_MODELS:
        raise ValueError(f"unknown reception model {ch.reception_model!r}")
    if not (0.0 <= ch.loss_p <= 1.0):
        raise ValueError("loss_p must be in [0, 1]")


def run(topology: Topology, assignment: RelayAssignment, config: ScenarioConfig) -> SimResult:
    """Simulate one scenario; see the module docstring for the model."""
    _validate(topology, assignment, config)
    n = topology.node_count
    sink = topology.sink
    adj = topology.adjacency
    T = round(config.sim_time_s * 1e6)
    dur = config.channel.frame_duration_us
    jit_max = round(config.channel.adv_jitter_ms * 1000)
    nch = config.channel.n_adv_channels
    lossy = config.channel.reception_model == "independent_loss"
    loss_p = config.channel.loss_p
    listener_mask = assignment.relay_mask() | (1 << sink)
    copies = plan_transmissions(topology, config.repeat_policy)
    interval = round(1e6 / config.app_rate_pps)
    if interval < 2:
        raise ValueError("app rate too high for the microsecond clock")

    rng = random.Random(config.seed)
    seq = itertools.count()
    heap: list = []

    # Drawn up front in the contract order. The phase keeps packet k of a
    # source strictly inside (k*interval, (k+1)*interval), so every source
    # originates exactly rate*sim_time packets when the interval divides T.
    phases = [rng.randrange(1, interval) for _ in range(sink)]
    wake: list[list[list]] = [[] for _ in range(n)]
    for src in range(sink):
        is_listener = bool(listener_mask >> src & 1)
        t_pkt = phases[src]
        pkt = 0
        while t_pkt < T:
            rec = None
            if not is_listener:
                rec = [t_pkt, t_pkt, copies[src]]
                wake[src].append(rec)
            heapq.heappush(heap, (t_pkt, next(seq), _ORIGIN, (src, pkt, rec)))
            for _ in range(copies[src]):
                jitter = rng.randrange(jit_max) if jit_max > 0 else 0
                channel = rng.randrange(nch)
                heapq.heappush(
                    heap,
                    (
                        t_pkt + jitter,
                        next(seq),
                        _TX_START,
                        (src, src, pkt, config.ttl, 1, channel, False, rec),
                    ),
                )
            t_pkt += interval
            pkt += 1

    busy_until = [0] * n
    caches: list[set] = [set() for _ in range(n)]
    airtime = [0] * n
    app_sent = [0] * n
    net_tx = [0] * n
    relayed = [0] * n
    delivered_by = [0] * n
    deliveries: list[tuple[int, int, int, int]] = []
    max_hops = 0
    events: Optional[list] = [] if config.emit_events else None
    recent: deque = deque()
    processed = 0

    def log(time_us, node, kind, source, pkt, channel):
        if events is None:
            return
        if len(events) >= EVENT_LOG_CAP:
            raise SimulationError(
                f"event trace exceeded {EVENT_LOG_CAP} entries; run without "
                "emit_events or shorten the scenario"
            )
        events.append((time_us, node, kind, source, pkt, channel))

    while heap and heap[0][0] <= T:
        t, s, kind, payload = heapq.heappop(heap)
        processed += 1
        if processed > config.max_events:
            raise SimulationError(
                f"exceeded {config.max_events} events at t={t}us; the scenario "
                "is likely runaway"
            )
        if kind == _ORIGIN:
            src, pkt, rec = payload
            app_sent[src] += 1
            caches[src].add((src, pkt))
            log(t, src, "origin", src, pkt, -1)
        elif kind == _TX_START:
            node = payload[0]
            if busy_until[node] > t:
                # radio still on air; keep the original sequence number so
                # a node's queued frames stay first-come-first-served
                heapq.heappush(heap, (busy_until[node], s, kind, payload))
                continue
            if t >= T:
                continue
            _, src, pkt, ttl, hops, channel, is_forward, rec = payload
            end = t + dur
            busy_until[node] = end
            airtime[node] += min(end, T) - t
            net_tx[node] += 1
            if is_forward:
                relayed[node] += 1
            if rec is not None:
                rec[1] = max(rec[1], min(end, T))
                rec[2] -= 1
            frame = Frame(t, end, node, channel, src, pkt, ttl, hops)
            recent.append(frame)
            heapq.heappush(heap, (end, next(seq), _FRAME_END, frame))
            log(t, node, "tx", src, pkt, channel)
        else:
            frame = payload
            cutoff = t - dur
            while recent and recent[0].end <= cutoff:
                recent.popleft()
            clear, _, _ = resolve_receptions(adj, listener_mask, frame, recent)
            key = (frame.source, frame.pkt)
            for r in _bits(clear):
                if lossy and rng.random() < loss_p:
                    continue
                if key in caches[r]:
                    continue
                caches[r].add(key)
                if r == sink:
                    delivered_by[frame.source] += 1
                    deliveries.append((frame.source, frame.pkt, t, frame.hops))
                    if frame.hops > max_hops:
                        max_hops = frame.hops
                    log(t, r, "deliver", frame.source, frame.pkt, frame.channel)
                else:
                    log(t, r, "rx", frame.source, frame.pkt, frame.channel)
                    if frame.ttl > 1:
                        jitter = rng.randrange(jit_max) if jit_max > 0 else 0
                        channel = rng.randrange(nch)
                        heapq.heappush(
                            heap,
                            (
                                t + jitter,
                                next(seq),
                                _TX_START,
                                (
                                    r,
                                    frame.source,
                                    frame.pkt,
                                    frame.ttl - 1,
                                    frame.hops + 1,
                                    channel,
                                    True,
                                    None,
                                ),
                            ),
                        )

    # Duty cycle. Listeners (relays, sink) are awake for the whole run:
    # whatever is not their own airtime is listening. A plain barrel wakes
    # when a packet is due and stays up until its last copy leaves the air
    # (or the run ends with copies still queued), then sleeps.
    listen_us = [0] * n
    sleep_us = [0] * n
    for node in range(n):
        if listener_mask >> node & 1 or node == sink:
            listen_us[node] = T - airtime[node]
            continue
        merged = 0
        cur_start = cur_end = None
        for rec in wake[node]:
            start, end, pending = rec
            if pending > 0:
                end = T
            if cur_start is None:
                cur_start, cur_end = start, end
            elif start <= cur_end:
                cur_end = max(cur_end, end)
            else:
                merged += cur_end - cur_start
                cur_start, cur_end = start, end
        if cur_start is not None:
            merged += cur_end - cur_start
        listen_us[node] = merged - airtime[node]
        sleep_us[node] = T - merged

    return SimResult(
        sim_time_us=T,
        seed=config.seed,
        relays=assignment.relays,
        app_sent=tuple(app_sent),
        net_transmissions=tuple(net_tx),
        relayed_count=tuple(relayed),
        delivered_by_source=tuple(delivered_by),
        deliveries=tuple(deliveries),
        t_tx_frac=tuple(a / T for a in airtime),
        t_listen_frac=tuple(l / T for l in listen_us),
        t_sleep_frac=tuple(s / T for s in sleep_us),
        max_hops=max_hops,
        processed_events=processed,
        events=tuple(events) if events is not None else (),
    )
