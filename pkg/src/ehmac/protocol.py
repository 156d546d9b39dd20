"""Sender/receiver state machines for RI-MAC, PW-MAC and EH-MAC.

All three variants share one machine. Every node beacons on the common
LCG-driven schedule; what differs is whether senders may predict beacons
from overheard fields (PW/EH) or must listen continuously (RI), and whether
the receiver adapts its speeding factor to the measured incoming rate (EH)
or keeps it pinned at 1 (RI/PW). EH-MAC with the factor clamped to 1 is
event-for-event identical to PW-MAC, which the tests lean on.

Retries after a missed ack deliberately stay minimal: the sender targets
the next predicted beacon of the same receiver, skipping ahead 0 or 1
opportunities at random so two colliding senders eventually separate.
"""

import math
from collections import deque
from dataclasses import dataclass
from random import Random

from .energy import DEFAULT_ENERGY, EnergyParams, optimal_factor
from .prng import LcgState
from .scenario import Topology, next_hop_table, routable_table
from .schedule import (
    BeaconFields,
    RateWindow,
    ScheduleParams,
    ScheduleState,
    cycle_from_fields,
    estimate_lambda,
    next_primary,
    start_cycle,
)
from .simcore import (
    ACK,
    BEACON,
    DATA,
    FRAME_NAMES,
    LISTEN,
    RX,
    SLEEP,
    TX,
    Channel,
    EventQueue,
    Frame,
    neighbor_table,
)


class MacVariant:
    """Protocol flavour: beacon predictability plus rate adaptation."""

    __slots__ = ("name", "predictable", "adaptive")

    def __init__(self, name: str, predictable: bool, adaptive: bool):
        self.name = name
        self.predictable = predictable
        self.adaptive = adaptive

    def __repr__(self):
        return f"MacVariant({self.name})"


RI_MAC = MacVariant("ri-mac", predictable=False, adaptive=False)
PW_MAC = MacVariant("pw-mac", predictable=True, adaptive=False)
EH_MAC = MacVariant("eh-mac", predictable=True, adaptive=True)

VARIANTS = {v.name: v for v in (RI_MAC, PW_MAC, EH_MAC)}


@dataclass(frozen=True)
class MacParams:
    beacon_bits: int = 60
    data_bits: int = 1024  # 128-byte payloads
    ack_bits: int = 60
    link_rate_kbps: float = 250.0
    guard_ms: float = 10.0       # senders wake this early; receivers wait it out
    ack_slack_ms: float = 1.0
    miss_slack_ms: float = 2.0
    schedule: ScheduleParams = ScheduleParams()
    energy: EnergyParams = DEFAULT_ENERGY
    f_max_override: int | None = None

    @property
    def beacon_air_ms(self) -> float:
        return self.beacon_bits / self.link_rate_kbps

    @property
    def data_air_ms(self) -> float:
        return self.data_bits / self.link_rate_kbps

    @property
    def ack_air_ms(self) -> float:
        return self.ack_bits / self.link_rate_kbps

    @property
    def answer_window_ms(self) -> float:
        return self.guard_ms + self.data_air_ms + self.ack_air_ms

    @property
    def f_max(self) -> int:
        if self.f_max_override is not None:
            return self.f_max_override
        return self.schedule.f_max


@dataclass(frozen=True)
class NodeSetup:
    lcg_seed: int          # non-zero initial beacon-generator state
    boot_offset_ms: float  # time of the node's first primary beacon
    retry_seed: int        # node-local stream for retry separation


class Packet:
    __slots__ = ("pid", "created_ms", "origin")

    def __init__(self, pid: int, created_ms: float, origin: int):
        self.pid = pid
        self.created_ms = created_ms
        self.origin = origin


class SchedulePredictor:
    """Forward replay of a neighbour's beacon times from overheard fields."""

    __slots__ = ("params", "fields", "_cycle", "_times")

    def __init__(self, fields: BeaconFields, params: ScheduleParams):
        self.params = params
        self.fields = None
        self.update(fields)

    def update(self, fields: BeaconFields) -> None:
        if fields == self.fields:
            return
        self.fields = fields
        self._cycle = cycle_from_fields(fields, self.params)
        self._times = list(self._cycle.realized_times)
        self._times.append(self._cycle.next_primary_time)

    def next_after(self, t_ms: float, skip: int = 0) -> float:
        """The (skip+1)-th beacon instant strictly after ``t_ms``."""
        times = self._times
        i = 0
        found = 0
        while True:
            while i >= len(times):
                _, nxt = next_primary(self._cycle)
                self._cycle = nxt
                times.extend(nxt.realized_times)
                times.append(nxt.next_primary_time)
            if times[i] > t_ms:
                if found == skip:
                    # Drop the consumed prefix so the list stays short.
                    if i > 64:
                        del times[:i]
                    return times[i]
                found += 1
            i += 1


# Sender activity states.
S_IDLE, S_SLEEP_WAIT, S_LISTEN_BEACON, S_COLD_LISTEN, S_TX_DATA, S_AWAIT_ACK = range(6)

# Event kinds.
EV_BEACON, EV_TX_END, EV_WINDOW, EV_WAKEUP, EV_MISS, EV_ACK_TO, EV_TRAFFIC = range(7)
EVENT_NAMES = ("beacon_due", "tx_end", "window_close", "wakeup", "miss_check", "ack_timeout", "traffic")


class Node:
    __slots__ = (
        "world", "idx", "variant", "params", "is_sink", "next_hop", "routable",
        "log", "rx_frame", "listen_since",
        "sched", "boot_lcg", "boot_offset_ms", "fields_cache", "rate_win", "last_arrival",
        "window_open", "window_deadline", "window_id", "accepted",
        "queue", "s_state", "wakeup_id", "attempt_id", "expected_beacon_ms",
        "skip_remaining", "retries", "retry_rng", "neighbor_fields", "predictor",
    )

    def __init__(self, world, idx, variant, params, setup: NodeSetup, is_sink, next_hop, routable):
        from .simcore import RadioLog

        self.world = world
        self.idx = idx
        self.variant = variant
        self.params = params
        self.is_sink = is_sink
        self.next_hop = next_hop
        self.routable = routable

        self.log = RadioLog()
        self.rx_frame = None
        self.listen_since = math.inf

        self.sched: ScheduleState | None = None
        self.boot_lcg = LcgState(setup.lcg_seed)
        self.boot_offset_ms = setup.boot_offset_ms
        self.fields_cache: BeaconFields | None = None
        self.rate_win = RateWindow()
        self.last_arrival = None

        self.window_open = False
        self.window_deadline = 0.0
        self.window_id = 0
        self.accepted: set[int] = set()

        self.queue: deque[Packet] = deque()
        self.s_state = S_IDLE
        self.wakeup_id = 0
        self.attempt_id = 0
        self.expected_beacon_ms = 0.0
        self.skip_remaining = 0
        self.retries = 0
        self.retry_rng = Random(setup.retry_seed)
        self.neighbor_fields: dict[int, BeaconFields] = {}
        self.predictor: SchedulePredictor | None = None

    # -- radio -------------------------------------------------------------

    def set_mode(self, mode: int, now: float) -> None:
        old = self.log.mode
        if mode == old:
            return
        self.log.transition(mode, now)
        if (mode == LISTEN or mode == RX) and old != LISTEN and old != RX:
            self.listen_since = now
        elif mode != LISTEN and mode != RX:
            self.listen_since = math.inf

    def resolve_radio(self, now: float) -> None:
        if self.log.mode == TX or self.rx_frame is not None:
            return
        s = self.s_state
        if self.window_open or s == S_LISTEN_BEACON or s == S_COLD_LISTEN or s == S_AWAIT_ACK:
            self.set_mode(LISTEN, now)
        else:
            self.set_mode(SLEEP, now)

    # -- receiver ----------------------------------------------------------

    def on_beacon_due(self, now: float, primary: bool) -> None:
        if primary:
            self._advance_cycle(now)
        # A radio already mid-transmission forfeits this beacon; the schedule
        # itself has advanced, so neighbours' predictions stay aligned.
        if self.log.mode == TX:
            return
        self.world.send(self, BEACON, None, self.params.beacon_bits, self.fields_cache)

    def _advance_cycle(self, now: float) -> None:
        if self.sched is None:
            prev_state = self.boot_lcg
        else:
            prev_state = self.sched.primary_lcg
        f = 1
        if self.variant.adaptive:
            lam = estimate_lambda(self.rate_win, self.params.schedule.mean_cycle_ms)
            f_real = optimal_factor(lam, self.params.energy, float(self.params.f_max))
            f = min(self.params.f_max, max(1, int(math.floor(f_real + 0.5))))
        self.sched = start_cycle(now, prev_state, f, self.params.schedule)
        self.fields_cache = self.sched.fields()
        queue = self.world.queue
        for t in self.sched.realized_times:
            queue.schedule(t, EV_BEACON, self.idx, 0)
        queue.schedule(self.sched.next_primary_time, EV_BEACON, self.idx, 1)

    def on_window_close(self, now: float, window_id: int) -> None:
        if window_id != self.window_id or not self.window_open:
            return
        if self.rx_frame is not None:
            # Mid-reception: decide right after the frame settles.
            self.world.queue.schedule(self.rx_frame.end, EV_WINDOW, self.idx, window_id)
            return
        self.window_open = False
        self.resolve_radio(now)

    def _on_data(self, frame: Frame, now: float) -> None:
        pkt: Packet = frame.payload
        if self.last_arrival is not None and now > self.last_arrival:
            self.rate_win.push(now - self.last_arrival)
        self.last_arrival = now
        if pkt.pid not in self.accepted:
            self.accepted.add(pkt.pid)
            if self.is_sink:
                self.world.record_delivery(pkt, now)
            else:
                self.enqueue(pkt, now)
        # Ack even duplicates so a lost ack cannot strand the sender.
        self.world.send(self, ACK, frame.src, self.params.ack_bits, pkt.pid)

    # -- sender ------------------------------------------------------------

    def enqueue(self, pkt: Packet, now: float) -> None:
        self.queue.append(pkt)
        if self.s_state == S_IDLE:
            self.on_packet_enqueued(now)

    def on_packet_enqueued(self, now: float) -> None:
        if self.variant.predictable and self.next_hop in self.neighbor_fields:
            self._enter_sleep_wait(self._predict_next(now, 0), now)
        else:
            # Cold start (or RI-MAC always): listen until the target beacons.
            self.s_state = S_COLD_LISTEN
            self.resolve_radio(now)

    def _predict_next(self, after_ms: float, skip: int) -> float:
        fields = self.neighbor_fields[self.next_hop]
        if self.predictor is None:
            self.predictor = SchedulePredictor(fields, self.params.schedule)
        else:
            self.predictor.update(fields)
        return self.predictor.next_after(after_ms, skip)

    def _enter_sleep_wait(self, beacon_ms: float, now: float) -> None:
        self.wakeup_id += 1
        self.s_state = S_SLEEP_WAIT
        self.expected_beacon_ms = beacon_ms
        wake = beacon_ms - self.params.guard_ms
        self.world.queue.schedule(wake if wake > now else now, EV_WAKEUP, self.idx, self.wakeup_id)
        self.resolve_radio(now)

    def on_wakeup(self, now: float, wakeup_id: int) -> None:
        if wakeup_id != self.wakeup_id or self.s_state != S_SLEEP_WAIT:
            return
        self.s_state = S_LISTEN_BEACON
        deadline = self.expected_beacon_ms + self.params.beacon_air_ms + self.params.miss_slack_ms
        self.world.queue.schedule(deadline, EV_MISS, self.idx, self.wakeup_id)
        self.resolve_radio(now)

    def on_miss_check(self, now: float, wakeup_id: int) -> None:
        if wakeup_id != self.wakeup_id or self.s_state != S_LISTEN_BEACON:
            return
        # Stale speeding factor or a skipped beacon: aim at the next one.
        self._enter_sleep_wait(self._predict_next(self.expected_beacon_ms, 0), now)

    def on_beacon_heard(self, src: int, fields: BeaconFields, now: float) -> None:
        if self.variant.predictable:
            self.neighbor_fields[src] = fields
        if (
            self.queue
            and src == self.next_hop
            and (self.s_state == S_COLD_LISTEN or self.s_state == S_LISTEN_BEACON)
        ):
            if self.skip_remaining > 0:
                self.skip_remaining -= 1
                if self.variant.predictable:
                    self._enter_sleep_wait(self._predict_next(now, 0), now)
                # RI-MAC keeps listening for the next one.
            else:
                self._start_data(now)
        elif self.s_state == S_LISTEN_BEACON and src == self.next_hop:
            # Queue drained elsewhere; nothing to send after all.
            self.s_state = S_IDLE
            self.wakeup_id += 1
            self.resolve_radio(now)

    def _start_data(self, now: float) -> None:
        self.s_state = S_TX_DATA
        self.wakeup_id += 1  # invalidates any pending miss check
        self.attempt_id += 1
        self.world.send(self, DATA, self.next_hop, self.params.data_bits, self.queue[0])

    def on_ack_or_timeout(self, now: float, ack: Frame | None) -> None:
        if ack is not None:
            if (
                self.s_state != S_AWAIT_ACK
                or ack.src != self.next_hop
                or not self.queue
                or ack.payload != self.queue[0].pid
            ):
                return
            self.attempt_id += 1
            self.queue.popleft()
            self.retries = 0
            self.skip_remaining = 0
            if self.queue:
                if self.variant.predictable:
                    self._enter_sleep_wait(self._predict_next(now, 0), now)
                else:
                    self.s_state = S_COLD_LISTEN
                    self.resolve_radio(now)
            else:
                self.s_state = S_IDLE
                self.resolve_radio(now)
            return
        # Timeout: keep the packet at the head and separate colliding senders
        # by randomly skipping 0 or 1 of the receiver's upcoming beacons.
        self.retries += 1
        skip = self.retry_rng.getrandbits(1)
        if self.variant.predictable:
            self._enter_sleep_wait(self._predict_next(now, skip), now)
        else:
            self.skip_remaining = skip
            self.s_state = S_COLD_LISTEN
            self.resolve_radio(now)

    def on_ack_timeout_event(self, now: float, attempt_id: int) -> None:
        if attempt_id != self.attempt_id or self.s_state != S_AWAIT_ACK:
            return
        self.on_ack_or_timeout(now, None)

    # -- frame completion --------------------------------------------------

    def on_own_tx_end(self, frame: Frame, now: float) -> None:
        self.set_mode(LISTEN, now)
        if frame.kind == BEACON:
            self.window_id += 1
            self.window_open = True
            self.window_deadline = now + self.params.answer_window_ms
            self.world.queue.schedule(self.window_deadline, EV_WINDOW, self.idx, self.window_id)
        elif frame.kind == DATA:
            self.s_state = S_AWAIT_ACK
            deadline = now + self.params.ack_air_ms + self.params.ack_slack_ms
            self.world.queue.schedule(deadline, EV_ACK_TO, self.idx, self.attempt_id)
        else:  # our ack closes the exchange
            self.window_open = False
        self.resolve_radio(now)

    def on_frame(self, frame: Frame, now: float) -> None:
        if frame.kind == BEACON:
            self.on_beacon_heard(frame.src, frame.payload, now)
        elif frame.kind == DATA:
            if frame.dest == self.idx:
                self._on_data(frame, now)
        else:
            if frame.dest == self.idx:
                self.on_ack_or_timeout(now, frame)


class World:
    """One simulated network: nodes, channel, event loop and counters."""

    def __init__(self, topo: Topology, variant: MacVariant, params: MacParams,
                 setups: list[NodeSetup], trace: list[str] | None = None):
        self.topo = topo
        self.variant = variant
        self.params = params
        self.queue = EventQueue()
        self.neighbors = neighbor_table(topo.positions, topo.range_m)
        self.channel = Channel(self.neighbors)
        self.trace = trace

        hops = next_hop_table(topo)
        routable = routable_table(topo, hops)
        self.nodes = [
            Node(self, i, variant, params, setups[i], i == topo.sink, hops[i], routable[i])
            for i in range(len(topo.positions))
        ]

        self.generated = 0
        self.delivered = 0
        self.unroutable = 0
        self.collisions = 0
        self.delays_ms: list[float] = []
        self.delivered_pids: set[int] = set()
        self._next_pid = 0

    # -- setup ---------------------------------------------------------------

    def bootstrap(self) -> None:
        for node in self.nodes:
            self.queue.schedule(node.boot_offset_ms, EV_BEACON, node.idx, 1)

    def add_arrivals(self, node_idx: int, times_ms) -> None:
        for t in times_ms:
            self.queue.schedule(t, EV_TRAFFIC, node_idx, None)

    # -- frame handling --------------------------------------------------------

    def send(self, node: Node, kind: int, dest: int | None, bits: int, payload) -> None:
        now = self.queue.now
        frame = Frame(node.idx, kind, dest, bits, now, self.params.link_rate_kbps)
        frame.payload = payload
        node.rx_frame = None  # transmitting aborts any reception in progress
        node.set_mode(TX, now)
        self.channel.begin(frame)
        nodes = self.nodes
        for li in frame.listeners:
            listener = nodes[li]
            if listener.log.mode == LISTEN:
                listener.rx_frame = frame
                listener.set_mode(RX, now)
        self.queue.schedule(frame.end, EV_TX_END, node.idx, frame)

    def _finish_frame(self, frame: Frame, now: float) -> None:
        self.channel.end(frame)
        nodes = self.nodes
        nodes[frame.src].on_own_tx_end(frame, now)
        is_data = frame.kind == DATA
        for li in frame.listeners:
            listener = nodes[li]
            if listener.rx_frame is frame:
                listener.rx_frame = None
                listener.set_mode(LISTEN, now)
            corrupted = frame.is_corrupted_at(li)
            if is_data and frame.dest == li and corrupted:
                self.collisions += 1
            if (
                not corrupted
                and listener.listen_since <= frame.start
                and (listener.log.mode == LISTEN or listener.log.mode == RX)
            ):
                listener.on_frame(frame, now)

    # -- metrics ----------------------------------------------------------------

    def record_delivery(self, pkt: Packet, now: float) -> None:
        self.delivered += 1
        self.delivered_pids.add(pkt.pid)
        self.delays_ms.append(now - pkt.created_ms)

    def queued_unique_at_end(self) -> int:
        pending: set[int] = set()
        for node in self.nodes:
            for pkt in node.queue:
                pending.add(pkt.pid)
        return len(pending - self.delivered_pids)

    # -- event loop --------------------------------------------------------------

    def _dispatch(self, now: float, seq: int, kind: int, node_idx: int, aux) -> None:
        if self.trace is not None:
            self._trace_line(now, seq, kind, node_idx, aux)
        node = self.nodes[node_idx]
        if kind == EV_TX_END:
            self._finish_frame(aux, now)
        elif kind == EV_BEACON:
            node.on_beacon_due(now, bool(aux))
        elif kind == EV_WINDOW:
            node.on_window_close(now, aux)
        elif kind == EV_WAKEUP:
            node.on_wakeup(now, aux)
        elif kind == EV_MISS:
            node.on_miss_check(now, aux)
        elif kind == EV_ACK_TO:
            node.on_ack_timeout_event(now, aux)
        elif kind == EV_TRAFFIC:
            self._on_traffic(node, now)
        else:  # pragma: no cover - guarded by the event constructors
            raise AssertionError(f"unknown event kind {kind}")

    def _on_traffic(self, node: Node, now: float) -> None:
        self.generated += 1
        if not node.routable or node.is_sink:
            self.unroutable += 1
            return
        pkt = Packet(self._next_pid, now, node.idx)
        self._next_pid += 1
        node.enqueue(pkt, now)

    def _trace_line(self, now, seq, kind, node_idx, aux) -> None:
        if kind == EV_TX_END:
            f: Frame = aux
            dest = "*" if f.dest is None else f.dest
            detail = f"{FRAME_NAMES[f.kind]} {f.src}->{dest}"
            if f.kind == DATA:
                detail += f" pid={f.payload.pid}"
        elif kind == EV_BEACON:
            detail = "primary" if aux else "sub"
        elif kind == EV_TRAFFIC:
            detail = "arrival"
        else:
            detail = str(aux)
        self.trace.append(f"{now:.6f}\t{seq}\t{EVENT_NAMES[kind]}\t{node_idx}\t{detail}")

    def run(self, t_end_ms: float) -> None:
        self.bootstrap()
        self.queue.run_until(t_end_ms, self._dispatch)
        for node in self.nodes:
            node.log.close(t_end_ms)
