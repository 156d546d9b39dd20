"""Predictable primary-beacon and sub-beacon scheduling.

Primary beacons follow an LCG-driven uniform inter-beacon gap. The interval
after each primary is divided into fixed sub-slots; every slot draws a send
probability from a second LCG (reseeded from the primary generator at each
cycle start) and fires only when that probability strictly exceeds a
threshold chosen so that, on average, f - 1 sub-beacons fire per cycle.
Slot positions never depend on f, so raising f only adds transmissions:
anything predicted from stale fields remains a subset of what actually
airs. Everything a neighbour needs to replay the schedule travels in one
beacon: both generator states, the speeding factor and the cycle start.
"""

import struct
from collections import deque
from dataclasses import dataclass

from .prng import LcgState, decode_state, encode_state, lcg_next

DEFAULT_SUB_SLOTS = 10
RATE_WINDOW_CAPACITY = 15


@dataclass(frozen=True)
class ScheduleParams:
    mean_cycle_ms: float = 1000.0
    min_cycle_ms: float = 500.0
    max_cycle_ms: float = 1500.0
    n_sub_slots: int = DEFAULT_SUB_SLOTS
    min_slot_spacing_ms: float = 100.0

    def __post_init__(self):
        if not self.min_cycle_ms <= self.mean_cycle_ms <= self.max_cycle_ms:
            raise ValueError("cycle bounds must satisfy min <= mean <= max")
        if abs((self.min_cycle_ms + self.max_cycle_ms) / 2.0 - self.mean_cycle_ms) > 1e-9:
            raise ValueError("mean cycle must be the midpoint of the bounds")
        if self.n_sub_slots < 1:
            raise ValueError("need at least one sub-slot")
        if self.slot_ms < self.min_slot_spacing_ms:
            raise ValueError("sub-slot spacing below the configured minimum")

    @property
    def slot_ms(self) -> float:
        return self.mean_cycle_ms / self.n_sub_slots

    @property
    def f_max(self) -> int:
        # Keeps the transmission threshold inside [0, 1].
        return self.n_sub_slots + 1


def sub_beacon_threshold(f: float, n_sub_slots: int) -> float:
    """Threshold a slot probability must strictly exceed to fire."""
    if not 1 <= f <= n_sub_slots + 1:
        raise ValueError(f"speeding factor {f} outside [1, {n_sub_slots + 1}]")
    return 1.0 - (f - 1.0) / n_sub_slots


def sub_slot_times(b_start: float, b_next: float, params: ScheduleParams) -> list[float]:
    """Fixed candidate sub-beacon instants strictly inside (b_start, b_next).

    Slot positions are multiples of the *mean* cycle over the slot count, so
    a long realised cycle can hold more slots than n_sub_slots and a short
    one fewer. Slots are independent of the speeding factor.
    """
    if b_next <= b_start:
        raise ValueError("cycle end must lie after its start")
    slot = params.slot_ms
    times = []
    j = 1
    while True:
        t = b_start + j * slot
        if t >= b_next:
            break
        times.append(t)
        j += 1
    return times


@dataclass(frozen=True)
class BeaconFields:
    """Logical payload of every beacon: enough to replay the schedule."""

    primary_state: LcgState  # value that determines the cycle's end
    sub_state: LcgState      # seed of this cycle's slot-probability stream
    f: int
    b_start: float           # transmission time of the cycle's primary beacon


@dataclass(frozen=True)
class ScheduleState:
    """One fully planned beacon cycle of a receiver."""

    params: ScheduleParams
    f: int
    primary_lcg: LcgState        # state after the draw that fixed next_primary_time
    sub_lcg: LcgState            # slot-probability seed (reseeded each cycle)
    last_primary_time: float
    next_primary_time: float
    slot_times: tuple[float, ...]
    realized_times: tuple[float, ...]

    def fields(self) -> BeaconFields:
        return BeaconFields(self.primary_lcg, self.sub_lcg, self.f, self.last_primary_time)


def _plan(b_start: float, drawn: LcgState, f: int, params: ScheduleParams) -> ScheduleState:
    # The uniform value is recoverable from the post-draw state, which is why
    # carrying that state in the beacon lets neighbours replay the cycle.
    u = drawn.state / drawn.modulus
    b_next = b_start + params.min_cycle_ms + (params.max_cycle_ms - params.min_cycle_ms) * u
    slots = sub_slot_times(b_start, b_next, params)
    th = sub_beacon_threshold(f, params.n_sub_slots)
    q = drawn
    realized = []
    for t in slots:
        p, q = lcg_next(q)
        if p > th:
            realized.append(t)
    return ScheduleState(
        params=params,
        f=f,
        primary_lcg=drawn,
        sub_lcg=drawn,
        last_primary_time=b_start,
        next_primary_time=b_next,
        slot_times=tuple(slots),
        realized_times=tuple(realized),
    )


def start_cycle(b_start: float, state: LcgState, f: int, params: ScheduleParams) -> ScheduleState:
    """Plan the cycle beginning at ``b_start``, drawing its end from ``state``."""
    if not 1 <= f <= params.f_max:
        raise ValueError(f"speeding factor {f} outside [1, {params.f_max}]")
    _, drawn = lcg_next(state)
    return _plan(b_start, drawn, f, params)


def next_primary(state: ScheduleState, f: int | None = None) -> tuple[float, ScheduleState]:
    """Time of the next primary beacon plus the cycle that starts there."""
    nxt = start_cycle(
        state.next_primary_time, state.primary_lcg, state.f if f is None else f, state.params
    )
    return state.next_primary_time, nxt


def realized_sub_beacons(state: ScheduleState) -> tuple[float, ...]:
    return state.realized_times


def cycle_from_fields(fields: BeaconFields, params: ScheduleParams) -> ScheduleState:
    """Rebuild a receiver's current cycle from overheard beacon fields."""
    return _plan(fields.b_start, fields.primary_state, fields.f, params)


def predict_schedule(fields: BeaconFields, horizon_ms: float, params: ScheduleParams) -> list[float]:
    """All beacon instants (sub and primary) in (b_start, b_start + horizon].

    Replays exactly what the announcing receiver will do while its speeding
    factor stays put; if the receiver later raises f, this prediction is a
    subset of the realised transmissions.
    """
    if horizon_ms <= 0:
        raise ValueError("horizon must be positive")
    end = fields.b_start + horizon_ms
    cycle = cycle_from_fields(fields, params)
    times: list[float] = []
    while True:
        for t in cycle.realized_times:
            if t <= end:
                times.append(t)
        if cycle.next_primary_time > end:
            break
        times.append(cycle.next_primary_time)
        _, cycle = next_primary(cycle)
    return sorted(t for t in times if t > fields.b_start and t <= end)


# Wire layout of the logical beacon payload: two 6-byte generator states, a
# 1-byte speeding factor and a 4-byte cycle-start timestamp in whole ms. The
# simulator charges airtime for the configured beacon length regardless.
_FIELDS_TAIL = struct.Struct("<BI")
FIELDS_WIRE_BYTES = 6 + 6 + _FIELDS_TAIL.size


def encode_beacon_fields(fields: BeaconFields) -> bytes:
    if not 1 <= fields.f <= 255:
        raise ValueError("announced speeding factor must fit one byte")
    b_ms = int(round(fields.b_start))
    return (
        encode_state(fields.primary_state)
        + encode_state(fields.sub_state)
        + _FIELDS_TAIL.pack(fields.f, b_ms)
    )


def decode_beacon_fields(raw: bytes, params_like: LcgState) -> BeaconFields:
    """Decode the wire payload; generator constants come from configuration."""
    if len(raw) != FIELDS_WIRE_BYTES:
        raise ValueError(f"beacon payload must be {FIELDS_WIRE_BYTES} bytes")
    kw = dict(
        multiplier=params_like.multiplier,
        increment=params_like.increment,
        modulus=params_like.modulus,
    )
    primary = decode_state(raw[0:6], **kw)
    sub = decode_state(raw[6:12], **kw)
    f, b_ms = _FIELDS_TAIL.unpack(raw[12:])
    return BeaconFields(primary, sub, f, float(b_ms))


class RateWindow:
    """Bounded FIFO of the most recent inter-arrival times."""

    __slots__ = ("samples",)

    def __init__(self, capacity: int = RATE_WINDOW_CAPACITY):
        self.samples: deque[float] = deque(maxlen=capacity)

    def push(self, inter_arrival_ms: float) -> None:
        if inter_arrival_ms <= 0:
            raise ValueError("inter-arrival samples must be positive")
        self.samples.append(inter_arrival_ms)

    def __len__(self) -> int:
        return len(self.samples)


def estimate_lambda(window: RateWindow, mean_cycle_ms: float) -> float:
    """Incoming rate in packets per (mean) cycle; 0 until two samples exist."""
    n = len(window.samples)
    if n < 2:
        return 0.0
    return mean_cycle_ms / (sum(window.samples) / n)
