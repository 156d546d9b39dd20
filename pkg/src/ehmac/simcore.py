"""Deterministic discrete-event engine, radio accounting and channel model.

Events are dispatched in strict (time, sequence) order, so simultaneous
events resolve by insertion order and identical inputs always produce
identical traces. The channel is a unit disk: a frame reaches every
listener within range, and any temporal overlap of in-range transmissions
destroys all overlapped frames at that listener (worst-case, no capture).
Propagation delay is zero.
"""

import math
from heapq import heappop, heappush
from itertools import count

LINK_RATE_KBPS = 250.0  # bits per ms

# Radio modes.
SLEEP, LISTEN, TX, RX = 0, 1, 2, 3
MODE_NAMES = ("sleep", "listen", "tx", "rx")

# Frame kinds.
BEACON, DATA, ACK = 0, 1, 2
FRAME_NAMES = ("beacon", "data", "ack")


class SimulationError(RuntimeError):
    """Fatal logic error inside the simulation (never a modelling outcome)."""


class EventQueue:
    """Time-ordered queue with an insertion-sequence tiebreaker."""

    __slots__ = ("now", "_heap", "_seq")

    def __init__(self):
        self.now = 0.0
        self._heap: list[tuple] = []
        self._seq = count()

    def schedule(self, time_ms: float, kind: int, node: int, aux=None) -> None:
        if time_ms < self.now:
            raise SimulationError(f"event scheduled into the past ({time_ms} < {self.now})")
        heappush(self._heap, (time_ms, next(self._seq), kind, node, aux))

    def run_until(self, t_end: float, handler) -> int:
        """Dispatch every event with time <= t_end; returns the dispatch count."""
        heap = self._heap
        dispatched = 0
        while heap and heap[0][0] <= t_end:
            time_ms, seq, kind, node, aux = heappop(heap)
            self.now = time_ms
            handler(time_ms, seq, kind, node, aux)
            dispatched += 1
        self.now = t_end
        return dispatched

    def __len__(self) -> int:
        return len(self._heap)


class RadioLog:
    """Accumulated time per radio mode for one node.

    The four buckets always sum to the elapsed simulated time, which is what
    makes the duty cycle (1 - sleep fraction) well defined.
    """

    __slots__ = ("mode", "since", "acc")

    def __init__(self, start_ms: float = 0.0):
        self.mode = SLEEP
        self.since = start_ms
        self.acc = [0.0, 0.0, 0.0, 0.0]

    def transition(self, mode: int, now: float) -> None:
        if mode == self.mode:
            return
        if mode == TX and self.mode == TX:
            raise SimulationError("cannot start a transmission while transmitting")
        self.acc[self.mode] += now - self.since
        self.mode = mode
        self.since = now

    def close(self, now: float) -> None:
        self.acc[self.mode] += now - self.since
        self.since = now

    @property
    def total(self) -> float:
        return sum(self.acc)

    def duty_cycle(self) -> float:
        total = self.total
        if total <= 0:
            return 0.0
        return 1.0 - self.acc[SLEEP] / total


class Frame:
    """One transmission on the air."""

    __slots__ = ("src", "kind", "dest", "bits", "start", "end", "payload", "listeners", "corrupted")

    def __init__(self, src, kind, dest, bits, start, link_rate_kbps=LINK_RATE_KBPS):
        self.src = src
        self.kind = kind
        self.dest = dest  # None for broadcast beacons
        self.bits = bits
        self.start = start
        self.end = start + bits / link_rate_kbps
        self.payload = None
        self.listeners: tuple[int, ...] = ()
        self.corrupted: set[int] | None = None

    def corrupt_at(self, node: int) -> None:
        if self.corrupted is None:
            self.corrupted = {node}
        else:
            self.corrupted.add(node)

    def is_corrupted_at(self, node: int) -> bool:
        return self.corrupted is not None and node in self.corrupted


def neighbor_table(positions, range_m: float) -> list[tuple[int, ...]]:
    """Per-node tuple of in-range neighbours (range boundary inclusive)."""
    n = len(positions)
    limit = range_m * range_m
    table: list[tuple[int, ...]] = []
    for i in range(n):
        xi, yi = positions[i]
        near = []
        for j in range(n):
            if j == i:
                continue
            dx = positions[j][0] - xi
            dy = positions[j][1] - yi
            if dx * dx + dy * dy <= limit:
                near.append(j)
        table.append(tuple(near))
    return table


class Channel:
    """Incremental overlap bookkeeping for the unit-disk collision rule.

    ``begin`` marks a frame on the air and flags overlaps; ``end`` removes it
    and is the moment per-listener outcomes become final. Whether a listener
    actually decodes additionally depends on its radio having been
    receive-capable for the whole frame, which the caller checks.
    """

    __slots__ = ("neighbors", "_active")

    def __init__(self, neighbors: list[tuple[int, ...]]):
        self.neighbors = neighbors
        self._active: list[list[Frame]] = [[] for _ in neighbors]

    def begin(self, frame: Frame) -> None:
        frame.listeners = self.neighbors[frame.src]
        for node in frame.listeners:
            active = self._active[node]
            if active:
                frame.corrupt_at(node)
                for other in active:
                    other.corrupt_at(node)
            active.append(frame)

    def end(self, frame: Frame) -> None:
        for node in frame.listeners:
            self._active[node].remove(frame)


def transmit_outcomes(transmissions, positions, range_m: float, listening) -> dict:
    """Reference decode decision for a batch of transmissions.

    ``transmissions`` are (src, start, end) triples; ``listening`` is the set
    of nodes assumed receive-capable throughout. Returns {(tx_index, node):
    decoded}. Quadratic and allocation-happy: this is the oracle the
    incremental channel is tested against, not the production path.
    """
    outcomes = {}
    limit = range_m * range_m

    def in_range(a, b):
        dx = positions[a][0] - positions[b][0]
        dy = positions[a][1] - positions[b][1]
        return dx * dx + dy * dy <= limit

    for i, (src, start, end) in enumerate(transmissions):
        for node in range(len(positions)):
            if node == src or node not in listening or not in_range(src, node):
                continue
            clean = True
            for j, (osrc, ostart, oend) in enumerate(transmissions):
                if j == i or not in_range(osrc, node):
                    continue
                if ostart < end and oend > start:
                    clean = False
                    break
            outcomes[(i, node)] = clean
    return outcomes


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
