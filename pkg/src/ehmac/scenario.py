"""Topology generation, greedy geographic routing and traffic generation.

Nodes are dropped on a rectangular field by a spatial Poisson process (the
node count is Poisson, positions are i.i.d. uniform), one uniformly chosen
node becomes the sink, and packets are forwarded greedily: each hop goes to
the in-range neighbour strictly closest to the sink. A node with no closer
neighbour is a dead end; packets originating behind one are counted as
unroutable and never enter the MAC layer.
"""

import math
from dataclasses import dataclass
from random import Random

from .simcore import distance

MAX_PLACEMENT_ATTEMPTS = 100


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class Topology:
    width: float
    height: float
    positions: tuple[tuple[float, float], ...]
    sink: int
    range_m: float

    def __post_init__(self):
        for x, y in self.positions:
            if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
                raise ValueError("node position outside the field")
        if not 0 <= self.sink < len(self.positions):
            raise ValueError("sink must be one of the nodes")


def poisson_draw(rng: Random, mean: float) -> int:
    """Poisson variate by CDF inversion of a single uniform.

    Inversion keeps the draw monotone in the mean for a fixed generator
    state, which is what makes counts non-decreasing in the rate when the
    seed is held fixed.
    """
    if mean < 0:
        raise ValueError("mean must be non-negative")
    if mean == 0:
        return 0
    u = rng.random()
    # Skip the negligible left tail for large means to avoid underflow.
    k = max(0, int(mean - 12.0 * math.sqrt(mean) - 5.0))
    cum = 0.0
    while True:
        p = math.exp(k * math.log(mean) - mean - math.lgamma(k + 1))
        cum += p
        # The right tail underflows to zero once k is far past the mean; stop
        # there even if float dust kept cum a hair below u.
        if u <= cum or (p == 0.0 and k > mean):
            return k
        k += 1


def place_nodes(mean_count: float, width: float, height: float, range_m: float, rng: Random) -> Topology:
    """Spatial Poisson placement plus a uniformly random sink."""
    if mean_count <= 0:
        raise ValueError("mean node count must be positive")
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        n = poisson_draw(rng, mean_count)
        if n == 0:
            continue
        positions = tuple((rng.random() * width, rng.random() * height) for _ in range(n))
        sink = rng.randrange(n)
        return Topology(width, height, positions, sink, range_m)
    raise ScenarioError(
        f"no non-empty topology after {MAX_PLACEMENT_ATTEMPTS} draws (mean={mean_count})"
    )


def greedy_next_hop(from_node: int, topo: Topology) -> int | None:
    """In-range neighbour strictly closer to the sink, or None at a dead end.

    Ties on distance break towards the lowest node id.
    """
    if from_node == topo.sink:
        raise ValueError("the sink does not forward")
    own = distance(topo.positions[from_node], topo.positions[topo.sink])
    best = None
    best_d = own
    # Ascending id order makes the first strict improvement the tie-winner.
    for node, pos in enumerate(topo.positions):
        if node == from_node:
            continue
        if distance(topo.positions[from_node], pos) > topo.range_m:
            continue
        d = distance(pos, topo.positions[topo.sink])
        if d < best_d:
            best = node
            best_d = d
    return best


def next_hop_table(topo: Topology) -> list[int | None]:
    return [
        None if node == topo.sink else greedy_next_hop(node, topo)
        for node in range(len(topo.positions))
    ]


def routable_table(topo: Topology, hops: list[int | None]) -> list[bool]:
    """Whether each node's greedy path actually reaches the sink.

    Every hop strictly decreases the distance to the sink, so walking the
    table terminates at the sink or at a dead end; no cycle is possible.
    """
    reach = [False] * len(topo.positions)
    reach[topo.sink] = True
    for node in range(len(topo.positions)):
        path = []
        cur = node
        while cur != topo.sink and hops[cur] is not None:
            path.append(cur)
            cur = hops[cur]
        ok = cur == topo.sink
        for visited in path:
            reach[visited] = ok
    return reach


def gen_arrivals(rate_pps: float, duration_s: float, rng: Random) -> list[float]:
    """Poisson arrival instants (ms) for one node over [0, duration).

    The count comes from one inversion draw and the instants are sorted
    uniforms, so for a fixed generator state a higher rate yields a
    superset-sized count.
    """
    if rate_pps < 0:
        raise ValueError("rate must be non-negative")
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    n = poisson_draw(rng, rate_pps * duration_s)
    horizon_ms = duration_s * 1000.0
    return sorted(rng.random() * horizon_ms for _ in range(n))


def dump_topology(topo: Topology) -> str:
    """Text form: header 'field W H sink ID', then one 'id x y' per node."""
    lines = [f"field {topo.width!r} {topo.height!r} sink {topo.sink}"]
    for node, (x, y) in enumerate(topo.positions):
        lines.append(f"{node} {x!r} {y!r}")
    return "\n".join(lines) + "\n"


def load_topology(text: str, range_m: float = 35.0) -> Topology:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty topology dump")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "field" or head[3] != "sink":
        raise ValueError(f"malformed topology header: {lines[0]!r}")
    width, height, sink = float(head[1]), float(head[2]), int(head[4])
    positions = []
    for expected, line in enumerate(lines[1:]):
        part = line.split()
        if len(part) != 3 or int(part[0]) != expected:
            raise ValueError(f"malformed topology line: {line!r}")
        positions.append((float(part[1]), float(part[2])))
    return Topology(width, height, tuple(positions), sink, range_m)
