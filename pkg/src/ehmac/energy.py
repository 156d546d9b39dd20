"""Per-cycle energy-waste model behind the adaptive beacon rate.

A receiver that beacons f times per cycle splits its incoming load into f
sub-cycles. Too few beacons waste energy on collisions (several backlogged
senders answer the same beacon), too many waste energy on unanswered
beacons. For Poisson arrivals the trade-off has a closed form whose
minimiser is nearly linear in the incoming rate; that linear rule is cheap
enough for a sensor node, while the exact argmin is kept alongside as a
desk-side oracle to measure the rule's regret.

Two collision-cost conventions coexist here. The per-event form charges the
sender-side cost once per collided cycle; the per-sender form charges it
once per colliding sender and is the one consistent with the closed form
(and therefore with the optimiser). Both are exposed, and the report output
of the CLI surfaces the gap between them.
"""

import math
from dataclasses import dataclass
from typing import Callable

_MASS_EPS = 1e-12
_MAX_TERMS = 100_000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class EnergyParams:
    """Abstract per-action energy costs (units are arbitrary but consistent).

    e_beacon: cost of transmitting one beacon.
    e_wait:   cost a sender pays listening for the beacon it answers.
    e_tx:     cost of transmitting one data frame.
    """

    e_beacon: float
    e_wait: float
    e_tx: float

    def __post_init__(self):
        if self.e_beacon <= 0 or self.e_wait <= 0 or self.e_tx <= 0:
            raise ValueError("energy constants must be strictly positive")

    @property
    def sender_cost(self) -> float:
        return self.e_wait + self.e_tx


#: Default used by the simulator's rate adaptation and by the fig2 report.
DEFAULT_ENERGY = EnergyParams(e_beacon=1.0, e_wait=4.0, e_tx=4.0)


def poisson_pmf(lam: float, k: int) -> float:
    if lam < 0:
        raise ValueError("rate must be non-negative")
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))


@dataclass(frozen=True)
class ArrivalModel:
    """Packets-per-cycle arrival distribution as a pmf F(lam, k)."""

    pmf: Callable[[float, int], float]


POISSON = ArrivalModel(pmf=poisson_pmf)


def _collision_tail(lam: float, am: ArrivalModel, per_sender: bool) -> float:
    """Sum F(lam, i) (or i*F) for i >= 2, truncated at negligible tail mass."""
    mass = am.pmf(lam, 0) + am.pmf(lam, 1)
    total = 0.0
    k = 2
    while mass < 1.0 - _MASS_EPS:
        p = am.pmf(lam, k)
        total += k * p if per_sender else p
        mass += p
        k += 1
        if k > _MAX_TERMS:
            raise RuntimeError("arrival pmf did not accumulate unit mass")
    return total


def collision_waste_single(lam: float, ep: EnergyParams, am: ArrivalModel = POISSON) -> float:
    """Energy lost to collisions in one cycle, charged once per collided cycle."""
    if lam < 0:
        raise ValueError("rate must be non-negative")
    return ep.e_beacon + ep.sender_cost * _collision_tail(lam, am, per_sender=False)


def collision_waste_single_per_sender(
    lam: float, ep: EnergyParams, am: ArrivalModel = POISSON
) -> float:
    """Collision waste charged once per colliding sender (closed-form consistent)."""
    if lam < 0:
        raise ValueError("rate must be non-negative")
    return ep.e_beacon + ep.sender_cost * _collision_tail(lam, am, per_sender=True)


def collision_waste(f: float, lam: float, ep: EnergyParams, am: ArrivalModel = POISSON) -> float:
    """Collision waste over a whole cycle split into f sub-cycles."""
    if f < 1:
        raise ValueError("speeding factor must be >= 1")
    return f * collision_waste_single(lam / f, ep, am)


def collision_waste_per_sender(
    f: float, lam: float, ep: EnergyParams, am: ArrivalModel = POISSON
) -> float:
    if f < 1:
        raise ValueError("speeding factor must be >= 1")
    return f * collision_waste_single_per_sender(lam / f, ep, am)


def idle_beacon_waste(f: float, lam: float, ep: EnergyParams, am: ArrivalModel = POISSON) -> float:
    """Energy spent on beacons that no sender answers."""
    if f < 1:
        raise ValueError("speeding factor must be >= 1")
    if lam < 0:
        raise ValueError("rate must be non-negative")
    return f * ep.e_beacon * am.pmf(lam / f, 0)


def total_waste_poisson(f: float, lam: float, ep: EnergyParams) -> float:
    """Closed-form per-cycle waste under Poisson arrivals.

    This is the authoritative objective the optimiser minimises; the
    per-sender collision term plus the idle-beacon term reproduce it exactly.
    """
    if f < 1:
        raise ValueError("speeding factor must be >= 1")
    if lam < 0:
        raise ValueError("rate must be non-negative")
    w = ep.sender_cost
    return f * ep.e_beacon + lam * w + math.exp(-lam / f) * (f * ep.e_beacon - lam * w)


def taylor_waste(f: float, lam: float, ep: EnergyParams) -> float:
    """Second-order expansion of the closed form around f = lam.

    Evaluated term by term as published; the expansion divides by lam so the
    rate must be strictly positive.
    """
    if lam <= 0:
        raise ValueError("rate must be strictly positive for the expansion")
    e = math.e
    eb, w = ep.e_beacon, ep.sender_cost
    constant = lam * ((1.0 + e) * eb - (1.0 - e) * w) / e
    quadratic = (w + eb) * (f - lam) ** 2 / (2.0 * e * lam)
    linear = ((w - 2.0 * eb) / e + eb) * (f - lam) / (2.0 * e * lam)
    return constant + quadratic - linear


def _golden_section(fn: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - (b - a) * _GOLDEN
    d = a + (b - a) * _GOLDEN
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * _GOLDEN
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * _GOLDEN
            fd = fn(d)
    return (a + b) / 2.0


def optimal_factor_exact(
    lam: float, ep: EnergyParams, f_max: float = 11.0, tol: float = 1e-6
) -> float:
    """Numerical argmin of the closed form over [1, f_max].

    Desk-side oracle, not meant for in-sensor use. Golden-section search is
    cross-checked against a coarse grid scan (refined locally) so a
    non-unimodal objective cannot trap the bracket.
    """
    if lam < 0:
        raise ValueError("rate must be non-negative")
    if f_max < 1:
        raise ValueError("f_max must be >= 1")

    def fn(f: float) -> float:
        return total_waste_poisson(f, lam, ep)

    best = _golden_section(fn, 1.0, f_max, tol)
    # Grid fallback: scan, then refine around the best cell.
    steps = 400
    width = (f_max - 1.0) / steps
    if width > 0:
        grid_arg = min((1.0 + i * width for i in range(steps + 1)), key=fn)
        lo = max(1.0, grid_arg - width)
        hi = min(f_max, grid_arg + width)
        refined = _golden_section(fn, lo, hi, tol)
        if fn(refined) < fn(best):
            best = refined
    return min(max(best, 1.0), f_max)


def optimal_factor(lam: float, ep: EnergyParams, f_max: float = 11.0) -> float:
    """Sensor-grade optimum speeding factor, clamped to [1, f_max].

    Linear in the incoming rate; all coefficients are known in advance, so a
    node only needs its measured rate to evaluate it.
    """
    if lam < 0:
        raise ValueError("rate must be non-negative")
    e = math.e
    raw = lam * (2.0 * ep.sender_cost - (1.0 + e) * ep.e_beacon) / (ep.e_beacon + ep.sender_cost)
    return min(max(raw, 1.0), f_max)


def waste_ratio_rows(
    lambdas,
    ep: EnergyParams = DEFAULT_ENERGY,
    f_max: float = 11.0,
    f_step: float = 0.1,
):
    """Rows (lambda, f, waste_closed_form, waste_ratio_vs_f1) for the report CSV.

    The ratio normalises against f = 1, i.e. against a fixed-rate receiver
    that never inserts sub-beacons.
    """
    n_steps = int(round((f_max - 1.0) / f_step))
    rows = []
    for lam in lambdas:
        base = total_waste_poisson(1.0, lam, ep)
        for i in range(n_steps + 1):
            f = 1.0 + i * f_step
            waste = total_waste_poisson(f, lam, ep)
            rows.append((lam, f, waste, waste / base))
    return rows
