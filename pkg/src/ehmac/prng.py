"""Linear congruential generators with a compact 6-byte wire state.

Beacon schedules are driven by LCGs so that any node overhearing a single
beacon can replay the whole pseudo-random schedule of the sender. High
statistical quality is irrelevant here; what matters is determinism and a
state small enough to ship inside a beacon frame.
"""

from dataclasses import dataclass

# Classic full-period constants: for a power-of-two modulus the generator has
# full period when the increment is odd and multiplier % 4 == 1.
DEFAULT_MULTIPLIER = 1103515245
DEFAULT_INCREMENT = 12345
DEFAULT_MODULUS = 2**31

STATE_BYTES = 6
_STATE_LIMIT = 2 ** (8 * STATE_BYTES)


@dataclass(frozen=True)
class LcgState:
    """Immutable generator state; advancing yields a fresh value."""

    state: int
    multiplier: int = DEFAULT_MULTIPLIER
    increment: int = DEFAULT_INCREMENT
    modulus: int = DEFAULT_MODULUS

    def __post_init__(self):
        if self.modulus <= 1:
            raise ValueError("modulus must exceed 1")
        if not 0 <= self.state < self.modulus:
            raise ValueError(f"state {self.state} outside [0, {self.modulus})")
        if self.modulus > _STATE_LIMIT:
            raise ValueError("modulus too large for the 6-byte wire encoding")


def lcg_next(s: LcgState) -> tuple[float, LcgState]:
    """Advance one step; returns (uniform value in [0, 1), new state)."""
    state = (s.multiplier * s.state + s.increment) % s.modulus
    return state / s.modulus, LcgState(state, s.multiplier, s.increment, s.modulus)


def encode_state(s: LcgState) -> bytes:
    """Pack the evolving state into exactly six little-endian bytes.

    Only the state travels in beacons; multiplier, increment and modulus are
    network-wide configuration known to every node.
    """
    return s.state.to_bytes(STATE_BYTES, "little")


def decode_state(
    raw: bytes,
    multiplier: int = DEFAULT_MULTIPLIER,
    increment: int = DEFAULT_INCREMENT,
    modulus: int = DEFAULT_MODULUS,
) -> LcgState:
    """Inverse of :func:`encode_state`. Rejects inputs that are not 6 bytes."""
    if len(raw) != STATE_BYTES:
        raise ValueError(f"state encoding must be {STATE_BYTES} bytes, got {len(raw)}")
    return LcgState(int.from_bytes(raw, "little"), multiplier, increment, modulus)
