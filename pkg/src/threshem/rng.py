"""SplitMix64 streams for reproducible sampling, masking and initialization.

Stream derivation, for a user seed ``s``, a domain tag ``d`` and an index
``l`` (record, trial, ...)::

    state0 = mix64(mix64(s XOR d) + (l + 1) * GAMMA)      (all mod 2**64)
    x_m    = mix64(state0 + m * GAMMA),  m = 1, 2, ...
    u_m    = ((x_m >> 11) + 0.5) * 2**-53                  in (0, 1)

``mix64`` is the SplitMix64 output finalizer.  Only integer arithmetic is
involved, so streams are identical on every platform.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

DOMAIN_SAMPLE = 0x53414D50  # "SAMP"
DOMAIN_MASK = 0x4D41534B  # "MASK"
DOMAIN_INIT = 0x494E4954  # "INIT"
DOMAIN_TRIAL = 0x5452494C  # "TRIL"


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, domain: int, index: int = 0) -> int:
    return mix64(mix64((seed & MASK64) ^ domain) + (index + 1) * GAMMA)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & MASK64

    @classmethod
    def stream(cls, seed: int, domain: int, index: int = 0) -> "SplitMix64":
        return cls(derive_seed(seed, domain, index))

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Uniform double strictly inside (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * 2.0**-53

    def exponential(self) -> float:
        return -math.log(self.uniform())
