"""Counter-based random streams.

Every stochastic entity in the simulator draws from its own
:class:`RngStream`, keyed by ``(seed, stream_id)``.  A draw is produced by
hashing ``seed | stream_id | counter`` with BLAKE2b, so

* the sequence for a given key is identical on every run and platform, and
* adding or removing other entities never perturbs an existing entity's
  draws (streams share no state).

This is deliberately not ``random.Random``: a shared Mersenne Twister would
couple every consumer to global draw order, which is exactly the kind of
hidden coupling that makes large event-driven simulations irreproducible.
"""

from __future__ import annotations

import hashlib
import math

_TWO64 = float(2**64)


class RngStream:
    """An independent, reproducible stream of random numbers."""

    __slots__ = ("_prefix", "_n")

    def __init__(self, seed: int, stream_id: str):
        self._prefix = f"{seed}|{stream_id}|".encode()
        self._n = 0

    def _u64(self) -> int:
        h = hashlib.blake2b(self._prefix + self._n.to_bytes(8, "big"), digest_size=8)
        self._n += 1
        return int.from_bytes(h.digest(), "big")

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return self._u64() / _TWO64

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform int in [0, n).  Modulo bias is < n / 2**64: irrelevant here."""
        if n <= 0:
            raise ValueError("randrange() arg must be positive")
        return self._u64() % n

    def expovariate(self, rate: float) -> float:
        """Exponential variate with the given rate (events per unit time)."""
        if rate <= 0:
            raise ValueError("rate must be positive")
        # random() < 1 always, so the log argument is in (0, 1].
        return -math.log(1.0 - self.random()) / rate

    def lognormal(self, median: float, sigma: float) -> float:
        """Log-normal variate parameterised by its median and shape sigma."""
        if median <= 0:
            raise ValueError("median must be positive")
        if sigma == 0:
            return median
        u1, u2 = self.random(), self.random()
        z = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
        return median * math.exp(sigma * z)


def unit_draw(seed: int, *labels: object) -> float:
    """One-shot uniform [0, 1) draw keyed by (seed, labels).

    For values needed exactly once (e.g. a per-job runtime jitter) this
    avoids materialising a stream object.
    """
    key = "|".join(str(p) for p in labels)
    h = hashlib.blake2b(f"{seed}|{key}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big") / _TWO64
