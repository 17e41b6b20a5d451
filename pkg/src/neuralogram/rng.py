"""Seeded, reproducible random number generation.

The package does not rely on ``numpy.random`` for anything that must be
reproducible across library versions.  Instead it pins one concrete
generator, documented here in full so checkpoints can name it:

* Core generator: **xorshift128+** (shifts 23 / 17 / 26).  The generator
  keeps ``LANES`` independent 128-bit states advanced in lockstep, and a
  draw of ``n`` values consumes whole blocks of ``LANES`` outputs
  (round-robin across lanes, block by block), so draws vectorize well.
* Seeding: the two state words of every lane are filled from a single
  **splitmix64** sequence started at ``mix64(seed ^ stream_key)``.
* Floats: a uniform double in [0, 1) is ``(u >> 11) * 2**-53``.
* Child streams: ``child(i)`` derives an independent generator whose
  stream key mixes the parent's key with ``i`` via splitmix64, which is
  how per-clip / per-purpose streams stay decoupled.

Checkpoints record ``{"kind": "xorshift128+", "lanes": LANES, "seed": ...}``.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Rng", "LANES", "RNG_KIND"]

RNG_KIND = "xorshift128+"
LANES = 8192

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    """splitmix64 output function (finalizing mix; wraps modulo 2**64)."""
    with np.errstate(over="ignore"):
        z = np.uint64(z) if np.isscalar(z) or np.ndim(z) == 0 else z
        z = z ^ (z >> np.uint64(30))
        z = (z * _MIX1) & _MASK
        z = z ^ (z >> np.uint64(27))
        z = (z * _MIX2) & _MASK
        z = z ^ (z >> np.uint64(31))
        return z


class Rng:
    """Deterministic lane-parallel xorshift128+ generator.

    Parameters
    ----------
    seed:
        Any Python integer; reduced modulo 2**64.
    stream_key:
        Internal; use :meth:`child` to derive independent streams.
    """

    def __init__(self, seed: int, stream_key: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_key = int(stream_key) & 0xFFFFFFFFFFFFFFFF
        state = np.uint64(self.seed) ^ np.uint64(self.stream_key)
        # Fill 2*LANES words from one splitmix64 chain.
        counters = np.arange(1, 2 * LANES + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            words = _mix64((state + counters * _GOLDEN) & _MASK)
        self._s0 = words[:LANES].copy()
        self._s1 = words[LANES:].copy()
        # xorshift128+ needs a nonzero 128-bit state per lane.
        dead = (self._s0 == 0) & (self._s1 == 0)
        if dead.any():
            self._s1[dead] = _GOLDEN

    def child(self, index: int) -> "Rng":
        """Derive an independent generator for stream ``index`` (>= 0)."""
        with np.errstate(over="ignore"):
            step = ((np.uint64(int(index)) + np.uint64(1)) * _GOLDEN) & _MASK
            key = _mix64((np.uint64(self.stream_key) + step) & _MASK)
        return Rng(self.seed, int(key))

    def _next_block(self) -> np.ndarray:
        """Advance all lanes once; return LANES uint64 outputs."""
        x = self._s0
        y = self._s1
        self._s0 = y
        x = x ^ ((x << np.uint64(23)) & _MASK)
        self._s1 = x ^ y ^ (x >> np.uint64(17)) ^ (y >> np.uint64(26))
        return (self._s1 + y) & _MASK

    def raw64(self, n: int) -> np.ndarray:
        """Return ``n`` raw uint64 outputs."""
        if n < 0:
            raise ValueError("n must be >= 0")
        blocks = [self._next_block() for _ in range(-(-n // LANES) or 0)]
        if not blocks:
            return np.empty(0, dtype=np.uint64)
        return np.concatenate(blocks)[:n]

    def uniform(self, n: int) -> np.ndarray:
        """Uniform float64 samples in [0, 1)."""
        return (self.raw64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform_range(self, lo: float, hi: float, n: int) -> np.ndarray:
        """Uniform float64 samples in [lo, hi)."""
        return lo + (hi - lo) * self.uniform(n)

    def integers(self, lo: int, hi: int, n: int) -> np.ndarray:
        """Integers in [lo, hi) via floor of scaled uniforms.

        The negligible modulo bias of this construction is accepted; the
        package only draws from tiny ranges.
        """
        if hi <= lo:
            raise ValueError("empty integer range")
        return lo + np.floor(self.uniform(n) * (hi - lo)).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """A uniform random permutation of range(n) (argsort of uniforms)."""
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn uniformly from range(n)."""
        if not 0 <= k <= n:
            raise ValueError("k out of range")
        return self.permutation(n)[:k]

    def spec(self) -> dict:
        """Serializable description of this generator family."""
        return {"kind": RNG_KIND, "lanes": LANES, "seed": self.seed,
                "stream_key": self.stream_key}
