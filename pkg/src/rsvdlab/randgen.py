"""Seeded random streams and the sketch-entry distributions.

The base generator is xoshiro256** seeded through SplitMix64. Streams are
vectorized over *lanes*: a stream built from B seeds advances B independent
generators in lockstep, which is how a block of Monte Carlo trials draws its
sketches in one pass. A single stream is simply a one-lane stream.

Every distribution consumes a fixed number of uniforms per variate (see
``UNIFORMS_PER_DRAW``), so lanes never fall out of step.
"""
from __future__ import annotations

import enum

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_PI = 2.0 * np.pi


class SketchDistribution(enum.Enum):
    """I.i.d. entry laws for the sketch matrix; all have mean zero."""

    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"  # Uniform(-1, 1)
    T3 = "t3"  # Student t, 3 degrees of freedom
    SHIFTED_EXP = "shifted-exp"  # density exp(-(x + 1)) on (-1, inf)
    RADEMACHER = "rademacher"  # +-1 with equal probability

    @property
    def tag(self) -> int:
        return _TAGS[self]

    @classmethod
    def from_tag(cls, tag: int) -> "SketchDistribution":
        for dist, t in _TAGS.items():
            if t == tag:
                return dist
        raise ValueError(f"unknown distribution tag {tag}")

    @classmethod
    def parse(cls, name: "str | SketchDistribution") -> "SketchDistribution":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            choices = ", ".join(d.value for d in cls)
            raise ValueError(f"unknown distribution {name!r} (choose from {choices})") from None


_TAGS = {
    SketchDistribution.GAUSSIAN: 0,
    SketchDistribution.UNIFORM: 1,
    SketchDistribution.T3: 2,
    SketchDistribution.SHIFTED_EXP: 3,
    SketchDistribution.RADEMACHER: 4,
}

# Gaussians come in Box-Muller pairs: two uniforms per two variates.
UNIFORMS_PER_DRAW = {
    SketchDistribution.GAUSSIAN: 1,
    SketchDistribution.UNIFORM: 1,
    SketchDistribution.T3: 4,
    SketchDistribution.SHIFTED_EXP: 1,
    SketchDistribution.RADEMACHER: 1,
}


def splitmix64_mix(z: int) -> int:
    """The SplitMix64 output finalizer (a bijection on 64-bit words)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


def derive_trial_seed(master_seed: int, trial_index: int) -> int:
    """Seed for trial ``trial_index`` of a run keyed by ``master_seed``.

    Injective in ``trial_index`` for a fixed master seed: multiplication by
    the odd golden-ratio constant, XOR and the finalizer are all bijections.
    """
    return splitmix64_mix((master_seed & MASK64) ^ ((trial_index * GOLDEN_GAMMA) & MASK64))


def derive_trial_seeds(master_seed: int, start: int, count: int) -> np.ndarray:
    """Vectorized :func:`derive_trial_seed` for indices start .. start+count-1."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        mixed = idx * np.uint64(GOLDEN_GAMMA)
    return _mix_array(mixed ^ np.uint64(master_seed & MASK64))


_U5 = np.uint64(5)
_U9 = np.uint64(9)
_U11 = np.uint64(11)
_U17 = np.uint64(17)
_SHIFTS = {k: (np.uint64(k), np.uint64(64 - k)) for k in (7, 45)}


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    left, right = _SHIFTS[k]
    return (x << left) | (x >> right)


class RngStream:
    """xoshiro256** generators advanced in lockstep, one per seed.

    Each lane's 256-bit state is the first four outputs of SplitMix64 started
    from that lane's seed.
    """

    def __init__(self, seeds):
        seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
        if seeds.ndim != 1:
            raise ValueError("seeds must be a scalar or a 1-D array")
        self.seeds = seeds.copy()
        self.state = np.empty((4, seeds.size), dtype=np.uint64)
        z = seeds.copy()
        for i in range(4):
            z = z + np.uint64(GOLDEN_GAMMA)
            self.state[i] = _mix_array(z)
        self._cached_normal: np.ndarray | None = None

    @classmethod
    def from_state(cls, words) -> "RngStream":
        """Build a one-lane stream from raw xoshiro state words (for testing)."""
        stream = cls(0)
        stream.state = np.asarray(words, dtype=np.uint64).reshape(4, 1).copy()
        return stream

    @property
    def lanes(self) -> int:
        return self.state.shape[1]

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self.state
        result = _rotl(s1 * _U5, 7) * _U9
        t = s1 << _U17
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self.state[3] = _rotl(s3, 45)
        return result

    def next_uniform01(self) -> np.ndarray:
        """Uniforms on [0, 1) with 53-bit resolution, one per lane."""
        return (self.next_u64() >> _U11).astype(np.float64) * (1.0 / (1 << 53))

    def _uniforms(self, count: int) -> np.ndarray:
        out = np.empty((self.lanes, count))
        for i in range(count):
            out[:, i] = self.next_uniform01()
        return out

    def _normals(self, count: int) -> np.ndarray:
        """``count`` fresh normals per lane; an odd leftover is cached."""
        pairs = (count + 1) // 2
        u = self._uniforms(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0::2]))
        angle = _TWO_PI * u[:, 1::2]
        z = np.empty((self.lanes, 2 * pairs))
        z[:, 0::2] = radius * np.cos(angle)
        z[:, 1::2] = radius * np.sin(angle)
        if count % 2:
            self._cached_normal = z[:, -1].copy()
        return z[:, :count]

    def next_normal(self) -> np.ndarray:
        if self._cached_normal is not None:
            z, self._cached_normal = self._cached_normal, None
            return z
        u1 = self.next_uniform01()
        u2 = self.next_uniform01()
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        angle = _TWO_PI * u2
        self._cached_normal = radius * np.sin(angle)
        return radius * np.cos(angle)

    def sample(self, dist: SketchDistribution) -> np.ndarray:
        """One variate per lane."""
        if dist is SketchDistribution.GAUSSIAN:
            return self.next_normal()
        if dist is SketchDistribution.UNIFORM:
            return 2.0 * self.next_uniform01() - 1.0
        if dist is SketchDistribution.T3:
            z = self.next_normal()
            g1 = self.next_normal()
            g2 = self.next_normal()
            g3 = self.next_normal()
            return z / np.sqrt((g1 * g1 + g2 * g2 + g3 * g3) / 3.0)
        if dist is SketchDistribution.SHIFTED_EXP:
            return -np.log1p(-self.next_uniform01()) - 1.0
        if dist is SketchDistribution.RADEMACHER:
            return np.where(self.next_uniform01() >= 0.5, 1.0, -1.0)
        raise ValueError(f"unsupported distribution {dist!r}")

    def draw(self, dist: SketchDistribution, count: int) -> np.ndarray:
        """``count`` consecutive variates per lane, shape (lanes, count).

        Same values as ``count`` calls to :meth:`sample`, transformed in bulk.
        """
        if self._cached_normal is not None:
            out = np.empty((self.lanes, count))
            for i in range(count):
                out[:, i] = self.sample(dist)
            return out
        if dist is SketchDistribution.GAUSSIAN:
            return self._normals(count)
        if dist is SketchDistribution.T3:
            g = self._normals(4 * count).reshape(self.lanes, count, 4)
            z, g1, g2, g3 = g[..., 0], g[..., 1], g[..., 2], g[..., 3]
            return z / np.sqrt((g1 * g1 + g2 * g2 + g3 * g3) / 3.0)
        u = self._uniforms(count)
        if dist is SketchDistribution.UNIFORM:
            return 2.0 * u - 1.0
        if dist is SketchDistribution.SHIFTED_EXP:
            return -np.log1p(-u) - 1.0
        if dist is SketchDistribution.RADEMACHER:
            return np.where(u >= 0.5, 1.0, -1.0)
        raise ValueError(f"unsupported distribution {dist!r}")


def sample_scalar(stream: RngStream, dist: SketchDistribution) -> float:
    if stream.lanes != 1:
        raise ValueError("sample_scalar needs a single-lane stream; use RngStream.sample")
    return float(stream.sample(dist)[0])


def sample_sketches(n: int, ell: int, dist: SketchDistribution, seeds) -> np.ndarray:
    """Stack of n x ell sketches, one per seed, each filled in row-major order."""
    if n < 1 or ell < 1:
        raise ValueError(f"sketch dimensions must be positive, got {n}x{ell}")
    stream = RngStream(seeds)
    return stream.draw(SketchDistribution.parse(dist), n * ell).reshape(stream.lanes, n, ell)


def sample_sketch(n: int, ell: int, dist: SketchDistribution, seed: int) -> np.ndarray:
    return sample_sketches(n, ell, dist, [seed])[0]
