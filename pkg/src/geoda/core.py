"""Shared vector utilities: points, lp norms, and seeded randomness.

Points are flat float64 vectors. Images use the canonical (channel, row,
column) flattening, i.e. the C-order ravel of a (C, H, W) array; every module
in the package (DCT basis indexing, the wire protocol, dataset loading)
assumes this one order.
"""

from __future__ import annotations

import math

import numpy as np


class GeodaError(Exception):
    """Base class for all errors raised by this package."""


def as_point(values) -> np.ndarray:
    """Coerce to a finite, contiguous float64 vector.

    Multi-dimensional input (e.g. a (C, H, W) image) is flattened in C order.
    Raises ValueError on NaN or infinite entries.
    """
    v = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("point contains NaN or infinite values")
    return v


def lp_norm(v: np.ndarray, p: float) -> float:
    """The lp norm for p in [1, inf]: (sum |v_j|^p)^(1/p), or max |v_j| at p=inf."""
    if p < 1:
        raise ValueError(f"lp norm needs p >= 1, got {p}")
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v, ord=p))


def dual_exponent(p: float) -> float:
    """Holder conjugate q with 1/p + 1/q = 1; maps 1 <-> inf and fixes 2."""
    if p < 1:
        raise ValueError(f"dual exponent needs p >= 1, got {p}")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


class RandomSource:
    """Seeded random stream with reproducible splitting.

    Backed by numpy's PCG64 bit generator; Gaussian draws use numpy's
    ziggurat implementation (``Generator.standard_normal``). The sampling
    algorithm is pinned for the life of the repo: equal seeds plus equal
    draw sequences give bitwise-equal outputs. A source is single-owner;
    parallel work must use ``child()``/``children()``, which derive
    independent streams via ``SeedSequence.spawn``.
    """

    def __init__(self, seed, _seq: np.random.SeedSequence | None = None):
        self.seed = seed
        self._seq = _seq if _seq is not None else np.random.SeedSequence(seed)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def standard_normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def unit_vector(self, d: int) -> np.ndarray:
        """Isotropic random direction (Gaussian draw, l2-normalized)."""
        while True:
            u = self._gen.standard_normal(d)
            n = np.linalg.norm(u)
            if n > 0:
                return u / n

    def child(self) -> "RandomSource":
        """Split off one independently seeded stream."""
        (seq,) = self._seq.spawn(1)
        return RandomSource(self.seed, _seq=seq)

    def children(self, n: int) -> list["RandomSource"]:
        return [RandomSource(self.seed, _seq=s) for s in self._seq.spawn(n)]
