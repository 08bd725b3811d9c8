"""Periodic Daubechies discrete wavelet transform.

The forward transform is the Mallat pyramid: circular convolution with the
analysis filters followed by keeping the even-indexed outputs.  Every
function accepts a batch of signals stacked along the leading axes; the
transform always runs along the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import mpmath
import numpy as np

from .errors import ParameterError

MAX_ORDER = 10
_FILTER_TOL = 1e-12


@dataclass(frozen=True)
class FilterPair:
    """Orthonormal analysis filters of a Daubechies wavelet."""

    lowpass: np.ndarray
    highpass: np.ndarray
    order: int

    @property
    def length(self) -> int:
        return len(self.lowpass)


@dataclass(frozen=True)
class WaveletConfig:
    order: int = 5
    levels: int = 4
    boundary: str = "periodic"

    def __post_init__(self):
        if not 1 <= self.order <= MAX_ORDER:
            raise ParameterError(f"wavelet order must be in [1, {MAX_ORDER}], got {self.order}")
        if self.levels < 1:
            raise ParameterError(f"levels must be >= 1, got {self.levels}")
        if self.boundary != "periodic":
            raise ParameterError(f"unsupported boundary {self.boundary!r}")

    @property
    def filter_length(self) -> int:
        return 2 * self.order

    def check_length(self, n: int) -> None:
        if n <= 0 or n % (1 << self.levels):
            raise ParameterError(
                f"signal length {n} is not divisible by 2**{self.levels}")

    def to_dict(self) -> dict:
        return {"order": self.order, "levels": self.levels, "boundary": self.boundary}


@dataclass
class CoefficientPyramid:
    """Output of :func:`dwt`.

    ``details[0]`` is the finest scale d1, ``details[-1]`` the coarsest dK.
    ``op_count`` is the number of multiply-adds spent per signal.
    """

    details: list
    approx: np.ndarray
    op_count: int = 0
    config: WaveletConfig = field(default_factory=WaveletConfig)

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def signal_length(self) -> int:
        return self.approx.shape[-1] << self.levels

    def energy(self) -> np.ndarray:
        total = np.sum(self.approx ** 2, axis=-1)
        for d in self.details:
            total = total + np.sum(d ** 2, axis=-1)
        return total


def _daubechies_lowpass(order: int, dps: int = 60) -> np.ndarray:
    """Minimum-phase Daubechies scaling filter by spectral factorisation."""
    with mpmath.workdps(dps):
        # |H|^2 factor: P(y) = sum_k C(p-1+k, k) y^k with y = sin^2(w/2)
        coeffs = [mpmath.mpf(comb(order - 1 + k, k)) for k in range(order)]
        zeros = []
        if order > 1:
            y_roots = mpmath.polyroots(coeffs[::-1], maxsteps=500, extraprec=4 * dps)
            for y in y_roots:
                # y = (2 - z - 1/z)/4  ->  z^2 - (2 - 4y) z + 1 = 0
                b = 2 - 4 * y
                disc = mpmath.sqrt(b * b - 4)
                z1, z2 = (b + disc) / 2, (b - disc) / 2
                zeros.append(z1 if abs(z1) < 1 else z2)
        poly = [mpmath.mpc(1)]
        for z in [mpmath.mpc(-1)] * order + zeros:
            # multiply by (x - z)
            nxt = [mpmath.mpc(0)] * (len(poly) + 1)
            for i, c in enumerate(poly):
                nxt[i] += c
                nxt[i + 1] -= c * z
            poly = nxt
        real = [mpmath.re(c) for c in poly]
        scale = mpmath.sqrt(2) / mpmath.fsum(real)
        h = [float(c * scale) for c in real]
    return np.array(h)


def _check_filters(pair: FilterPair) -> None:
    h, g = pair.lowpass, pair.highpass
    w = len(h)
    problems = []
    if abs(h.sum() - np.sqrt(2)) > _FILTER_TOL:
        problems.append("sum(lowpass) != sqrt(2)")
    if abs(np.dot(h, h) - 1) > _FILTER_TOL:
        problems.append("lowpass not unit norm")
    if not np.array_equal(g, ((-1) ** np.arange(w)) * h[::-1]):
        problems.append("highpass is not the alternating flip of lowpass")
    for m in range(1, w // 2):
        if abs(np.dot(h[: w - 2 * m], h[2 * m:])) > _FILTER_TOL:
            problems.append(f"lowpass not orthogonal to its shift by {2 * m}")
    if problems:
        raise ParameterError(f"db{pair.order} filters failed validation: " + "; ".join(problems))


@lru_cache(maxsize=None)
def daubechies_filters(order: int) -> FilterPair:
    """Return the orthonormal Daubechies filter pair with ``order`` vanishing moments.

    The filters are computed in extended precision and checked against the
    orthonormality conditions before being returned.

    >>> daubechies_filters(1).lowpass
    array([0.70710678, 0.70710678])
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise ParameterError(f"Daubechies order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    h = _daubechies_lowpass(int(order))
    g = ((-1) ** np.arange(len(h))) * h[::-1]
    h.setflags(write=False)
    g.setflags(write=False)
    pair = FilterPair(h, g, int(order))
    _check_filters(pair)
    return pair


@lru_cache(maxsize=64)
def _analysis_index(n: int, w: int) -> np.ndarray:
    # out[i] = sum_k f[k] * x[(2i - k) mod n]
    i = np.arange(n // 2)[:, None]
    k = np.arange(w)[None, :]
    return (2 * i - k) % n


def _analysis_step(x: np.ndarray, pair: FilterPair):
    idx = _analysis_index(x.shape[-1], pair.length)
    taps = x[..., idx]
    return taps @ pair.lowpass, taps @ pair.highpass


def _synthesis_step(a: np.ndarray, d: np.ndarray, pair: FilterPair) -> np.ndarray:
    # Adjoint of _analysis_step: x[(2i - k) mod n] += f[k] * c[i]
    half = a.shape[-1]
    n = 2 * half
    idx = _analysis_index(n, pair.length)
    contrib = a[..., :, None] * pair.lowpass + d[..., :, None] * pair.highpass
    out = np.zeros(a.shape[:-1] + (n,))
    for k in range(pair.length):
        # for fixed k the map i -> (2i - k) mod n is injective
        out[..., idx[:, k]] += contrib[..., k]
    return out


def dwt(signal, cfg: WaveletConfig | None = None) -> CoefficientPyramid:
    """Forward periodic DWT along the last axis.

    Each output coefficient costs ``W`` multiply-adds (``W`` = filter
    length), so the count for a length-``H`` signal is
    ``W * H * 2 * (1 - 2**-K)``.
    """
    cfg = cfg or WaveletConfig()
    x = np.asarray(signal, dtype=float)
    if x.ndim == 0:
        raise ParameterError("signal must be at least one-dimensional")
    cfg.check_length(x.shape[-1])
    pair = daubechies_filters(cfg.order)
    details = []
    ops = 0
    a = x
    for _ in range(cfg.levels):
        ops += pair.length * a.shape[-1]  # n/2 lowpass + n/2 highpass outputs
        a, d = _analysis_step(a, pair)
        details.append(d)
    return CoefficientPyramid(details=details, approx=a, op_count=ops, config=cfg)


def idwt(pyramid: CoefficientPyramid, cfg: WaveletConfig | None = None) -> np.ndarray:
    """Invert :func:`dwt`; exact up to rounding because the transform is orthogonal."""
    cfg = cfg or pyramid.config
    if pyramid.levels != cfg.levels:
        raise ParameterError(
            f"pyramid has {pyramid.levels} levels, config expects {cfg.levels}")
    pair = daubechies_filters(cfg.order)
    a = np.asarray(pyramid.approx, dtype=float)
    for d in reversed(pyramid.details):
        d = np.asarray(d, dtype=float)
        if d.shape != a.shape:
            raise ParameterError(
                f"detail shape {d.shape} does not match approximation shape {a.shape}")
        a = _synthesis_step(a, d, pair)
    return a


def extract_scale(pyramid: CoefficientPyramid, k: int) -> np.ndarray:
    """Return the detail coefficients at scale ``k`` (1 = finest)."""
    if not 1 <= k <= pyramid.levels:
        raise ParameterError(f"scale {k} outside 1..{pyramid.levels}")
    return pyramid.details[k - 1]


def op_count(n: int, cfg: WaveletConfig) -> int:
    """Multiply-adds spent by :func:`dwt` on one length-``n`` signal."""
    cfg.check_length(n)
    w = cfg.filter_length
    return sum(w * (n >> j) for j in range(cfg.levels))
