"""Series primitives: normalization, ED/DTW distances, and warping envelopes.

All functions operate on 1-D float arrays.  A series id is simply its row
index in the owning dataset; none of the math below needs to know it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

ZNORM_EPS = 1e-12


def z_normalize(values: np.ndarray) -> np.ndarray:
    """Center to mean 0 and scale to population standard deviation 1.

    Constant series map to all-zeros instead of blowing up the division;
    the ZNORM_EPS guard is relative to the mean's magnitude so large
    constant values do not leak rounding noise through it.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("series must be one-dimensional with length >= 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    mu = x.mean()
    sigma = np.sqrt(np.mean((x - mu) ** 2))
    if sigma < ZNORM_EPS * max(1.0, abs(mu)):
        return np.zeros_like(x)
    return (x - mu) / sigma


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def euclidean_block(block: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean distances between a (m, l) block and a query."""
    diff = block - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


@nb.njit(cache=True)
def _dtw_kernel(a, b, r):  # pragma: no cover - exercised through dtw()
    n = a.shape[0]
    inf = np.inf
    prev = np.full(n, inf)
    cur = np.full(n, inf)
    for j in range(min(r + 1, n)):
        d = a[0] - b[j]
        if j == 0:
            prev[j] = d * d
        else:
            prev[j] = prev[j - 1] + d * d
    for i in range(1, n):
        lo = i - r
        if lo < 0:
            lo = 0
        hi = i + r
        if hi > n - 1:
            hi = n - 1
        for j in range(n):
            cur[j] = inf
        for j in range(lo, hi + 1):
            best = prev[j]
            if j > lo and cur[j - 1] < best:
                best = cur[j - 1]
            if j > 0 and prev[j - 1] < best:
                best = prev[j - 1]
            d = a[i] - b[j]
            cur[j] = best + d * d
        prev, cur = cur, prev
    return np.sqrt(prev[n - 1])


def dtw(a: np.ndarray, b: np.ndarray, band_radius: int) -> float:
    """Sakoe-Chiba constrained DTW, reported in the same units as euclidean.

    ``band_radius == 0`` reproduces the Euclidean distance exactly;
    ``band_radius == len(a) - 1`` is the unconstrained alignment.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if not 0 <= band_radius <= n - 1:
        raise ValueError(f"band_radius {band_radius} outside [0, {n - 1}]")
    return float(_dtw_kernel(a, b, int(band_radius)))


@nb.njit(cache=True)
def dtw_rows(block, q, r):  # pragma: no cover - thin loop over _dtw_kernel
    m = block.shape[0]
    out = np.empty(m)
    for i in range(m):
        out[i] = _dtw_kernel(block[i], q, r)
    return out


@nb.njit(cache=True)
def dtw_rows_bounded(block, q, upper, lower, r, bound):  # pragma: no cover
    """DTW per row, skipping rows whose LB_Keogh already reaches ``bound``.

    Skipped rows come back as +inf; they provably cannot improve a
    best-so-far set whose k-th distance is ``bound``.
    """
    m = block.shape[0]
    n = block.shape[1]
    out = np.empty(m)
    for i in range(m):
        acc = 0.0
        for j in range(n):
            c = block[i, j]
            if c > upper[j]:
                d = c - upper[j]
                acc += d * d
            elif c < lower[j]:
                d = lower[j] - c
                acc += d * d
        if np.sqrt(acc) >= bound:
            out[i] = np.inf
        else:
            out[i] = _dtw_kernel(block[i], q, r)
    return out


@dataclass(frozen=True)
class Envelope:
    """Running max/min of a query over a Sakoe-Chiba band of half-width r."""

    upper: np.ndarray
    lower: np.ndarray
    band_radius: int

    def __post_init__(self):
        if self.upper.shape != self.lower.shape:
            raise ValueError("upper/lower length mismatch")
        if np.any(self.upper < self.lower):
            raise ValueError("envelope upper below lower")


def build_envelope(q: np.ndarray, band_radius: int) -> Envelope:
    """Windowed max/min envelope via the linear-time monotonic deque."""
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    if not 0 <= band_radius <= n - 1:
        raise ValueError(f"band_radius {band_radius} outside [0, {n - 1}]")
    r = int(band_radius)
    upper = np.empty(n)
    lower = np.empty(n)
    # Window for position j is [j - r, j + r] clipped to bounds.  Maintain
    # index deques whose heads always hold the current window extremum.
    maxdq: list[int] = []
    mindq: list[int] = []
    head_max = 0
    head_min = 0
    right = -1
    for j in range(n):
        hi = min(n - 1, j + r)
        while right < hi:
            right += 1
            while len(maxdq) > head_max and q[maxdq[-1]] <= q[right]:
                maxdq.pop()
            maxdq.append(right)
            while len(mindq) > head_min and q[mindq[-1]] >= q[right]:
                mindq.pop()
            mindq.append(right)
        lo = j - r
        while maxdq[head_max] < lo:
            head_max += 1
        while mindq[head_min] < lo:
            head_min += 1
        upper[j] = q[maxdq[head_max]]
        lower[j] = q[mindq[head_min]]
    return Envelope(upper=upper, lower=lower, band_radius=r)


def lb_keogh(env: Envelope, c: np.ndarray) -> float:
    """Envelope-based lower bound on DTW at the envelope's band radius."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != env.upper.shape:
        raise ValueError(f"length mismatch: {c.shape} vs {env.upper.shape}")
    over = np.maximum(c - env.upper, 0.0)
    under = np.maximum(env.lower - c, 0.0)
    return float(np.sqrt(np.sum(over * over + under * under)))


def lb_keogh_block(block: np.ndarray, env: Envelope) -> np.ndarray:
    over = np.maximum(block - env.upper, 0.0)
    under = np.maximum(env.lower - block, 0.0)
    return np.sqrt(np.einsum("ij,ij->i", over, over) + np.einsum("ij,ij->i", under, under))
