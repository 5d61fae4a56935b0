"""Segment summaries (PAA, SAX, EAPCA) and their envelope-based DTW bounds.

The two lower bounds defined here operate on *summaries* only, so an index
can rank candidates and nodes without touching raw series.  Both are provably
below the envelope bound on the raw series, which is itself below DTW.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import norm

from .series import Envelope

SUPPORTED_CARDINALITIES = tuple(2 ** b for b in range(1, 9))


@dataclass(frozen=True)
class PaaSummary:
    means: np.ndarray
    segment_count: int
    series_length: int


@dataclass(frozen=True)
class SaxWord:
    symbols: np.ndarray
    cardinality: int


@dataclass(frozen=True)
class EapcaSummary:
    """Variable-length segment summary; ``endpoints`` are 1-based right ends."""

    endpoints: np.ndarray
    means: np.ndarray
    stdevs: np.ndarray


@dataclass(frozen=True)
class SummarizedEnvelope:
    upper_hat: np.ndarray
    lower_hat: np.ndarray
    endpoints: np.ndarray


def _check_endpoints(endpoints: np.ndarray, length: int) -> np.ndarray:
    ep = np.asarray(endpoints, dtype=np.int64)
    if ep.ndim != 1 or ep.size < 1:
        raise ValueError("endpoints must be a non-empty 1-D sequence")
    if ep[-1] != length or np.any(np.diff(ep) <= 0) or ep[0] < 1:
        raise ValueError(f"endpoints {ep.tolist()} do not partition [1, {length}]")
    return ep


def equal_endpoints(length: int, segments: int) -> np.ndarray:
    """Right endpoints of ``segments`` near-equal segments covering ``length``."""
    if not 1 <= segments <= length:
        raise ValueError("segment count must be in [1, length]")
    return np.cumsum(np.diff(np.linspace(0, length, segments + 1).astype(np.int64)))


def paa(values: np.ndarray, segments: int) -> PaaSummary:
    x = np.asarray(values, dtype=np.float64)
    n = x.shape[0]
    if segments < 1 or n % segments != 0:
        raise ValueError(f"segment count {segments} does not divide length {n}")
    means = x.reshape(segments, n // segments).mean(axis=1)
    return PaaSummary(means=means, segment_count=segments, series_length=n)


def paa_matrix(block: np.ndarray, segments: int) -> np.ndarray:
    """Row-wise PAA means for a (m, l) block."""
    m, n = block.shape
    if n % segments != 0:
        raise ValueError(f"segment count {segments} does not divide length {n}")
    return block.reshape(m, segments, n // segments).mean(axis=2)


@lru_cache(maxsize=None)
def sax_breakpoints(cardinality: int) -> np.ndarray:
    """Standard-normal quantiles splitting the line into equiprobable regions."""
    if cardinality not in SUPPORTED_CARDINALITIES:
        raise ValueError(f"unsupported cardinality {cardinality}")
    return norm.ppf(np.arange(1, cardinality) / cardinality)


def sax(summary: PaaSummary, cardinality: int) -> SaxWord:
    bkpts = sax_breakpoints(cardinality)
    # side="right": a mean sitting exactly on a breakpoint goes to the upper region
    symbols = np.searchsorted(bkpts, summary.means, side="right").astype(np.int64)
    return SaxWord(symbols=symbols, cardinality=cardinality)


def eapca(values: np.ndarray, endpoints: np.ndarray) -> EapcaSummary:
    x = np.asarray(values, dtype=np.float64)
    ep = _check_endpoints(endpoints, x.shape[0])
    means = np.empty(ep.size)
    stdevs = np.empty(ep.size)
    start = 0
    for i, stop in enumerate(ep):
        seg = x[start:stop]
        means[i] = seg.mean()
        stdevs[i] = seg.std()
        start = stop
    return EapcaSummary(endpoints=ep, means=means, stdevs=stdevs)


def segment_stats_matrix(block: np.ndarray, endpoints: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise per-segment means and population stdevs for a (m, l) block."""
    ep = _check_endpoints(endpoints, block.shape[1])
    means = np.empty((block.shape[0], ep.size))
    stdevs = np.empty((block.shape[0], ep.size))
    start = 0
    for i, stop in enumerate(ep):
        seg = block[:, start:stop]
        means[:, i] = seg.mean(axis=1)
        stdevs[:, i] = seg.std(axis=1)
        start = stop
    return means, stdevs


def summarize_envelope_paa(env: Envelope, segments: int) -> SummarizedEnvelope:
    n = env.upper.shape[0]
    if segments < 1 or n % segments != 0:
        raise ValueError(f"segment count {segments} does not divide length {n}")
    w = n // segments
    upper_hat = env.upper.reshape(segments, w).max(axis=1)
    lower_hat = env.lower.reshape(segments, w).min(axis=1)
    return SummarizedEnvelope(
        upper_hat=upper_hat,
        lower_hat=lower_hat,
        endpoints=equal_endpoints(n, segments),
    )


def summarize_envelope_eapca(env: Envelope, endpoints: np.ndarray) -> SummarizedEnvelope:
    ep = _check_endpoints(endpoints, env.upper.shape[0])
    upper_hat = np.empty(ep.size)
    lower_hat = np.empty(ep.size)
    start = 0
    for i, stop in enumerate(ep):
        upper_hat[i] = env.upper[start:stop].max()
        lower_hat[i] = env.lower[start:stop].min()
        start = stop
    return SummarizedEnvelope(upper_hat=upper_hat, lower_hat=lower_hat, endpoints=ep)


def _band_penalties(values: np.ndarray, upper: np.ndarray, lower: np.ndarray) -> np.ndarray:
    over = np.maximum(values - upper, 0.0)
    under = np.maximum(lower - values, 0.0)
    return over * over + under * under


def lb_paa(senv: SummarizedEnvelope, cbar: PaaSummary) -> float:
    """Summary-level DTW bound for equal-length segments."""
    m = cbar.segment_count
    if senv.endpoints.size != m or senv.endpoints[-1] != cbar.series_length:
        raise ValueError("summarized envelope layout does not match the PAA summary")
    penalties = _band_penalties(cbar.means, senv.upper_hat, senv.lower_hat)
    return float(np.sqrt(cbar.series_length / m) * np.sqrt(penalties.sum()))


def lb_eapca(senv: SummarizedEnvelope, cbar: EapcaSummary) -> float:
    """Summary-level DTW bound for variable-length segments.

    Only the segment means enter the bound; the candidate stdevs cannot
    tighten it because the envelope bands are flat within a segment.
    """
    if not np.array_equal(senv.endpoints, cbar.endpoints):
        raise ValueError("summarized envelope layout does not match the EAPCA summary")
    widths = np.diff(np.concatenate(([0], senv.endpoints)))
    penalties = _band_penalties(cbar.means, senv.upper_hat, senv.lower_hat)
    return float(np.sqrt(np.sum(widths * penalties)))
