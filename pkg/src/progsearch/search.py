"""Exact k-NN search that surfaces monotone intermediate answers.

The progress clock is the number of fully compared leaves, which is
hardware-independent; wallclock is recorded alongside for reporting only.
A trace records a compact snapshot every time the best-so-far set changes,
so the answer state at *any* leaf count can be reconstructed afterwards.
"""

from __future__ import annotations

import bisect
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .index import Distance, IndexTree, Node, QuerySummary, Traversal
from .series import dtw_rows, dtw_rows_bounded, euclidean_block

DEFAULT_CHECKPOINTS = (1, 4, 16, 64, 256, 1024)
ZERO_DISTANCE_EPS = 1e-12


class BsfSet:
    """Best-so-far candidates ordered by (distance, id); ties favor small ids."""

    def __init__(self, k: int):
        self.k = k
        self.entries: list[tuple[float, int]] = []

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.k

    def bound(self) -> float:
        return self.entries[-1][0] if self.full else np.inf

    def offer(self, dist: float, sid: int) -> bool:
        entry = (dist, sid)
        if self.full:
            if entry >= self.entries[-1]:
                return False
            bisect.insort(self.entries, entry)
            self.entries.pop()
            return True
        bisect.insort(self.entries, entry)
        return True

    def as_list(self) -> list[tuple[int, float]]:
        return [(sid, dist) for dist, sid in self.entries]

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        dists = np.full(self.k, np.inf)
        ids = np.full(self.k, -1, dtype=np.int64)
        for i, (d, sid) in enumerate(self.entries):
            dists[i] = d
            ids[i] = sid
        return dists, ids


def visit_leaf(leaf: Node, q: np.ndarray, qs: QuerySummary, distance: Distance,
               bsf: BsfSet) -> bool:
    """Compare every series in the leaf against the query; returns True when
    the best-so-far set changed."""
    if distance.kind == "ed":
        dists = euclidean_block(leaf.block, q)
    else:
        env = qs.envelope
        dists = dtw_rows_bounded(leaf.block, q, env.upper, env.lower,
                                 distance.band_radius, bsf.bound())
    bound = bsf.bound()
    changed = False
    if bsf.full:
        candidates = np.nonzero(dists <= bound)[0]
    else:
        candidates = np.nonzero(np.isfinite(dists))[0]
    for i in candidates:
        if bsf.offer(float(dists[i]), int(leaf.ids[i])):
            changed = True
    return changed


@dataclass(frozen=True)
class SearchConfig:
    k: int
    distance: Distance
    checkpoints: tuple[int, ...] = DEFAULT_CHECKPOINTS
    stop: threading.Event | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if self.checkpoints and self.checkpoints[0] < 1:
            raise ValueError("checkpoints start at leaf 1")


@dataclass(frozen=True)
class ProgressiveEvent:
    leaves_visited: int
    bsf_distances: np.ndarray
    bsf_ids: np.ndarray
    wallclock_ns: int


@dataclass(frozen=True)
class Snapshot:
    leaves: int
    distances: tuple[float, ...]
    ids: tuple[int, ...]


@dataclass
class SearchTrace:
    k: int
    distance: Distance
    events: list[ProgressiveEvent] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    leaf_wallclock_ns: list[int] = field(default_factory=list)
    total_leaves: int = 0
    stopped_early_at: int | None = None
    exact_distances: np.ndarray | None = None
    exact_ids: np.ndarray | None = None
    leaves_to_exact: np.ndarray | None = None

    def bsf_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Answer state right after leaf t (+inf padded while below k)."""
        dists = np.full(self.k, np.inf)
        ids = np.full(self.k, -1, dtype=np.int64)
        chosen = None
        for snap in self.snapshots:
            if snap.leaves > t:
                break
            chosen = snap
        if chosen is not None:
            m = len(chosen.distances)
            dists[:m] = chosen.distances
            ids[:m] = chosen.ids
        return dists, ids

    def wallclock_at(self, t: int) -> int:
        if not self.leaf_wallclock_ns:
            return 0
        t = min(max(t, 1), len(self.leaf_wallclock_ns))
        return self.leaf_wallclock_ns[t - 1]

    @property
    def total_wallclock_ns(self) -> int:
        return self.leaf_wallclock_ns[-1] if self.leaf_wallclock_ns else 0

    def exact_at(self, t: int) -> bool:
        """Whether the k-th answer already equals the exact k-th at leaf t."""
        if self.exact_distances is None:
            raise ValueError("trace has no exact answer (stopped early?)")
        dists, ids = self.bsf_at(t)
        return (dists[-1] == self.exact_distances[-1]) and (ids[-1] == self.exact_ids[-1])

    def first_approximate_distance(self) -> float:
        """k-th distance of the earliest snapshot holding k candidates."""
        for snap in self.snapshots:
            if len(snap.distances) >= self.k:
                return snap.distances[self.k - 1]
        return np.inf


def progressive_knn(tree: IndexTree, query: np.ndarray, config: SearchConfig,
                    on_event=None) -> SearchTrace:
    if config.k > tree.dataset.n:
        raise ValueError(f"k={config.k} exceeds dataset cardinality {tree.dataset.n}")
    q = np.asarray(query, dtype=np.float64)
    qs = tree.summarize_query(q, config.distance)
    traversal = Traversal(tree, qs, config.distance)
    bsf = BsfSet(config.k)
    trace = SearchTrace(k=config.k, distance=config.distance)
    cp = list(config.checkpoints)
    cp_idx = 0
    leaves = 0
    t0 = time.perf_counter_ns()
    while True:
        leaf = traversal.next_leaf(bsf.bound())
        if leaf is None:
            break
        changed = visit_leaf(leaf, q, qs, config.distance, bsf)
        leaves += 1
        trace.leaf_wallclock_ns.append(time.perf_counter_ns() - t0)
        if changed:
            trace.snapshots.append(Snapshot(
                leaves=leaves,
                distances=tuple(d for d, _ in bsf.entries),
                ids=tuple(i for _, i in bsf.entries),
            ))
        while cp_idx < len(cp) and cp[cp_idx] <= leaves:
            if cp[cp_idx] == leaves:
                dists, ids = bsf.padded()
                event = ProgressiveEvent(leaves, dists, ids,
                                         trace.leaf_wallclock_ns[-1])
                trace.events.append(event)
                if on_event is not None:
                    on_event(event)
            cp_idx += 1
        if config.stop is not None and config.stop.is_set():
            trace.stopped_early_at = leaves
            break
    trace.total_leaves = leaves
    if trace.stopped_early_at is None:
        dists, ids = bsf.padded()
        trace.exact_distances = dists
        trace.exact_ids = ids
        trace.leaves_to_exact = _leaves_to_exact(trace)
    return trace


def _leaves_to_exact(trace: SearchTrace) -> np.ndarray:
    out = np.full(trace.k, trace.total_leaves, dtype=np.int64)
    for rank in range(trace.k):
        want = (trace.exact_distances[rank], trace.exact_ids[rank])
        found = trace.total_leaves
        for snap in reversed(trace.snapshots):
            if rank < len(snap.distances) and (snap.distances[rank], snap.ids[rank]) == want:
                found = snap.leaves
            else:
                break
        out[rank] = found
    return out


def brute_force_knn(values: np.ndarray, query: np.ndarray, k: int,
                    distance: Distance) -> list[tuple[int, float]]:
    """Exact oracle: the k smallest distances, ties broken by smaller id."""
    values = np.asarray(values, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    n = values.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if distance.kind == "ed":
        dists = euclidean_block(values, q)
    else:
        dists = dtw_rows(values, q, distance.band_radius)
    order = np.lexsort((np.arange(n), dists))[:k]
    return [(int(i), float(dists[i])) for i in order]


def relative_error(bsf_k: float, dhat: float) -> float:
    """Relative error of the current k-th answer against a distance estimate."""
    if dhat <= 0:
        raise ValueError("distance estimate must be positive")
    return bsf_k / dhat - 1.0


def family_corrected_knn(trace: SearchTrace, t: int) -> float:
    """k-th exact distance deflated by the worst per-rank ratio at leaf t.

    Ranks whose exact distance is (numerically) zero are excluded from the
    ratio; a rank still missing from the answer set contributes an infinite
    ratio, which collapses the corrected distance to zero.
    """
    if trace.exact_distances is None:
        raise ValueError("family correction needs the exact answer (training use)")
    dists, _ = trace.bsf_at(t)
    exact = trace.exact_distances
    ratios = []
    for i in range(trace.k):
        if exact[i] <= ZERO_DISTANCE_EPS:
            continue
        ratios.append(dists[i] / exact[i])
    if not ratios:
        return float(exact[-1])
    worst = max(ratios)
    if not np.isfinite(worst):
        return 0.0
    return float(exact[-1] / worst)


def family_error(trace: SearchTrace, t: int) -> float:
    """Worst-rank relative error at leaf t (>= the k-th rank error)."""
    corrected = family_corrected_knn(trace, t)
    dists, _ = trace.bsf_at(t)
    if corrected <= 0:
        return np.inf
    return relative_error(float(dists[-1]), corrected)
