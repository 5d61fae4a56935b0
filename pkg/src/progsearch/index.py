"""Tree indexes over series collections.

Two build strategies share one node layout:

* ``isax``: a binary trie over SAX words; leaf overflow doubles the
  cardinality of one segment, chosen round-robin along the path.
* ``dstree``: fixed equal segmentation; leaf overflow splits on the segment
  with the widest mean range at the midpoint of that range.

After ``freeze`` every node carries a per-segment value interval
``[lo, hi]`` that provably contains the segment means of every series in its
subtree, which is all both distance measures need for node-level pruning.
"""

from __future__ import annotations

import heapq
import json
import struct
import sys
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .series import Envelope, build_envelope
from .summaries import (
    SummarizedEnvelope,
    equal_endpoints,
    paa_matrix,
    sax_breakpoints,
    segment_stats_matrix,
    summarize_envelope_eapca,
)

INDEX_MAGIC = b"PROSIDX1"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Distance:
    """Distance selector: plain ED, or DTW with a Sakoe-Chiba half-width."""

    kind: str
    band_radius: int = 0

    def __post_init__(self):
        if self.kind not in ("ed", "dtw"):
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if self.kind == "ed" and self.band_radius != 0:
            raise ValueError("band_radius only applies to dtw")
        if self.band_radius < 0:
            raise ValueError("band_radius must be non-negative")

    @staticmethod
    def parse(spec: str) -> "Distance":
        if spec == "ed":
            return Distance("ed")
        if spec.startswith("dtw:"):
            return Distance("dtw", int(spec.split(":", 1)[1]))
        raise ValueError(f"bad distance spec {spec!r}, expected 'ed' or 'dtw:<radius>'")

    def __str__(self) -> str:
        return "ed" if self.kind == "ed" else f"dtw:{self.band_radius}"


@dataclass(frozen=True)
class IndexConfig:
    kind: str
    segment_count: int = 16
    leaf_threshold: int = 100
    sax_max_cardinality: int = 256
    default_distance: str = "ed"  # the measure the artifact is built to serve

    def __post_init__(self):
        if self.kind not in ("isax", "dstree"):
            raise ValueError(f"unknown index kind {self.kind!r}")
        if self.segment_count < 1 or self.leaf_threshold < 1:
            raise ValueError("segment_count and leaf_threshold must be >= 1")
        c = self.sax_max_cardinality
        if c & (c - 1) or not 2 <= c <= 256:
            raise ValueError("sax_max_cardinality must be a power of two in [2, 256]")
        Distance.parse(self.default_distance)


class Node:
    __slots__ = ("node_id", "children", "ids", "block", "bits", "prefix",
                 "std_lo", "std_hi")

    def __init__(self, node_id: int):
        self.node_id = node_id
        self.children: list["Node"] | None = None
        self.ids: np.ndarray | None = None
        self.block: np.ndarray | None = None
        self.bits: np.ndarray | None = None      # isax: per-segment cardinality bits
        self.prefix: np.ndarray | None = None    # isax: per-segment symbol prefix
        self.std_lo: np.ndarray | None = None    # dstree: per-segment stdev range
        self.std_hi: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass(frozen=True)
class QuerySummary:
    """Per-query, per-layout inputs to node bounds (built once per search)."""

    means: np.ndarray | None = None
    upper_hat: np.ndarray | None = None
    lower_hat: np.ndarray | None = None
    envelope: Envelope | None = None


def node_mindist_terms(lo: np.ndarray, hi: np.ndarray, qs: QuerySummary,
                       distance: Distance) -> np.ndarray:
    """Per-segment squared penalties between query summary and node intervals."""
    if distance.kind == "ed":
        below = np.maximum(lo - qs.means, 0.0)
        above = np.maximum(qs.means - hi, 0.0)
        return below * below + above * above
    over = np.maximum(lo - qs.upper_hat, 0.0)
    under = np.maximum(qs.lower_hat - hi, 0.0)
    return over * over + under * under


def mindist(node: Node, tree: "IndexTree", qs: QuerySummary, distance: Distance) -> float:
    lo = tree.node_lo[node.node_id]
    hi = tree.node_hi[node.node_id]
    terms = node_mindist_terms(lo, hi, qs, distance)
    return float(np.sqrt(np.dot(terms, tree.segment_widths)))


class IndexTree:
    """Immutable after ``freeze``; any number of readers may search it."""

    def __init__(self, dataset: Dataset, config: IndexConfig):
        if dataset.n < 1:
            raise ValueError("dataset is empty")
        length = dataset.length
        if config.kind == "isax" and length % config.segment_count != 0:
            raise ValueError(
                f"isax needs series length divisible by segment count "
                f"({length} % {config.segment_count} != 0); zero-pad at generation time"
            )
        self.dataset = dataset
        self.config = config
        self.endpoints = equal_endpoints(length, config.segment_count)
        self.segment_widths = np.diff(np.concatenate(([0], self.endpoints))).astype(np.float64)
        self.nodes: list[Node] = []
        self.root: Node | None = None
        self.leaves: list[Node] = []
        self.node_lo: np.ndarray | None = None
        self.node_hi: np.ndarray | None = None

    def new_node(self) -> Node:
        node = Node(len(self.nodes))
        self.nodes.append(node)
        return node

    # -- query-side helpers -------------------------------------------------

    def summarize_query(self, query: np.ndarray, distance: Distance) -> QuerySummary:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dataset.length,):
            raise ValueError(f"query length {q.shape} != dataset length {self.dataset.length}")
        if distance.kind == "ed":
            means, _ = segment_stats_matrix(q[None, :], self.endpoints)
            return QuerySummary(means=means[0])
        env = build_envelope(q, distance.band_radius)
        senv: SummarizedEnvelope = summarize_envelope_eapca(env, self.endpoints)
        return QuerySummary(upper_hat=senv.upper_hat, lower_hat=senv.lower_hat, envelope=env)

    def mindist_all(self, qs: QuerySummary, distance: Distance) -> np.ndarray:
        if distance.kind == "ed":
            below = np.maximum(self.node_lo - qs.means, 0.0)
            above = np.maximum(qs.means - self.node_hi, 0.0)
            terms = below * below + above * above
        else:
            over = np.maximum(self.node_lo - qs.upper_hat, 0.0)
            under = np.maximum(qs.lower_hat - self.node_hi, 0.0)
            terms = over * over + under * under
        return np.sqrt(terms @ self.segment_widths)

    # -- construction -------------------------------------------------------

    def freeze(self) -> None:
        values = self.dataset.values
        seg_means, seg_stds = segment_stats_matrix(values, self.endpoints)
        m = self.config.segment_count
        num = len(self.nodes)
        self.node_lo = np.empty((num, m))
        self.node_hi = np.empty((num, m))
        self.leaves = []
        if self.config.kind == "isax":
            self._freeze_isax()
        for node in self.nodes:
            if node.is_leaf:
                node.block = np.ascontiguousarray(values[node.ids])
                self.leaves.append(node)
        if self.config.kind == "dstree":
            self._freeze_dstree(seg_means, seg_stds)

    def _freeze_isax(self) -> None:
        for node in self.nodes:
            lo = np.full(self.config.segment_count, -np.inf)
            hi = np.full(self.config.segment_count, np.inf)
            for seg in range(self.config.segment_count):
                b = int(node.bits[seg])
                if b == 0:
                    continue
                bkpts = sax_breakpoints(1 << b)
                p = int(node.prefix[seg])
                if p > 0:
                    lo[seg] = bkpts[p - 1]
                if p < (1 << b) - 1:
                    hi[seg] = bkpts[p]
            self.node_lo[node.node_id] = lo
            self.node_hi[node.node_id] = hi

    def _freeze_dstree(self, seg_means: np.ndarray, seg_stds: np.ndarray) -> None:
        # bottom-up so internal intervals are exact unions of their children
        for node in reversed(self.nodes):
            if node.is_leaf:
                mm = seg_means[node.ids]
                ss = seg_stds[node.ids]
                self.node_lo[node.node_id] = mm.min(axis=0)
                self.node_hi[node.node_id] = mm.max(axis=0)
                node.std_lo = ss.min(axis=0)
                node.std_hi = ss.max(axis=0)
            else:
                kids = [c.node_id for c in node.children]
                self.node_lo[node.node_id] = self.node_lo[kids].min(axis=0)
                self.node_hi[node.node_id] = self.node_hi[kids].max(axis=0)
                node.std_lo = np.min([c.std_lo for c in node.children], axis=0)
                node.std_hi = np.max([c.std_hi for c in node.children], axis=0)


def _build_isax(tree: IndexTree) -> None:
    cfg = tree.config
    m = cfg.segment_count
    max_bits = int(np.log2(cfg.sax_max_cardinality))
    means = paa_matrix(tree.dataset.values, m)
    bkpts = sax_breakpoints(cfg.sax_max_cardinality)
    words = np.searchsorted(bkpts, means, side="right").astype(np.int64)

    def build(node: Node, ids: np.ndarray, bits: np.ndarray, prefix: np.ndarray,
              depth: int) -> None:
        node.bits = bits
        node.prefix = prefix
        if ids.size <= cfg.leaf_threshold:
            node.ids = ids
            return
        seg = -1
        for probe in range(m):
            cand = (depth + probe) % m
            if bits[cand] < max_bits:
                seg = cand
                break
        if seg < 0:
            node.ids = ids  # cardinality exhausted on every segment: overflow leaf
            return
        bit = (words[ids, seg] >> (max_bits - int(bits[seg]) - 1)) & 1
        node.children = []
        for side in (0, 1):
            sub = ids[bit == side]
            if sub.size == 0:
                continue
            child_bits = bits.copy()
            child_bits[seg] += 1
            child_prefix = prefix.copy()
            child_prefix[seg] = prefix[seg] * 2 + side
            child = tree.new_node()
            node.children.append(child)
            build(child, sub, child_bits, child_prefix, depth + 1)

    root = tree.new_node()
    tree.root = root
    build(root, np.arange(tree.dataset.n, dtype=np.int64),
          np.zeros(m, dtype=np.int64), np.zeros(m, dtype=np.int64), 0)


def _build_dstree(tree: IndexTree) -> None:
    cfg = tree.config
    seg_means, _ = segment_stats_matrix(tree.dataset.values, tree.endpoints)

    def build(node: Node, ids: np.ndarray) -> None:
        if ids.size <= cfg.leaf_threshold:
            node.ids = ids
            return
        mm = seg_means[ids]
        lo = mm.min(axis=0)
        hi = mm.max(axis=0)
        seg = int(np.argmax(hi - lo))
        if hi[seg] - lo[seg] <= 0.0:
            node.ids = ids  # indistinguishable means everywhere: overflow leaf
            return
        mid = 0.5 * (lo[seg] + hi[seg])
        left_mask = mm[:, seg] <= mid
        node.children = []
        for mask in (left_mask, ~left_mask):
            child = tree.new_node()
            node.children.append(child)
            build(child, ids[mask])

    root = tree.new_node()
    tree.root = root
    build(root, np.arange(tree.dataset.n, dtype=np.int64))


def build_index(dataset: Dataset, config: IndexConfig) -> IndexTree:
    tree = IndexTree(dataset, config)
    # splits can chain th+1 deep on adversarial data; recursion is the clear
    # formulation, so raise the limit rather than contort the builder
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10_000))
    try:
        if config.kind == "isax":
            _build_isax(tree)
        else:
            _build_dstree(tree)
    finally:
        sys.setrecursionlimit(old_limit)
    tree.freeze()
    return tree


class Traversal:
    """Leaf visit order: greedy descent to the most promising leaf, then
    best-first over the remaining frontier, skipping nodes whose bound
    already reaches the caller's current k-th distance."""

    def __init__(self, tree: IndexTree, qs: QuerySummary, distance: Distance):
        self.tree = tree
        self.mindists = tree.mindist_all(qs, distance)
        self._heap: list[tuple[float, int]] = []
        self._started = False

    def _push(self, node: Node) -> None:
        heapq.heappush(self._heap, (float(self.mindists[node.node_id]), node.node_id))

    def next_leaf(self, bound: float) -> Node | None:
        if not self._started:
            self._started = True
            node = self.tree.root
            while not node.is_leaf:
                ranked = sorted(node.children,
                                key=lambda c: (self.mindists[c.node_id], c.node_id))
                for other in ranked[1:]:
                    self._push(other)
                node = ranked[0]
            return node
        while self._heap:
            md, node_id = heapq.heappop(self._heap)
            if md >= bound:
                self._heap.clear()
                return None
            node = self.tree.nodes[node_id]
            if node.is_leaf:
                return node
            for child in node.children:
                self._push(child)
        return None


def approximate_search(tree: IndexTree, query: np.ndarray, k: int,
                       distance: Distance) -> list[tuple[int, float]]:
    """Best k candidates from the single most promising leaf, extended with
    further best-first leaves only while fewer than k candidates exist."""
    from .search import BsfSet, visit_leaf

    if not 1 <= k <= tree.dataset.n:
        raise ValueError(f"k={k} outside [1, {tree.dataset.n}]")
    q = np.asarray(query, dtype=np.float64)
    qs = tree.summarize_query(q, distance)
    traversal = Traversal(tree, qs, distance)
    bsf = BsfSet(k)
    while len(bsf) < k:
        leaf = traversal.next_leaf(np.inf)
        if leaf is None:
            break
        visit_leaf(leaf, q, qs, distance, bsf)
    return bsf.as_list()


# -- persistence -------------------------------------------------------------


def _tree_payload(tree: IndexTree) -> bytes:
    nodes = []
    for node in tree.nodes:
        doc: dict = {}
        if node.is_leaf:
            doc["ids"] = node.ids.tolist()
        else:
            doc["children"] = [c.node_id for c in node.children]
        if tree.config.kind == "isax":
            doc["bits"] = node.bits.tolist()
            doc["prefix"] = node.prefix.tolist()
        nodes.append(doc)
    payload = {
        "config": {
            "kind": tree.config.kind,
            "segment_count": tree.config.segment_count,
            "leaf_threshold": tree.config.leaf_threshold,
            "sax_max_cardinality": tree.config.sax_max_cardinality,
            "default_distance": tree.config.default_distance,
        },
        "n": tree.dataset.n,
        "len": tree.dataset.length,
        "nodes": nodes,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def save_index(tree: IndexTree, path: Path) -> None:
    if str(path) in ("", "."):
        raise ValueError("empty index path")
    path = Path(path)
    payload = _tree_payload(tree)
    head = INDEX_MAGIC + struct.pack("<B", INDEX_VERSION) + struct.pack("<Q", len(payload))
    body = head + payload
    crc = zlib.crc32(body) & 0xFFFFFFFF
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", crc))


class IndexFormatError(Exception):
    pass


def load_index(path: Path, dataset: Dataset) -> IndexTree:
    data = Path(path).read_bytes()
    if len(data) < len(INDEX_MAGIC) + 1 + 8 + 4:
        raise IndexFormatError("index file truncated")
    if data[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        raise IndexFormatError("bad magic bytes")
    version = data[len(INDEX_MAGIC)]
    if version != INDEX_VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    off = len(INDEX_MAGIC) + 1
    (length,) = struct.unpack_from("<Q", data, off)
    off += 8
    if off + length + 4 != len(data):
        raise IndexFormatError("payload length mismatch")
    payload = data[off: off + length]
    (crc_stored,) = struct.unpack_from("<I", data, off + length)
    if zlib.crc32(data[: off + length]) & 0xFFFFFFFF != crc_stored:
        raise IndexFormatError("checksum failure")
    doc = json.loads(payload)
    if doc["n"] != dataset.n or doc["len"] != dataset.length:
        raise IndexFormatError("index does not match the supplied dataset")
    config = IndexConfig(**doc["config"])
    tree = IndexTree(dataset, config)
    for node_doc in doc["nodes"]:
        node = tree.new_node()
        if "ids" in node_doc:
            node.ids = np.asarray(node_doc["ids"], dtype=np.int64)
        if config.kind == "isax":
            node.bits = np.asarray(node_doc["bits"], dtype=np.int64)
            node.prefix = np.asarray(node_doc["prefix"], dtype=np.int64)
    for node, node_doc in zip(tree.nodes, doc["nodes"]):
        if "children" in node_doc:
            node.children = [tree.nodes[i] for i in node_doc["children"]]
    tree.root = tree.nodes[0]
    tree.freeze()
    return tree
