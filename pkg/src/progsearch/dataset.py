"""Dataset generation, binary storage, and pool sampling.

On-disk format: raw little-endian float32 values, row-major, no header,
described by a JSON sidecar.  Labels, when present, live in a row-aligned
text file with one decimal class id per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .series import z_normalize

DESCRIPTOR_SUFFIX = ".json"


@dataclass(frozen=True)
class DatasetDescriptor:
    path: Path
    n: int
    length: int
    labels: Path | None = None
    normalized: bool = True
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "len": self.length,
            "labels": self.labels.name if self.labels else None,
            "normalized": self.normalized,
            "provenance": self.provenance,
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def load(path: Path) -> "DatasetDescriptor":
        path = Path(path)
        doc = json.loads(path.read_text())
        raw = path.with_suffix(".f32")
        labels = path.parent / doc["labels"] if doc.get("labels") else None
        desc = DatasetDescriptor(
            path=raw,
            n=int(doc["n"]),
            length=int(doc["len"]),
            labels=labels,
            normalized=bool(doc["normalized"]),
            provenance=doc.get("provenance", {}),
        )
        desc.validate()
        return desc

    def save(self) -> Path:
        sidecar = self.path.with_suffix(DESCRIPTOR_SUFFIX)
        sidecar.write_text(self.to_json())
        return sidecar

    def validate(self) -> None:
        expected = 4 * self.n * self.length
        actual = self.path.stat().st_size
        if actual != expected:
            raise ValueError(
                f"{self.path}: file holds {actual} bytes, descriptor implies {expected}"
            )
        if self.labels is not None and not self.labels.exists():
            raise ValueError(f"label file {self.labels} missing")


class Dataset:
    """In-memory view over a stored collection; math runs in float64."""

    def __init__(self, descriptor: DatasetDescriptor):
        descriptor.validate()
        self.descriptor = descriptor
        raw = np.fromfile(descriptor.path, dtype="<f4").reshape(descriptor.n, descriptor.length)
        self.values = raw.astype(np.float64)
        self.labels: np.ndarray | None = None
        if descriptor.labels is not None:
            self.labels = read_labels(descriptor.labels)
            if self.labels.shape[0] != descriptor.n:
                raise ValueError("label count does not match dataset cardinality")

    @classmethod
    def from_arrays(cls, values: np.ndarray, labels: np.ndarray | None = None,
                    provenance: dict | None = None) -> "Dataset":
        """Purely in-memory collection (bench subsets, tests)."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must be a (n, length) matrix")
        ds = cls.__new__(cls)
        ds.descriptor = DatasetDescriptor(
            path=Path("<memory>"), n=values.shape[0], length=values.shape[1],
            provenance=provenance or {"kind": "memory"},
        )
        ds.values = values
        ds.labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        if ds.labels is not None and ds.labels.shape[0] != ds.n:
            raise ValueError("label count does not match dataset cardinality")
        return ds

    @property
    def n(self) -> int:
        return self.descriptor.n

    @property
    def length(self) -> int:
        return self.descriptor.length


def read_series(descriptor: DatasetDescriptor, series_id: int) -> np.ndarray:
    """Decode one stored row exactly as written (float32 values)."""
    if not 0 <= series_id < descriptor.n:
        raise IndexError(f"series id {series_id} outside [0, {descriptor.n})")
    row_bytes = 4 * descriptor.length
    with open(descriptor.path, "rb") as fh:
        fh.seek(series_id * row_bytes)
        buf = fh.read(row_bytes)
    if len(buf) != row_bytes:
        raise IOError(f"short read for series {series_id}")
    return np.frombuffer(buf, dtype="<f4").copy()


def stream_dataset(descriptor: DatasetDescriptor, chunk_rows: int = 4096):
    """Yield (series_id, values) in id order without loading the whole file."""
    descriptor.validate()
    row_bytes = 4 * descriptor.length
    with open(descriptor.path, "rb") as fh:
        sid = 0
        while sid < descriptor.n:
            rows = min(chunk_rows, descriptor.n - sid)
            buf = fh.read(rows * row_bytes)
            if len(buf) != rows * row_bytes:
                raise IOError(f"short read at series {sid}")
            chunk = np.frombuffer(buf, dtype="<f4").reshape(rows, descriptor.length)
            for i in range(rows):
                yield sid + i, chunk[i]
            sid += rows


def read_labels(path: Path) -> np.ndarray:
    return np.array([int(line) for line in Path(path).read_text().splitlines()], dtype=np.int64)


def write_labels(path: Path, labels: np.ndarray) -> None:
    Path(path).write_text("".join(f"{int(c)}\n" for c in labels))


def _write_dataset(path: Path, rows: np.ndarray, provenance: dict,
                   labels: np.ndarray | None = None) -> DatasetDescriptor:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = path.with_suffix(".f32")
    rows.astype("<f4").tofile(raw)
    label_path = None
    if labels is not None:
        label_path = path.with_suffix(".labels")
        write_labels(label_path, labels)
    desc = DatasetDescriptor(
        path=raw,
        n=rows.shape[0],
        length=rows.shape[1],
        labels=label_path,
        normalized=True,
        provenance=provenance,
    )
    desc.save()
    return desc


def random_walk_raw(n: int, length: int, seed: int) -> np.ndarray:
    """Cumulative sums of iid standard-normal steps, before normalization."""
    if n < 1 or length < 1:
        raise ValueError("n and length must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(n)
    rows = np.empty((n, length))
    for i, ss in enumerate(streams):
        steps = np.random.default_rng(ss).standard_normal(length)
        rows[i] = np.cumsum(steps)
    return rows


def generate_random_walk(n: int, length: int, seed: int, path: Path) -> DatasetDescriptor:
    rows = random_walk_raw(n, length, seed)
    for i in range(n):
        rows[i] = z_normalize(rows[i])
    return _write_dataset(
        Path(path), rows,
        provenance={"kind": "random_walk", "seed": seed, "n": n, "len": length},
    )


# Cylinder/bell/funnel shapes after Saito: a plateau, a rising ramp, and a
# falling ramp over a random interval [a, b], plus unit Gaussian noise.
# The onset is drawn from [l/8, l/4] and the duration from [l/4, 3l/4],
# which reproduces the classic [16, 32] / [32, 96] windows at length 128.
# ``amplitude`` is the shape-to-noise ratio: the shape height is
# amplitude * (6 + eta) / 6, so amplitude 6 recovers the classic height
# and amplitude 1 leaves the shape at the noise level (the hard setting).
CBF_CLASSES = ("cylinder", "bell", "funnel")


def _cbf_row(rng: np.random.Generator, length: int, amplitude: float, cls: int) -> np.ndarray:
    a = int(rng.integers(length // 8, length // 4 + 1))
    duration = int(rng.integers(length // 4, (3 * length) // 4 + 1))
    b = min(a + duration, length - 1)
    eta = rng.standard_normal()
    noise = rng.standard_normal(length)
    shape = np.zeros(length)
    t = np.arange(a, b + 1)
    if cls == 0:
        shape[a:b + 1] = 1.0
    elif cls == 1:
        shape[a:b + 1] = (t - a) / (b - a) if b > a else 1.0
    else:
        shape[a:b + 1] = (b - t) / (b - a) if b > a else 1.0
    return amplitude * (6.0 + eta) / 6.0 * shape + noise


def generate_cbf(n: int, length: int, amplitude: float, class_probs, seed: int,
                 path: Path) -> DatasetDescriptor:
    probs = np.asarray(class_probs, dtype=np.float64)
    if probs.shape != (3,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("class_probs must be three non-negative values summing to 1")
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    cumulative = np.cumsum(probs)
    streams = np.random.SeedSequence(seed).spawn(n)
    rows = np.empty((n, length))
    labels = np.empty(n, dtype=np.int64)
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        cls = int(np.searchsorted(cumulative, rng.random(), side="right"))
        cls = min(cls, 2)
        labels[i] = cls
        rows[i] = z_normalize(_cbf_row(rng, length, amplitude, cls))
    return _write_dataset(
        Path(path), rows,
        provenance={
            "kind": "cbf", "seed": seed, "n": n, "len": length,
            "amplitude": amplitude, "class_probs": probs.tolist(),
        },
        labels=labels,
    )


@dataclass(frozen=True)
class PoolSplit:
    """Disjoint id pools: witnesses on one side, train/test queries on the other."""

    witness_pool: np.ndarray
    query_pool: np.ndarray

    def __post_init__(self):
        if np.intersect1d(self.witness_pool, self.query_pool).size:
            raise ValueError("witness and query pools overlap")

    def draw_witnesses(self, n_w: int, rng: np.random.Generator) -> np.ndarray:
        if n_w > self.witness_pool.size:
            raise ValueError("witness pool exhausted")
        return rng.choice(self.witness_pool, size=n_w, replace=False)

    def draw_queries(self, n_r: int, n_t: int, rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
        """Disjoint training and testing draws for one repetition."""
        if n_r + n_t > self.query_pool.size:
            raise ValueError("query pool exhausted")
        picked = rng.choice(self.query_pool, size=n_r + n_t, replace=False)
        return picked[:n_r], picked[n_r:]


def sample_pools(descriptor: DatasetDescriptor, witness_pool_size: int,
                 query_pool_size: int, seed: int) -> PoolSplit:
    total = witness_pool_size + query_pool_size
    if total > descriptor.n:
        raise ValueError("pool sizes exceed dataset cardinality")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    picked = rng.choice(descriptor.n, size=total, replace=False)
    return PoolSplit(witness_pool=np.sort(picked[:witness_pool_size]),
                     query_pool=np.sort(picked[witness_pool_size:]))
