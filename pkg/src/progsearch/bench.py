"""Monte Carlo cross-validation harness and its quality measures.

One index is built over the dataset minus the held-out pools; every
repetition draws fresh witnesses, training queries, and testing queries
from those pools, trains a bundle, and scores estimators and stopping
policies against full-run ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .classify import accuracy_ratio
from .dataset import Dataset, DatasetDescriptor, sample_pools
from .index import Distance, IndexConfig, build_index
from .models import (
    build_witness_set,
    collect_training,
    train_bundle,
    witness_weighted_distance,
)
from .search import DEFAULT_CHECKPOINTS, SearchConfig, family_corrected_knn, progressive_knn
from .stopping import StoppingPolicy, plan_moments, simulate_policy

INITIAL_CHECKPOINT = 0  # pseudo-checkpoint for estimates made before the search


# -- measures -----------------------------------------------------------------


def coverage(intervals, truths) -> float:
    """Fraction of truths inside their (closed) interval."""
    intervals = list(intervals)
    truths = list(truths)
    if len(intervals) != len(truths):
        raise ValueError("intervals and truths are misaligned")
    hits = sum(1 for (lo, hi), t in zip(intervals, truths) if lo <= t <= hi)
    return hits / len(truths)


def rmse(points, truths) -> float:
    p = np.asarray(points, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def time_savings(stopped, totals) -> float:
    s = np.asarray(stopped, dtype=np.float64)
    t = np.asarray(totals, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("totals must be positive")
    if np.any(s > t):
        raise ValueError("stopped work exceeds total work")
    return float(1.0 - s.sum() / t.sum())


def exact_ratio(outcomes) -> float:
    flags = [bool(o.all_exact) for o in outcomes]
    return sum(flags) / len(flags)


def exact_class_ratio(outcomes) -> float:
    flags = [bool(o.was_exact_class) for o in outcomes]
    return sum(flags) / len(flags)


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    dataset: str
    index_kind: str = "dstree"
    segment_count: int = 16
    leaf_threshold: int = 100
    k: int = 1
    distance: str = "ed"
    n_w: int = 200
    n_r: int = 100
    n_t: int = 200
    repetitions: int = 20
    witness_pool: int = 0          # 0 = 2 * n_w
    query_pool: int = 0            # 0 = 2 * (n_r + n_t)
    checkpoints: tuple[int, ...] = DEFAULT_CHECKPOINTS
    estimators: tuple[str, ...] = ("baseline", "witness", "linear", "kde2", "kde3")
    policies: tuple[str, ...] = ("none", "prob:0.05", "time:0.05")
    thetas: tuple[float, ...] = (0.05, 0.01)
    moment_count: int = 16
    seed: int = 0
    bandwidth_scale: float = 1.0
    include_wallclock: bool = False

    def __post_init__(self):
        for spec in self.policies:
            StoppingPolicy.parse(spec)
        Distance.parse(self.distance)

    def resolved_pools(self) -> tuple[int, int]:
        w = self.witness_pool or 2 * self.n_w
        q = self.query_pool or 2 * (self.n_r + self.n_t)
        return w, q

    def to_dict(self) -> dict:
        doc = self.__dict__.copy()
        doc["checkpoints"] = list(self.checkpoints)
        doc["estimators"] = list(self.estimators)
        doc["policies"] = list(self.policies)
        doc["thetas"] = list(self.thetas)
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "BenchConfig":
        doc = dict(doc)
        for key in ("checkpoints", "estimators", "policies", "thetas"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return BenchConfig(**doc)


@dataclass
class Report:
    config: dict
    estimators: dict = field(default_factory=dict)
    policies: dict = field(default_factory=dict)
    classification: dict | None = None
    repetitions: int = 0
    measurements_per_cell: int = 0

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "estimators": self.estimators,
            "policies": self.policies,
            "classification": self.classification,
            "repetitions": self.repetitions,
            "measurements_per_cell": self.measurements_per_cell,
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    def csv_rows(self) -> list[list]:
        def cp_order(kv):
            return (0, int(kv[0])) if kv[0].isdigit() else (1, kv[0])

        rows = [["section", "name", "checkpoint", "level", "metric", "value"]]
        for method, by_cp in sorted(self.estimators.items()):
            for cp, by_theta in sorted(by_cp.items(), key=cp_order):
                for theta, cell in sorted(by_theta.items()):
                    for metric, value in sorted(cell.items()):
                        rows.append(["estimator", method, cp, theta, metric, value])
        for policy, cell in sorted(self.policies.items()):
            for metric, value in sorted(cell.items()):
                if metric == "per_rep":
                    continue
                rows.append(["policy", policy, "", "", metric, value])
        if self.classification:
            for metric, value in sorted(self.classification.items()):
                if isinstance(value, (int, float)):
                    rows.append(["classification", "", "", "", metric, value])
        return rows

    def to_csv(self) -> str:
        return "\n".join(",".join(str(x) for x in row) for row in self.csv_rows()) + "\n"


# -- cell accumulators --------------------------------------------------------


class _EstimatorCell:
    def __init__(self):
        self.intervals: list[tuple[float, float]] = []
        self.points: list[float] = []
        self.truths: list[float] = []

    def add(self, interval, point, truth):
        self.intervals.append(interval)
        self.points.append(point)
        self.truths.append(truth)

    def summary(self) -> dict:
        if not self.truths:
            return {"count": 0}
        widths = np.array([hi - lo for lo, hi in self.intervals])
        return {
            "count": len(self.truths),
            "coverage": coverage(self.intervals, self.truths),
            "mean_width": float(widths.mean()),
            "median_width": float(np.median(widths)),
            "rmse": rmse(self.points, self.truths),
        }


class _PolicyCell:
    def __init__(self):
        self.outcomes = []
        self.stopped: list[int] = []
        self.totals: list[int] = []
        self.stopped_ns: list[int] = []
        self.total_ns: list[int] = []
        self.predicted: list[int] = []
        self.exact_cls: list[int] = []
        self.correct: list[int] = []
        self.per_rep: list[dict] = []

    def add(self, outcome, correct_class=None):
        self.outcomes.append(outcome)
        at = outcome.stopped_at_leaves
        self.stopped.append(outcome.total_leaves_without_stop if at is None else at)
        self.totals.append(outcome.total_leaves_without_stop)
        if outcome.wallclock_total_ns is not None:
            ns = outcome.wallclock_total_ns if at is None else outcome.wallclock_stopped_ns
            self.stopped_ns.append(ns)
            self.total_ns.append(outcome.wallclock_total_ns)
        if outcome.predicted_class is not None and correct_class is not None:
            self.predicted.append(outcome.predicted_class)
            self.exact_cls.append(outcome.exact_class)
            self.correct.append(correct_class)

    def close_repetition(self, rep: int, start: int):
        chunk = self.outcomes[start:]
        if not chunk:
            return
        entry = {
            "rep": rep,
            "exact_ratio": exact_ratio(chunk),
            "savings_leaves": time_savings(self.stopped[start:], self.totals[start:]),
        }
        if chunk[0].was_exact_class is not None:
            entry["exact_class_ratio"] = exact_class_ratio(chunk)
        self.per_rep.append(entry)

    def summary(self, include_wallclock: bool) -> dict:
        out = {
            "count": len(self.outcomes),
            "exact_ratio": exact_ratio(self.outcomes),
            "savings_leaves": time_savings(self.stopped, self.totals),
            "mean_stopped_leaves": float(np.mean(self.stopped)),
            "per_rep": self.per_rep,
        }
        if self.outcomes and self.outcomes[0].was_exact_class is not None:
            out["exact_class_ratio"] = exact_class_ratio(self.outcomes)
        if self.correct:
            pred = np.array(self.predicted)
            exact = np.array(self.exact_cls)
            truth = np.array(self.correct)
            stopped_acc = float(np.mean(pred == truth))
            exact_acc = float(np.mean(exact == truth))
            out["stopped_accuracy"] = stopped_acc
            out["exact_accuracy"] = exact_acc
            if exact_acc > 0:
                out["accuracy_ratio"] = accuracy_ratio(stopped_acc, exact_acc)
        if include_wallclock and self.total_ns:
            out["savings_wallclock"] = time_savings(self.stopped_ns, self.total_ns)
        return out


# -- the harness --------------------------------------------------------------


def _estimator_truth(trace, t: int, k: int, method: str) -> float:
    """What the estimator is accountable for: the 1-NN distance for the
    initial models, the (family-corrected) k-NN distance for progressive ones."""
    if method in ("baseline", "witness"):
        return float(trace.exact_distances[0])
    if k == 1:
        return float(trace.exact_distances[0])
    return family_corrected_knn(trace, t)


def run_bench(config: BenchConfig, progress=None) -> Report:
    descriptor = DatasetDescriptor.load(config.dataset)
    full = Dataset(descriptor)
    distance = Distance.parse(config.distance)
    wp, qp = config.resolved_pools()
    pools = sample_pools(descriptor, wp, qp, seed=config.seed)
    held_out = np.concatenate([pools.witness_pool, pools.query_pool])
    kept = np.setdiff1d(np.arange(full.n), held_out)
    collection = Dataset.from_arrays(
        full.values[kept],
        labels=None if full.labels is None else full.labels[kept],
        provenance={"kind": "bench-complement", "source": str(config.dataset)},
    )
    index_config = IndexConfig(kind=config.index_kind,
                               segment_count=config.segment_count,
                               leaf_threshold=config.leaf_threshold)
    if progress:
        progress(f"building {config.index_kind} index over {collection.n} series")
    tree = build_index(collection, index_config)
    labeled = collection.labels is not None
    class_count = int(full.labels.max()) + 1 if labeled else None

    search_config = SearchConfig(k=config.k, distance=distance,
                                 checkpoints=tuple(config.checkpoints))
    policy_objs = {spec: StoppingPolicy.parse(spec) for spec in config.policies}
    phis = sorted({p.phi for p in policy_objs.values() if p.phi is not None} | {0.05, 0.01})

    est_cells: dict[tuple[str, int, float], _EstimatorCell] = {}
    pol_cells = {spec: _PolicyCell() for spec in config.policies}

    rep_streams = np.random.SeedSequence(config.seed).spawn(config.repetitions)
    for rep, stream in enumerate(rep_streams):
        rng_w, rng_q = (np.random.default_rng(s) for s in stream.spawn(2))
        witness_ids = pools.draw_witnesses(config.n_w, rng_w)
        train_ids, test_ids = pools.draw_queries(config.n_r, config.n_t, rng_q)
        witnesses = build_witness_set(tree, witness_ids, full.values[witness_ids], distance)
        records = collect_training(tree, train_ids, full.values[train_ids],
                                   search_config, witnesses=witnesses)
        moments = plan_moments(records, m=config.moment_count)
        bundle = train_bundle(
            tree, records, witnesses, k=config.k, distance=distance,
            checkpoints=config.checkpoints, moments=moments, phis=phis,
            labels=collection.labels, class_count=class_count,
            bandwidth_scale=config.bandwidth_scale,
        )
        pol_starts = {spec: len(cell.outcomes) for spec, cell in pol_cells.items()}
        for qid in test_ids:
            values = full.values[qid]
            trace = progressive_knn(tree, values, search_config)
            dw = witness_weighted_distance(values, witnesses, distance)
            for method in config.estimators:
                for theta in config.thetas:
                    if method in ("baseline", "witness"):
                        est = bundle.estimate_distance(None, INITIAL_CHECKPOINT,
                                                       theta, method, dw=dw)
                        truth = _estimator_truth(trace, INITIAL_CHECKPOINT,
                                                 config.k, method)
                        key = (method, INITIAL_CHECKPOINT, theta)
                        cell = est_cells.setdefault(key, _EstimatorCell())
                        cell.add((est.lower, est.upper), est.point, truth)
                        continue
                    for t in config.checkpoints:
                        bsf_k = float(trace.bsf_at(t)[0][-1])
                        if not np.isfinite(bsf_k):
                            continue
                        try:
                            est = bundle.estimate_distance(bsf_k, t, theta, method)
                        except LookupError:
                            continue
                        truth = _estimator_truth(trace, t, config.k, method)
                        key = (method, t, theta)
                        cell = est_cells.setdefault(key, _EstimatorCell())
                        cell.add((est.lower, est.upper), est.point, truth)
            correct = int(full.labels[qid]) if labeled else None
            for spec, policy in policy_objs.items():
                outcome = simulate_policy(trace, bundle, policy,
                                          labels=collection.labels)
                pol_cells[spec].add(outcome, correct_class=correct)
        for spec, cell in pol_cells.items():
            cell.close_repetition(rep, pol_starts[spec])
        if progress:
            progress(f"repetition {rep + 1}/{config.repetitions} done")

    report = Report(config=config.to_dict(), repetitions=config.repetitions,
                    measurements_per_cell=config.repetitions * config.n_t)
    for (method, t, theta), cell in sorted(est_cells.items()):
        by_cp = report.estimators.setdefault(method, {})
        by_theta = by_cp.setdefault(str(t), {})
        by_theta[f"{theta:g}"] = cell.summary()
    for method in report.estimators:
        pooled: dict[str, _EstimatorCell] = {}
        for (m, t, theta), cell in est_cells.items():
            if m != method:
                continue
            agg = pooled.setdefault(f"{theta:g}", _EstimatorCell())
            agg.intervals.extend(cell.intervals)
            agg.points.extend(cell.points)
            agg.truths.extend(cell.truths)
        report.estimators[method]["pooled"] = {
            theta: cell.summary() for theta, cell in sorted(pooled.items())
        }
    for spec, cell in pol_cells.items():
        report.policies[spec] = cell.summary(config.include_wallclock)
    if labeled:
        report.classification = {"class_count": class_count}
    return report
