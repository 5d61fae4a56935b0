"""Trained estimators attached to progressive answers.

A ``GuaranteeBundle`` holds everything fitted from one training pass:
the witness baseline and regression, per-checkpoint distance estimators
(linear and 2D kernel density), one 3D kernel density over (answer,
best-so-far, log2 leaves), exact-answer and exact-class logistic models,
and quantile-regression time bounds.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .index import Distance, IndexTree
from .search import (
    SearchConfig,
    SearchTrace,
    family_corrected_knn,
    progressive_knn,
)
from .series import euclidean_block, dtw_rows
from .statfit import (
    KdeGrid,
    LinearModel,
    LogisticModel,
    QuantileModel,
    empirical_quantile,
    kde_conditional,
    kde_fit,
    logistic_fit,
    ols_fit,
    ols_predict_interval,
    quantile_fit,
)

BUNDLE_FORMAT = "pros-models-1"
WITNESS_EXPONENT = 5
MIN_CHECKPOINT_ROWS = 10
ONE_HOT_CLASS_LIMIT = 10
DISTANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class WitnessSet:
    ids: np.ndarray
    values: np.ndarray
    nn_distances: np.ndarray

    @property
    def n_w(self) -> int:
        return self.ids.size


def build_witness_set(tree: IndexTree, witness_ids: np.ndarray,
                      witness_values: np.ndarray, distance: Distance) -> WitnessSet:
    """Run an exact 1-NN search per witness against the indexed collection."""
    nn = np.empty(witness_values.shape[0])
    config = SearchConfig(k=1, distance=distance, checkpoints=(1,))
    for i, w in enumerate(witness_values):
        trace = progressive_knn(tree, w, config)
        nn[i] = trace.exact_distances[0]
    return WitnessSet(ids=np.asarray(witness_ids, dtype=np.int64),
                      values=np.asarray(witness_values, dtype=np.float64),
                      nn_distances=nn)


def witness_weighted_distance(query: np.ndarray, witnesses: WitnessSet,
                              distance: Distance, exp: int = WITNESS_EXPONENT) -> float:
    """Witness 1-NN distances averaged with inverse-power distance weights."""
    if witnesses.n_w < 1:
        raise ValueError("witness set is empty")
    q = np.asarray(query, dtype=np.float64)
    if distance.kind == "ed":
        d = euclidean_block(witnesses.values, q)
    else:
        d = dtw_rows(witnesses.values, q, distance.band_radius)
    zero = np.nonzero(d <= DISTANCE_FLOOR)[0]
    if zero.size:
        # the weight formula diverges at distance 0; its limit is the
        # coinciding witness's own 1-NN distance
        return float(witnesses.nn_distances[zero[0]])
    w = d ** (-float(exp))
    w /= w.sum()
    return float(w @ witnesses.nn_distances)


@dataclass(frozen=True)
class BaselineModel:
    """Empirical distribution of witness 1-NN distances."""

    nn_distances: np.ndarray

    def point(self) -> float:
        return empirical_quantile(self.nn_distances, 0.5)

    def interval(self, theta: float) -> tuple[float, float]:
        return (empirical_quantile(self.nn_distances, theta / 2),
                empirical_quantile(self.nn_distances, 1 - theta / 2))

    def to_dict(self) -> dict:
        return {"nn_distances": self.nn_distances.tolist()}

    @staticmethod
    def from_dict(doc: dict) -> "BaselineModel":
        return BaselineModel(nn_distances=np.asarray(doc["nn_distances"]))


def fit_baseline(witnesses: WitnessSet) -> BaselineModel:
    if witnesses.n_w < 10:
        raise ValueError("need at least 10 witnesses for the baseline")
    return BaselineModel(nn_distances=np.sort(witnesses.nn_distances))


@dataclass
class TrainingRecord:
    query_id: int
    trace: SearchTrace
    dw: float | None = None

    def target(self, t: int) -> float:
        """Regression target: the k-NN distance, family-corrected for k > 1."""
        if self.trace.k == 1:
            return float(self.trace.exact_distances[0])
        return family_corrected_knn(self.trace, t)

    def bsf_k(self, t: int) -> float:
        dists, _ = self.trace.bsf_at(t)
        return float(dists[-1])


def collect_training(tree: IndexTree, query_ids: np.ndarray, query_values: np.ndarray,
                     config: SearchConfig, witnesses: WitnessSet | None = None
                     ) -> list[TrainingRecord]:
    """One never-stopped progressive run per query."""
    if config.stop is not None:
        raise ValueError("training runs must not carry a stop signal")
    records = []
    for qid, values in zip(query_ids, query_values):
        trace = progressive_knn(tree, values, config)
        dw = None
        if witnesses is not None:
            if np.any(witnesses.ids == qid):
                raise ValueError(f"query {qid} overlaps the witness draw")
            dw = witness_weighted_distance(values, witnesses, config.distance)
        records.append(TrainingRecord(query_id=int(qid), trace=trace, dw=dw))
    return records


def fit_query_sensitive(records: list[TrainingRecord],
                        witnesses: WitnessSet) -> LinearModel:
    if len(records) < 10:
        raise ValueError("need at least 10 training records")
    if any(r.dw is None for r in records):
        raise ValueError("records lack witness features")
    dw = np.array([r.dw for r in records], dtype=np.float64)
    nn = np.array([r.trace.exact_distances[0] for r in records])
    return ols_fit(dw, nn)


def _checkpoint_rows(records: list[TrainingRecord], t: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for r in records:
        b = r.bsf_k(t)
        if not np.isfinite(b):
            continue
        xs.append(r.target(t))
        ys.append(b)
    return np.asarray(xs), np.asarray(ys)


def fit_checkpoint_estimators(records: list[TrainingRecord], checkpoints,
                              bandwidth_scale: float = 1.0):
    """Per-checkpoint linear models and 2D KDE grids, plus one pooled 3D grid.

    Checkpoints with fewer than MIN_CHECKPOINT_ROWS usable records get an
    absent marker (None); consumers fall back to the nearest earlier one.
    """
    linear: dict[int, LinearModel | None] = {}
    kde2: dict[int, KdeGrid | None] = {}
    pooled = []
    for t in checkpoints:
        target, bsf = _checkpoint_rows(records, t)
        if target.size < MIN_CHECKPOINT_ROWS:
            linear[t] = None
            kde2[t] = None
            continue
        linear[t] = ols_fit(bsf, target)
        kde2[t] = kde_fit(np.column_stack([target, bsf]), bandwidth_scale=bandwidth_scale)
        pooled.append(np.column_stack([target, bsf, np.full(target.size, np.log2(t))]))
    kde3 = None
    if pooled:
        stacked = np.concatenate(pooled)
        if stacked.shape[0] >= MIN_CHECKPOINT_ROWS:
            kde3 = kde_fit(stacked, bandwidth_scale=bandwidth_scale)
    return linear, kde2, kde3


def fit_exact_probability(records: list[TrainingRecord], checkpoints
                          ) -> dict[int, LogisticModel | float | None]:
    """Logistic models of P(k-th answer already exact | its distance).

    A checkpoint where every record carries the same label pins the
    probability to that label frequency instead of fitting.
    """
    out: dict[int, LogisticModel | float | None] = {}
    for t in checkpoints:
        xs, ys = [], []
        for r in records:
            b = r.bsf_k(t)
            if not np.isfinite(b):
                continue
            xs.append(b)
            ys.append(1.0 if r.trace.exact_at(t) else 0.0)
        if len(xs) < MIN_CHECKPOINT_ROWS:
            out[t] = None
            continue
        ys_arr = np.asarray(ys)
        if ys_arr.min() == ys_arr.max():
            out[t] = float(ys_arr.mean())
            continue
        out[t] = logistic_fit(np.asarray(xs), ys_arr)
    return out


def fit_time_bound(records: list[TrainingRecord], phi: float) -> QuantileModel:
    """1-phi quantile of log2 leaves-to-exact vs the first approximate distance."""
    if len(records) < 20:
        raise ValueError("need at least 20 training records for time bounds")
    if not 0 < phi < 1:
        raise ValueError("phi must be in (0, 1)")
    xs = np.array([r.trace.first_approximate_distance() for r in records])
    ys = np.array([np.log2(max(r.trace.leaves_to_exact[-1], 1)) for r in records])
    if not np.all(np.isfinite(xs)):
        raise ValueError("records lack a first approximate answer")
    return quantile_fit(xs, ys, tau=1 - phi)


def agreement(labels) -> tuple[float, int]:
    """Fraction of the k answers (beyond the first) voting for the majority."""
    labels = list(labels)
    k = len(labels)
    if k < 2:
        raise ValueError("agreement needs k >= 2")
    majority = majority_label(labels)
    count = sum(1 for c in labels if c == majority)
    return (count - 1) / (k - 1), majority


def majority_label(labels) -> int:
    counts = Counter(int(c) for c in labels)
    best = max(counts.items(), key=lambda item: (item[1], -item[0]))
    return best[0]


def _class_predictors(bsf_k: float, agree: float | None, cls: int,
                      class_count: int) -> np.ndarray:
    row = [bsf_k]
    if agree is not None:
        row.append(agree)
    if class_count <= ONE_HOT_CLASS_LIMIT:
        # reference-coded indicators; class 0 is the baseline level
        row.extend(1.0 if cls == c else 0.0 for c in range(1, class_count))
    return np.asarray(row)


def fit_class_probability(records: list[TrainingRecord], checkpoints,
                          labels: np.ndarray, class_count: int
                          ) -> dict[int, LogisticModel | float | None]:
    """Logistic models of P(current majority class is the exact class).

    Predictors: the k-th distance, the agreement among the k answers
    (when k > 1), and the current class as indicators when the number of
    classes is small enough to be informative.
    """
    out: dict[int, LogisticModel | float | None] = {}
    for t in checkpoints:
        xs, ys = [], []
        for r in records:
            dists, ids = r.trace.bsf_at(t)
            if not np.isfinite(dists[-1]):
                continue
            current = labels[ids]
            if r.trace.k >= 2:
                agree, cls = agreement(current)
            else:
                agree, cls = None, int(current[0])
            exact_cls = majority_label(labels[r.trace.exact_ids])
            xs.append(_class_predictors(float(dists[-1]), agree, cls, class_count))
            ys.append(1.0 if cls == exact_cls else 0.0)
        if len(xs) < MIN_CHECKPOINT_ROWS:
            out[t] = None
            continue
        ys_arr = np.asarray(ys)
        if ys_arr.min() == ys_arr.max():
            out[t] = float(ys_arr.mean())
            continue
        out[t] = logistic_fit(np.vstack(xs), ys_arr)
    return out


@dataclass(frozen=True)
class DistanceEstimate:
    point: float
    lower: float
    upper: float


def _conditional_with_support(grid: KdeGrid, cond_at) -> "object":
    """Condition the grid, retreating to the nearest training point's
    coordinates when the requested slice has underflowed to zero mass
    (possible for far-outlier queries under narrow bandwidths)."""
    try:
        return kde_conditional(grid, cond_at)
    except ValueError:
        pts = grid.points[:, 1:]
        scale = np.maximum(grid.bandwidth[1:], DISTANCE_FLOOR)
        z = (pts - np.atleast_1d(np.asarray(cond_at, dtype=np.float64))) / scale
        nearest = int(np.argmin(np.einsum("ij,ij->i", z, z)))
        return kde_conditional(grid, pts[nearest])


@dataclass
class GuaranteeBundle:
    k: int
    distance: Distance
    checkpoints: tuple[int, ...]
    moments: tuple[int, ...]
    baseline: BaselineModel | None = None
    witness_model: LinearModel | None = None
    witnesses: WitnessSet | None = None
    linear: dict = field(default_factory=dict)
    kde2: dict = field(default_factory=dict)
    kde3: KdeGrid | None = None
    exact_prob: dict = field(default_factory=dict)
    time_bounds: dict = field(default_factory=dict)
    class_prob: dict | None = None
    class_count: int | None = None

    # -- model lookup with earlier-checkpoint fallback -----------------------

    def _model_at(self, table: dict, t: int):
        best = None
        for cp in self.checkpoints:
            if cp > t:
                break
            if table.get(cp) is not None:
                best = table[cp]
        return best

    def estimate_distance(self, bsf_k: float | None, t: int, theta: float,
                          method: str, dw: float | None = None) -> DistanceEstimate:
        """Point estimate plus a theta-level lower bound; the hard upper
        bound is the best-so-far distance whenever one exists."""
        upper = bsf_k if bsf_k is not None else np.inf
        if method == "baseline":
            if self.baseline is None:
                raise LookupError("no baseline model in bundle")
            lo, hi = self.baseline.interval(theta)
            point = self.baseline.point()
        elif method == "witness":
            if self.witness_model is None:
                raise LookupError("no witness model in bundle")
            if dw is None:
                raise ValueError("witness estimates need the weighted witness distance")
            point, (lo, hi) = ols_predict_interval(self.witness_model, dw, theta,
                                                   sidedness="two_sided")
        elif method == "linear":
            model = self._model_at(self.linear, t)
            if model is None:
                raise LookupError(f"no linear model fitted at or before t={t}")
            point, (lo, hi) = ols_predict_interval(model, bsf_k, theta,
                                                   sidedness="lower_only")
        elif method in ("kde2", "kde3"):
            if method == "kde2":
                grid = self._model_at(self.kde2, t)
                cond_at: tuple | float = (bsf_k,)
            else:
                grid = self.kde3
                cond_at = (bsf_k, np.log2(max(t, 1)))
            if grid is None:
                raise LookupError(f"no {method} model fitted at or before t={t}")
            cond = _conditional_with_support(grid, cond_at)
            point = cond.mean()
            lo, hi = cond.quantile(theta), np.inf
        else:
            raise ValueError(f"unknown estimation method {method!r}")
        upper = min(upper, hi)
        lower = float(np.clip(lo, DISTANCE_FLOOR, upper))
        point = float(np.clip(point, lower, upper))
        return DistanceEstimate(point=point, lower=lower, upper=float(upper))

    def exact_probability(self, bsf_k: float, t: int) -> float | None:
        model = self._model_at(self.exact_prob, t)
        if model is None:
            return None
        if isinstance(model, float):
            return model
        return float(model.predict_proba(np.asarray([[bsf_k]]))[0])

    def class_probability(self, bsf_k: float, t: int, agree: float | None,
                          cls: int) -> float | None:
        if self.class_prob is None:
            return None
        model = self._model_at(self.class_prob, t)
        if model is None:
            return None
        if isinstance(model, float):
            return model
        row = _class_predictors(bsf_k, agree if self.k >= 2 else None, cls,
                                self.class_count)
        return float(model.predict_proba(row[None, :])[0])

    def time_bound(self, first_approx_distance: float, phi: float) -> int:
        key = f"{phi:g}"
        if key not in self.time_bounds:
            raise LookupError(f"no time-bound model fitted for phi={phi:g}")
        model = self.time_bounds[key]
        pred = float(model.predict(np.asarray([[first_approx_distance]]))[0])
        pred = min(max(pred, 0.0), 62.0)
        # round up to the next leaf boundary, immune to float noise in pred
        return max(1, int(np.ceil(2.0 ** pred - 1e-9)))

    # -- serialization --------------------------------------------------------

    def to_json(self) -> str:
        def table(d, conv):
            return {str(t): (None if v is None else conv(v)) for t, v in d.items()}

        def prob_entry(v):
            return v if isinstance(v, float) else {"logistic": v.to_dict()}

        doc = {
            "format": BUNDLE_FORMAT,
            "k": self.k,
            "distance": str(self.distance),
            "checkpoints": list(self.checkpoints),
            "moments": list(self.moments),
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "witness_model": self.witness_model.to_dict() if self.witness_model else None,
            "witnesses": None if self.witnesses is None else {
                "ids": self.witnesses.ids.tolist(),
                "values": self.witnesses.values.tolist(),
                "nn_distances": self.witnesses.nn_distances.tolist(),
            },
            "linear": table(self.linear, lambda m: m.to_dict()),
            "kde2": table(self.kde2, lambda g: g.to_dict()),
            "kde3": self.kde3.to_dict() if self.kde3 else None,
            "exact_prob": table(self.exact_prob, prob_entry),
            "time_bounds": {k: m.to_dict() for k, m in self.time_bounds.items()},
            "class_prob": None if self.class_prob is None
            else table(self.class_prob, prob_entry),
            "class_count": self.class_count,
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "GuaranteeBundle":
        doc = json.loads(text)
        if doc.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"unsupported bundle format {doc.get('format')!r}")

        def untable(d, conv):
            return {int(t): (None if v is None else conv(v)) for t, v in d.items()}

        def unprob(v):
            return v if isinstance(v, float) else LogisticModel.from_dict(v["logistic"])

        witnesses = None
        if doc["witnesses"] is not None:
            witnesses = WitnessSet(
                ids=np.asarray(doc["witnesses"]["ids"], dtype=np.int64),
                values=np.asarray(doc["witnesses"]["values"]),
                nn_distances=np.asarray(doc["witnesses"]["nn_distances"]),
            )
        return GuaranteeBundle(
            k=int(doc["k"]),
            distance=Distance.parse(doc["distance"]),
            checkpoints=tuple(doc["checkpoints"]),
            moments=tuple(doc["moments"]),
            baseline=BaselineModel.from_dict(doc["baseline"]) if doc["baseline"] else None,
            witness_model=(LinearModel.from_dict(doc["witness_model"])
                           if doc["witness_model"] else None),
            witnesses=witnesses,
            linear=untable(doc["linear"], LinearModel.from_dict),
            kde2=untable(doc["kde2"], KdeGrid.from_dict),
            kde3=KdeGrid.from_dict(doc["kde3"]) if doc["kde3"] else None,
            exact_prob=untable(doc["exact_prob"], unprob),
            time_bounds={k: QuantileModel.from_dict(v)
                         for k, v in doc["time_bounds"].items()},
            class_prob=(None if doc["class_prob"] is None
                        else untable(doc["class_prob"], unprob)),
            class_count=doc["class_count"],
        )


def train_bundle(tree: IndexTree, records: list[TrainingRecord],
                 witnesses: WitnessSet | None, k: int, distance: Distance,
                 checkpoints, moments, phis=(0.05, 0.01),
                 labels: np.ndarray | None = None, class_count: int | None = None,
                 bandwidth_scale: float = 1.0) -> GuaranteeBundle:
    """Fit every estimator the bundle carries from one set of records."""
    schedule = tuple(sorted(set(checkpoints) | set(moments)))
    linear, kde2, kde3 = fit_checkpoint_estimators(records, schedule,
                                                   bandwidth_scale=bandwidth_scale)
    bundle = GuaranteeBundle(
        k=k, distance=distance, checkpoints=schedule, moments=tuple(moments),
        baseline=fit_baseline(witnesses) if witnesses is not None else None,
        witness_model=(fit_query_sensitive(records, witnesses)
                       if witnesses is not None else None),
        witnesses=witnesses,
        linear=linear, kde2=kde2, kde3=kde3,
        exact_prob=fit_exact_probability(records, schedule),
        time_bounds={f"{phi:g}": fit_time_bound(records, phi) for phi in phis},
    )
    if labels is not None:
        if class_count is None:
            class_count = int(labels.max()) + 1
        bundle.class_prob = fit_class_probability(records, schedule, labels, class_count)
        bundle.class_count = class_count
    return bundle
