"""Stopping criteria over progressive searches, with savings accounting.

Decisions happen only at scheduled moments (a fixed number of uniform leaf
counts), never between them, so the number of sequential tests a query is
exposed to stays bounded and known in advance.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .index import Distance, IndexTree
from .models import GuaranteeBundle, TrainingRecord, agreement, majority_label
from .search import SearchConfig, SearchTrace, progressive_knn, relative_error

DEFAULT_MOMENT_COUNT = 16


@dataclass(frozen=True)
class StoppingPolicy:
    """One of: none, distance_error(epsilon, theta), time_bound(phi),
    probability(phi), class_probability(phi_c)."""

    kind: str
    epsilon: float | None = None
    theta: float | None = None
    phi: float | None = None
    phi_c: float | None = None
    estimator: str = "kde2"

    def __post_init__(self):
        kinds = ("none", "distance_error", "time_bound", "probability",
                 "class_probability")
        if self.kind not in kinds:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "distance_error":
            if not (self.epsilon and self.epsilon > 0):
                raise ValueError("distance_error needs epsilon > 0")
            if not (self.theta and 0 < self.theta < 1):
                raise ValueError("distance_error needs theta in (0, 1)")
        if self.kind == "time_bound" and not (self.phi and 0 < self.phi < 1):
            raise ValueError("time_bound needs phi in (0, 1)")
        if self.kind == "probability" and not (self.phi and 0 < self.phi < 1):
            raise ValueError("probability needs phi in (0, 1)")
        if self.kind == "class_probability" and not (self.phi_c and 0 < self.phi_c < 1):
            raise ValueError("class_probability needs phi_c in (0, 1)")

    @staticmethod
    def parse(spec: str) -> "StoppingPolicy":
        """Accepts none | error:<eps>:<theta> | time:<phi> | prob:<phi> | class:<phi_c>."""
        parts = spec.split(":")
        try:
            if parts[0] == "none":
                return StoppingPolicy("none")
            if parts[0] == "error":
                return StoppingPolicy("distance_error", epsilon=float(parts[1]),
                                      theta=float(parts[2]))
            if parts[0] == "time":
                return StoppingPolicy("time_bound", phi=float(parts[1]))
            if parts[0] == "prob":
                return StoppingPolicy("probability", phi=float(parts[1]))
            if parts[0] == "class":
                return StoppingPolicy("class_probability", phi_c=float(parts[1]))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"bad policy spec {spec!r}") from exc
        raise ValueError(f"bad policy spec {spec!r}")

    def __str__(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "distance_error":
            return f"error:{self.epsilon:g}:{self.theta:g}"
        if self.kind == "time_bound":
            return f"time:{self.phi:g}"
        if self.kind == "probability":
            return f"prob:{self.phi:g}"
        return f"class:{self.phi_c:g}"


def plan_moments(records: list[TrainingRecord], m: int = DEFAULT_MOMENT_COUNT
                 ) -> tuple[int, ...]:
    """m uniform leaf counts; the last equals the slowest training query's
    time to its exact answer."""
    if not records:
        raise ValueError("no training records")
    t_last = max(int(r.trace.leaves_to_exact[-1]) for r in records)
    moments = sorted({int(np.ceil(i * t_last / m)) for i in range(1, m + 1)})
    return tuple(moments)


@dataclass(frozen=True)
class Decision:
    stop: bool
    reason: str | None = None


def decide(policy: StoppingPolicy, bundle: GuaranteeBundle, leaves: int,
           bsf_k: float, first_approx_distance: float | None = None,
           bsf_labels=None) -> Decision:
    """Pure decision at one scheduled moment; missing models mean continue."""
    if policy.kind == "none" or not np.isfinite(bsf_k):
        return Decision(False)
    if policy.kind == "distance_error":
        try:
            est = bundle.estimate_distance(bsf_k, leaves, policy.theta, policy.estimator)
        except LookupError:
            return Decision(False)
        err_upper = relative_error(bsf_k, est.lower)
        if err_upper < policy.epsilon:
            return Decision(True, f"error bound {err_upper:.4f} < {policy.epsilon:g}")
        return Decision(False)
    if policy.kind == "time_bound":
        if first_approx_distance is None or not np.isfinite(first_approx_distance):
            return Decision(False)
        try:
            tau = bundle.time_bound(first_approx_distance, policy.phi)
        except LookupError:
            return Decision(False)
        if leaves >= tau:
            return Decision(True, f"leaves {leaves} >= time bound {tau}")
        return Decision(False)
    if policy.kind == "probability":
        p = bundle.exact_probability(bsf_k, leaves)
        if p is not None and p >= 1 - policy.phi:
            return Decision(True, f"p_exact {p:.4f} >= {1 - policy.phi:g}")
        return Decision(False)
    # class_probability
    if bsf_labels is None:
        return Decision(False)
    if bundle.k >= 2:
        agree, cls = agreement(bsf_labels)
    else:
        agree, cls = None, int(bsf_labels[0])
    p = bundle.class_probability(bsf_k, leaves, agree, cls)
    if p is not None and p >= 1 - policy.phi_c:
        return Decision(True, f"p_class {p:.4f} >= {1 - policy.phi_c:g}")
    return Decision(False)


@dataclass
class QueryOutcome:
    ids: np.ndarray
    distances: np.ndarray
    stopped_at_leaves: int | None
    total_leaves_without_stop: int
    stop_reason: str | None = None
    predicted_class: int | None = None
    exact_class: int | None = None
    was_exact: np.ndarray | None = None
    was_exact_class: bool | None = None
    wallclock_stopped_ns: int | None = None
    wallclock_total_ns: int | None = None

    @property
    def savings(self) -> float:
        if self.stopped_at_leaves is None:
            return 0.0
        total = self.total_leaves_without_stop
        return (total - self.stopped_at_leaves) / total

    @property
    def all_exact(self) -> bool | None:
        if self.was_exact is None:
            return None
        return bool(np.all(self.was_exact))


def _planned_time_stop(bundle: GuaranteeBundle, policy: StoppingPolicy,
                       first_approx: float) -> int | None:
    """The time-bound criterion is a planned stop at one leaf boundary,
    fixed from the first approximate answer; it is not moment-gated because
    a single pre-committed estimate exposes no sequential testing."""
    if not np.isfinite(first_approx):
        return None
    try:
        return bundle.time_bound(first_approx, policy.phi)
    except LookupError:
        return None


def simulate_policy(trace: SearchTrace, bundle: GuaranteeBundle,
                    policy: StoppingPolicy, labels: np.ndarray | None = None
                    ) -> QueryOutcome:
    """Replay the decision sequence against a completed trace.

    ``decide`` is pure given (policy, bundle, moment state), so the replay
    is guaranteed to match what a live run with the same policy does.
    """
    if trace.exact_distances is None:
        raise ValueError("simulation needs a completed trace")
    first_approx = trace.first_approximate_distance()
    stopped_at = None
    reason = None
    if policy.kind == "time_bound":
        tau = _planned_time_stop(bundle, policy, first_approx)
        if tau is not None and tau <= trace.total_leaves:
            stopped_at = tau
            reason = f"planned time bound {tau} leaves"
    elif policy.kind != "none":
        for t in bundle.moments:
            if t > trace.total_leaves:
                break
            dists, ids = trace.bsf_at(t)
            bsf_k = float(dists[-1])
            bsf_labels = labels[ids] if (labels is not None and np.isfinite(bsf_k)) else None
            decision = decide(policy, bundle, t, bsf_k, first_approx, bsf_labels)
            if decision.stop:
                stopped_at = t
                reason = decision.reason
                break
    if stopped_at is None:
        dists, ids = trace.exact_distances, trace.exact_ids
    else:
        dists, ids = trace.bsf_at(stopped_at)
    outcome = QueryOutcome(
        ids=ids.copy(),
        distances=dists.copy(),
        stopped_at_leaves=stopped_at,
        total_leaves_without_stop=trace.total_leaves,
        stop_reason=reason,
        wallclock_stopped_ns=trace.wallclock_at(stopped_at) if stopped_at else None,
        wallclock_total_ns=trace.total_wallclock_ns,
    )
    outcome.was_exact = np.array([
        dists[i] == trace.exact_distances[i] and ids[i] == trace.exact_ids[i]
        for i in range(trace.k)
    ])
    if labels is not None:
        outcome.predicted_class = majority_label(labels[ids])
        outcome.exact_class = majority_label(labels[trace.exact_ids])
        outcome.was_exact_class = outcome.predicted_class == outcome.exact_class
    return outcome


def run_with_policy(tree: IndexTree, bundle: GuaranteeBundle, query: np.ndarray,
                    policy: StoppingPolicy, labels: np.ndarray | None = None,
                    audit: bool = True) -> QueryOutcome:
    """Execute a progressive search under a stopping policy.

    With ``audit=True`` the search runs to completion once and the policy is
    replayed over the trace, so exactness and savings are measured against
    ground truth.  With ``audit=False`` the stop really happens early and
    audit fields stay unset.
    """
    if policy.kind == "class_probability" and (labels is None or bundle.class_prob is None):
        raise ValueError("class policies need labels and a class-trained bundle")
    config = SearchConfig(k=bundle.k, distance=bundle.distance,
                          checkpoints=tuple(sorted({1, *bundle.moments})))
    if audit:
        trace = progressive_knn(tree, query, config)
        return simulate_policy(trace, bundle, policy, labels)

    stop = threading.Event()
    state = {"first_approx": None, "reason": None}
    checkpoints = config.checkpoints

    if policy.kind == "time_bound":
        from .index import approximate_search

        approx = approximate_search(tree, query, bundle.k, bundle.distance)
        first_approx = approx[-1][1] if len(approx) == bundle.k else np.inf
        tau = _planned_time_stop(bundle, policy, first_approx)
        if tau is not None:
            checkpoints = tuple(sorted({1, tau}))

        def on_event(event):
            if tau is not None and event.leaves_visited >= tau:
                state["reason"] = f"planned time bound {tau} leaves"
                stop.set()
    else:
        def on_event(event):
            bsf_k = float(event.bsf_distances[-1])
            if state["first_approx"] is None and np.isfinite(bsf_k):
                state["first_approx"] = bsf_k
            if event.leaves_visited not in bundle.moments:
                return
            bsf_labels = (labels[event.bsf_ids] if labels is not None
                          and np.isfinite(bsf_k) else None)
            decision = decide(policy, bundle, event.leaves_visited, bsf_k,
                              state["first_approx"], bsf_labels)
            if decision.stop:
                state["reason"] = decision.reason
                stop.set()

    live_config = SearchConfig(k=config.k, distance=config.distance,
                               checkpoints=checkpoints, stop=stop)
    trace = progressive_knn(tree, query, live_config, on_event=on_event)
    dists, ids = trace.bsf_at(trace.total_leaves)
    outcome = QueryOutcome(
        ids=ids, distances=dists,
        stopped_at_leaves=trace.stopped_early_at,
        total_leaves_without_stop=trace.total_leaves,
        stop_reason=state["reason"],
        wallclock_total_ns=trace.total_wallclock_ns,
    )
    if labels is not None:
        outcome.predicted_class = majority_label(labels[ids])
    return outcome
