"""k-NN classification over the progressive engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .index import IndexTree
from .models import GuaranteeBundle, majority_label
from .stopping import QueryOutcome, StoppingPolicy, run_with_policy


def majority_class(labels) -> int:
    """Most common label; ties go to the smallest class id."""
    labels = list(labels)
    if not labels:
        raise ValueError("no labels")
    return majority_label(labels)


@dataclass
class ClassificationOutcome:
    predicted_class: int
    exact_class: int | None
    correct_class: int | None
    stopped_at_leaves: int | None
    total_leaves_without_stop: int
    savings: float
    was_exact_class: bool | None
    search: QueryOutcome


def classify_progressive(tree: IndexTree, bundle: GuaranteeBundle,
                         query: np.ndarray, policy: StoppingPolicy,
                         labels: np.ndarray, correct_class: int | None = None,
                         audit: bool = True) -> ClassificationOutcome:
    """Progressive k-NN vote under a stopping policy.

    The exact class (what the non-progressive classifier would say) is
    available when auditing; the correct class is the caller's ground truth.
    """
    outcome = run_with_policy(tree, bundle, query, policy, labels=labels, audit=audit)
    predicted = majority_class(labels[outcome.ids])
    return ClassificationOutcome(
        predicted_class=predicted,
        exact_class=outcome.exact_class,
        correct_class=correct_class,
        stopped_at_leaves=outcome.stopped_at_leaves,
        total_leaves_without_stop=outcome.total_leaves_without_stop,
        savings=outcome.savings,
        was_exact_class=outcome.was_exact_class,
        search=outcome,
    )


def accuracy_ratio(stopped_accuracy: float, exact_accuracy: float) -> float:
    """Early-stopped accuracy over exact accuracy; values above 1 are legal."""
    if exact_accuracy <= 0:
        raise ValueError("exact accuracy must be positive")
    return stopped_accuracy / exact_accuracy
