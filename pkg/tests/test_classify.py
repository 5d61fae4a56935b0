import numpy as np
import pytest

from progsearch.classify import ClassificationOutcome, accuracy_ratio, classify_progressive, majority_class
from progsearch.dataset import Dataset, generate_cbf, sample_pools
from progsearch.index import Distance, IndexConfig, build_index
from progsearch.models import build_witness_set, collect_training, train_bundle
from progsearch.search import SearchConfig
from progsearch.stopping import StoppingPolicy, plan_moments

ED = Distance("ed")


class TestMajority:
    def test_modal(self):
        assert majority_class([0, 0, 1]) == 0

    def test_tie_smallest_id(self):
        assert majority_class([1, 0]) == 0
        assert majority_class([2, 2, 1, 1]) == 1

    def test_k1(self):
        assert majority_class([7]) == 7

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            majority_class([])


class TestAccuracyRatio:
    def test_equal(self):
        assert accuracy_ratio(0.70, 0.70) == 1.0

    def test_above_one_is_legal(self):
        assert accuracy_ratio(0.72, 0.70) == pytest.approx(72 / 70)

    def test_zero_numerator(self):
        assert accuracy_ratio(0.0, 0.5) == 0.0

    def test_zero_denominator_rejected(self):
        with pytest.raises(ValueError):
            accuracy_ratio(0.5, 0.0)


@pytest.fixture(scope="module")
def labeled_setup(tmp_path_factory):
    path = tmp_path_factory.mktemp("labeled") / "cbf"
    descriptor = generate_cbf(4000, 64, 3.0, (1 / 3, 1 / 3, 1 / 3), seed=31, path=path)
    full = Dataset(descriptor)
    pools = sample_pools(descriptor, 200, 500, seed=6)
    held = np.concatenate([pools.witness_pool, pools.query_pool])
    kept = np.setdiff1d(np.arange(full.n), held)
    collection = Dataset.from_arrays(full.values[kept], labels=full.labels[kept])
    tree = build_index(collection, IndexConfig(kind="dstree", segment_count=16,
                                               leaf_threshold=50))
    rng = np.random.default_rng(8)
    witness_ids = pools.draw_witnesses(80, rng)
    train_ids, test_ids = pools.draw_queries(80, 60, rng)
    witnesses = build_witness_set(tree, witness_ids, full.values[witness_ids], ED)
    config = SearchConfig(k=5, distance=ED, checkpoints=(1, 2, 4, 8, 16, 32))
    records = collect_training(tree, train_ids, full.values[train_ids], config,
                               witnesses=witnesses)
    moments = plan_moments(records, m=8)
    bundle = train_bundle(tree, records, witnesses, k=5, distance=ED,
                          checkpoints=config.checkpoints, moments=moments,
                          labels=collection.labels, class_count=3)
    return full, collection, tree, bundle, test_ids


class TestClassifyProgressive:
    def test_single_leaf_tree_predicts_exact(self, rng):
        values = rng.normal(size=(30, 16))
        labels = rng.integers(0, 3, size=30)
        ds = Dataset.from_arrays(values, labels=labels)
        tree = build_index(ds, IndexConfig(kind="dstree", segment_count=4,
                                           leaf_threshold=64))
        from progsearch.models import GuaranteeBundle

        bundle = GuaranteeBundle(k=3, distance=ED, checkpoints=(1,), moments=(1,),
                                 class_prob={1: 1.0}, class_count=3)
        out = classify_progressive(tree, bundle, rng.normal(size=16),
                                   StoppingPolicy("none"), labels=ds.labels)
        assert isinstance(out, ClassificationOutcome)
        assert out.predicted_class == out.exact_class
        assert out.was_exact_class

    def test_none_policy_matches_exact_classifier_everywhere(self, labeled_setup):
        full, collection, tree, bundle, test_ids = labeled_setup
        for qid in test_ids[:20]:
            out = classify_progressive(tree, bundle, full.values[qid],
                                       StoppingPolicy("none"), labels=collection.labels)
            assert out.was_exact_class
            assert out.savings == 0.0

    def test_class_policy_exactness_and_savings(self, labeled_setup):
        full, collection, tree, bundle, test_ids = labeled_setup
        policy = StoppingPolicy.parse("class:0.05")
        outs = [classify_progressive(tree, bundle, full.values[qid], policy,
                                     labels=collection.labels,
                                     correct_class=int(full.labels[qid]))
                for qid in test_ids]
        exact_cls = np.mean([o.was_exact_class for o in outs])
        assert exact_cls >= 0.80
        assert any(o.stopped_at_leaves is not None for o in outs)

    def test_exact_class_dominates_exact_answer(self, labeled_setup):
        """Set-level form: at any checkpoint, #exact-class >= #exact-answer."""
        from progsearch.search import progressive_knn
        from progsearch.models import majority_label

        full, collection, tree, bundle, test_ids = labeled_setup
        config = SearchConfig(k=5, distance=ED, checkpoints=(1, 2, 4, 8, 16, 32))
        for t in (1, 4, 16):
            n_exact_answer = n_exact_class = 0
            for qid in test_ids[:30]:
                trace = progressive_knn(tree, full.values[qid], config)
                if t > trace.total_leaves:
                    t_eff = trace.total_leaves
                else:
                    t_eff = t
                dists, ids = trace.bsf_at(t_eff)
                if not np.isfinite(dists[-1]):
                    continue
                exact_answer = trace.exact_at(t_eff)
                exact_class = (majority_label(collection.labels[ids])
                               == majority_label(collection.labels[trace.exact_ids]))
                n_exact_answer += int(exact_answer)
                n_exact_class += int(exact_class)
                assert not (exact_answer and not exact_class)
            assert n_exact_class >= n_exact_answer
