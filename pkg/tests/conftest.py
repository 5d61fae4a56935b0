from dataclasses import dataclass

import numpy as np
import pytest

from progsearch.dataset import Dataset, generate_random_walk, sample_pools
from progsearch.index import Distance, IndexConfig, build_index
from progsearch.models import build_witness_set, collect_training, train_bundle
from progsearch.search import SearchConfig
from progsearch.stopping import plan_moments


@pytest.fixture(scope="session")
def walk_descriptor(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "walk2k"
    return generate_random_walk(2000, 32, seed=11, path=path)


@pytest.fixture(scope="session")
def walk_dataset(walk_descriptor):
    return Dataset(walk_descriptor)


@pytest.fixture(scope="session")
def small_trees(walk_dataset):
    return {
        kind: build_index(walk_dataset, IndexConfig(kind=kind, segment_count=8,
                                                    leaf_threshold=40))
        for kind in ("isax", "dstree")
    }


@pytest.fixture()
def rng(request):
    # stable per-test stream: statistical tolerances stay order-independent
    import zlib

    return np.random.default_rng(zlib.crc32(request.node.nodeid.encode()))


@dataclass
class TrainedSetup:
    """One fitted pipeline over a held-out split, shared across tests."""

    full: Dataset
    collection: Dataset
    tree: object
    witnesses: object
    records: list
    bundle: object
    config: SearchConfig
    train_ids: np.ndarray
    test_ids: np.ndarray


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    path = tmp_path_factory.mktemp("trained") / "walk4k"
    descriptor = generate_random_walk(4000, 32, seed=23, path=path)
    full = Dataset(descriptor)
    pools = sample_pools(descriptor, 400, 500, seed=5)
    held_out = np.concatenate([pools.witness_pool, pools.query_pool])
    kept = np.setdiff1d(np.arange(full.n), held_out)
    collection = Dataset.from_arrays(full.values[kept])
    tree = build_index(collection, IndexConfig(kind="dstree", segment_count=8,
                                               leaf_threshold=50))
    distance = Distance("ed")
    rng = np.random.default_rng(77)
    witness_ids = pools.draw_witnesses(200, rng)
    train_ids, test_ids = pools.draw_queries(60, 40, rng)
    witnesses = build_witness_set(tree, witness_ids, full.values[witness_ids], distance)
    config = SearchConfig(k=3, distance=distance, checkpoints=(1, 2, 4, 8, 16, 32))
    records = collect_training(tree, train_ids, full.values[train_ids], config,
                               witnesses=witnesses)
    moments = plan_moments(records, m=8)
    bundle = train_bundle(tree, records, witnesses, k=3, distance=distance,
                          checkpoints=config.checkpoints, moments=moments)
    return TrainedSetup(full=full, collection=collection, tree=tree,
                        witnesses=witnesses, records=records, bundle=bundle,
                        config=config, train_ids=train_ids, test_ids=test_ids)
