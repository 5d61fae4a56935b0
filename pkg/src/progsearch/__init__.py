"""Progressive k-NN similarity search and classification with trainable
probabilistic guarantees and early-stopping policies."""

from .dataset import Dataset, DatasetDescriptor, generate_cbf, generate_random_walk
from .index import Distance, IndexConfig, approximate_search, build_index, load_index, save_index
from .models import GuaranteeBundle, train_bundle
from .search import SearchConfig, brute_force_knn, progressive_knn
from .stopping import StoppingPolicy, run_with_policy

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DatasetDescriptor",
    "Distance",
    "GuaranteeBundle",
    "IndexConfig",
    "SearchConfig",
    "StoppingPolicy",
    "approximate_search",
    "brute_force_knn",
    "build_index",
    "generate_cbf",
    "generate_random_walk",
    "load_index",
    "progressive_knn",
    "run_with_policy",
    "save_index",
    "train_bundle",
    "__version__",
]
