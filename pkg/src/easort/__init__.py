"""External-memory approximate sorting toolkit.

A block-granular approximate sort (k passes of sampled bucket
partitioning), four permutation distortion metrics with their
rate-distortion bounds, a Bloom-filter tree index over the bucketed
output, and approximate sort-merge joins. All external computation runs
on a simulated block device with exact I/O accounting.
"""

from easort.perm import (
    MetricKind,
    Permutation,
    ball_size_exhaustive,
    compose,
    d_ee,
    d_errors,
    d_esp,
    d_sp,
    identity,
    permutation_from_keys,
)
from easort.iosim import BlockStore, IoParams, IoStats, ParameterError, Workspace, create_store
from easort.sorting import (
    ApproxRun,
    BucketDescriptor,
    EasortConfig,
    compute_bucket_count,
    easort,
    materialize,
    partition_pass,
    select_pivots,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxRun",
    "BlockStore",
    "BucketDescriptor",
    "EasortConfig",
    "IoParams",
    "IoStats",
    "MetricKind",
    "ParameterError",
    "Permutation",
    "Workspace",
    "ball_size_exhaustive",
    "compose",
    "compute_bucket_count",
    "create_store",
    "d_ee",
    "d_errors",
    "d_esp",
    "d_sp",
    "easort",
    "identity",
    "materialize",
    "partition_pass",
    "permutation_from_keys",
    "select_pivots",
]
