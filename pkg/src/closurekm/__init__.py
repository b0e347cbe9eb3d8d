"""Approximate k-means with cluster closures over random partition trees."""

from .baselines import (closure_recall, distance_ratio_histogram, lloyd_run,
                        lloyd_transition, recall_curve)
from .closure import (ClosureConfig, ClosureState, MonotonicityError,
                      active_points, closure_assignment_step, initialize,
                      repair_empty_clusters, run, update_step)
from .core import (ClusterModel, Dataset, IterationStats, distance_ratio, nmi,
                   squared_euclidean, update_centers, wcssd)
from .data_io import (gen_gmm, read_bvecs, read_csv, read_fvecs, write_bvecs,
                      write_csv, write_fvecs)
from .rptree import (NeighborhoodIndex, RPTree, add_tree_to_index, build_tree,
                     principal_direction, route_point)

__version__ = "0.1.0"
