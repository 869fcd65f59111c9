"""bioperf: measure TCP application performance on the bench.

The toolkit drives real loopback TCP workloads (a chat relay, a file
transfer, or both), reduces each run to flow factors and rates, infers
a tree topology from pairwise distances to expose path/link structure,
and estimates link utilization two ways — a byte-rate/capacity quotient
and an M/M/1 queueing baseline — so the two can be compared side by
side.
"""

from .errors import HarnessError, ValidationError
from .estimators import (
    BioEstimate,
    ComparisonReport,
    LittlesModel,
    bio_utilization,
    compare,
    littles_from_runs,
    littles_law,
)
from .flow_metrics import (
    DerivedRates,
    FactorsRow,
    FlowFactors,
    derive,
    read_factors_csv,
    write_factors_csv,
)
from .harness import (
    RunRecord,
    SessionRecord,
    TrafficServer,
    Workload,
    aggregate,
    run_client,
    serve,
)
from .path_matrix import (
    IncidenceMatrix,
    build_incidence,
    domain_of,
    incidence_from_paths,
    range_of,
    robustness,
    transpose,
)
from .phylo import DistanceMatrix, PhyloTree, midpoint_root, nj_build, paths_between_leaves

__version__ = "0.1.0"

__all__ = [
    "BioEstimate",
    "ComparisonReport",
    "DerivedRates",
    "DistanceMatrix",
    "FactorsRow",
    "FlowFactors",
    "HarnessError",
    "IncidenceMatrix",
    "LittlesModel",
    "PhyloTree",
    "RunRecord",
    "SessionRecord",
    "TrafficServer",
    "ValidationError",
    "Workload",
    "aggregate",
    "bio_utilization",
    "build_incidence",
    "compare",
    "derive",
    "domain_of",
    "incidence_from_paths",
    "littles_from_runs",
    "littles_law",
    "midpoint_root",
    "nj_build",
    "paths_between_leaves",
    "range_of",
    "read_factors_csv",
    "robustness",
    "run_client",
    "serve",
    "transpose",
    "write_factors_csv",
    "__version__",
]
