"""Desk-scale workbench for coarse geometry on finite weighted graphs.

Measures Gromov/Rips hyperbolicity, builds trees of metric graphs and their
total spaces, grows flow-spaces and ladders, verifies flaring conditions,
assembles hierarchical combing paths with a slim-combing hyperbolicity
certificate, and electrifies/horoballifies graphs with peripheral subsets.
"""

from hyptrees.metric_core import (
    DeltaResult,
    DistanceMatrix,
    GeodesicPath,
    MetricGraph,
    canonical_geodesic,
    delta_hyperbolicity,
    gromov_product,
    interval_set,
    net_approximation,
    rips_graph,
    shortest_path_metric,
)

__version__ = "0.1.0"

__all__ = [
    "MetricGraph",
    "DistanceMatrix",
    "GeodesicPath",
    "DeltaResult",
    "shortest_path_metric",
    "canonical_geodesic",
    "gromov_product",
    "interval_set",
    "delta_hyperbolicity",
    "rips_graph",
    "net_approximation",
    "__version__",
]
