"""Simulated massively-parallel facility location and k-means.

A numpy library implementing a primal-dual facility-location pipeline with
Lagrangian-multiplier-preserving guarantees on a simulated synchronous
cluster, its reduction to k-means by opening-cost bracketing and randomized
rounding, the sparse metric graph both run on, and brute-force oracles that
verify every quantization sandwich at desk scale.
"""

from .constants import ConstantTable, make_constants
from .core import (FLInstance, KMeansInstance, NormalizeResult, PointSet,
                   cost, cost_matrix, normalize, normalize_instance, project,
                   relaxed_triangle_holds)
from .errors import (AccountingError, BuildError, CertificateError,
                     InputError, PipelineError)
from .facility import (DualState, FLSolution, SolveConfig,
                       certified_solution, lmp_dual_oracle, solve_fl,
                       verify_lmp)
from .kmeans import (KMeansSolution, LambdaBracket, evaluate_cost,
                     evaluate_cost_approx, randomized_round, search_lambda,
                     select_f2prime, solve_kmeans)
from .oracles import (bruteforce_fl_opt, bruteforce_kmeans_opt,
                      exact_alpha_star, exact_radii, jv_sequential)
from .runtime import ClusterConfig, RoundLedger, Runtime
from .rulingsets import (UnweightedGraphView, luby_cover_step, mis,
                         ruling_set_2b, weighted_cover_set)
from .spanner import (LshParams, SpannerGraph, ball_plus, build_scale_graph,
                      build_spanner, exact_mode_spanner, two_hop_distance)

__version__ = "0.1.0"
