"""Partition testing and statistical verification of small classification
networks.

The package splits into a model layer (JSON network and dataset formats,
exact forward evaluation), an activation-distance calculus (gradients,
directional derivatives, one-sided boundary derivatives), an input-space
partitioning module (cluster tags, representative maps, the two
partitioning passes), a statistics module (confidence bounds, batch
estimates, coverage simulation), and a fault-tree module for the voted
multi-sensor configuration.  ``clsverify.cli`` ties them together behind a
command-line tool of the same name.
"""

__version__ = "0.1.0"

from .errors import (ClsVerifyError, DomainError, InsufficientBatches,
                     LabelMismatch, ParseError, ShapeError, UnsupportedLayer)
from .model import (LabeledImage, LayerSpec, NetworkSpec, build_network,
                    conv2d_layer, dense_layer, flatten_layer, forward,
                    forward_batch, forward_trace, lambda_for_labels,
                    lambda_value, load_dataset, load_network, maxpool_layer,
                    omega, omega_sigmoid, outcome_of_probs, save_dataset,
                    save_network)
from .calculus import (boundary_gradient, boundary_gradient_for_labels,
                       gradient_for_labels, gradient_lambda, layer_jacobian,
                       network_jacobian, network_jvp)
from .classes import (ClusterTag, SegmentCheckConfig, TauMap, algorithm1,
                      algorithm2, classify_cluster, cls_tag, is_null_segment,
                      load_taumap, recheck_connections, save_taumap,
                      tag_from_string, tag_to_string)
from .stats import (PRNG_IDENTITY, BatchResult, CoverageSample,
                    EstimateWithUCL, ProbabilityArray, batch_stats,
                    chi2_independence, coupon_expected_draws,
                    estimate_unknown_class_bound, load_parray, mc_estimate,
                    normal_quantile, normal_ucl, outcome_kind,
                    rearrange_batches, required_sample_size, save_parray,
                    simulate_coverage, student_quantile, student_ucl)
from .risk import (RiskParams, RiskReport, fusion_hazard_rate, pfn,
                   pfn_parametric_sweep, sweep_to_csv)

__all__ = [
    "__version__",
    "ClsVerifyError", "DomainError", "InsufficientBatches", "LabelMismatch",
    "ParseError", "ShapeError", "UnsupportedLayer",
    "LabeledImage", "LayerSpec", "NetworkSpec", "build_network",
    "conv2d_layer", "dense_layer", "flatten_layer", "forward",
    "forward_batch", "forward_trace", "lambda_for_labels", "lambda_value",
    "load_dataset", "load_network", "maxpool_layer", "omega",
    "omega_sigmoid", "outcome_of_probs", "save_dataset", "save_network",
    "boundary_gradient", "boundary_gradient_for_labels",
    "gradient_for_labels", "gradient_lambda", "layer_jacobian",
    "network_jacobian", "network_jvp",
    "ClusterTag", "SegmentCheckConfig", "TauMap", "algorithm1", "algorithm2",
    "classify_cluster", "cls_tag", "is_null_segment", "load_taumap",
    "recheck_connections", "save_taumap", "tag_from_string", "tag_to_string",
    "PRNG_IDENTITY", "BatchResult", "CoverageSample", "EstimateWithUCL",
    "ProbabilityArray", "batch_stats", "chi2_independence",
    "coupon_expected_draws", "estimate_unknown_class_bound", "load_parray",
    "mc_estimate", "normal_quantile", "normal_ucl", "outcome_kind",
    "rearrange_batches", "required_sample_size", "save_parray",
    "simulate_coverage", "student_quantile", "student_ucl",
    "RiskParams", "RiskReport", "fusion_hazard_rate", "pfn",
    "pfn_parametric_sweep", "sweep_to_csv",
]
