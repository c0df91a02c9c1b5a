from ._core import (
    Environment,
    cluster_sizes,
    coupling_errors,
    default_spec,
    estimate_alpha_ecf,
    estimate_alpha_hill,
    experiment_names,
    run_experiment,
    run_walk,
    sample_stable,
)

__all__ = [
    "Environment",
    "cluster_sizes",
    "coupling_errors",
    "default_spec",
    "estimate_alpha_ecf",
    "estimate_alpha_hill",
    "experiment_names",
    "run_experiment",
    "run_walk",
    "sample_stable",
]
