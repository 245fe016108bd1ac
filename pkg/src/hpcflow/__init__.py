"""Cluster-agnostic toolkit for container-based distributed training on HPC.

Generates and validates every artifact of the workflow: Dockerfiles and
their smell reports, version-reconciling entrypoint scripts, container
setup command sequences, batch job scripts, and multi-GPU scaling
predictions with benchmark statistics.
"""

from hpcflow.errors import (
    BenchLogError,
    DockerfileError,
    HpcflowError,
    LaunchError,
    ProfileError,
    ReconcileError,
    RunnerError,
)
from hpcflow.profiles import (
    ClusterProfile,
    EnvironmentSpec,
    SemVer,
    ValidationIssue,
    parse_cluster_profile,
    parse_env_spec,
    render_cluster_profile,
    validate_profile,
)

__version__ = "0.1.0"

__all__ = [
    "BenchLogError",
    "ClusterProfile",
    "DockerfileError",
    "EnvironmentSpec",
    "HpcflowError",
    "LaunchError",
    "ProfileError",
    "ReconcileError",
    "RunnerError",
    "SemVer",
    "ValidationIssue",
    "parse_cluster_profile",
    "parse_env_spec",
    "render_cluster_profile",
    "validate_profile",
    "__version__",
]
