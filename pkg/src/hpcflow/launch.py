"""Turn cluster + reconcile plan + job request into launch artifacts.

Produces the mpirun invocation (one rank per GPU), the batch script with
scheduler directives, the container setup command sequence, and the
runtime install script.  Everything here is pure rendering; nothing is
executed.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field

from hpcflow.errors import LaunchError
from hpcflow.profiles import ClusterProfile
from hpcflow.recon import ReconcilePlan, is_identifier

_WALLTIME_RE = re.compile(r"^\d{1,3}:\d{2}:\d{2}$")

# commands that would need elevated rights; generated scripts must never
# contain any of these as a shell word
PRIVILEGED_TOKENS = frozenset({"sudo", "su", "doas", "pkexec", "setcap", "visudo"})


@dataclass(frozen=True)
class LaunchConfig:
    """Cluster-independent knobs for command rendering.

    The mpirun transport flags follow the common Horovod launch pattern
    (NCCL carries GPU collectives, MPI the rest); they are configurable
    because MCA option syntax differs between OpenMPI major versions.
    """

    transport_args: tuple[str, ...] = ("-mca", "pml", "ob1", "-mca", "btl", "^openib")
    user_map_args: tuple[str, ...] = ("--hostauth", "--user=$USER")
    udocker_release_url: str = (
        "https://github.com/indigo-dc/udocker/releases/download/"
        "1.3.17/udocker-1.3.17.tar.gz"
    )
    install_prefix: str = "$HOME/.local/udocker"


DEFAULT_LAUNCH_CONFIG = LaunchConfig()


@dataclass(frozen=True)
class JobRequest:
    """What the researcher wants to run and where."""

    nodes: int
    gpus_per_node: int
    container_name: str
    image_ref: str
    workdir_mount: tuple[str, str]
    user_command: tuple[str, ...]
    job_name: str = "hpcflow-job"
    walltime: str = "01:00:00"
    extra_env: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class LaunchPlan:
    """Concrete process layout and argument lists for one job.

    ``env_exports`` maps variable names to values; a value of ``None``
    means the variable is forwarded from the submitting environment
    (``-x NAME`` only, no export line).
    """

    total_ranks: int
    slots_per_node: int
    mpirun_args: tuple[str, ...]
    env_exports: dict[str, str | None]
    udocker_run_args: tuple[str, ...]
    scheduler_directives: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class JobScript:
    text: str
    scheduler: str
    plan: LaunchPlan


def plan_launch(
    cluster: ClusterProfile,
    recon: ReconcilePlan,
    req: JobRequest,
    config: LaunchConfig = DEFAULT_LAUNCH_CONFIG,
) -> LaunchPlan:
    """Lay out one rank per GPU across the requested nodes.

    Raises:
        LaunchError: when the request exceeds the cluster's capacity, the
            container name is not an identifier, the walltime is not
            HH:MM:SS, or the user command is empty for a strategy whose
            image has no entrypoint to fall back on.
    """
    if req.nodes < 1 or req.gpus_per_node < 1:
        raise LaunchError("nodes and gpus_per_node must be >= 1")
    if req.nodes > cluster.gpu_nodes:
        raise LaunchError(
            f"request needs {req.nodes} nodes but cluster {cluster.name} "
            f"has {cluster.gpu_nodes} GPU nodes"
        )
    if req.gpus_per_node > cluster.gpus_per_node:
        raise LaunchError(
            f"request needs {req.gpus_per_node} GPUs per node but cluster "
            f"{cluster.name} has {cluster.gpus_per_node}"
        )
    if not is_identifier(req.container_name):
        raise LaunchError(f"container name {req.container_name!r} is not an identifier")
    if not _WALLTIME_RE.match(req.walltime):
        raise LaunchError(f"walltime {req.walltime!r} is not HH:MM:SS")
    if not req.user_command and recon.strategy_used != "entrypoint":
        raise LaunchError(
            "user command is empty and the image has no version-installing "
            "entrypoint to fall back on"
        )

    total_ranks = req.nodes * req.gpus_per_node

    env_exports: dict[str, str | None] = {
        "NCCL_DEBUG": "INFO",
        "PATH": None,
        "LD_LIBRARY_PATH": None,
    }
    for key in sorted(req.extra_env):
        env_exports[key] = req.extra_env[key]

    mpirun_args = [
        "-np",
        str(total_ranks),
        "--map-by",
        f"ppr:{req.gpus_per_node}:node",
        "-bind-to",
        "none",
        *config.transport_args,
    ]
    for key in env_exports:
        mpirun_args.extend(("-x", key))

    udocker_run_args = [
        *config.user_map_args,
        f"--volume={req.workdir_mount[0]}:{req.workdir_mount[1]}",
        *(f"--volume={src}:{dst}" for src, dst in cluster.default_mounts),
        req.container_name,
        *recon.runtime_args,
        *req.user_command,
    ]

    directives = [
        ("job-name", req.job_name),
        ("nodes", str(req.nodes)),
        ("ntasks-per-node", str(req.gpus_per_node)),
        ("gres", f"gpu:{req.gpus_per_node}"),
        ("time", req.walltime),
    ]
    if cluster.partition is not None:
        directives.append(("partition", cluster.partition))
    if cluster.account is not None:
        directives.append(("account", cluster.account))

    return LaunchPlan(
        total_ranks=total_ranks,
        slots_per_node=req.gpus_per_node,
        mpirun_args=tuple(mpirun_args),
        env_exports=env_exports,
        udocker_run_args=tuple(udocker_run_args),
        scheduler_directives=tuple(directives),
    )


def render_job_script(
    plan: LaunchPlan, cluster: ClusterProfile, req: JobRequest
) -> JobScript:
    """Render the batch script: directives, module loads, exports, launcher.

    Raises:
        LaunchError: for scheduler 'none'; local execution goes through
            the mock runtime instead.
    """
    if cluster.scheduler == "none":
        raise LaunchError(
            f"cluster {cluster.name} has no batch scheduler; use the mock "
            "runtime for local execution"
        )
    lines = ["#!/bin/sh"]
    for key, value in plan.scheduler_directives:
        lines.append(f"#SBATCH --{key}={value}")
    for module in cluster.module_loads:
        lines.append(f"module load {module}")
    for key, value in plan.env_exports.items():
        if value is not None:
            lines.append(f"export {key}={value}")
    launcher = " ".join(
        [
            "mpirun",
            *plan.mpirun_args,
            cluster.container_runtime_path,
            "run",
            *plan.udocker_run_args,
        ]
    )
    lines.append(launcher)
    return JobScript(text="\n".join(lines) + "\n", scheduler=cluster.scheduler, plan=plan)


def render_udocker_setup(recon: ReconcilePlan, container_name: str) -> list[list[str]]:
    """Command sequence that pulls, creates, and configures a container.

    For the entrypoint strategy a fourth command performs the first run,
    which installs the cluster's versions; other strategies need no
    install run.

    Raises:
        LaunchError: for container names that are not identifiers.
    """
    if not is_identifier(container_name):
        raise LaunchError(f"container name {container_name!r} is not an identifier")
    commands = [
        ["udocker", "pull", recon.image_ref],
        ["udocker", "create", f"--name={container_name}", recon.image_ref],
        ["udocker", "setup", "--nvidia", container_name],
    ]
    if recon.strategy_used == "entrypoint":
        commands.append(["udocker", "run", container_name, *recon.runtime_args])
    return commands


def render_install_script(
    config: LaunchConfig = DEFAULT_LAUNCH_CONFIG, prefix: str | None = None
) -> str:
    """Script installing the container runtime into a user-writable prefix.

    Downloads the configured release tarball, extracts it, and prints the
    directory to prepend to PATH.  No step needs rights beyond the user's
    own.
    """
    prefix_value = prefix if prefix is not None else config.install_prefix
    return f"""#!/bin/sh
# Install the rootless container runtime under a user-writable prefix.
set -eu

PREFIX={prefix_value}
TARBALL=$PREFIX/udocker-release.tar.gz

mkdir -p "$PREFIX"
curl -L -o "$TARBALL" {config.udocker_release_url}
tar -xzf "$TARBALL" -C "$PREFIX" --strip-components=1
rm -f "$TARBALL"
echo "prepend to PATH: $PREFIX"
"""


def find_privileged_tokens(text: str) -> list[str]:
    """Shell words in ``text`` that imply elevated rights (sorted, unique)."""
    found = set()
    for line in text.splitlines():
        try:
            words = shlex.split(line, posix=True)
        except ValueError:
            words = line.split()
        found.update(w for w in words if w in PRIVILEGED_TOKENS)
    return sorted(found)
