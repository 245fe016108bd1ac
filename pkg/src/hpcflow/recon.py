"""Reconcile image and cluster OpenMPI/Horovod versions.

Three strategies are supported: picking a version-encoding image tag,
checking a prebuilt (NGC-style) image against the cluster, or deferring
installation to an entrypoint script executed at first container start.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from hpcflow.errors import ReconcileError
from hpcflow.profiles import DEFAULT_REGISTRY, ClusterProfile, EnvironmentSpec, SemVer

_TAG_RE = re.compile(r"^ompi(\d+)\.(\d+)(?:-[A-Za-z0-9._-]+)?$")
_IDENTIFIER_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

STATE_DIR_ENV = "HPCFLOW_STATE_DIR"
DEFAULT_STATE_DIR = "/opt/.hpcflow"


@dataclass(frozen=True)
class InstallerConfig:
    """Shell command templates used wherever versions get installed.

    Templates may use the placeholders ``{openmpi_version}`` and
    ``{horovod_version}``; in generated shell contexts these resolve to
    variable references, so one template serves both the entrypoint script
    (runtime arguments) and Dockerfile RUN steps (build arguments).
    """

    openmpi_install: str = (
        "wget -q -O /tmp/openmpi.tar.gz "
        "https://download.open-mpi.org/release/open-mpi/"
        "v$(echo {openmpi_version} | cut -d. -f1,2)/openmpi-{openmpi_version}.tar.gz"
        " && tar -xzf /tmp/openmpi.tar.gz -C /tmp"
        " && cd /tmp/openmpi-{openmpi_version}"
        " && ./configure --prefix=/usr/local && make -j4 install && ldconfig"
        " && cd / && rm -rf /tmp/openmpi.tar.gz /tmp/openmpi-{openmpi_version}"
    )
    horovod_install: str = (
        "HOROVOD_WITH_MPI=1 pip install --no-cache-dir horovod=={horovod_version}"
    )
    system_packages_install: str = (
        "apt-get update && apt-get install -y --no-install-recommends {packages}"
        " && rm -rf /var/lib/apt/lists/*"
    )


DEFAULT_INSTALLERS = InstallerConfig()


@dataclass(frozen=True)
class ReconcilePlan:
    """Resolved image reference plus the arguments the run command needs."""

    image_ref: str
    runtime_args: tuple[str, ...]
    strategy_used: str
    match_note: str


def versions_match(image_version: SemVer, cluster_version: SemVer) -> bool:
    """Decide whether two OpenMPI versions are interchangeable.

    Match means equal major.minor; the patch level is compared only when
    both sides actually stated one.  This predicate is the single place
    where match granularity is defined.
    """
    if image_version.major_minor() != cluster_version.major_minor():
        return False
    if image_version.patch_specified and cluster_version.patch_specified:
        return image_version.patch == cluster_version.patch
    return True


def encoded_tag_version(tag: str) -> tuple[int, int] | None:
    """Extract the (major, minor) encoded in an ``ompiM.m[-variant]`` tag."""
    m = _TAG_RE.match(tag)
    if m is None:
        return None
    return (int(m.group(1)), int(m.group(2)))


def select_tag(available_tags: list[str], cluster_mpi: SemVer) -> str:
    """Pick the image tag matching the cluster's OpenMPI major.minor.

    Tags that do not follow the ``ompiM.m[-variant]`` convention are
    ignored.  Ties between variants are broken lexicographically so the
    choice is deterministic.

    Raises:
        ReconcileError: when no tag encodes the cluster's major.minor.
    """
    wanted = cluster_mpi.major_minor()
    matches = []
    encoded = []
    for tag in available_tags:
        version = encoded_tag_version(tag)
        if version is None:
            continue
        encoded.append(version)
        if version == wanted:
            matches.append(tag)
    if not matches:
        known = ", ".join(sorted({f"{M}.{m}" for M, m in encoded})) or "none"
        raise ReconcileError(
            f"no tag for OpenMPI {wanted[0]}.{wanted[1]} (encoded versions available: {known})"
        )
    return min(matches)


def _repo_without_tag(image_ref: str) -> str:
    head, sep, last = image_ref.rpartition("/")
    if ":" in last:
        last = last.rsplit(":", 1)[0]
    return f"{head}{sep}{last}" if sep else last


def resolve_image_ref(spec: EnvironmentSpec, tag: str | None = None) -> str:
    """Build the full reference to pull, honouring a non-default registry."""
    ref = spec.base_image if tag is None else f"{_repo_without_tag(spec.base_image)}:{tag}"
    if spec.registry and spec.registry != DEFAULT_REGISTRY:
        return f"{spec.registry}/{ref}"
    return ref


def reconcile(
    spec: EnvironmentSpec,
    cluster: ClusterProfile,
    available_tags: list[str] | None = None,
) -> ReconcilePlan:
    """Produce the image reference and run arguments for one cluster.

    * ``tags``: resolve the tag encoding the cluster's OpenMPI major.minor
      (``available_tags`` is required); nothing to pass at run time.
    * ``ngc``: keep the image as-is but check its pinned OpenMPI against
      the cluster's; a mismatch is an error.
    * ``entrypoint``: keep the image as-is and pass the cluster's OpenMPI
      version plus the requested Horovod version as run arguments.

    Raises:
        ReconcileError: on a version mismatch, a missing tag, or missing
            ``available_tags`` for the tags strategy.
    """
    if spec.strategy == "tags":
        if available_tags is None:
            raise ReconcileError("strategy 'tags' needs the list of available image tags")
        tag = select_tag(available_tags, cluster.openmpi_version)
        return ReconcilePlan(
            image_ref=resolve_image_ref(spec, tag=tag),
            runtime_args=(),
            strategy_used="tags",
            match_note=(
                f"tag {tag} encodes OpenMPI "
                f"{cluster.openmpi_version.major}.{cluster.openmpi_version.minor}, "
                f"matching cluster {cluster.name}"
            ),
        )
    if spec.strategy == "ngc":
        assert spec.openmpi_version is not None  # enforced at parse time
        if not versions_match(spec.openmpi_version, cluster.openmpi_version):
            raise ReconcileError(
                f"image OpenMPI {spec.openmpi_version} does not match cluster "
                f"{cluster.name} OpenMPI {cluster.openmpi_version} "
                "(prebuilt images only work where their versions match)"
            )
        return ReconcilePlan(
            image_ref=resolve_image_ref(spec),
            runtime_args=(),
            strategy_used="ngc",
            match_note=(
                f"image OpenMPI {spec.openmpi_version} vs cluster "
                f"{cluster.openmpi_version}: major.minor match"
            ),
        )
    # entrypoint: the script inside the image installs what the cluster has
    return ReconcilePlan(
        image_ref=resolve_image_ref(spec),
        runtime_args=(str(cluster.openmpi_version), spec.horovod_version),
        strategy_used="entrypoint",
        match_note=(
            f"entrypoint installs OpenMPI {cluster.openmpi_version} and "
            f"Horovod {spec.horovod_version} on first start"
        ),
    )


def default_cmd_args(spec: EnvironmentSpec) -> tuple[str, str]:
    """Default version arguments baked into a generated image's CMD.

    They are overridden at run time by :func:`reconcile`'s runtime
    arguments, but the image needs a working default pair.

    Raises:
        ReconcileError: when the environment spec has no openmpi_version.
    """
    if spec.openmpi_version is None:
        raise ReconcileError(
            "entrypoint-strategy images bake default version arguments into CMD; "
            "set openmpi_version in the environment spec"
        )
    return (str(spec.openmpi_version), spec.horovod_version)


def is_identifier(name: str) -> bool:
    """True for names safe to use as container identifiers (no whitespace)."""
    return _IDENTIFIER_RE.match(name) is not None


def _fill(template: str, openmpi: str, horovod: str) -> str:
    return template.format(openmpi_version=openmpi, horovod_version=horovod)


def generate_entrypoint(installers: InstallerConfig = DEFAULT_INSTALLERS) -> str:
    """Generate the POSIX shell entrypoint script.

    Behavioural contract:

    1. arguments 1 and 2 are the OpenMPI and Horovod versions; missing
       arguments print usage on stderr and exit 2;
    2. a marker file ``<state_dir>/installed-<ompi>-<hvd>`` (state dir
       ``/opt/.hpcflow``, overridable via ``HPCFLOW_STATE_DIR``) makes the
       installation step a no-op when present;
    3. otherwise the configured installer commands run and the marker is
       written atomically (temp file + rename);
    4. the process replaces itself with arguments 3..N, or with
       ``/bin/bash`` when none are given;
    5. an installer failure propagates its exit code and leaves no marker.

    The output is a pure function of ``installers``, so it is byte-stable.
    """
    openmpi_cmd = _fill(installers.openmpi_install, "${OPENMPI_VERSION}", "${HOROVOD_VERSION}")
    horovod_cmd = _fill(installers.horovod_install, "${OPENMPI_VERSION}", "${HOROVOD_VERSION}")
    return f"""#!/bin/sh
# Install the requested OpenMPI/Horovod pair on first start, then hand
# control to the user command.
set -eu

if [ "$#" -lt 2 ]; then
    echo "usage: $0 <openmpi_version> <horovod_version> [command...]" >&2
    exit 2
fi

OPENMPI_VERSION=$1
HOROVOD_VERSION=$2
shift 2

STATE_DIR=${{{STATE_DIR_ENV}:-{DEFAULT_STATE_DIR}}}
MARKER=$STATE_DIR/installed-$OPENMPI_VERSION-$HOROVOD_VERSION

if [ ! -f "$MARKER" ]; then
    {openmpi_cmd}
    {horovod_cmd}
    mkdir -p "$STATE_DIR"
    echo "openmpi=$OPENMPI_VERSION horovod=$HOROVOD_VERSION" > "$MARKER.tmp"
    mv "$MARKER.tmp" "$MARKER"
fi

if [ "$#" -gt 0 ]; then
    exec "$@"
fi
exec /bin/bash
"""
