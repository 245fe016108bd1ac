"""Multi-GPU scaling prediction and benchmark statistics.

The scaling model prices each optimizer step as compute plus a ring
all-reduce of the gradient payload: with p workers each sends and
receives 2(p-1)/p of the payload (the bandwidth-optimal ring volume),
plus a latency term proportional to the 2(p-1) ring steps.  Bandwidth is
two-tier: intra-node while the job fits on one node, the inter-node link
beyond that.
"""

from __future__ import annotations

import math
import re
import statistics
from dataclasses import dataclass

from hpcflow.errors import BenchLogError

_LOG_LINE_RE = re.compile(r"^iter\s+(\d+):\s*([0-9]*\.?[0-9]+(?:[eE][+-]?\d+)?)\s+images/sec$")


@dataclass(frozen=True)
class ModelSpec:
    """Size and batching of one trainable model."""

    name: str
    param_count: int
    batch_per_gpu: int
    bytes_per_param: int = 4

    def __post_init__(self) -> None:
        if self.param_count <= 0 or self.batch_per_gpu <= 0 or self.bytes_per_param <= 0:
            raise ValueError("param_count, batch_per_gpu and bytes_per_param must be positive")

    @property
    def payload_bytes(self) -> int:
        return self.param_count * self.bytes_per_param


@dataclass(frozen=True)
class ScalingInputs:
    """Model plus machine characteristics feeding the prediction.

    Bandwidths are bytes/second and may be ``math.inf`` to model the
    zero-communication ideal; latency is seconds per ring step.
    """

    model: ModelSpec
    single_gpu_images_per_sec: float
    link_bandwidth: float
    link_latency: float
    gpus_per_node: int
    intra_node_bandwidth: float

    def __post_init__(self) -> None:
        if self.single_gpu_images_per_sec <= 0:
            raise ValueError("single_gpu_images_per_sec must be positive")
        if self.link_bandwidth <= 0 or self.intra_node_bandwidth <= 0:
            raise ValueError("bandwidths must be positive")
        if self.link_latency < 0:
            raise ValueError("link_latency must be non-negative")
        if self.gpus_per_node < 1:
            raise ValueError("gpus_per_node must be >= 1")
        if self.intra_node_bandwidth < self.link_bandwidth:
            raise ValueError("intra_node_bandwidth must be >= link_bandwidth")


@dataclass(frozen=True)
class ScalingEstimate:
    p: int
    predicted_images_per_sec: float
    speedup: float
    comm_seconds_per_step: float
    comp_seconds_per_step: float


@dataclass(frozen=True)
class BenchRun:
    """Measured throughput samples for one GPU configuration."""

    label: str
    gpus: int
    samples: tuple[float, ...]
    warmup_count: int = 0


@dataclass(frozen=True)
class BenchSummary:
    mean: float
    ci95_half_width: float
    n: int
    speedup_vs_baseline: float | None = None
    ci_undefined: bool = False


def allreduce_bytes(p: int, payload: float) -> float:
    """Per-worker ring all-reduce volume: 2(p-1)/p of the payload.

    Strictly increasing in p, bounded above by twice the payload; a single
    worker communicates nothing.
    """
    if p < 1:
        raise ValueError(f"worker count must be >= 1, got {p}")
    if payload < 0:
        raise ValueError("payload must be non-negative")
    return 2.0 * (p - 1) / p * payload


def _comm_seconds(inputs: ScalingInputs, p: int) -> float:
    bandwidth = (
        inputs.intra_node_bandwidth if p <= inputs.gpus_per_node else inputs.link_bandwidth
    )
    volume = allreduce_bytes(p, inputs.model.payload_bytes)
    return volume / bandwidth + 2.0 * (p - 1) * inputs.link_latency


def predict(inputs: ScalingInputs, p: int) -> ScalingEstimate:
    """Predict throughput and speedup at p workers.

    comp = batch / single-GPU throughput; comm is the ring all-reduce
    transfer plus latency; throughput = p * batch / (comp + comm).
    Speedup is normalized so speedup(1) = 1 exactly, and a zero
    communication cost gives speedup = p exactly (the ideal line).
    """
    if p < 1:
        raise ValueError(f"worker count must be >= 1, got {p}")
    comp = inputs.model.batch_per_gpu / inputs.single_gpu_images_per_sec
    comm = _comm_seconds(inputs, p)
    predicted = p * inputs.model.batch_per_gpu / (comp + comm)
    if comm == 0.0:
        speedup = float(p)
    else:
        speedup = p * comp / (comp + comm)
    return ScalingEstimate(
        p=p,
        predicted_images_per_sec=predicted,
        speedup=speedup,
        comm_seconds_per_step=comm,
        comp_seconds_per_step=comp,
    )


def scale_learning_rate(base_lr: float, p: int) -> float:
    """Linear learning-rate scaling: base rate times worker count."""
    if base_lr <= 0:
        raise ValueError("base_lr must be positive")
    if p < 1:
        raise ValueError(f"worker count must be >= 1, got {p}")
    return base_lr * p


def parse_bench_log(
    text: str, warmup_count: int, label: str = "", gpus: int = 1
) -> BenchRun:
    """Parse ``iter <k>: <float> images/sec`` lines, dropping warm-up.

    Blank lines are ignored; anything else must match the grammar.

    Raises:
        BenchLogError: on a malformed line (with its number) or when the
            warm-up count consumes every sample.
    """
    if warmup_count < 0:
        raise BenchLogError("warmup_count must be non-negative")
    values: list[float] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _LOG_LINE_RE.match(line)
        if m is None:
            raise BenchLogError(f"malformed log line {line!r}", line=lineno)
        values.append(float(m.group(2)))
    if warmup_count >= len(values):
        raise BenchLogError(
            f"warm-up of {warmup_count} consumes all {len(values)} samples"
        )
    return BenchRun(
        label=label,
        gpus=gpus,
        samples=tuple(values[warmup_count:]),
        warmup_count=warmup_count,
    )


def _t_quantile(prob: float, df: int) -> float:
    from scipy import stats  # deferred: keeps CLI start-up light

    return float(stats.t.ppf(prob, df))


def summarize(run: BenchRun, baseline: BenchRun | None = None) -> BenchSummary:
    """Mean and 95% Student-t confidence half-width of a run.

    Uses the n-1 sample standard deviation and the t quantile with n-1
    degrees of freedom.  A single-sample run has no defined interval; it
    is reported as 0 with ``ci_undefined`` set.
    """
    n = len(run.samples)
    if n == 0:
        raise ValueError("run has no samples")
    mean = statistics.fmean(run.samples)
    if n == 1:
        ci = 0.0
        undefined = True
    else:
        s = statistics.stdev(run.samples)
        ci = _t_quantile(0.975, n - 1) * s / math.sqrt(n)
        undefined = False
    speedup = None
    if baseline is not None:
        base_mean = statistics.fmean(baseline.samples)
        speedup = mean / base_mean
    return BenchSummary(
        mean=mean,
        ci95_half_width=ci,
        n=n,
        speedup_vs_baseline=speedup,
        ci_undefined=undefined,
    )


def speedup_table(runs: list[BenchRun]) -> list[tuple[int, float]]:
    """Rows of (gpus, speedup vs the 1-GPU baseline), ordered by gpus.

    Raises:
        ValueError: without exactly one 1-GPU run, or on duplicate GPU
            counts.
    """
    baselines = [r for r in runs if r.gpus == 1]
    if len(baselines) != 1:
        raise ValueError(
            f"need exactly one 1-GPU baseline run, got {len(baselines)}"
        )
    counts = [r.gpus for r in runs]
    if len(set(counts)) != len(counts):
        raise ValueError("duplicate GPU counts in runs")
    base_mean = statistics.fmean(baselines[0].samples)
    return [
        (run.gpus, statistics.fmean(run.samples) / base_mean)
        for run in sorted(runs, key=lambda r: r.gpus)
    ]
