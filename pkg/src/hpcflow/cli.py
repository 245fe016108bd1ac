"""Command-line entry point.

Subcommands follow a ``hpcflow <noun> <verb>`` grammar covering the whole
workflow: validate a cluster profile, generate and lint the image inputs,
plan a batch job, preview or mock-execute the command sequences, and
predict or summarize scaling.

Exit codes: 0 success, 1 operational error, 2 usage error, 3 lint errors
present (lint subcommand only).
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from pathlib import Path

from hpcflow import dockerfile, launch, lint, perf, recon, runner
from hpcflow.errors import HpcflowError
from hpcflow.profiles import (
    ClusterProfile,
    parse_cluster_profile,
    parse_env_spec,
    validate_profile,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_LINT = 3


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be >= 1")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text!r} must be >= 0")
    return value


def _env_pair(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"{text!r} is not KEY=VALUE")
    key, _, value = text.partition("=")
    return key, value


def _mount_pair(text: str) -> tuple[str, str]:
    src, sep, dst = text.partition(":")
    if not sep or not src or not dst:
        raise argparse.ArgumentTypeError(f"{text!r} is not host:container")
    return src, dst


def _gpus_log_pair(text: str) -> tuple[int, str]:
    gpus, sep, path = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"{text!r} is not GPUS:PATH")
    try:
        count = int(gpus)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{gpus!r} is not an integer GPU count") from None
    if count < 1:
        raise argparse.ArgumentTypeError("GPU count must be >= 1")
    return count, path


def _tag_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _default_container_name(image_ref: str) -> str:
    repo = image_ref.rsplit("/", 1)[-1]
    if ":" in repo:
        repo = repo.rsplit(":", 1)[0]
    name = re.sub(r"[^A-Za-z0-9_.-]", "-", repo)
    return name or "container"


def _load_profile(path: str) -> ClusterProfile:
    return parse_cluster_profile(Path(path).read_text(encoding="utf-8"))


def cmd_profile_validate(args: argparse.Namespace) -> int:
    profile = _load_profile(args.path)
    issues = validate_profile(profile)
    for issue in issues:
        print(f"{issue.severity}: {issue.message}")
    if not issues and not args.machine:
        print(f"profile {profile.name}: OK")
    return EXIT_ERROR if any(i.severity == "error" for i in issues) else EXIT_OK


def cmd_image_gen(args: argparse.Namespace) -> int:
    spec = parse_env_spec(Path(args.spec).read_text(encoding="utf-8"))
    ast = dockerfile.generate_dockerfile(spec)
    out = Path(args.out)
    out.write_text(dockerfile.render_dockerfile(ast), encoding="utf-8")
    written = [out]
    if spec.strategy == "entrypoint":
        assert spec.entrypoint_path is not None
        script_path = out.parent / Path(spec.entrypoint_path).name
        script_path.write_text(recon.generate_entrypoint(), encoding="utf-8")
        written.append(script_path)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_image_lint(args: argparse.Namespace) -> int:
    ast = dockerfile.parse_dockerfile(
        Path(args.path).read_text(encoding="utf-8"), source_name=args.path
    )
    report = lint.lint(ast)
    if args.machine:
        sys.stdout.write(lint.machine_report(report))
    else:
        for finding in report.findings:
            print(
                f"{args.path}:{finding.line}: {finding.rule_id} "
                f"[{finding.severity}] {finding.message}"
            )
            print(f"    fix: {finding.suggestion}")
        counts = report.counts
        print(
            f"{counts['error']} error(s), {counts['warning']} warning(s), "
            f"{counts['info']} info"
        )
    return EXIT_LINT if report.counts["error"] else EXIT_OK


def _reconcile_from_args(args: argparse.Namespace):
    profile = _load_profile(args.profile)
    spec = parse_env_spec(Path(args.spec).read_text(encoding="utf-8"))
    tags = _tag_list(args.tags) if args.tags else None
    plan = recon.reconcile(spec, profile, available_tags=tags)
    return profile, spec, plan


def cmd_job_gen(args: argparse.Namespace) -> int:
    profile, spec, plan = _reconcile_from_args(args)
    container_name = args.container_name or _default_container_name(plan.image_ref)
    request = launch.JobRequest(
        nodes=args.nodes,
        gpus_per_node=args.gpus_per_node,
        container_name=container_name,
        image_ref=plan.image_ref,
        workdir_mount=args.workdir,
        user_command=tuple(args.user_command),
        job_name=args.job_name,
        walltime=args.walltime,
        extra_env=dict(args.env or []),
    )
    launch_plan = launch.plan_launch(profile, plan, request)
    script = launch.render_job_script(launch_plan, profile, request)
    out = Path(args.out)
    out.write_text(script.text, encoding="utf-8")
    setup_path = out.parent / f"{out.stem}_setup.sh"
    setup_lines = runner.dry_run(launch.render_udocker_setup(plan, container_name))
    setup_path.write_text("\n".join(setup_lines) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    print(f"wrote {setup_path}")
    return EXIT_OK


def cmd_run_dry(args: argparse.Namespace) -> int:
    _, spec, plan = _reconcile_from_args(args)
    container_name = args.container_name or _default_container_name(plan.image_ref)
    for line in runner.dry_run(launch.render_udocker_setup(plan, container_name)):
        print(line)
    return EXIT_OK


def cmd_run_mock(args: argparse.Namespace) -> int:
    env_exports: dict[str, str | None] = dict(args.env or [])
    plan = launch.LaunchPlan(
        total_ranks=args.nodes * args.gpus_per_node,
        slots_per_node=args.gpus_per_node,
        mpirun_args=(),
        env_exports=env_exports,
        udocker_run_args=(),
        scheduler_directives=(),
    )
    command = list(args.user_command) or runner.env_dump_command()
    results = runner.mock_run_ranks(plan, command)
    print("rank node local exit")
    for result in results:
        node = result.env.get("NODE_INDEX", "?")
        local = result.env.get("LOCAL_RANK", "?")
        print(f"{result.rank} {node} {local} {result.exit_code}")
    return EXIT_OK if runner.all_ranks_succeeded(results) else EXIT_ERROR


def cmd_perf_predict(args: argparse.Namespace) -> int:
    model = perf.ModelSpec(
        name=args.name,
        param_count=args.params,
        batch_per_gpu=args.batch_per_gpu,
        bytes_per_param=args.bytes_per_param,
    )
    if args.ideal:
        link_bandwidth = intra_bandwidth = math.inf
        link_latency = 0.0
    else:
        link_bandwidth = args.link_bandwidth
        intra_bandwidth = args.intra_bandwidth
        link_latency = args.link_latency
    try:
        inputs = perf.ScalingInputs(
            model=model,
            single_gpu_images_per_sec=args.single_gpu_ips,
            link_bandwidth=link_bandwidth,
            link_latency=link_latency,
            gpus_per_node=args.gpus_per_node,
            intra_node_bandwidth=intra_bandwidth,
        )
    except ValueError as exc:
        raise HpcflowError(str(exc)) from None
    print("gpus,images_per_sec,speedup,comm_seconds,comp_seconds")
    for p in range(1, args.p_max + 1):
        est = perf.predict(inputs, p)
        print(
            f"{p},{est.predicted_images_per_sec:.6g},{est.speedup:.6g},"
            f"{est.comm_seconds_per_step:.6g},{est.comp_seconds_per_step:.6g}"
        )
    return EXIT_OK


def cmd_bench_report(args: argparse.Namespace) -> int:
    runs = []
    for gpus, path in args.runs:
        text = Path(path).read_text(encoding="utf-8")
        runs.append(perf.parse_bench_log(text, args.warmup, label=path, gpus=gpus))
    baselines = [r for r in runs if r.gpus == 1]
    if len(baselines) != 1:
        raise HpcflowError(
            f"need exactly one 1-GPU baseline run, got {len(baselines)}"
        )
    baseline = baselines[0]
    counts = [r.gpus for r in runs]
    if len(set(counts)) != len(counts):
        raise HpcflowError("duplicate GPU counts in runs")
    print("gpus,mean,ci95,speedup")
    for run in sorted(runs, key=lambda r: r.gpus):
        summary = perf.summarize(run, baseline=baseline)
        print(
            f"{run.gpus},{summary.mean:.6g},{summary.ci95_half_width:.6g},"
            f"{summary.speedup_vs_baseline:.6g}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hpcflow",
        description=(
            "Generate, validate, and plan the artifacts of a container-based "
            "distributed-training workflow for HPC clusters."
        ),
    )
    nouns = parser.add_subparsers(dest="noun", required=True)

    profile = nouns.add_parser("profile", help="cluster profile operations")
    profile_verbs = profile.add_subparsers(dest="verb", required=True)
    validate = profile_verbs.add_parser("validate", help="parse and validate a profile")
    validate.add_argument("path")
    validate.add_argument("--machine", action="store_true", help="issue lines only")
    validate.set_defaults(func=cmd_profile_validate)

    image = nouns.add_parser("image", help="image input generation and linting")
    image_verbs = image.add_subparsers(dest="verb", required=True)
    gen = image_verbs.add_parser("gen", help="generate Dockerfile (and entrypoint script)")
    gen.add_argument("--spec", required=True, help="environment spec file")
    gen.add_argument("--out", required=True, help="output Dockerfile path")
    gen.set_defaults(func=cmd_image_gen)
    lint_cmd = image_verbs.add_parser("lint", help="report Dockerfile smells")
    lint_cmd.add_argument("path")
    lint_cmd.add_argument(
        "--machine", action="store_true", help="rule_id:severity:line:message lines"
    )
    lint_cmd.set_defaults(func=cmd_image_lint)

    job = nouns.add_parser("job", help="batch job planning")
    job_verbs = job.add_subparsers(dest="verb", required=True)
    job_gen = job_verbs.add_parser("gen", help="render batch script + setup commands")
    job_gen.add_argument("--profile", required=True)
    job_gen.add_argument("--spec", required=True)
    job_gen.add_argument("--nodes", type=_positive_int, required=True)
    job_gen.add_argument("--gpus-per-node", type=_positive_int, required=True)
    job_gen.add_argument("--out", required=True, help="output job script path")
    job_gen.add_argument("--workdir", type=_mount_pair, default=("$PWD", "/workdir"))
    job_gen.add_argument("--job-name", default="hpcflow-job")
    job_gen.add_argument("--walltime", default="01:00:00")
    job_gen.add_argument("--container-name", default=None)
    job_gen.add_argument("--tags", default=None, help="available image tags (tags strategy)")
    job_gen.add_argument("--env", action="append", type=_env_pair, metavar="KEY=VALUE")
    job_gen.set_defaults(func=cmd_job_gen)

    run = nouns.add_parser("run", help="preview or mock-execute commands")
    run_verbs = run.add_subparsers(dest="verb", required=True)
    dry = run_verbs.add_parser("dry", help="print the container setup transcript")
    dry.add_argument("--profile", required=True)
    dry.add_argument("--spec", required=True)
    dry.add_argument("--container-name", default=None)
    dry.add_argument("--tags", default=None)
    dry.add_argument("--machine", action="store_true", help="transcript lines only")
    dry.set_defaults(func=cmd_run_dry)
    mock = run_verbs.add_parser("mock", help="run the rank grid with local processes")
    mock.add_argument("--nodes", type=_positive_int, required=True)
    mock.add_argument("--gpus-per-node", type=_positive_int, required=True)
    mock.add_argument("--env", action="append", type=_env_pair, metavar="KEY=VALUE")
    mock.set_defaults(func=cmd_run_mock)

    perf_cmd = nouns.add_parser("perf", help="scaling prediction")
    perf_verbs = perf_cmd.add_subparsers(dest="verb", required=True)
    predict = perf_verbs.add_parser("predict", help="CSV speedup table for 1..P workers")
    predict.add_argument("--name", default="model")
    predict.add_argument("--params", type=_positive_int, required=True)
    predict.add_argument("--batch-per-gpu", type=_positive_int, required=True)
    predict.add_argument("--single-gpu-ips", type=float, required=True)
    predict.add_argument("--bytes-per-param", type=_positive_int, default=4)
    predict.add_argument("--link-bandwidth", type=float, default=1.25e9)
    predict.add_argument("--link-latency", type=float, default=5e-6)
    predict.add_argument("--gpus-per-node", type=_positive_int, default=2)
    predict.add_argument("--intra-bandwidth", type=float, default=None)
    predict.add_argument("--p-max", type=_positive_int, default=6)
    predict.add_argument(
        "--ideal", action="store_true", help="zero communication cost (ideal speedup)"
    )
    predict.add_argument("--machine", action="store_true", help="CSV only (the default)")
    predict.set_defaults(func=cmd_perf_predict)

    bench = nouns.add_parser("bench", help="benchmark statistics")
    bench_verbs = bench.add_subparsers(dest="verb", required=True)
    report = bench_verbs.add_parser("report", help="summarize runs as CSV")
    report.add_argument("runs", nargs="+", type=_gpus_log_pair, metavar="GPUS:LOGPATH")
    report.add_argument("--warmup", type=_nonneg_int, default=0)
    report.add_argument("--machine", action="store_true", help="CSV only (the default)")
    report.set_defaults(func=cmd_bench_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if "--" in argv:
        split = argv.index("--")
        argv, user_command = argv[:split], argv[split + 1 :]
    else:
        user_command = []
    parser = build_parser()
    args = parser.parse_args(argv)
    args.user_command = user_command
    if getattr(args, "intra_bandwidth", None) is None and hasattr(args, "link_bandwidth"):
        args.intra_bandwidth = args.link_bandwidth
    try:
        return args.func(args)
    except (HpcflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
