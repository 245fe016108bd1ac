from __future__ import annotations

import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpcflow.errors import RunnerError
from hpcflow.launch import JobRequest, LaunchPlan, plan_launch, render_job_script
from hpcflow.recon import reconcile
from hpcflow.runner import (
    LocalExecutor,
    MockScheduler,
    RecordingExecutor,
    all_ranks_succeeded,
    dry_run,
    env_dump_command,
    mock_run_ranks,
)


def grid_plan(nodes: int, gpus_per_node: int, env=None) -> LaunchPlan:
    return LaunchPlan(
        total_ranks=nodes * gpus_per_node,
        slots_per_node=gpus_per_node,
        mpirun_args=(),
        env_exports=env or {},
        udocker_run_args=(),
        scheduler_directives=(),
    )


class TestDryRun:
    def test_setup_sequence_transcript(self, csic_profile, entrypoint_spec):
        from hpcflow.launch import render_udocker_setup

        plan = reconcile(entrypoint_spec, csic_profile)
        commands = render_udocker_setup(plan, "tfbench")
        transcript = dry_run(commands)
        assert len(transcript) == 4
        assert transcript[0].startswith("udocker pull ")
        assert transcript[-1] == "udocker run tfbench 4.0.1 0.21.3"

    def test_empty(self):
        assert dry_run([]) == []

    def test_byte_identical_across_calls(self):
        commands = [["echo", "a b"], ["udocker", "pull", "x:1"]]
        assert dry_run(commands) == dry_run(commands)

    def test_matches_recording_executor(self):
        commands = [["echo", "one"], ["echo", "two words"]]
        executor = RecordingExecutor()
        for command in commands:
            executor.run(command)
        assert dry_run(executor.commands) == dry_run(commands)

    def test_executor_capability_flags(self):
        assert RecordingExecutor.records_only and not RecordingExecutor.executes_locally
        assert LocalExecutor.executes_locally and not LocalExecutor.records_only

    def test_local_executor_returns_exit_code(self):
        executor = LocalExecutor()
        assert executor.run([sys.executable, "-c", "pass"]) == 0
        assert executor.run([sys.executable, "-c", "raise SystemExit(3)"]) == 3


class TestMockRunRanks:
    def test_2x2_rank_grid(self):
        results = mock_run_ranks(grid_plan(2, 2), env_dump_command())
        assert [r.rank for r in results] == [0, 1, 2, 3]
        assert [r.env["RANK"] for r in results] == ["0", "1", "2", "3"]
        assert [r.env["LOCAL_RANK"] for r in results] == ["0", "1", "0", "1"]
        assert [r.env["NODE_INDEX"] for r in results] == ["0", "0", "1", "1"]
        assert all(r.env["SIZE"] == "4" for r in results)
        assert all_ranks_succeeded(results)

    def test_1x1(self):
        (result,) = mock_run_ranks(grid_plan(1, 1), env_dump_command())
        assert result.env["RANK"] == "0"
        assert result.env["SIZE"] == "1"

    def test_failing_rank_collected_with_others(self):
        command = [
            sys.executable,
            "-c",
            "import os, sys; sys.exit(1 if os.environ['RANK'] == '1' else 0)",
        ]
        results = mock_run_ranks(grid_plan(2, 2), command)
        assert len(results) == 4
        assert not all_ranks_succeeded(results)
        assert [r.exit_code for r in results] == [0, 1, 0, 0]

    def test_env_exports_with_values_forwarded(self):
        plan = grid_plan(1, 2, env={"FOO": "bar", "PATH": None})
        results = mock_run_ranks(plan, env_dump_command(extra_keys=("FOO",)))
        assert all(r.env["FOO"] == "bar" for r in results)

    def test_spawn_failure_reported_per_rank(self):
        results = mock_run_ranks(grid_plan(1, 2), ["/nonexistent/binary"])
        assert len(results) == 2
        assert all(r.exit_code == 127 and r.error for r in results)

    @settings(max_examples=8, deadline=None)
    @given(nodes=st.integers(1, 3), gpus=st.integers(1, 3))
    def test_grid_cover_property(self, nodes, gpus):
        results = mock_run_ranks(grid_plan(nodes, gpus), env_dump_command())
        grid = {(r.env["NODE_INDEX"], r.env["LOCAL_RANK"]) for r in results}
        expected = {(str(n), str(g)) for n in range(nodes) for g in range(gpus)}
        assert grid == expected


@pytest.fixture
def job_script(csic_profile, entrypoint_spec):
    recon_plan = reconcile(entrypoint_spec, csic_profile)
    req = JobRequest(
        nodes=2,
        gpus_per_node=2,
        container_name="tfbench",
        image_ref=recon_plan.image_ref,
        workdir_mount=("$PWD", "/workdir"),
        user_command=("python", "train.py"),
    )
    plan = plan_launch(csic_profile, recon_plan, req)
    return render_job_script(plan, csic_profile, req)


class TestMockScheduler:
    def test_ids_monotonic(self, job_script):
        scheduler = MockScheduler()
        first = scheduler.submit(job_script)
        second = scheduler.submit(job_script)
        assert (first.job_id, second.job_id) == (1, 2)
        assert first.state == "pending"

    def test_poll_drives_states_to_completed(self, job_script):
        scheduler = MockScheduler()
        job = scheduler.submit(job_script)
        assert scheduler.poll(job) == "running"
        assert scheduler.poll(job) == "completed"
        assert scheduler.poll(job) == "completed"  # terminal states are stable
        assert len(job.rank_results) == job_script.plan.total_ranks

    def test_failing_ranks_mark_job_failed(self, job_script):
        scheduler = MockScheduler(rank_command=[sys.executable, "-c", "raise SystemExit(1)"])
        job = scheduler.submit(job_script)
        scheduler.poll(job)
        assert scheduler.poll(job) == "failed"
        assert len(job.rank_results) == 4

    def test_rank_results_only_in_terminal_state(self, job_script):
        scheduler = MockScheduler()
        job = scheduler.submit(job_script)
        assert job.rank_results == []
        scheduler.poll(job)
        assert job.rank_results == []
        scheduler.poll(job)
        assert job.rank_results != []

    def test_script_without_launcher_rejected(self, job_script):
        from hpcflow.launch import JobScript

        broken = JobScript(text="#!/bin/sh\necho no launcher\n", scheduler="slurm", plan=job_script.plan)
        with pytest.raises(RunnerError, match="mpirun"):
            MockScheduler().submit(broken)
