import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import batch_size_ref, replay_usage
from hypersweep.cluster import (BatchSizePolicy, JobRequest, JobState, NodeSpec, NoFit, TopologyError,
                                duration, dynamic_batch_size, parse_topology, schedule, simulate)

POLICY = BatchSizePolicy(overhead_gb=3, per_sample_gb=0.5, min_bs=1, max_bs=256)


def node(name="n0", gpus=4, vram=24, cpu=64, mem=512, factor=1.0):
    return NodeSpec(name, "gpu", gpus, vram, cpu, mem, factor)


@pytest.mark.parametrize("vram,expected", [(11, 16), (80, 128)])
def test_batch_size_fixtures(vram, expected):
    assert dynamic_batch_size(vram, POLICY) == expected


def test_batch_size_nofit():
    with pytest.raises(NoFit):
        dynamic_batch_size(2, POLICY)


def test_batch_size_sweep_monotone_and_pow2():
    prev = 0
    for tenth in range(35, 2000):
        b = dynamic_batch_size(tenth / 10, POLICY)
        assert b & (b - 1) == 0 and b >= prev
        assert b == batch_size_ref(tenth / 10, 3, 0.5, 1, 256)
        prev = b


@settings(max_examples=300, deadline=None)
@given(st.floats(0.5, 200), st.floats(0, 20), st.floats(0.01, 4), st.integers(0, 4), st.integers(0, 9))
def test_batch_size_matches_oracle(vram, overhead, per_sample, lo_exp, span):
    lo, hi = 2 ** lo_exp, 2 ** (lo_exp + span)
    policy = BatchSizePolicy(overhead, per_sample, lo, hi)
    expected = batch_size_ref(vram, overhead, per_sample, lo, hi)
    if expected is None:
        with pytest.raises(NoFit):
            dynamic_batch_size(vram, policy)
    else:
        assert dynamic_batch_size(vram, policy) == expected


def test_policy_validation():
    with pytest.raises(ValueError):
        BatchSizePolicy(1, 0)
    with pytest.raises(ValueError):
        BatchSizePolicy(1, 1, min_bs=8, max_bs=4)


def test_duration_formula():
    job = JobRequest("j", 1, epochs=1, samples_per_epoch=3600, per_sample_cost=1)
    assert duration(job, node()) == 1.0
    assert duration(JobRequest("j", 4, epochs=1, samples_per_epoch=3600, per_sample_cost=1), node()) == 0.25
    assert duration(JobRequest("j", 1, epochs=0, samples_per_epoch=3600, per_sample_cost=1), node()) == 0
    assert duration(job, node(factor=2.0)) == 0.5


def test_schedule_three_two_gpu_jobs_on_four_gpu_node():
    jobs = [JobRequest(f"j{i}", 2) for i in range(3)]
    out = schedule(jobs, [node()])
    assert [p.job.name for p in out.placements] == ["j0", "j1"]
    assert [j.name for j in out.pending] == ["j2"]
    assert out.unschedulable == []


def test_schedule_oversized_is_unschedulable():
    out = schedule([JobRequest("big", 8)], [node(gpus=4), node("n1", gpus=4)])
    assert [j.name for j in out.unschedulable] == ["big"]


def test_schedule_empty():
    out = schedule([], [node()])
    assert out.placements == [] and out.pending == []


def test_schedule_first_fit_decreasing():
    jobs = [JobRequest("small", 1), JobRequest("large", 3), JobRequest("mid", 2)]
    out = schedule(jobs, [node("a", gpus=4), node("b", gpus=4)])
    assert [(p.job.name, p.node.name) for p in out.placements] == [
        ("large", "a"), ("mid", "b"), ("small", "a")]


def test_schedule_batch_policy_excludes_small_vram():
    heavy = BatchSizePolicy(overhead_gb=20, per_sample_gb=1)
    job = JobRequest("j", 1, batch_policy=heavy)
    out = schedule([job], [node("small", vram=11), node("big", vram=80)])
    assert [(p.node.name, p.batch_size) for p in out.placements] == [("big", 32)]


def test_simulate_three_job_fixture():
    jobs = [JobRequest.for_hours(f"j{i}", 1.0, gpu_count=2) for i in range(3)]
    trace = simulate(jobs, [node()])
    assert trace.makespan == pytest.approx(2.0)
    assert trace.total_gpu_hours == pytest.approx(6.0)
    assert set(trace.final_states.values()) == {JobState.SUCCEEDED}


def test_simulate_empty():
    trace = simulate([], [node()])
    assert trace.makespan == 0 and trace.events == []


def test_simulate_thirty_four_gpu_jobs_on_fifteen_nodes():
    topo = [node(f"n{i}", gpus=8) for i in range(15)]
    jobs = [JobRequest.for_hours(f"m{i}", 1.0, gpu_count=4) for i in range(30)]
    trace = simulate(jobs, topo)
    assert trace.makespan == pytest.approx(1.0)
    assert trace.total_gpu_hours == pytest.approx(120.0)


def test_event_lifecycle_order():
    trace = simulate([JobRequest.for_hours("a", 1.0)], [node()])
    assert [e.transition for e in trace.events] == [
        JobState.PENDING, JobState.SCHEDULED, JobState.RUNNING, JobState.SUCCEEDED]
    times = [e.time for e in trace.events]
    assert times == sorted(times)


def test_failures_retry_then_settle():
    jobs = [JobRequest.for_hours(f"j{i}", 1.0) for i in range(20)]
    trace = simulate(jobs, [node()], seed=3, failure_rate=0.5, retry_limit=2)
    assert all(s in (JobState.SUCCEEDED, JobState.FAILED) for s in trace.final_states.values())
    assert max(trace.retries.values()) <= 2
    assert any(trace.retries.values())
    for name, state in trace.final_states.items():
        if state is JobState.FAILED:
            assert trace.retries[name] == 2


def test_failure_rate_bounds():
    with pytest.raises(ValueError):
        simulate([], [node()], failure_rate=1.0)


def random_campaign(rng: random.Random):
    topo = [NodeSpec(f"n{i}", "g", rng.choice([1, 2, 4, 8]), rng.choice([11, 24, 40, 80]),
                     rng.choice([8, 16, 64]), rng.choice([32, 128, 512]), rng.choice([0.5, 1.0, 2.0]))
            for i in range(rng.randint(1, 5))]
    jobs = [JobRequest(f"j{k}", rng.choice([1, 1, 2, 4, 8, 16]), rng.choice([1, 4, 8, 32]),
                       rng.choice([4, 24, 64, 600]), epochs=rng.randint(0, 5),
                       samples_per_epoch=rng.randint(0, 500), per_sample_cost=rng.random() * 20)
            for k in range(rng.randint(0, 25))]
    return jobs, topo


def capacity_ok(trace, jobs, topo):
    by_name = {j.name: j for j in jobs}
    caps = {n.name: n for n in topo}
    for _, held in replay_usage(trace.events, by_name, topo):
        for name, (g, c, m) in held.items():
            n = caps[name]
            if g > n.gpu_count or c > n.cpu_cores or m > n.memory_gb + 1e-9:
                return False
    return True


def test_capacity_safety_randomized():
    rng = random.Random(2024)
    for case in range(1000):
        jobs, topo = random_campaign(rng)
        trace = simulate(jobs, topo, seed=case, failure_rate=rng.choice([0, 0.2]), retry_limit=1)
        assert capacity_ok(trace, jobs, topo), case


def test_work_conservation_and_makespan_bound():
    rng = random.Random(5)
    for case in range(200):
        jobs, topo = random_campaign(rng)
        trace = simulate(jobs, topo, seed=case)
        nodes = {n.name: n for n in topo}
        placed = {e.job: e.node for e in trace.events if e.transition is JobState.RUNNING}
        expected = sum(duration(j, nodes[placed[j.name]]) * j.gpu_count for j in jobs if j.name in placed)
        assert trace.total_gpu_hours == pytest.approx(expected, abs=1e-9)
        total_gpus = sum(n.gpu_count for n in topo)
        assert trace.makespan >= trace.total_gpu_hours / total_gpus - 1e-9


def test_trace_export_is_deterministic():
    rng = random.Random(11)
    jobs, topo = random_campaign(rng)
    a = simulate(jobs, topo, seed=9, failure_rate=0.3, retry_limit=2).export()
    b = simulate(jobs, topo, seed=9, failure_rate=0.3, retry_limit=2).export()
    assert a == b
    assert a.startswith("time,job,transition,node\n")
    assert "\n# summary\n" in a


def test_topology_parsing():
    nodes = parse_topology({"nodes": [
        {"name": "gtx", "gpu_model": "GTX1080", "gpu_count": 4, "vram_per_gpu_gb": 11,
         "cpu_cores": 16, "memory_gb": 64, "replicas": 2},
        {"name": "a100", "gpu_model": "A100", "gpu_count": 8, "vram_per_gpu_gb": 80,
         "cpu_cores": 64, "memory_gb": 512, "throughput_factor": 3.0}]})
    assert [n.name for n in nodes] == ["gtx-0", "gtx-1", "a100"]
    with pytest.raises(TopologyError):
        parse_topology([{"name": "x", "gpu_model": "g", "gpu_count": 1, "vram_per_gpu_gb": 1,
                         "cpu_cores": 1, "memory_gb": 1, "colour": "red"}])


def test_node_validation():
    with pytest.raises(TopologyError):
        NodeSpec("n", "g", 2, 0, 4, 4)
    with pytest.raises(TopologyError):
        NodeSpec("n", "g", 2, 8, 4, 4, throughput_factor=0)
