"""
Simulating a campaign on a mixed GPU cluster
============================================

Jobs are packed first-fit-decreasing by GPU count. Each job picks the
largest power-of-two batch that fits the node's per-GPU memory.
"""

from hypersweep.cluster import BatchSizePolicy, JobRequest, NodeSpec, dynamic_batch_size, simulate

policy = BatchSizePolicy(overhead_gb=3, per_sample_gb=0.5)
for vram in (11, 24, 48, 80):
    print(f"{vram:3d} GB -> batch {dynamic_batch_size(vram, policy)}")

topology = (
    [NodeSpec(f"gtx-{i}", "GTX1080", 4, 11, 16, 64, throughput_factor=0.4) for i in range(4)]
    + [NodeSpec(f"a100-{i}", "A100", 8, 80, 64, 512, throughput_factor=2.0) for i in range(2)]
)

# thirty detection models, four GPUs each, 300 epochs of 2000 samples
jobs = [
    JobRequest(f"model-{k:02d}", gpu_count=4, cpu_cores=8, memory_gb=32, epochs=300,
               samples_per_epoch=2000, per_sample_cost=0.05, batch_policy=policy)
    for k in range(30)
]
trace = simulate(jobs, topology, seed=1, failure_rate=0.05, retry_limit=2)
print(f"makespan {trace.makespan:.2f} h, {trace.total_gpu_hours:.1f} GPU-hours")
for node, hours in trace.node_gpu_hours.items():
    print(f"  {node:8s} {hours:8.1f} GPU-h")
print("retried:", {k: v for k, v in trace.retries.items() if v})

# the export is byte-stable for a given seed
print(trace.export().splitlines()[:5])
