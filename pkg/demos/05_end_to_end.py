"""
End to end through the command line
===================================

The same steps as the library demos, driven through ``hypersweep`` with a
single campaign config in a scratch directory.
"""

import json
import tempfile
from pathlib import Path

from hypersweep.cli import main

root = Path(tempfile.mkdtemp(prefix="hypersweep-"))
(root / "grid.json").write_text(json.dumps({"axes": [
    {"name": "network", "values": ["unet", "deeplabv3"]},
    {"name": "lr", "values": [1e-4, 1e-5]},
    {"name": "opt", "values": ["adam", "lamb"]},
]}))
(root / "topology.json").write_text(json.dumps({"nodes": [
    {"name": "gtx", "gpu_model": "GTX1080", "gpu_count": 4, "vram_per_gpu_gb": 11,
     "cpu_cores": 16, "memory_gb": 64, "throughput_factor": 0.5, "replicas": 2},
    {"name": "a100", "gpu_model": "A100", "gpu_count": 8, "vram_per_gpu_gb": 80,
     "cpu_cores": 64, "memory_gb": 512, "throughput_factor": 2.0},
]}))
(root / "campaign.json").write_text(json.dumps({
    "campaign": "burned-area",
    "grid": "grid.json",
    "topology": "topology.json",
    "out": "out",
    "seed": 7,
    "pipe": {"batches": 2, "size": 1024},
    "sim": {"work": {"train": {"epochs": 200, "samples_per_epoch": 500, "per_sample_cost": 0.2}}},
}))

config = str(root / "campaign.json")
for command in ("pipe", "expand", "render", "sim"):
    print(f"$ hypersweep {command} --config campaign.json")
    code = main([command, "--config", config])
    print(f"(exit {code})\n")

main(["report", str(root / "out" / "ledger.csv")])
print("outputs in", root / "out")
