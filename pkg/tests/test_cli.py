import json
import subprocess
import sys

import numpy as np
import pytest

from hypersweep.cli import main
from hypersweep.geopipe import write_mask
from hypersweep.ledger import FIELDS

BURNED_AREA_GRID = {"axes": [
    {"name": "lr", "values": [1e-3, 1e-4, 1e-5]},
    {"name": "bs", "values": [8, 16, 32]},
    {"name": "init", "values": ["imagenet", "random"]},
    {"name": "opt", "values": ["adam", "lamb"]},
    {"name": "data", "values": ["rgb", "rgbn"]},
]}
FOUR_GPU = {"nodes": [{"name": "n0", "gpu_model": "A6000", "gpu_count": 4, "vram_per_gpu_gb": 48,
                       "cpu_cores": 32, "memory_gb": 256}]}


@pytest.fixture
def workdir(tmp_path):
    def write(name, doc):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return path
    write.root = tmp_path
    return write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_expand_counts(workdir, capsys):
    cfg = workdir("c.json", {"grid": "g.json", "out": "out"})
    workdir("g.json", BURNED_AREA_GRID)
    assert run(capsys, "expand", "--config", cfg)[:2] == (0, "72 experiments\n")
    workdir("g.json", {"axes": BURNED_AREA_GRID["axes"] + [{"name": "network", "values": ["unet", "deeplabv3"]}]})
    assert run(capsys, "expand", "--config", cfg)[:2] == (0, "144 experiments\n")
    specs = json.loads((workdir.root / "out" / "specs.json").read_text())
    assert len(specs) == 144


def test_expand_rejects_bad_grid(workdir, capsys):
    workdir("g.json", {"axes": [{"name": "lr", "values": [1], "step": 2}]})
    code, _, err = run(capsys, "expand", "--grid", workdir.root / "g.json", "--out", workdir.root)
    assert code == 2 and "axes[0].step" in err
    (workdir.root / "g.json").write_text("{oops")
    assert run(capsys, "expand", "--grid", workdir.root / "g.json", "--out", workdir.root)[0] == 2


def test_config_errors_name_the_key(workdir, capsys):
    cfg = workdir("c.json", {"grid": "g.json", "bakend": "sim"})
    code, _, err = run(capsys, "expand", "--config", cfg)
    assert code == 2 and "bakend" in err
    cfg = workdir("c.json", {"grid": "missing.json"})
    code, _, err = run(capsys, "expand", "--config", cfg)
    assert code == 2 and "grid" in err
    assert run(capsys, "frobnicate")[0] == 2


def test_backend_env_override(workdir, capsys, monkeypatch):
    workdir("g.json", BURNED_AREA_GRID)
    cfg = workdir("c.json", {"grid": "g.json", "out": "out", "backend": "sim"})
    monkeypatch.setenv("HYPERSWEEP_BACKEND", "cloud")
    code, _, err = run(capsys, "expand", "--config", cfg)
    assert code == 2 and "backend" in err
    monkeypatch.setenv("HYPERSWEEP_BACKEND", "local-dir")
    assert run(capsys, "expand", "--config", cfg)[0] == 0


def test_render_counts_and_idempotence(workdir, capsys):
    workdir("g.json", {"axes": BURNED_AREA_GRID["axes"] + [{"name": "network", "values": ["unet", "deeplabv3"]}]})
    cfg = workdir("c.json", {"grid": "g.json", "out": "out", "campaign": "burn"})
    assert run(capsys, "render", "--config", cfg)[0] == 2  # no specs yet
    run(capsys, "expand", "--config", cfg)
    assert run(capsys, "render", "--config", cfg)[0] == 0
    folder = workdir.root / "out" / "manifests"
    first = {p.name: p.read_bytes() for p in folder.glob("*.json")}
    assert len(first) == 288
    run(capsys, "render", "--config", cfg)
    assert {p.name: p.read_bytes() for p in folder.glob("*.json")} == first
    env = json.loads(next(iter(first.values())))["env"]
    assert set(env) == {"LR", "BS", "INIT", "OPT", "DATA", "NETWORK"}


def test_render_five_specs_and_unbound_placeholder(workdir, capsys):
    workdir("g.json", {"axes": [{"name": "seed", "values": [1, 2, 3, 4, 5]}]})
    workdir("t.json", {"image": "x", "command": ["run", "{{seed}}"]})
    cfg = workdir("c.json", {"grid": "g.json", "template": "t.json", "out": "out"})
    run(capsys, "expand", "--config", cfg)
    assert run(capsys, "render", "--config", cfg)[0] == 0
    assert len(list((workdir.root / "out" / "manifests").glob("*.json"))) == 10
    workdir("t.json", {"image": "x", "command": ["{{epochs}}"]})
    code, _, err = run(capsys, "render", "--config", cfg)
    assert code == 2 and "epochs" in err


def test_sim_three_job_fixture(workdir, capsys):
    workdir("topo.json", FOUR_GPU)
    workdir("jobs.json", [{"name": f"j{i}", "hours": 1, "gpu_count": 2} for i in range(3)])
    cfg = workdir("c.json", {"topology": "topo.json", "out": "out", "sim": {"jobs": "jobs.json"}})
    code, out, _ = run(capsys, "sim", "--config", cfg)
    assert code == 0 and "makespan 2.00 h" in out and "gpu-hours 6.00" in out
    trace = (workdir.root / "out" / "trace.csv").read_text()
    assert trace.startswith("time,job,transition,node\n") and "total_gpu_hours,6.000000" in trace
    ledger = (workdir.root / "out" / "ledger.csv").read_text().splitlines()
    assert ledger[0] == ",".join(FIELDS) and len(ledger) == 4
    run(capsys, "sim", "--config", cfg)
    assert (workdir.root / "out" / "trace.csv").read_text() == trace


def test_sim_empty_and_unschedulable(workdir, capsys):
    workdir("topo.json", FOUR_GPU)
    cfg = workdir("c.json", {"topology": "topo.json", "out": "out"})
    code, out, _ = run(capsys, "sim", "--config", cfg)
    assert code == 0 and "makespan 0.00 h" in out
    workdir("jobs.json", [{"name": "huge", "hours": 1, "gpu_count": 8}])
    cfg = workdir("c.json", {"topology": "topo.json", "out": "out", "sim": {"jobs": "jobs.json"}})
    code, out, _ = run(capsys, "sim", "--config", cfg)
    assert code == 3 and "Unschedulable: huge" in out
    assert "job,huge,Unschedulable" in (workdir.root / "out" / "trace.csv").read_text()


def test_sim_seed_controls_failures(workdir, capsys):
    workdir("topo.json", FOUR_GPU)
    workdir("jobs.json", [{"name": f"j{i}", "hours": 1} for i in range(12)])
    cfg = workdir("c.json", {"topology": "topo.json", "out": "out",
                             "sim": {"jobs": "jobs.json", "failure_rate": 0.4, "retry_limit": 1}})
    traces = []
    for seed in (1, 1, 2):
        run(capsys, "sim", "--config", cfg, "--seed", seed)
        traces.append((workdir.root / "out" / "trace.csv").read_text())
    assert traces[0] == traces[1] != traces[2]


def test_pipe_runs_and_reports(workdir, capsys):
    cfg = workdir("c.json", {"out": "out", "pipe": {"batches": 2, "size": 128, "chip_size": 32}})
    code, out, _ = run(capsys, "pipe", "--config", cfg, "--seed", 4)
    assert code == 0
    jobs = [c.strip() for c in out.splitlines()[1].split("|")][1:5]
    assert jobs[:3] == ["2", "2", "2"] and int(jobs[3]) <= 2
    chips = (workdir.root / "out" / "chips.csv").read_text().splitlines()
    assert chips[0] == "scene_id,row0,col0,size,split" and len(chips) > 1
    assert (workdir.root / "out" / "stage_stats.csv").exists()
    assert len(list((workdir.root / "out" / "masks").iterdir())) == 2


def test_pipe_zero_batches_and_failure(workdir, capsys):
    cfg = workdir("c.json", {"out": "out", "pipe": {"batches": 0}})
    code, out, _ = run(capsys, "pipe", "--config", cfg)
    assert code == 0 and out.splitlines()[1].split("|")[-1].strip() == "0"
    cfg = workdir("c.json", {"out": "out", "pipe": {"batches": 2, "size": 64, "chip_size": 16,
                                                    "fail": ["b00:norm"]}})
    code, out, _ = run(capsys, "pipe", "--config", cfg)
    assert code == 4 and "failed batch b00" in out
    cfg = workdir("c.json", {"pipe": {"fail": ["b00"]}})
    assert run(capsys, "pipe", "--config", cfg, "--out", workdir.root)[0] == 2


def test_verify_fixtures(capsys):
    code, out, _ = run(capsys, "verify", "--fixture", "table4")
    assert code == 1
    assert "stated 35200 computed 35400" in out and "1 discrepancies" in out
    for col, val in (("models", 234), ("params_millions", 8084), ("imagery_gb", 37745), ("wall_hours", 4040)):
        assert f"ok       {col}: stated {val} computed {val}" in out
    code, out, _ = run(capsys, "verify", "--fixture", "table2")
    assert code == 0 and "0 discrepancies" in out


def test_verify_files_and_malformed(workdir, capsys, tmp_path):
    ledger = tmp_path / "l.csv"
    ledger.write_text(",".join(FIELDS) + "\n" + "a,n,d,,2,,1.5,,,,\n")
    stated = workdir("s.json", {"table": "T", "totals": {"models": 2, "gpu_hours": 1.5}})
    assert run(capsys, "verify", ledger, stated)[0] == 0
    ledger.write_text("a,b\n1,2\n")
    assert run(capsys, "verify", ledger, stated)[0] == 2
    assert run(capsys, "report", ledger)[0] == 2


def test_report_fixture_and_empty(tmp_path, capsys):
    code, out, _ = run(capsys, "report", "--fixture", "table4")
    assert code == 0 and out.splitlines()[-1].split("|")[0].strip() == "TOTAL"
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(FIELDS) + "\n")
    code, out, _ = run(capsys, "report", empty)
    assert code == 0 and "TOTAL" not in out and "Scientific Application" in out


def test_metrics_command(tmp_path, capsys):
    gt = np.zeros((4, 4), np.uint8)
    gt.flat[[0, 1, 2]] = 1
    pred = np.zeros((4, 4), np.uint8)
    pred.flat[[0, 1, 3]] = 1
    write_mask(pred, tmp_path / "p")
    write_mask(gt, tmp_path / "g")
    code, out, _ = run(capsys, "metrics", tmp_path / "p", tmp_path / "g")
    assert code == 0 and "tp=2 fp=1 fn=1 tn=12" in out and "iou=0.5000" in out
    write_mask(np.zeros((3, 3), np.uint8), tmp_path / "small")
    assert run(capsys, "metrics", tmp_path / "p", tmp_path / "small")[0] == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "hypersweep.cli", "verify", "--fixture", "table2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "0 discrepancies" in res.stdout
