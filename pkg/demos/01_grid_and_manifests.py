"""
Grids, experiment ids and job manifests
=======================================

A sweep is a list of axes. Every combination becomes one experiment, and
every experiment becomes a train manifest and an eval manifest.
"""

from hypersweep.gridlab import AxisDef, expand
from hypersweep.jobspec import render_campaign, render_pair, serialize

# five axes for a segmentation sweep
axes = [
    AxisDef("lr", ["1e-3", "1e-4", "1e-5"]),
    AxisDef("bs", [8, 16, 32]),
    AxisDef("init", ["imagenet", "random"]),
    AxisDef("opt", ["adam", "lamb"]),
    AxisDef("data", ["rgb", "rgbn"]),
]
specs = expand(axes)
print(len(specs), "experiments")

# ids are readable and carry a short digest of the bindings
for s in specs[:3]:
    print(s.id)

# one more axis doubles the grid
specs = expand(axes + [AxisDef("network", ["unet", "deeplabv3"])])
print(len(specs), "experiments with the network axis")

# a template uses {{name}} placeholders; id, phase and sink are always bound
template = {
    "image": "registry.local/segment:{{network}}",
    "command": ["python", "train.py", "--phase", "{{phase}}", "--out", "{{sink}}"],
    "volume": {"name": "burn-staging", "mount_path": "/data"},
}
train, evaluate = render_pair(specs[0], template, campaign="burned-area")
print(serialize(train).decode())

manifests = render_campaign(specs, template, campaign="burned-area")
print(len(manifests), "manifests")
