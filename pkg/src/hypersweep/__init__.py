"""Desk-scale machinery for running deep-learning training campaigns on a GPU cluster.

Subpackages and modules:

- :mod:`hypersweep.gridlab` expands hyperparameter axes into experiment specs
- :mod:`hypersweep.jobspec` renders specs into job manifests and syncs artifacts
- :mod:`hypersweep.cluster` places and simulates jobs on a heterogeneous GPU cluster
- :mod:`hypersweep.ledger` aggregates and audits compute accounting tables
- :mod:`hypersweep.geopipe` is the imagery preprocessing pipeline
"""
__version__ = "0.1.0"
