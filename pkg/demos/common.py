"""Shared workspace for the demo scripts.

Generates one synthetic market (cached under demos/workspace) so each demo
can be run standalone in any order.
"""

from pathlib import Path

from narralpha.ingest import load_dataset
from narralpha.synth import SynthSpec, generate

WORKSPACE = Path(__file__).parent / "workspace"


def workspace() -> Path:
    if not (WORKSPACE / "manifest.json").exists():
        print("generating the demo market (120 firms x 60 months, 6%/yr planted on g3)...")
        generate(SynthSpec(n_firms=120, n_months=60, dim=32, seed=42), WORKSPACE)
    return WORKSPACE


def dataset():
    return load_dataset(workspace() / "inputs.json")
