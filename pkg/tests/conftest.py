import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from narralpha.forecast import expanding_forecasts
from narralpha.ingest import load_dataset
from narralpha.synth import SynthSpec, generate


@pytest.fixture(scope="session")
def mini_dir(tmp_path_factory):
    """Small planted-signal market: 60 firms, 48 months, dim 16."""
    out = tmp_path_factory.mktemp("mini")
    generate(SynthSpec(n_firms=60, n_months=48, dim=16, seed=1), out)
    return out


@pytest.fixture(scope="session")
def mini_dataset(mini_dir):
    return load_dataset(mini_dir / "inputs.json")


@pytest.fixture(scope="session")
def mini_run(mini_dataset):
    return expanding_forecasts(mini_dataset, burn_in_months=14)


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    """Desk-scale planted-signal market: 300 firms, 120 months, dim 64."""
    out = tmp_path_factory.mktemp("desk")
    generate(SynthSpec(seed=7), out)
    return out


@pytest.fixture(scope="session")
def desk_dataset(desk_dir):
    return load_dataset(desk_dir / "inputs.json")


@pytest.fixture(scope="session")
def desk_run(desk_dataset):
    return expanding_forecasts(desk_dataset, burn_in_months=24)


@pytest.fixture(scope="session")
def desk_manifest(desk_dir):
    import json

    return json.loads((desk_dir / "manifest.json").read_text())
