from pathlib import Path

import pytest

from steklov_lab.checks import Sweep
from steklov_lab.config import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

_sweeps: dict[str, Sweep] = {}


@pytest.fixture(scope="session")
def scenario_sweep():
    """Cached sweep per scenario file name (spectra are reused across tests)."""

    def get(name: str) -> Sweep:
        if name not in _sweeps:
            _sweeps[name] = Sweep(load_scenario(SCENARIOS / f"{name}.toml"), threads=1)
        return _sweeps[name]

    return get
