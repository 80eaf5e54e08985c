import sys
from pathlib import Path

import numpy as np
import pytest

# Make the sibling oracles module importable regardless of how pytest
# resolves rootdir.
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory):
    """One small synthetic training run shared by the CLI tests."""
    from clids import cli

    out = tmp_path_factory.mktemp("run") / "model"
    code = cli.main(["train", "--synth", "96", "--epochs", "2",
                     "--seed", "5", "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="session")
def synth_csv(tmp_path_factory):
    """A labeled synthetic flow CSV matching the trained_run feature count."""
    from clids import cli

    path = tmp_path_factory.mktemp("csv") / "flows.csv"
    code = cli.main(["synth", "--n", "64", "--seed", "9", "--out", str(path)])
    assert code == 0
    return path
