import numpy as np
import pytest

from enfgrid.labels import RecType
from enfgrid.synthgrid import DEFAULT_GRIDS, synth_recording


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


@pytest.fixture(scope="session")
def grid_params():
    return {str(p.label): p for p in DEFAULT_GRIDS}


@pytest.fixture(scope="session")
def power_a(grid_params):
    return synth_recording(grid_params["A"], 600, RecType.POWER, seed=11, source_id="power_a")


@pytest.fixture(scope="session")
def audio_b(grid_params):
    return synth_recording(grid_params["B"], 300, RecType.AUDIO, seed=12, source_id="audio_b")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_CONFIG = """\
# tiny power60 run used by the bundle and CLI tests
subsets = power60
per_grid_minutes = 50
max_recording_minutes = 25
unknown_tests = 1
cnn.max_epochs = 3
cnn.conv_filters = (4, 4, 4)
cnn.dense_units = 8
mlp.max_epochs = 50
fusion.max_epochs = 100
"""


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    from enfgrid.evaluation import RunConfig, run_pipeline

    root = tmp_path_factory.mktemp("small")
    cfg_path = root / "small.cfg"
    cfg_path.write_text(SMALL_CONFIG)
    report, system = run_pipeline(RunConfig.load(cfg_path), root / "out")
    return {"config": cfg_path, "out": root / "out", "report": report, "system": system}
