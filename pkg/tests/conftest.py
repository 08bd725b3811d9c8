import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wavedet.config import ExperimentConfig  # noqa: E402
from wavedet.detector import IntegrationPipeline, train_bank, train_integrator  # noqa: E402
from wavedet.signal import PulseSpec, build_dataset  # noqa: E402

SMALL_PULSE = PulseSpec(256, 0.02, 0.07)
SMALL_SHIFTS = (0, 5, 9)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo checks")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    return build_dataset(SMALL_PULSE, SMALL_SHIFTS, (0.0, -3.0, -6.0), 300, 300, seed=5)


@pytest.fixture(scope="session")
def small_system(small_dataset):
    """A quick bank on 256-sample windows with a 3-input integrator."""
    bank = train_bank(small_dataset)
    singles = [IntegrationPipeline.single(bank, i) for i in range(bank.size)]
    fused = train_integrator(bank, small_dataset)
    return bank, singles + [fused]


@pytest.fixture(scope="session")
def default_config():
    return ExperimentConfig.load()


@pytest.fixture(scope="session")
def default_system(default_config):
    """Bank and both integrators trained once at the default experiment settings."""
    cfg = default_config
    ds = build_dataset(cfg.pulse, cfg.shifts, cfg.snr_grid, cfg.counts["pulse"], cfg.counts["noise"],
                       cfg.seed, cfg.noise.sigma, cfg.partition_fractions)
    bank = train_bank(ds, cfg.shifts, cfg.bank_svm, cfg.wavelet, scale=cfg.scale)
    pipelines = [IntegrationPipeline.single(bank, i) for i in range(bank.size)]
    for group in cfg.integrators:
        inputs = tuple(cfg.shifts.index(s) for s in group)
        pipelines.append(train_integrator(bank, ds, inputs, cfg.integrator_kernel, cfg.integrator_svm))
    return bank, pipelines


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
