import time

import numpy as np
import pytest

from xbarsim import DeviceModelParams
from xbarsim.harness import CalibrationConfig, ExperimentConfig, calibrate, run_quant_sweep

MASTER_SEED = 20260809


def noiseless(params: DeviceModelParams, alpha: float = 0.0) -> DeviceModelParams:
    return params.replace(g_low_rel_std=0.0, g_high_rel_std=0.0,
                          g_half_rel_std=0.0, read_noise_rel_std=0.0,
                          nonlin_alpha=alpha)


@pytest.fixture(scope="session")
def default_params():
    return DeviceModelParams()


@pytest.fixture(scope="session")
def calibration():
    """(CalibrationResult, wall seconds) for the default device."""
    t0 = time.perf_counter()
    result = calibrate(DeviceModelParams(), CalibrationConfig(), MASTER_SEED)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk_config():
    cfg = ExperimentConfig()
    cfg.master_seed = MASTER_SEED
    cfg.bits_sweep = [3, 8]
    return cfg


@pytest.fixture(scope="session")
def sweep(desk_config):
    """(QuantSweepResult, wall seconds) for the desk task at 3 and 8 bits."""
    t0 = time.perf_counter()
    result = run_quant_sweep(desk_config, outdir=None)
    return result, time.perf_counter() - t0
