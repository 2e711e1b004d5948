import numpy as np
import pytest

from physics.calibration import Calibration
from utils.config import get_settings


@pytest.fixture
def cal() -> Calibration:
    return Calibration()


@pytest.fixture
def unit_cal() -> Calibration:
    """One pixel per nm, default 1.75 s per frame."""
    return Calibration(pixels_per_nm=1.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch):
    for name in ("DEFECT_CONFIG_PATH", "DEFECT_THREADS", "DEFECT_DARK_FOREGROUND", "DEFECT_LOG_TO_FILE"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
