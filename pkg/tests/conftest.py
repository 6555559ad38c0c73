from pathlib import Path

import numpy as np
import pytest

from pfp.core.config import get_settings

DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "channels"


@pytest.fixture
def channel_path():
    def resolve(name: str) -> str:
        return str(DATA_DIR / f"{name}.json")
    return resolve


@pytest.fixture(autouse=True)
def restore_settings():
    settings = get_settings()
    saved = (settings.PFP_BUDGET_MB, settings.PFP_MAX_WORKERS)
    yield
    settings.PFP_BUDGET_MB, settings.PFP_MAX_WORKERS = saved


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
