import os
from pathlib import Path

import numpy as np
import pytest

from blockcast import ColumnSchema, SeriesFrame, load_csv

REPO_ROOT = Path(__file__).resolve().parent.parent
ETTH1_PATH = Path(os.environ.get("BLOCKCAST_ETTH1", REPO_ROOT / "data" / "ETTh1.csv"))


def make_frame(values, names=None, timestamps=None) -> SeriesFrame:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    names = tuple(names) if names else tuple(f"ch{i}" for i in range(values.shape[1]))
    return SeriesFrame(values, names, timestamps)


def random_walk_frame(rng, n_steps, n_channels=1) -> SeriesFrame:
    steps = rng.normal(size=(n_steps, n_channels))
    return make_frame(np.cumsum(steps, axis=0) * 0.1 + rng.normal(size=n_channels))


@pytest.fixture(scope="session")
def etth1_frame() -> SeriesFrame:
    if not ETTH1_PATH.exists():
        pytest.skip(
            f"ETTh1.csv not found at {ETTH1_PATH}; place the public ETT benchmark "
            "file there or point BLOCKCAST_ETTH1 at it"
        )
    return load_csv(ETTH1_PATH, ColumnSchema(timestamp_column="date"))
