"""Shared fixtures"""
import os
import tempfile

# The run registry must point at a scratch database before app modules load.
_DB_DIR = tempfile.mkdtemp(prefix="rmdgraph-tests-")
os.environ["DATABASE_URL"] = f"sqlite:///{os.path.join(_DB_DIR, 'runs.db')}"
os.environ.setdefault("RMDGRAPH_THREADS", "1")

import pytest  # noqa: E402

from app.services.data_service import save_dataset  # noqa: E402
from tests.factories import two_cliques_dataset  # noqa: E402


@pytest.fixture
def two_cliques():
    return two_cliques_dataset()


@pytest.fixture
def two_cliques_csv(tmp_path, two_cliques):
    path = tmp_path / "two_cliques.csv"
    save_dataset(two_cliques, path)
    return path
