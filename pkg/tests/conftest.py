import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthdata import render_video_dataset  # noqa: E402


@pytest.fixture(scope="session")
def video_dataset(tmp_path_factory):
    """Session-scoped tiny rendered dataset: manifest path and its root."""
    root = tmp_path_factory.mktemp("videos")
    manifest_path = render_video_dataset(root, subjects=(1, 2), repetitions=(1, 2))
    return manifest_path
