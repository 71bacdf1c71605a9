import sys

import numpy as np
import pytest

from sirenedge.classify import DspDetector
from sirenedge.core import AudioClip


def stub_command(*args: str) -> str:
    """Shell command for the reference stub backend."""
    return " ".join([sys.executable, "-m", "sirenedge.stub_backend", *args])


@pytest.fixture(scope="session")
def dsp():
    return DspDetector()


@pytest.fixture
def silence_clip():
    return AudioClip(np.zeros(32000 * 2, dtype=np.float32), 32000)
