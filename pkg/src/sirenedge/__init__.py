"""Real-time siren detection engine, evaluation metrics, and math kernels."""

from .core import (
    AudioClip,
    DecisionConfig,
    DetectionEvent,
    FramePolicy,
    GroundTruthEvent,
    InferenceRecord,
    load_wav,
    read_annotations,
    read_session_log,
    write_session_log,
    write_wav,
)
from .engine import EngineSession, SessionConfig, SessionResult, run_session
from .ringbuf import RingBuffer

__all__ = [
    "AudioClip",
    "DecisionConfig",
    "DetectionEvent",
    "EngineSession",
    "FramePolicy",
    "GroundTruthEvent",
    "InferenceRecord",
    "RingBuffer",
    "SessionConfig",
    "SessionResult",
    "load_wav",
    "read_annotations",
    "read_session_log",
    "run_session",
    "write_session_log",
    "write_wav",
]

__version__ = "0.1.0"
