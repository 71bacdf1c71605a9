import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirenedge.core import DecisionConfig, InferenceRecord
from sirenedge.decision import DecisionState, events_offline
from sirenedge.errors import OrderViolation


def _records(ps, hop_s=0.31):
    return [InferenceRecord(t_start_s=i * hop_s, frame_len_samples=9919, raw_p=p)
            for i, p in enumerate(ps)]


def _run(ps, config, hop_s=0.31):
    state = DecisionState(config)
    transitions = []
    for rec in _records(ps, hop_s):
        tr = state.step(rec)
        if tr is not None:
            transitions.append(tr)
    end_t = len(ps) * hop_s
    return state.finalize(end_t), transitions


def test_smooth_constant():
    state = DecisionState(DecisionConfig(smoothing_window=3))
    for _ in range(3):
        out = state.smooth(0.9)
    assert out == pytest.approx(0.9)


def test_smooth_warmup_single():
    state = DecisionState(DecisionConfig(smoothing_window=3))
    assert state.smooth(0.6) == pytest.approx(0.6)


def test_smooth_hand_arithmetic():
    state = DecisionState(DecisionConfig(smoothing_window=3))
    state.smooth(0.0)
    state.smooth(0.3)
    assert state.smooth(0.9) == pytest.approx(0.4)


def test_onset_at_first_frame_of_run():
    config = DecisionConfig(smoothing_window=1, consecutive_required=3,
                            event_threshold=0.5)
    events, transitions = _run([0.6, 0.6, 0.6], config)
    assert transitions[0].kind == "onset"
    assert transitions[0].t == pytest.approx(0.0)
    assert len(events) == 1


def test_counter_reset_moves_onset():
    config = DecisionConfig(smoothing_window=1, consecutive_required=3,
                            event_threshold=0.5)
    events, transitions = _run([0.6, 0.4, 0.6, 0.6, 0.6], config)
    # the 0.4 resets the counter; the validated run starts at index 2
    assert transitions[0].t == pytest.approx(2 * 0.31)
    assert len(events) == 1


def test_all_zero_no_transitions():
    events, transitions = _run([0.0] * 50, DecisionConfig())
    assert events == [] and transitions == []


def test_finalize_idle_no_event():
    config = DecisionConfig(smoothing_window=1)
    state = DecisionState(config)
    state.step(InferenceRecord(0.0, 10, 0.2))
    assert state.finalize(10.0) == []


def test_finalize_closes_open_event():
    config = DecisionConfig(smoothing_window=1, consecutive_required=1)
    state = DecisionState(config)
    state.step(InferenceRecord(0.0, 10, 0.9))
    events = state.finalize(10.0)
    assert len(events) == 1
    assert events[0].offset_s == 10.0
    assert events[0].peak_p == pytest.approx(0.9)


def test_offset_at_first_below_frame():
    config = DecisionConfig(smoothing_window=1, consecutive_required=2,
                            release_required=2, event_threshold=0.5)
    events, transitions = _run([0.9, 0.9, 0.9, 0.1, 0.1, 0.1], config)
    assert len(events) == 1
    assert events[0].onset_s == pytest.approx(0.0)
    assert events[0].offset_s == pytest.approx(3 * 0.31)
    assert events[0].n_frames == 3


def test_order_violation():
    state = DecisionState(DecisionConfig())
    state.step(InferenceRecord(1.0, 10, 0.5))
    with pytest.raises(OrderViolation):
        state.step(InferenceRecord(1.0, 10, 0.5))


def test_single_frame_events_are_maximal_runs():
    # consecutive_required = 1 and window = 1: events == maximal runs of raw >= thr
    config = DecisionConfig(smoothing_window=1, consecutive_required=1,
                            event_threshold=0.5)
    ps = [0.1, 0.7, 0.8, 0.2, 0.9, 0.1, 0.6]
    events, _ = _run(ps, config)
    runs = []
    start = None
    for i, p in enumerate(ps + [0.0]):
        if p >= 0.5 and start is None:
            start = i
        elif p < 0.5 and start is not None:
            runs.append((start, i))
            start = None
    assert len(events) == len(runs)
    for ev, (a, b) in zip(events, runs):
        assert ev.onset_s == pytest.approx(a * 0.31)
        expected_off = b * 0.31 if b < len(ps) else len(ps) * 0.31
        assert ev.offset_s == pytest.approx(expected_off)


def _assert_events_equal(online, offline):
    assert len(online) == len(offline)
    for a, b in zip(online, offline):
        assert a.onset_s == pytest.approx(b.onset_s)
        assert a.offset_s == pytest.approx(b.offset_s)
        assert a.peak_p == pytest.approx(b.peak_p)
        assert a.n_frames == b.n_frames


def test_online_offline_equivalence_seeded():
    rng = np.random.default_rng(13)
    for trial in range(300):
        n = int(rng.integers(0, 60))
        ps = rng.uniform(0, 1, n).tolist()
        config = DecisionConfig(
            smoothing_window=int(rng.integers(1, 5)),
            consecutive_required=int(rng.integers(1, 4)),
            event_threshold=float(rng.uniform(0.2, 0.8)),
            release_required=int(rng.integers(1, 4)),
        )
        online, _ = _run(ps, config, hop_s=0.1)
        t_starts = [i * 0.1 for i in range(n)]
        offline, _ = events_offline(ps, t_starts, n * 0.1, config)
        _assert_events_equal(online, offline)


@given(
    ps=st.lists(st.floats(0, 1, allow_nan=False), max_size=40),
    window=st.integers(1, 4),
    required=st.integers(1, 3),
    release=st.integers(1, 3),
    threshold=st.floats(0.1, 0.9),
)
@settings(max_examples=200, deadline=None)
def test_online_offline_equivalence_property(ps, window, required, release, threshold):
    config = DecisionConfig(smoothing_window=window, consecutive_required=required,
                            event_threshold=threshold, release_required=release)
    online, _ = _run(ps, config, hop_s=0.25)
    offline, _ = events_offline(ps, [i * 0.25 for i in range(len(ps))],
                                len(ps) * 0.25, config)
    _assert_events_equal(online, offline)


def test_events_never_overlap_and_onsets_increase():
    rng = np.random.default_rng(99)
    ps = rng.uniform(0, 1, 500).tolist()
    events, _ = _run(ps, DecisionConfig(smoothing_window=2, consecutive_required=2),
                     hop_s=0.1)
    for ev in events:
        assert ev.offset_s > ev.onset_s
    for a, b in zip(events, events[1:]):
        assert b.onset_s > a.onset_s
        assert b.onset_s >= a.offset_s
