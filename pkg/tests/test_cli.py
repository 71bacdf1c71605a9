import json

import numpy as np
import pytest

from sirenedge.cli import main
from sirenedge.core import (
    DetectionEvent,
    GroundTruthEvent,
    InferenceRecord,
    load_wav,
    write_annotations,
    write_session_log,
    write_wav,
)
from sirenedge.modelmath import write_sebf
from sirenedge.synth import SirenSpec, siren_in_noise, synth_siren

from conftest import stub_command

RATE = 32000


def _silence_wav(tmp_path, seconds=2.0):
    from sirenedge.core import AudioClip
    path = tmp_path / "silence.wav"
    write_wav(AudioClip(np.zeros(int(seconds * RATE), dtype=np.float32), RATE), path)
    return path


# -- run ------------------------------------------------------------------------

def test_run_silence_exits_clean(tmp_path, capsys):
    wav = _silence_wav(tmp_path)
    log = tmp_path / "out.jsonl"
    code = main(["run", "--input", str(wav), "--log", str(log), "--simulate"])
    assert code == 0
    assert log.exists()
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert lines[0]["type"] == "meta"
    assert all(l["type"] != "event" for l in lines)


def test_run_simulate_reproducible(tmp_path):
    clip = siren_in_noise(SirenSpec("yelp", duration_s=3.0), 2.0, 8.0, 20.0,
                          noise_seed=4)
    wav = tmp_path / "clip.wav"
    write_wav(clip, wav)
    log1 = tmp_path / "a.jsonl"
    log2 = tmp_path / "b.jsonl"
    assert main(["run", "--input", str(wav), "--log", str(log1), "--simulate"]) == 0
    assert main(["run", "--input", str(wav), "--log", str(log2), "--simulate"]) == 0
    assert log1.read_bytes() == log2.read_bytes()


def test_run_unreachable_tcp_backend_exit_3(tmp_path):
    wav = _silence_wav(tmp_path)
    code = main(["run", "--input", str(wav), "--backend", "tcp:127.0.0.1:1",
                 "--simulate"])
    assert code == 3


def test_run_live_unsupported(tmp_path):
    assert main(["run", "--live"]) == 2


def test_run_missing_input():
    assert main(["run"]) == 2


def test_run_external_backend(tmp_path):
    wav = _silence_wav(tmp_path, seconds=1.0)
    log = tmp_path / "ext.jsonl"
    code = main(["run", "--input", str(wav), "--simulate", "--log", str(log),
                 "--backend", "external:" + stub_command("--min", "9919", "--score", "0.1")])
    assert code == 0
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    records = [l for l in lines if l["type"] == "record"]
    assert records and all(r["raw_p"] == pytest.approx(0.1) for r in records)


def test_run_listen_serves_telemetry(tmp_path):
    import signal
    import subprocess
    import sys
    import time

    import httpx

    clip = siren_in_noise(SirenSpec("yelp", duration_s=2.0), 1.0, 4.0, 20.0,
                          noise_seed=2)
    wav = tmp_path / "clip.wav"
    write_wav(clip, wav)
    log = tmp_path / "session.jsonl"
    port = 18921
    proc = subprocess.Popen(
        [sys.executable, "-m", "sirenedge.cli", "run", "--input", str(wav),
         "--listen", f"127.0.0.1:{port}", "--log", str(log)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    try:
        health = None
        deadline = time.monotonic() + 10.0
        while time.monotonic() < deadline:
            try:
                health = httpx.get(f"http://127.0.0.1:{port}/healthz", timeout=0.5)
                break
            except httpx.TransportError:
                time.sleep(0.1)
        assert health is not None and health.json() == {"status": "ok"}
        time.sleep(2.0)  # let part of the clip stream through
        proc.send_signal(signal.SIGINT)
        code = proc.wait(timeout=10.0)
        assert code == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()
    assert log.exists()
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert lines[0]["type"] == "meta"
    assert any(l["type"] == "record" for l in lines)


# -- eval -----------------------------------------------------------------------

def _aligned_fixture(tmp_path):
    """Log whose over-threshold record spans exactly tile its event span."""
    hop = 3200  # 0.1 s at 32 kHz = one grid cell per record
    records = []
    for i in range(100):
        t = (i * hop) / RATE
        inside = 2.0 <= t < 5.0
        records.append(InferenceRecord(
            t_start_s=t, frame_len_samples=hop,
            raw_p=0.95 if inside else 0.05,
            smoothed_p=0.95 if inside else 0.05,
        ))
    events = [DetectionEvent(onset_s=2.0, offset_s=5.0, peak_p=0.95, n_frames=30)]
    log = tmp_path / "clip01.jsonl"
    write_session_log(records, events, log, meta={
        "clip_id": "clip01", "duration_s": 10.0, "sample_rate_hz": RATE,
    })
    ref = tmp_path / "ann.csv"
    write_annotations([GroundTruthEvent("clip01", 2.0, 5.0, False)], ref)
    return log, ref


def test_eval_self_match_perfect(tmp_path, capsys):
    log, ref = _aligned_fixture(tmp_path)
    out = tmp_path / "report"
    code = main(["eval", "--log", str(log), "--ref", str(ref), "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    frame = report["unfiltered"]["frame"]
    assert frame["precision"] == 1.0
    assert frame["recall"] == 1.0
    assert frame["f1"] == 1.0
    assert frame["accuracy"] == 1.0
    assert frame["error_rate"] == 0.0
    event = report["unfiltered"]["event"]
    assert (event["tp"], event["fp"], event["fn"]) == (1, 0, 0)
    assert (out / "report.csv").exists()
    assert (out / "figures" / "timeline.png").stat().st_size > 0
    assert (out / "figures" / "fp_runs.png").stat().st_size > 0


def test_eval_golden_byte_identical(tmp_path):
    log, ref = _aligned_fixture(tmp_path)
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    assert main(["eval", "--log", str(log), "--ref", str(ref), "--out", str(out1)]) == 0
    assert main(["eval", "--log", str(log), "--ref", str(ref), "--out", str(out2)]) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_eval_ftp_degenerate_reports_undefined_rate(tmp_path):
    # the only annotated clip is FTP-flagged; spurious predictions remain on
    # another clip with no references at all
    hop = 3200
    records = [InferenceRecord((i * hop) / RATE, hop, 0.9, 0.9) for i in range(50)]
    events = [DetectionEvent(0.0, 5.0, 0.9, 50)]
    logdir = tmp_path / "logs"
    logdir.mkdir()
    write_session_log(records, events, logdir / "neg01.jsonl", meta={
        "clip_id": "neg01", "duration_s": 5.0, "sample_rate_hz": RATE})
    quiet = [InferenceRecord((i * hop) / RATE, hop, 0.05, 0.05) for i in range(50)]
    write_session_log(quiet, [], logdir / "pos01.jsonl", meta={
        "clip_id": "pos01", "duration_s": 5.0, "sample_rate_hz": RATE})
    ref = tmp_path / "ann.csv"
    write_annotations([GroundTruthEvent("pos01", 1.0, 4.0, ftp=True)], ref)
    out = tmp_path / "report"
    code = main(["eval", "--log", str(logdir), "--ref", str(ref),
                 "--ftp-filter", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["ftp_filtered"]["event"]["undefined_rate"] is True
    assert report["ftp_filtered"]["dropped_clips"] == ["pos01"]
    assert report["unfiltered"]["event"]["undefined_rate"] is False


def test_eval_bad_log_exit_2(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    ref = tmp_path / "ann.csv"
    write_annotations([], ref)
    assert main(["eval", "--log", str(bad), "--ref", str(ref)]) == 2


# -- minsize ----------------------------------------------------------------------

def test_minsize_stub_9919(capsys):
    code = main(["minsize", "--backend",
                 "external:" + stub_command("--min", "9919")])
    assert code == 0
    out = capsys.readouterr().out
    assert "9919 samples (309.97 ms @ 32000 Hz)" in out


def test_minsize_always_valid(capsys):
    code = main(["minsize", "--backend", "external:" + stub_command()])
    assert code == 0
    assert "1 samples" in capsys.readouterr().out


def test_minsize_never_valid():
    code = main(["minsize", "--backend",
                 "external:" + stub_command("--min", "999999")])
    assert code == 3


# -- synth --------------------------------------------------------------------------

def test_synth_deterministic_bytes(tmp_path):
    a = tmp_path / "a.wav"
    b = tmp_path / "b.wav"
    args = ["synth", "--kind", "wail", "--duration", "2", "--snr", "20",
            "--seed", "42"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synth_matches_library(tmp_path):
    path = tmp_path / "pure.wav"
    assert main(["synth", "--kind", "yelp", "--duration", "1", "--out", str(path)]) == 0
    clip = load_wav(path)
    expected = synth_siren(SirenSpec("yelp", duration_s=1.0), RATE)
    assert np.array_equal(clip.samples, expected.samples)


def test_synth_invalid_spec_exit_2(tmp_path):
    code = main(["synth", "--kind", "wail", "--duration", "1", "--period", "0",
                 "--out", str(tmp_path / "x.wav")])
    assert code == 2


# -- sched ----------------------------------------------------------------------------

def test_sched_csv_anchor(tmp_path):
    csv_path = tmp_path / "lr.csv"
    plot = tmp_path / "lr.png"
    code = main(["sched", "--eta-init", "1e-5", "--eta-max", "1e-3",
                 "--eta-min", "1e-6", "--t-cycle", "100", "--t-warmup", "5",
                 "--steps", "300", "--csv", str(csv_path), "--plot", str(plot)])
    assert code == 0
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "step,lr"
    step5 = rows[1 + 5].split(",")
    assert float(step5[1]) == pytest.approx(1e-3)
    assert len(rows) == 301
    assert plot.stat().st_size > 0


def test_sched_invalid_config_exit_2(tmp_path):
    code = main(["sched", "--eta-init", "1e-5", "--eta-max", "1e-3",
                 "--eta-min", "1e-2", "--t-cycle", "100",
                 "--steps", "10", "--csv", str(tmp_path / "x.csv")])
    assert code == 2


# -- prune -----------------------------------------------------------------------------

def test_prune_keep_all(tmp_path, capsys):
    bank = np.random.default_rng(5).normal(size=(4, 2, 3, 3))
    path = tmp_path / "bank.sebf"
    write_sebf(bank, path)
    code = main(["prune", "--bank", str(path), "--keep", "1.0",
                 "--method", "opnorm"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["keep_mask"] == [True] * 4


def test_prune_two_filter_ordering(tmp_path, capsys):
    bank = np.zeros((2, 1, 2, 2))
    bank[0, 0] = [[3.0, 0.0], [0.0, 0.0]]
    bank[1, 0] = [[0.0, 1.0], [0.0, 0.0]]
    path = tmp_path / "bank.sebf"
    write_sebf(bank, path)
    code = main(["prune", "--bank", str(path), "--keep", "0.5",
                 "--method", "opnorm"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["keep_mask"] == [True, False]
    assert payload["scores"][0] > payload["scores"][1]


def test_prune_redundancy(tmp_path, capsys):
    rng = np.random.default_rng(7)
    stacks = []
    for rank in (1, 3):
        stacks.append(rng.normal(size=(20, rank)) @ rng.normal(size=(rank, 10)))
    path = tmp_path / "resp.sebf"
    write_sebf(np.stack(stacks), path)
    code = main(["prune", "--bank", str(path), "--keep", "0.5",
                 "--method", "redundancy"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["scores"] == [1.0, 3.0]
    assert payload["keep_mask"] == [False, True]


def test_prune_redundancy_needs_rank3(tmp_path):
    path = tmp_path / "bank.sebf"
    write_sebf(np.zeros((2, 2)), path)
    assert main(["prune", "--bank", str(path), "--keep", "0.5",
                 "--method", "redundancy"]) == 2


# -- option precedence -------------------------------------------------------------------

def test_precedence_flag_env_file_default(tmp_path, monkeypatch):
    cfg = tmp_path / "conf"
    cfg.write_text("duration=3\n# comment\nseed=9\n")

    out_flag = tmp_path / "flag.wav"
    monkeypatch.setenv("SIRENEDGE_DURATION", "2")
    assert main(["synth", "--kind", "yelp", "--duration", "1",
                 "--config", str(cfg), "--out", str(out_flag)]) == 0
    assert len(load_wav(out_flag).samples) == RATE  # flag wins

    out_env = tmp_path / "env.wav"
    assert main(["synth", "--kind", "yelp", "--config", str(cfg),
                 "--out", str(out_env)]) == 0
    assert len(load_wav(out_env).samples) == 2 * RATE  # env beats file

    monkeypatch.delenv("SIRENEDGE_DURATION")
    out_file = tmp_path / "file.wav"
    assert main(["synth", "--kind", "yelp", "--config", str(cfg),
                 "--out", str(out_file)]) == 0
    assert len(load_wav(out_file).samples) == 3 * RATE  # file beats default

    out_default = tmp_path / "default.wav"
    assert main(["synth", "--kind", "yelp", "--out", str(out_default)]) == 0
    assert len(load_wav(out_default).samples) == 10 * RATE


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--bogus-flag"])
    assert exc.value.code == 2


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for sub in ("run", "eval", "minsize", "synth", "sched", "prune"):
        assert sub in out
