"""sirenedge command line: run / eval / minsize / synth / sched / prune.

Option precedence is flag > SIRENEDGE_* environment variable > config file
(plain ``key=value`` lines, keys named like the long flags) > built-in
default. Exit codes: 0 clean, 2 configuration or parse problem, 3 backend
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

from .classify import open_backend
from .core import (
    DecisionConfig,
    FramePolicy,
    load_wav,
    write_session_log,
    write_wav,
)
from .engine import EngineSession, SessionConfig
from .errors import (
    BackendError,
    NoValidSize,
    ParseError,
    SirenEdgeError,
)
from .framing import resample_linear
from .modelmath import (
    FilterBank,
    ResponseMatrix,
    SchedulerConfig,
    lr_at_step,
    operator_norm_salience,
    prune_mask,
    read_sebf,
    significant_sv_count,
)
from .report import (
    EvalParams,
    evaluate_paths,
    render_figures,
    report_json,
    report_text,
    write_report_csv,
)
from .synth import SirenSpec, mix_at_snr, synth_siren, white_noise
from .telemetry import DEFAULT_LISTEN, TelemetryHub, serve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _read_config_file(path) -> dict:
    cfg = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{ln}: expected key=value")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


class Options:
    """flag > env > file > default resolution for one subcommand."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file_cfg = {}
        if getattr(args, "config", None):
            self.file_cfg = _read_config_file(args.config)

    def get(self, name: str, default=None, cast=None):
        value = getattr(self.args, name.replace("-", "_"), None)
        if value is None:
            env = os.environ.get("SIRENEDGE_" + name.upper().replace("-", "_"))
            if env is not None:
                value = env
            elif name in self.file_cfg:
                value = self.file_cfg[name]
        if value is None:
            return default
        if cast is not None and isinstance(value, str):
            return cast(value)
        return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sirenedge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="stream a clip through the detection engine")
    run.add_argument("--input", help="WAV file to play into the engine")
    run.add_argument("--live", action="store_true",
                     help="capture from hardware (extension point, not built in)")
    run.add_argument("--backend", help="dsp | external:CMD | tcp:ADDR (default dsp)")
    run.add_argument("--growth", type=float, help="frame growth step in seconds")
    run.add_argument("--growth-threshold", type=float)
    run.add_argument("--decision-threshold", type=float)
    run.add_argument("--min-frame", type=int, help="minimum frame length in samples")
    run.add_argument("--hop", type=int, help="hop in samples (default = min frame)")
    run.add_argument("--max-frame", type=float, help="maximum frame length in seconds")
    run.add_argument("--rate", type=int, help="engine sample rate (default 32000)")
    run.add_argument("--listen", nargs="?", const=DEFAULT_LISTEN,
                     help=f"serve telemetry (default bind {DEFAULT_LISTEN})")
    run.add_argument("--log", help="write the JSONL session log here")
    run.add_argument("--simulate", action="store_true",
                     help="as-fast-as-possible lockstep mode (bitwise reproducible)")
    run.add_argument("--config")

    ev = sub.add_parser("eval", help="score a session log against annotations")
    ev.add_argument("--log", required=True, help="JSONL log file or directory of them")
    ev.add_argument("--ref", required=True, help="annotation CSV")
    ev.add_argument("--ftp-filter", action="store_true")
    ev.add_argument("--resolution", type=float)
    ev.add_argument("--collar", type=float)
    ev.add_argument("--offset-ratio", type=float)
    ev.add_argument("--fp-threshold", type=float)
    ev.add_argument("--min-run", type=int)
    ev.add_argument("--eval-threshold", type=float)
    ev.add_argument("--out", help="directory for report.json, report.csv, figures")
    ev.add_argument("--config")

    ms = sub.add_parser("minsize", help="probe a backend's minimum input size")
    ms.add_argument("--backend", required=True)
    ms.add_argument("--lo", type=int)
    ms.add_argument("--hi", type=int)
    ms.add_argument("--rate", type=int)
    ms.add_argument("--config")

    sy = sub.add_parser("synth", help="generate a deterministic siren WAV")
    sy.add_argument("--kind", choices=["wail", "yelp"], required=True)
    sy.add_argument("--duration", type=float)
    sy.add_argument("--snr", type=float, help="mix white noise at this SNR in dB")
    sy.add_argument("--out", required=True)
    sy.add_argument("--seed", type=int)
    sy.add_argument("--rate", type=int)
    sy.add_argument("--f-low", type=float)
    sy.add_argument("--f-high", type=float)
    sy.add_argument("--period", type=float)
    sy.add_argument("--amplitude", type=float)
    sy.add_argument("--config")

    sc = sub.add_parser("sched", help="dump the cyclic cosine LR schedule")
    sc.add_argument("--eta-init", type=float, required=True)
    sc.add_argument("--eta-max", type=float, required=True)
    sc.add_argument("--eta-min", type=float, required=True)
    sc.add_argument("--t-cycle", type=int, required=True)
    sc.add_argument("--t-warmup", type=int)
    sc.add_argument("--steps", type=int, required=True)
    sc.add_argument("--csv", required=True)
    sc.add_argument("--plot", help="also render the curve as PNG")
    sc.add_argument("--config")

    pr = sub.add_parser("prune", help="score filters and emit a keep mask")
    pr.add_argument("--bank", required=True, help="SEBF array file")
    pr.add_argument("--keep", type=float, required=True)
    pr.add_argument("--method", choices=["opnorm", "redundancy"], required=True)
    pr.add_argument("--sv-tol", type=float)
    pr.add_argument("--out", help="write JSON here instead of stdout")
    pr.add_argument("--config")

    return parser


def _cmd_run(args) -> int:
    opt = Options(args)
    if args.live:
        print("live capture is an extension point; this build supports file playback only",
              file=sys.stderr)
        return EXIT_CONFIG
    input_path = opt.get("input")
    if not input_path:
        print("run: --input FILE is required (or --live)", file=sys.stderr)
        return EXIT_CONFIG

    rate = opt.get("rate", 32000, int)
    clip = load_wav(input_path)
    if clip.sample_rate_hz != rate:
        clip = resample_linear(clip, rate)

    backend_desc = opt.get("backend", "dsp")
    try:
        backend = open_backend(backend_desc)
        min_needed = backend.min_input_samples()
    except (BackendError, NoValidSize, ValueError) as exc:
        print(f"backend failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    policy = FramePolicy(
        min_frame_samples=max(opt.get("min-frame", 9919, int), min_needed),
        growth_step_s=opt.get("growth", 0.4, float),
        max_frame_s=opt.get("max-frame", 10.0, float),
        growth_threshold=opt.get("growth-threshold", 0.6, float),
        hop_samples=opt.get("hop", None, int),
    )
    decision = DecisionConfig(event_threshold=opt.get("decision-threshold", 0.5, float))
    cfg = SessionConfig(frame_policy=policy, decision=decision, sample_rate_hz=rate,
                        buffer_capacity_s=max(10.0, policy.max_frame_s),
                        realtime=not args.simulate)

    listen = opt.get("listen")
    hub = TelemetryHub() if listen else None
    session = EngineSession(cfg, clip, backend, telemetry=hub,
                            serve_forever=bool(listen) and not args.simulate)
    service = None
    if listen:
        service = serve(session, hub, listen)
        print(f"telemetry on ws://{listen}/ws", file=sys.stderr)

    try:
        result = session.run()
    except KeyboardInterrupt:
        session.shutdown()
        result = session.collect_result()
    finally:
        if service is not None:
            service.stop()
        backend.close()

    log_path = opt.get("log")
    if log_path:
        write_session_log(result.records, result.events, log_path, meta={
            "clip_id": Path(input_path).stem,
            "duration_s": session.buf.total_written / rate,
            "sample_rate_hz": rate,
        })
    print(f"frames {result.frames_succeeded}/{result.frames_attempted} ok, "
          f"{len(result.events)} event(s), realtime_factor {result.realtime_factor:.2f}")
    for ev in result.events:
        print(f"  event {ev.onset_s:.2f}s .. {ev.offset_s:.2f}s peak {ev.peak_p:.3f}")
    if result.error:
        print(f"aborted: {result.error}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def _cmd_eval(args) -> int:
    opt = Options(args)
    params = EvalParams(
        resolution_s=opt.get("resolution", EvalParams.resolution_s, float),
        onset_collar_s=opt.get("collar", EvalParams.onset_collar_s, float),
        offset_ratio=opt.get("offset-ratio", EvalParams.offset_ratio, float),
        fp_threshold=opt.get("fp-threshold", EvalParams.fp_threshold, float),
        min_run=opt.get("min-run", EvalParams.min_run, int),
        eval_threshold=opt.get("eval-threshold", EvalParams.eval_threshold, float),
    )
    clips, refs, rep = evaluate_paths(args.log, args.ref, params,
                                      ftp_filter=args.ftp_filter)
    text = report_text(rep)
    print(text)
    out_dir = opt.get("out")
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report_json(rep))
        write_report_csv(rep, out / "report.csv")
        render_figures(clips, refs, params, out / "figures")
        print(f"report written to {out}", file=sys.stderr)
    return EXIT_OK


def _cmd_minsize(args) -> int:
    opt = Options(args)
    lo = opt.get("lo", 1, int)
    hi = opt.get("hi", 320000, int)
    rate = opt.get("rate", 32000, int)
    try:
        backend = open_backend(args.backend, probe_lo=lo, probe_hi=hi)
    except (BackendError, NoValidSize, ValueError) as exc:
        print(f"backend failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    try:
        n = backend.min_input_samples()
    except NoValidSize as exc:
        print(f"no valid size: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except BackendError as exc:
        print(f"backend failed: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    finally:
        backend.close()
    print(f"{n} samples ({n / rate * 1000:.2f} ms @ {rate} Hz)")
    return EXIT_OK


def _cmd_synth(args) -> int:
    opt = Options(args)
    spec = SirenSpec(
        kind=args.kind,
        f_low_hz=opt.get("f-low", 700.0, float),
        f_high_hz=opt.get("f-high", 1500.0, float),
        period_s=opt.get("period", None, float),
        duration_s=opt.get("duration", 10.0, float),
        amplitude=opt.get("amplitude", 0.8, float),
        seed=opt.get("seed", 0, int),
    )
    rate = opt.get("rate", 32000, int)
    clip = synth_siren(spec, rate)
    snr = opt.get("snr", None, float)
    if snr is not None and not math.isinf(snr):
        noise = white_noise(spec.duration_s, rate, seed=spec.seed)
        clip = mix_at_snr(clip, noise, snr)
    write_wav(clip, args.out)
    print(f"wrote {args.out}: {spec.kind}, {spec.duration_s}s @ {rate} Hz")
    return EXIT_OK


def _cmd_sched(args) -> int:
    opt = Options(args)
    cfg = SchedulerConfig(
        eta_init=args.eta_init, eta_max=args.eta_max, eta_min=args.eta_min,
        t_cycle=args.t_cycle, t_warmup=opt.get("t-warmup", 0, int),
    )
    rows = [(t, lr_at_step(cfg, t)) for t in range(args.steps)]
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr"])
        writer.writerows(rows)
    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.plot([r[0] for r in rows], [r[1] for r in rows], lw=1.0)
        ax.set_xlabel("step")
        ax.set_ylabel("learning rate")
        ax.set_yscale("log")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=110)
        plt.close(fig)
    print(f"wrote {args.csv} ({len(rows)} steps)")
    return EXIT_OK


def _cmd_prune(args) -> int:
    opt = Options(args)
    arr = read_sebf(args.bank)
    if args.method == "opnorm":
        scores = operator_norm_salience(FilterBank(arr))
    else:
        if arr.ndim != 3:
            print("redundancy method needs a rank-3 array [filters, examples, features]",
                  file=sys.stderr)
            return EXIT_CONFIG
        tol = opt.get("sv-tol", 1e-3, float)
        scores = [
            float(significant_sv_count(ResponseMatrix.from_responses(arr[i]), tol))
            for i in range(arr.shape[0])
        ]
    mask = prune_mask(scores, args.keep)
    payload = {
        "method": args.method,
        "keep_fraction": args.keep,
        "scores": [float(s) for s in scores],
        "keep_mask": [bool(b) for b in mask],
        "kept_filters": [i for i, b in enumerate(mask) if b],
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "eval": _cmd_eval,
        "minsize": _cmd_minsize,
        "synth": _cmd_synth,
        "sched": _cmd_sched,
        "prune": _cmd_prune,
    }
    try:
        return handlers[args.command](args)
    except (BackendError, NoValidSize) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (SirenEdgeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
