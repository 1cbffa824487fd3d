"""Command-line interface.

Commands: featurize, posteriors, enroll, score, listen, baseline, eval,
gen-episodes. Exit codes: 0 success, 1 usage error, 2 data or I/O error,
3 internal error.
"""

from __future__ import annotations

import argparse
import sys

from . import evaluation, synth
from .audio import extract_fbank, read_wav, save_features, stack_frames
from .ctc import forward_logprob
from .dtw import DtwConfig, dtw_detect
from .errors import WakespotError
from .label_model import load_weights, run, save_posteriorgram, save_weights
from .vad import VadConfig, trim_to_speech
from .wakeword import (
    AGGREGATIONS,
    detect_stream,
    learn,
    load_model,
    save_model,
    score,
    score_logsumexp_prior,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise UsageError(message)


def _add_vad_flags(parser):
    parser.add_argument("--vad-threshold-db", type=float, default=-40.0)
    parser.add_argument("--vad-hangover", type=int, default=20)
    parser.add_argument("--vad-min-speech", type=int, default=10)


def _vad_config(args) -> VadConfig:
    return VadConfig(
        energy_threshold_db=args.vad_threshold_db,
        hangover_frames=args.vad_hangover,
        min_speech_frames=args.vad_min_speech,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wakespot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("featurize", help="WAV to log-Mel feature file")
    p.add_argument("wav")
    p.add_argument("out")
    p.add_argument("--stack", action="store_true", help="write stacked 50 Hz features")

    p = sub.add_parser("posteriors", help="WAV to posteriorgram file")
    p.add_argument("weights")
    p.add_argument("wav")
    p.add_argument("out")

    p = sub.add_parser("enroll", help="learn a wakeword model from three recordings")
    p.add_argument("out", help="model file to write")
    p.add_argument("wavs", nargs=3, metavar="wav")
    p.add_argument("--weights", required=True)
    p.add_argument("--beam-width", type=int, default=100)
    p.add_argument("--num-hypotheses", type=int, default=10)
    p.add_argument("--threshold", type=float, default=None)
    _add_vad_flags(p)

    p = sub.add_parser("score", help="score one recording against a model")
    p.add_argument("model")
    p.add_argument("wav")
    p.add_argument("--weights", required=True)
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="weighted_sum")

    p = sub.add_parser("listen", help="stream a WAV through the online detector")
    p.add_argument("model")
    p.add_argument("wav")
    p.add_argument("--weights", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="weighted_sum")
    p.add_argument("--chunk-samples", type=int, default=160)
    _add_vad_flags(p)

    p = sub.add_parser("baseline", help="DTW score of a test WAV against three supports")
    p.add_argument("supports", nargs=3, metavar="support_wav")
    p.add_argument("test")
    p.add_argument("--space", choices=("fbank", "post"), default="post")
    p.add_argument("--weights", help="required for --space post")
    p.add_argument("--lambda", dest="smoothing", type=float, default=1e-5)
    p.add_argument("--agg", choices=("max", "mean"), default="max")
    p.add_argument("--no-normalize", action="store_true", help="skip path-length normalization")
    _add_vad_flags(p)

    p = sub.add_parser("eval", help="run a detector over an episode manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detector", choices=evaluation.DETECTORS, required=True)
    p.add_argument("--weights")
    p.add_argument("--beam-width", type=int, default=100)
    p.add_argument("--num-hypotheses", type=int, default=10)
    p.add_argument("--report", help="write the metrics report here as well")
    p.add_argument("--roc-points", help="write ROC sweep points as CSV")
    _add_vad_flags(p)

    p = sub.add_parser("gen-episodes", help="generate a synthetic episode suite")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clean", action="store_true", help="gentle noise settings")
    p.add_argument("--weights-out", help="also write the matching oracle weights")

    return parser


def _load_post(weights, wav_path, vad_config=None, trim=False):
    audio = read_wav(wav_path)
    if trim:
        audio, _ = trim_to_speech(vad_config or VadConfig(), audio)
    return run(weights, stack_frames(extract_fbank(audio)))


def cmd_featurize(args) -> int:
    features = extract_fbank(read_wav(args.wav))
    if args.stack:
        features = stack_frames(features)
    save_features(args.out, features)
    print(f"wrote {features.num_frames} x {features.dim} frames to {args.out}")
    return EXIT_OK


def cmd_posteriors(args) -> int:
    weights = load_weights(args.weights)
    post = run(weights, stack_frames(extract_fbank(read_wav(args.wav))))
    save_posteriorgram(args.out, post)
    print(f"wrote {post.num_frames} x {post.num_symbols} posteriors to {args.out}")
    return EXIT_OK


def cmd_enroll(args) -> int:
    if args.num_hypotheses > args.beam_width:
        raise UsageError("--num-hypotheses cannot exceed --beam-width")
    weights = load_weights(args.weights)
    vad_config = _vad_config(args)
    posts = [_load_post(weights, w, vad_config, trim=True) for w in args.wavs]
    model = learn(posts, args.beam_width, args.num_hypotheses, threshold=args.threshold)
    save_model(args.out, model)
    for note in model.warnings:
        print(f"warning: {note}", file=sys.stderr)
    alphabet = model.alphabet
    for i in range(len(posts)):
        print(f"example {i + 1}:")
        for hyp in model.hypotheses:
            if hyp.example == i:
                symbols = " ".join(alphabet.symbol_of(v) for v in hyp.labels) or "(empty)"
                print(f"  {symbols}  logp={hyp.enroll_logprob:.4f}  w={hyp.weight:.6f}")
    print(f"wrote {len(model.hypotheses)} hypotheses to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    weights = load_weights(args.weights)
    model = load_model(args.model, weights.alphabet)
    post = _load_post(weights, args.wav)
    for hyp in model.hypotheses:
        symbols = " ".join(model.alphabet.symbol_of(v) for v in hyp.labels) or "(empty)"
        print(f"  {symbols}  logp={forward_logprob(post, hyp.labels):.4f}  w={hyp.weight:.6f}")
    if args.aggregation == "weighted_sum":
        value = score(model, post)
    else:
        value = score_logsumexp_prior(model, post)
    print(f"score {value}")
    return EXIT_OK


def cmd_listen(args) -> int:
    weights = load_weights(args.weights)
    model = load_model(args.model, weights.alphabet)
    audio = read_wav(args.wav)
    chunk = max(args.chunk_samples, 1)
    chunks = (
        audio.samples[i : i + chunk] for i in range(0, len(audio.samples), chunk)
    )
    report = detect_stream(
        model,
        weights,
        chunks,
        threshold=args.threshold,
        vad_config=_vad_config(args),
        aggregation=args.aggregation,
    )
    for event in report.events:
        print(f"event t={event.time:.3f}s score={event.score:.4f} "
              f"frames=[{event.start_frame},{event.end_frame})")
    s = report.stats
    print(
        f"frames={s.frames_processed} speech={s.speech_frames} "
        f"gru_frames={s.label_model_frames} segments={s.segments_scored} "
        f"events={len(report.events)}"
    )
    return EXIT_OK


def cmd_baseline(args) -> int:
    config = DtwConfig(
        feature_space="posteriorgram" if args.space == "post" else "fbank",
        smoothing=args.smoothing,
        normalization="none" if args.no_normalize else "path_length",
        aggregation=args.agg,
    )
    vad_config = _vad_config(args)
    weights = None
    if args.space == "post":
        if not args.weights:
            raise UsageError("--space post requires --weights")
        weights = load_weights(args.weights)

    def prepare(path):
        audio, _ = trim_to_speech(vad_config, read_wav(path))
        features = extract_fbank(audio)
        if weights is not None:
            return run(weights, stack_frames(features))
        return features

    supports = [prepare(p) for p in args.supports]
    value = dtw_detect(supports, prepare(args.test), config)
    print(f"score {value}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.num_hypotheses > args.beam_width:
        raise UsageError("--num-hypotheses cannot exceed --beam-width")
    _, episodes = evaluation.read_episodes(args.manifest)
    weights = load_weights(args.weights) if args.weights else None
    params = evaluation.HarnessParams(
        weights=weights,
        beam_width=args.beam_width,
        num_hypotheses=args.num_hypotheses,
        vad=_vad_config(args),
    )
    report = evaluation.run_harness(args.detector, episodes, params)
    text = evaluation.format_report(report)
    print(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.roc_points:
        evaluation.save_roc_points(args.roc_points, report.overall)
    return EXIT_OK


def cmd_gen_episodes(args) -> int:
    config = synth.EpisodeConfig.clean() if args.clean else synth.EpisodeConfig()
    episodes = synth.generate_synthetic_episodes(args.seed, args.count, config)
    manifest = evaluation.write_episodes(args.out, episodes, synth.synth_alphabet())
    print(f"wrote {len(episodes)} episodes under {args.out} (manifest {manifest})")
    if args.weights_out:
        save_weights(args.weights_out, synth.oracle_weights())
        print(f"wrote oracle weights to {args.weights_out}")
    return EXIT_OK


_COMMANDS = {
    "featurize": cmd_featurize,
    "posteriors": cmd_posteriors,
    "enroll": cmd_enroll,
    "score": cmd_score,
    "listen": cmd_listen,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "gen-episodes": cmd_gen_episodes,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WakespotError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
