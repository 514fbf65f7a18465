"""``cpsfuse`` command-line driver.

Subcommands: synth, mask, split, features, encode, train, eval, compare,
wer, kappa. Exit codes: 0 success, 1 usage error, 2 data error. All outputs
are deterministic under the configured seed; CPSFUSE_THREADS caps worker
parallelism for per-clip feature extraction.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import embedio, metrics, pipeline, synthlab
from .acoustic import AcousticConfig, read_wav, write_feature_csv, write_wav
from .base import DataError
from .corpus import (
    Dimension,
    SplitSpec,
    apply_masks,
    cohens_kappa,
    explode_multicoded,
    filter_rare_classes,
    load_corpus,
    load_mask_lexicon,
    load_rater_codings,
    partition_by_dimension,
    save_corpus,
    stratified_split,
    word_error_rate,
)

PRESETS = ("table1", "table1-affective", "mixed6")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser():
    parser = _Parser(prog="cpsfuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--preset", choices=PRESETS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", type=int, default=120)
    p.add_argument("--keyword-noise", type=float, default=0.08)

    p = sub.add_parser("mask", help="apply the mask lexicon to a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overrides", help="JSON file of per-utterance replacement text")

    p = sub.add_parser("split", help="stratified train/test split for one dimension")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dimension", choices=[d.value for d in Dimension], required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--min-class-instances", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("features", help="acoustic feature CSV for corpus audio")
    p.add_argument("--corpus", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame-step-ms", type=float, default=1.0)
    p.add_argument("--target-rate", type=int, default=16000)

    p = sub.add_parser("encode", help="toy embeddings for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--modality", choices=("text", "audio"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--audio-dir")
    p.add_argument("--window-frames", type=int, default=10)
    p.add_argument("--frame-step-ms", type=float, default=10.0)
    p.add_argument("--target-rate", type=int, default=16000)

    for name in ("train", "eval"):
        p = sub.add_parser(name, help=f"{name} one model from an experiment config")
        p.add_argument("--config", required=True)
        p.add_argument("--model", choices=pipeline.MODEL_NAMES, required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("compare", help="train and evaluate all selected models")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("wer", help="word error rate between two transcripts")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)

    p = sub.add_parser("kappa", help="Cohen's kappa from a rater CSV")
    p.add_argument("--pairs", required=True)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except DataError as exc:
        print(f"cpsfuse: data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"cpsfuse: data error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    handler = {
        "synth": _cmd_synth,
        "mask": _cmd_mask,
        "split": _cmd_split,
        "features": _cmd_features,
        "encode": _cmd_encode,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "compare": _cmd_compare,
        "wer": _cmd_wer,
        "kappa": _cmd_kappa,
    }[args.command]
    return handler(args)


def _cmd_synth(args):
    if args.preset == "table1":
        spec = synthlab.table1_social_preset(args.seed, args.keyword_noise)
        audio_spec = None
    elif args.preset == "table1-affective":
        spec = synthlab.table1_affective_preset(args.seed, args.keyword_noise)
        audio_spec = None
    else:
        spec, audio_spec = synthlab.mixed6_preset(args.seed, args.per_class)
    corpus, gold, clips = synthlab.generate_corpus(spec, audio_spec)
    os.makedirs(args.out, exist_ok=True)
    save_corpus(corpus, os.path.join(args.out, "corpus.jsonl"))
    synthlab.write_gold_csv(gold, spec.dimension, os.path.join(args.out, "gold.csv"))
    if clips:
        wav_dir = os.path.join(args.out, "wav")
        os.makedirs(wav_dir, exist_ok=True)
        for ref, clip in clips.items():
            write_wav(clip, os.path.join(wav_dir, ref + ".wav"))
    print(f"wrote {len(corpus)} utterances to {args.out}")
    return 0


def _cmd_mask(args):
    corpus = load_corpus(args.corpus)
    lexicon = load_mask_lexicon(args.lexicon)
    overrides = None
    if args.overrides:
        with open(args.overrides, encoding="utf-8") as fh:
            overrides = json.load(fh)
    masked = apply_masks(corpus, lexicon, overrides)
    save_corpus(masked, args.out)
    print(f"masked {len(masked)} utterances -> {args.out}")
    return 0


def _cmd_split(args):
    corpus = load_corpus(args.corpus)
    instances = explode_multicoded(corpus)
    social, affective = partition_by_dimension(instances)
    chosen = social if args.dimension == Dimension.SOCIAL_COGNITIVE.value else affective
    if not chosen:
        raise DataError(f"corpus has no instances in dimension {args.dimension!r}")
    spec = SplitSpec(
        test_fraction=args.test_fraction,
        min_class_instances=args.min_class_instances,
        seed=args.seed,
    )
    filtered = filter_rare_classes(chosen, spec.min_class_instances)
    split = stratified_split(filtered, spec)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"train": list(split.train), "test": list(split.test)}, fh, indent=0)
        fh.write("\n")
    counts = {}
    for inst in filtered:
        tag = "test" if inst.instance_id in set(split.test) else "train"
        counts.setdefault(inst.class_label, {"train": 0, "test": 0})[tag] += 1
    for label in sorted(counts):
        c = counts[label]
        print(f"{label}: train {c['train']} test {c['test']}")
    return 0


def _acoustic_config(args):
    return AcousticConfig(
        target_rate=args.target_rate, frame_step_ms=args.frame_step_ms
    )


def _cmd_features(args):
    corpus = load_corpus(args.corpus)
    cfg = _acoustic_config(args)
    features = pipeline.load_audio_features(corpus, args.audio_dir, cfg)
    write_feature_csv(args.out, features, cfg.feature_names)
    print(f"wrote {len(features)} feature rows -> {args.out}")
    return 0


def _cmd_encode(args):
    corpus = load_corpus(args.corpus)
    if args.modality == "text":
        dim = args.dim if args.dim is not None else 32
        store = embedio.encode_corpus_text(corpus, embedio.ToyTextEncoderConfig(dim, args.seed))
    else:
        if not args.audio_dir:
            raise DataError("audio encoding requires --audio-dir")
        dim = args.dim if args.dim is not None else 16
        clips = {}
        for rec in corpus:
            ref = rec.utterance.audio_ref
            if ref is None:
                raise DataError(f"utterance {rec.utterance.id!r} has no audio_ref")
            clips[ref] = read_wav(os.path.join(args.audio_dir, ref + ".wav"))
        store = embedio.encode_corpus_audio(
            corpus, clips, _acoustic_config(args),
            embedio.ToyAudioEncoderConfig(dim, args.window_frames, args.seed),
        )
    embedio.write_embeddings(store, args.out)
    print(f"wrote {len(store)} {args.modality} records (d={store.dim}) -> {args.out}")
    return 0


def _load_experiment(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    return pipeline.load_config(args.config, overrides)


def _cmd_train(args):
    config = _load_experiment(args)
    corpus = load_corpus(config.corpus)
    prepared = {
        dim: pipeline.prepare_dimension(insts, config.split)
        for dim, insts in pipeline.split_dimensions(corpus).items()
    }
    needed = {
        i.utterance.id for d in prepared.values() for i in d.train + d.test
    }
    single = dataclasses.replace(config, models=(args.model,))
    resources = pipeline.gather_resources(single, corpus, needed)
    os.makedirs(os.path.join(config.out_dir, "checkpoints"), exist_ok=True)
    os.makedirs(os.path.join(config.out_dir, "logs"), exist_ok=True)
    for dim in sorted(prepared, key=lambda d: d.value):
        data = prepared[dim]
        fitted = pipeline.train_model(args.model, data, config, resources)
        tag = f"{args.model}_{dim.value}"
        path = os.path.join(config.out_dir, "checkpoints", f"{tag}.cps1")
        pipeline.save_model(fitted, path)
        if fitted.records is not None:
            pipeline._write_epoch_log(
                fitted.records,
                os.path.join(config.out_dir, "logs", f"{tag}_epochs.csv"),
            )
        print(f"trained {tag} -> {path}")
    return 0


def _cmd_eval(args):
    config = _load_experiment(args)
    corpus = load_corpus(config.corpus)
    prepared = {
        dim: pipeline.prepare_dimension(insts, config.split)
        for dim, insts in pipeline.split_dimensions(corpus).items()
    }
    needed = {
        i.utterance.id for d in prepared.values() for i in d.train + d.test
    }
    single = dataclasses.replace(config, models=(args.model,))
    resources = pipeline.gather_resources(single, corpus, needed)
    os.makedirs(os.path.join(config.out_dir, "reports"), exist_ok=True)
    os.makedirs(os.path.join(config.out_dir, "heatmaps"), exist_ok=True)
    for dim in sorted(prepared, key=lambda d: d.value):
        data = prepared[dim]
        tag = f"{args.model}_{dim.value}"
        path = os.path.join(config.out_dir, "checkpoints", f"{tag}.cps1")
        if not os.path.exists(path):
            raise DataError(f"no checkpoint at {path}; run train first")
        fitted = pipeline.load_model(path)
        summary, report, cm, _ = pipeline.evaluate_model(fitted, data, resources)
        with open(
            os.path.join(config.out_dir, "reports", f"{tag}.csv"), "w", encoding="utf-8"
        ) as fh:
            fh.write(metrics.report_to_csv(report))
        svg = metrics.heatmap_svg(metrics.row_normalize(cm), data.classes, tag)
        with open(os.path.join(config.out_dir, "heatmaps", f"{tag}.svg"), "wb") as fh:
            fh.write(svg)
        print(
            f"{tag}: acc {metrics.format3(summary.accuracy)} "
            f"prec {metrics.format3(summary.precision)} "
            f"rec {metrics.format3(summary.recall)} f1 {metrics.format3(summary.f1)}"
        )
    return 0


def _cmd_compare(args):
    config = _load_experiment(args)
    summaries = pipeline.run_compare(config)
    table_path = os.path.join(config.out_dir, "reports", "compare.txt")
    if os.path.exists(table_path):
        with open(table_path, encoding="utf-8") as fh:
            print(fh.read(), end="")
    else:
        for dim, per_model in summaries.items():
            for name, summary in per_model.items():
                print(f"{name} {dim}: f1 {metrics.format3(summary.f1)}")
    return 0


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def _cmd_wer(args):
    refs = _read_lines(args.ref)
    hyps = _read_lines(args.hyp)
    if not refs:
        raise DataError(f"{args.ref}: no reference lines")
    if len(refs) != len(hyps):
        raise DataError(
            f"line count mismatch: {len(refs)} reference vs {len(hyps)} hypothesis"
        )
    value = float(np.mean([word_error_rate(r, h) for r, h in zip(refs, hyps)]))
    print(f"{value:.3f}")
    return 0


def _cmd_kappa(args):
    rows = load_rater_codings(args.pairs)
    print(f"{cohens_kappa(rows):.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
