"""Command-line entry point: ``signbart <command> ...``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime error. Every
error is reported on stderr as a single ``<code>: <message>`` line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from signbart.errors import (
    ContractError,
    NumericError,
    ParameterError,
    SchemaError,
    SignBartError,
    StateError,
)
from signbart.model import ModelConfig, SignBart, count_parameters, load_checkpoint, parameter_shapes, save_checkpoint
from signbart.numerics import Tensor
from signbart.runconfig import RunConfig
from signbart.skeleton import (
    NormalizationMode,
    frame_normalize,
    generate_synthetic,
    parse_parts,
    preprocess,
    read_dataset,
    write_dataset,
)
from signbart.skeleton.dataset_io import record_to_sequence
from signbart.skeleton.layout import RAW
from signbart.trainer import (
    TINY_CONFIG,
    evaluate,
    gradient_check,
    predict_proba,
    train,
    write_run_log,
)

log = logging.getLogger("signbart")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
GRADCHECK_MAX_PARAMS = 10_000


class UsageError(SignBartError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers ----------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _parse_topk(text: str) -> list[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise UsageError(f"--topk expects comma-separated integers, got {text!r}") from None
    if not ks:
        raise UsageError("--topk must list at least one k")
    return sorted(set(ks))


def stratified_split(seqs, fraction: float, seed: int):
    """Per-class shuffle with ``seed``; the first round(fraction * n_c) go to validation."""
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        by_label.setdefault(s.label, []).append(i)
    train_set, val_set = [], []
    for label in sorted(by_label):
        idx = list(by_label[label])
        rng.shuffle(idx)
        n_val = int(round(fraction * len(idx)))
        if len(idx) > 1:
            n_val = min(max(n_val, 1), len(idx) - 1)
        else:
            n_val = 0
        val_set += [seqs[i] for i in idx[:n_val]]
        train_set += [seqs[i] for i in idx[n_val:]]
    return train_set, val_set


def _require_labels(seqs, name: str) -> None:
    for s in seqs:
        if s.label is None:
            raise SchemaError(f"{name}: record {s.id or '<unnamed>'} has no label")


def _check_labels(seqs, num_classes: int, name: str) -> None:
    _require_labels(seqs, name)
    for s in seqs:
        if not 0 <= s.label < num_classes:
            raise SchemaError(f"{name}: record {s.id or '<unnamed>'} has label {s.label}, "
                              f"outside [0, {num_classes})")


def _gloss_map(*datasets) -> dict[str, str]:
    glosses = {}
    for seqs in datasets:
        for s in seqs:
            if s.gloss is not None:
                glosses.setdefault(str(s.label), s.gloss)
    return dict(sorted(glosses.items(), key=lambda kv: int(kv[0])))


def _load_model(path):
    config, params, metadata = load_checkpoint(path)
    return SignBart(config, params), metadata


def _check_data_matches(seqs, metadata: dict, config: ModelConfig, name: str) -> None:
    if not seqs:
        raise ParameterError(f"{name} contains no records")
    expected = metadata.get("state")
    if expected is not None and seqs[0].state != expected:
        raise StateError(f"{name} is in state {seqs[0].state!r} but the model was trained on {expected!r}")
    if seqs[0].num_keypoints != config.num_keypoints:
        raise SchemaError(f"{name} has {seqs[0].num_keypoints} keypoints per frame, "
                          f"the checkpoint expects {config.num_keypoints}")


def read_records(path):
    """A JSON Lines dataset, or a file holding one JSON record (possibly pretty-printed)."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if stripped.startswith("{") and "\n" in stripped:
        try:
            rec = json.loads(stripped)
        except json.JSONDecodeError:
            rec = None
        if isinstance(rec, dict):
            return [record_to_sequence(rec)]
    return read_dataset(path)


# -- commands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.classes < 2:
        raise UsageError(f"--classes must be at least 2, got {args.classes}")
    if args.samples < 1:
        raise UsageError(f"--samples must be at least 1, got {args.samples}")
    seqs = generate_synthetic(args.classes, args.samples, args.seed)
    write_dataset(seqs, args.out)
    print(_dump({"records": len(seqs), "out": str(args.out)}))
    return EXIT_OK


def cmd_preprocess(args) -> int:
    seqs = read_dataset(args.in_path)
    if not seqs:
        raise ParameterError(f"{args.in_path} contains no records")
    mode = NormalizationMode.parse(args.mode)
    parts = parse_parts(args.parts)
    counter: Counter = Counter()
    out = []
    for s in seqs:
        if s.state == RAW:
            s = frame_normalize(s, counter)
        out.append(preprocess(s, mode, parts))
    write_dataset(out, args.out)
    print(_dump({"records": len(out), "state": out[0].state, "keypoints": out[0].num_keypoints,
                 "clamped": counter["clamped"], "out": str(args.out)}))
    return EXIT_OK


def cmd_train(args) -> int:
    run = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    if args.train:
        run.data.train = str(Path(args.train).resolve())
    if args.val:
        run.data.val = str(Path(args.val).resolve())
    if args.out:
        run.output_dir = str(Path(args.out).resolve())
    if not run.data.train:
        raise UsageError("no training data: pass --train or set data.train in the config")
    if not run.output_dir:
        raise UsageError("no output directory: pass --out or set output_dir in the config")

    # pre-flight: everything below is checked before any training happens
    train_seqs = read_dataset(run.data.train)
    if not train_seqs:
        raise ParameterError(f"{run.data.train} contains no records")
    if run.data.val:
        val_seqs = read_dataset(run.data.val)
        if not val_seqs:
            raise ParameterError(f"{run.data.val} contains no records")
        if val_seqs[0].state != train_seqs[0].state:
            raise StateError(f"validation state {val_seqs[0].state!r} differs from training "
                             f"state {train_seqs[0].state!r}")
        if val_seqs[0].layout != train_seqs[0].layout:
            raise SchemaError("validation and training files use different keypoint layouts")
    else:
        val_seqs = None
    state = train_seqs[0].state
    if run.data.mode is not None:
        expected = f"part-normalized:{run.data.mode}"
        if state != expected:
            raise StateError(f"training data is in state {state!r} but the config asks for {expected!r}")
    if run.data.parts is not None and ",".join(train_seqs[0].layout.parts) != run.data.parts:
        raise SchemaError(f"training data holds parts {','.join(train_seqs[0].layout.parts)} "
                          f"but the config asks for {run.data.parts}")
    k = train_seqs[0].num_keypoints
    if run.model.get("num_keypoints") not in (None, k):
        raise SchemaError(f"config num_keypoints={run.model['num_keypoints']} but the training data "
                          f"has {k} keypoints per frame")
    _require_labels(train_seqs, "training data")
    inferred_classes = max(s.label for s in train_seqs) + 1
    config = run.model_config(num_keypoints=k, num_classes=inferred_classes)
    _check_labels(train_seqs, config.num_classes, "training data")
    if val_seqs is not None:
        _check_labels(val_seqs, config.num_classes, "validation data")
    else:
        train_seqs, val_seqs = stratified_split(train_seqs, run.data.val_fraction, run.train.seed)
        if not val_seqs:
            raise ParameterError("validation split is empty; pass --val or use more samples per class")

    # materialize every default into the effective config
    run.model = config.to_dict()
    run.data.mode = state.split(":", 1)[1] if ":" in state else None
    run.data.parts = ",".join(train_seqs[0].layout.parts)
    out_dir = Path(run.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run.save(out_dir / "effective_config.json")

    model = SignBart(config, seed=run.train.seed)
    log.info("training %d parameters on %d sequences, validating on %d",
             model.num_parameters(), len(train_seqs), len(val_seqs))
    result = train(model, train_seqs, val_seqs, run.train,
                   on_epoch=lambda r: log.info("epoch %(epoch)d val_top1 %(val_top1).3f", r))

    metadata = {"state": state, "parts": run.data.parts, "glosses": _gloss_map(train_seqs, val_seqs),
                "train": run.train.to_dict()}
    for kind, params, epoch in (("best", result.best_params, result.best_epoch),
                                ("final", result.final_params, run.train.epochs)):
        save_checkpoint(out_dir / f"{kind}.ckpt", config,
                        {n: Tensor(v) for n, v in params.items()},
                        {**metadata, "kind": kind, "epoch": epoch})
    write_run_log(out_dir / "run_log.jsonl", result.run_log)
    print(_dump({"best_epoch": result.best_epoch, "best_val_top1": result.best_val_top1,
                 "steps": result.steps, "out": str(out_dir)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    model, metadata = _load_model(args.ckpt)
    ks = _parse_topk(args.topk)
    seqs = read_dataset(args.data)
    _check_data_matches(seqs, metadata, model.config, str(args.data))
    _check_labels(seqs, model.config.num_classes, str(args.data))
    metrics = evaluate(model, seqs, ks)
    report = {f"recall@{k}": metrics[k] for k in ks}
    out = Path(args.out) if args.out else Path(str(args.ckpt) + ".metrics.json")
    out.write_text(_dump(report) + "\n", encoding="utf-8")
    print(_dump(report))
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.top < 1:
        raise UsageError(f"--top must be at least 1, got {args.top}")
    model, metadata = _load_model(args.ckpt)
    seqs = read_records(args.input)
    _check_data_matches(seqs, metadata, model.config, str(args.input))
    probs = predict_proba(model, seqs)
    glosses = metadata.get("glosses", {})
    max_len = model.config.max_len
    top = min(args.top, model.config.num_classes)
    for seq, p in zip(seqs, probs):
        # stable sort on -p keeps the lower class index first on ties
        order = np.argsort(-p, kind="stable")[:top]
        print(_dump({
            "id": seq.id,
            "frames": seq.num_frames,
            "frames_used": min(seq.num_frames, max_len),
            "truncated": seq.num_frames > max_len,
            "predictions": [{"class": int(c), "gloss": glosses.get(str(int(c))),
                             "probability": float(p[c])} for c in order],
        }))
    return EXIT_OK


def _config_from_file(path) -> ModelConfig:
    run = RunConfig.load(path)
    missing = [k for k in ("num_keypoints", "num_classes") if run.model.get(k) is None]
    if missing:
        raise SchemaError(f"{path}: model.{missing[0]} must be set (it can only be inferred from data)")
    return run.model_config()


def cmd_params(args) -> int:
    config = _config_from_file(args.config)
    shapes = parameter_shapes(config)
    width = max(len(n) for n in shapes)
    for name, shape in shapes.items():
        print(f"{name:<{width}}  {'x'.join(map(str, shape)):>10}  {int(np.prod(shape)):>10}")
    print(f"{'total':<{width}}  {'':>10}  {count_parameters(config):>10}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = _config_from_file(args.config) if args.config else ModelConfig(**TINY_CONFIG)
    n = count_parameters(config)
    if n > GRADCHECK_MAX_PARAMS:
        raise ParameterError(f"config has {n} parameters; gradient checks are limited to "
                             f"{GRADCHECK_MAX_PARAMS}")
    report = gradient_check(config, tolerance=args.tolerance, seed=args.seed)
    width = max(len(e.name) for e in report.entries)
    for e in report.entries:
        print(f"{'PASS' if e.passed else 'FAIL'}  {e.name:<{width}}  max_rel_err={e.max_rel_err:.3e}")
    failed = sum(not e.passed for e in report.entries)
    print(f"{'PASS' if report.passed else 'FAIL'}: {len(report.entries) - failed}/{len(report.entries)} "
          f"tensors within tolerance {args.tolerance:g}; worst {report.worst.name} "
          f"({report.worst.max_rel_err:.3e})")
    return EXIT_OK if report.passed else EXIT_USAGE


# -- wiring -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="signbart", description="Skeleton-based isolated sign recognition.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--samples", type=int, required=True, help="samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="frame and bounding-box normalization, part selection")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=[m.value for m in NormalizationMode], default="three-box")
    p.add_argument("--parts", default="body,left,right")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="run config (JSON); omitted keys take defaults")
    p.add_argument("--train", help="training dataset (overrides data.train)")
    p.add_argument("--val", help="validation dataset; without it a stratified split is used")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="recall@k of a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--topk", default="1,5")
    p.add_argument("--out", help="metrics file (default: <ckpt>.metrics.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="top classes per record")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("params", help="parameter count and per-tensor table")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--config", help="run config with a model section (default: built-in tiny config)")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (NumericError, ContractError) as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SignBartError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
