"""Command-line entry points: train, evaluate, predict, gradcheck.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 gradient check failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig
from .corpus import CorpusError, SentenceRecord, load_dataset
from .evaluation import METRIC_KEYS, score
from .graph import GraphError
from .inference import evaluate_records, predict_records
from .model import ModelError, load_checkpoint, save_checkpoint
from .training import TrainingError, fit, mean_metrics
from .verify import corrupted_backward, gradcheck_config, run_gradcheck

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_GRADCHECK = 0, 1, 2, 3

log = logging.getLogger("sdein")


class UsageError(Exception):
    pass


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _load_config(args, need=()) -> RunConfig:
    overrides = _overrides(args.set)
    if getattr(args, "seed", None):
        overrides["seeds"] = args.seed
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if args.config:
        cfg = RunConfig.from_file(args.config, overrides)
    else:
        cfg = RunConfig.from_mapping(overrides)
    cfg.validate(need)
    return cfg


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _train_one(cfg: RunConfig, seed: int) -> dict:
    out = Path(cfg.out_dir)
    for sub in ("checkpoints", "logs", "metrics"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    train = load_dataset(cfg.train_file)
    dev = load_dataset(cfg.dev_file) if cfg.dev_file else None
    tcfg = replace(cfg.train, seed=seed)
    state, history = fit(train, dev, cfg.model, tcfg, log_path=out / "logs" / f"train_seed{seed}.jsonl",
                         general_path=cfg.general_embeddings, domain_path=cfg.domain_embeddings_file)
    ckpt = out / "checkpoints" / f"model_seed{seed}.ckpt"
    save_checkpoint(state, ckpt, {"seed": seed, "train_config": tcfg.to_dict()})
    best = max(history, key=lambda e: e["best_dev_f1_i"])
    result = {"seed": seed, "checkpoint": str(ckpt), "epochs": len(history),
              "dev": next(e["dev"] for e in history if e["dev"] and e["dev"]["f1_i"] == best["best_dev_f1_i"])
              if any(e["dev"] for e in history) else None}
    if cfg.test_file:
        report = evaluate_records(state, load_dataset(cfg.test_file))
        result["test"] = {k: report[k] for k in METRIC_KEYS}
        _write_json(out / "metrics" / f"test_seed{seed}.json", report.as_dict())
    _write_json(out / "metrics" / f"run_seed{seed}.json", result)
    return result


def cmd_train(args) -> int:
    cfg = _load_config(args, need=("train_file",))
    (Path(cfg.out_dir)).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "run.cfg").write_text(cfg.to_text(), encoding="utf-8")
    if args.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_train_one(cfg, s) for s in cfg.seeds]
    summary = {"seeds": list(cfg.seeds), "runs": results}
    for split in ("dev", "test"):
        rows = [r[split] for r in results if r.get(split)]
        if rows:
            summary[f"mean_{split}"] = mean_metrics(rows)
    _write_json(Path(cfg.out_dir) / "metrics" / "mean.json", summary)
    for r in results:
        print(f"seed {r['seed']}: {r['checkpoint']} ({r['epochs']} epochs)")
    for split in ("dev", "test"):
        if f"mean_{split}" in summary:
            vals = " ".join(f"{k}={v:.4f}" for k, v in summary[f"mean_{split}"].items())
            print(f"mean {split} over {len(cfg.seeds)} seed(s): {vals}")
    return EXIT_OK


def _prediction_view(obj: dict, line: int):
    ae = obj.get("pred_ae_tags", obj.get("ae_tags"))
    sent = obj.get("pred_as_tags", obj.get("as_tags"))
    if ae is None or sent is None:
        raise CorpusError(f"line {line}: prediction has no AE/AS tags")
    return SentenceRecord(list(obj["tokens"]), list(ae), list(sent), [], [], line=line)


def cmd_evaluate(args) -> int:
    gold = load_dataset(args.test)
    if not gold:
        raise CorpusError(f"{args.test}: no records to evaluate")
    if args.predictions:
        with open(args.predictions, encoding="utf-8") as fh:
            preds = [_prediction_view(json.loads(raw), i) for i, raw in enumerate(fh, start=1) if raw.strip()]
        report = score(preds, gold)
    else:
        if not args.checkpoint:
            raise UsageError("evaluate needs --checkpoint or --predictions")
        state, _ = load_checkpoint(args.checkpoint)
        report = evaluate_records(state, gold)
    text = json.dumps({k: report[k] for k in METRIC_KEYS} | {"counts": report.counts}, indent=2, sort_keys=True)
    print(text)
    if args.out:
        _write_json(Path(args.out), report.as_dict())
    return EXIT_OK


def cmd_predict(args) -> int:
    state, _ = load_checkpoint(args.checkpoint)
    records = load_dataset(args.input, require_tags=False)
    lines = [json.dumps(p.to_dict(r), ensure_ascii=False, sort_keys=True)
             for p, r in zip(predict_records(state, records), records)]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    overrides = _overrides(args.set)
    if args.config:
        # a config file fixes every width itself
        model = RunConfig.from_file(args.config, overrides).model
    else:
        parsed = RunConfig.from_mapping(overrides).model.to_dict()
        model = gradcheck_config(**{k: parsed[k] for k in overrides if k in parsed})
    records = load_dataset(args.fixture) if args.fixture else None
    if args.corrupt_backward:
        with corrupted_backward():
            report = run_gradcheck(model, records, seed=args.seed)
    else:
        report = run_gradcheck(model, records, seed=args.seed)
    print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_GRADCHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdein", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model per seed")
    p.add_argument("--config")
    p.add_argument("--seed", help="comma-separated seeds, e.g. 1,2,3,4,5")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint or a predictions file")
    p.add_argument("--checkpoint")
    p.add_argument("--test", required=True)
    p.add_argument("--predictions", help="score this file instead of running a model")
    p.add_argument("--out", help="write the metrics report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="tag records with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--fixture", help="records to check on (default: bundled 2-sentence fixture)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: no such file {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, GraphError, ModelError, TrainingError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
