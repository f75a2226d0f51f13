"""``msg`` command line: vocabulary, training, generation, evaluation, hop traces, fixtures.

Exit codes: 0 success, 2 usage, 3 invalid config, 4 missing / unreadable
file, 5 malformed data, 6 training failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from ..config import ConfigError, TrainConfig, coerce_value
from ..corpus import DatasetError, build_vocab, load_dataset, load_embeddings, Vocabulary, write_dataset

DATA_ROOT_ENV = "MSG_DATA_ROOT"

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3, 4, 5, 6

log = logging.getLogger("msg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def data_path(p) -> Path:
    """Relative paths resolve against $MSG_DATA_ROOT when it is set."""
    p = Path(p)
    root = os.environ.get(DATA_ROOT_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


def _existing(p) -> Path:
    path = data_path(p)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _echo(title: str, body: str) -> None:
    print(f"# {title}", file=sys.stderr)
    for line in body.rstrip("\n").splitlines():
        print(f"#   {line}", file=sys.stderr)


def _echo_args(args) -> None:
    shown = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
             if k not in ("func",) and not k.startswith("cfg_")}
    _echo("arguments", json.dumps(shown, sort_keys=True))


# -- config flags ---------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file")
    g = p.add_argument_group("config overrides")
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, dest=f"cfg_{f.name}", metavar=f.name.upper(), default=None,
                       help=f"override {f.name} (default {getattr(TrainConfig, f.name)})")


def _overrides(args) -> dict:
    return {k[4:]: coerce_value(k[4:], v) for k, v in vars(args).items()
            if k.startswith("cfg_") and v is not None}


def resolve_config(args, base: TrainConfig | None = None) -> TrainConfig:
    overrides = _overrides(args)
    if getattr(args, "config", None):
        cfg = TrainConfig.load(_existing(args.config), **overrides)
    elif base is not None:
        cfg = TrainConfig.from_dict({**base.to_dict(), **overrides})
    else:
        cfg = TrainConfig.from_dict(overrides)
    _echo("resolved config", cfg.dumps())
    return cfg


# -- commands -------------------------------------------------------------------


def cmd_build_vocab(args) -> int:
    cfg = resolve_config(args)
    ds = load_dataset(_existing(args.train), "train")
    vocab = build_vocab(ds.examples, cfg.vocab_size)
    out = data_path(args.out)
    vocab.save(out)
    print(json.dumps({"vocab_size": len(vocab), "token_coverage": vocab.coverage, "path": str(out)}))
    return EXIT_OK


def cmd_train(args) -> int:
    from ..model import MSGModel
    from ..training import load_checkpoint, train

    if args.resume:
        model, vocab, meta = load_checkpoint(_existing(args.resume))
        cfg = resolve_config(args, base=model.config)
        model.config = cfg
        start = int(meta["epoch"])
    else:
        cfg = resolve_config(args)
        start = 0
    ds = load_dataset(_existing(args.train), "train")
    dev = load_dataset(_existing(args.dev), "dev").examples if args.dev else None
    if not args.resume:
        vocab = Vocabulary.load(_existing(args.vocab)) if args.vocab else build_vocab(ds.examples, cfg.vocab_size)
        emb = None
        if args.embeddings:
            import numpy as np
            emb, stats = load_embeddings(_existing(args.embeddings), vocab, cfg.emb_dim, cfg.init_range,
                                         np.random.default_rng(cfg.seed))
            log.info("embeddings: %s", stats)
        model = MSGModel(cfg, len(vocab), embeddings=emb)
    out_dir = data_path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "config.cfg")
    hist = train(model, ds.examples, vocab, dev, out_dir, start_epoch=start, log_path=out_dir / "train_log.jsonl",
                 progress=lambda er: print(json.dumps(er.__dict__), flush=True))
    print(json.dumps({"epochs": len(hist.epochs), "best": str(hist.best_checkpoint) if hist.best_checkpoint else None}))
    return EXIT_OK


def _load_model(args):
    from ..training import load_checkpoint

    model, vocab, _ = load_checkpoint(_existing(args.checkpoint))
    if vocab is None:
        if not args.vocab:
            raise ConfigError("checkpoint carries no vocabulary; pass --vocab")
        vocab = Vocabulary.load(_existing(args.vocab))
    model.config = resolve_config(args, base=model.config)
    return model, vocab


def cmd_generate(args) -> int:
    from ..inference import generate, write_generations

    model, vocab = _load_model(args)
    ds = load_dataset(_existing(args.data), "test")
    gens = generate(model, ds.examples, vocab, beam_size=model.config.beam_size, max_len=args.max_len)
    write_generations(data_path(args.out), gens)
    print(json.dumps({"generated": len(gens), "path": str(data_path(args.out))}))
    return EXIT_OK


def cmd_trace_hops(args) -> int:
    from ..inference import trace_hops

    model, vocab = _load_model(args)
    ds = load_dataset(_existing(args.data), "test")
    trace = trace_hops(model, ds.examples, vocab)
    with open(data_path(args.out), "w", encoding="utf-8") as fh:
        trace.to_jsonl(fh)
    print(json.dumps({"examples": len(trace.example_ids), "hops": len(trace.units), "units": trace.units}))
    return EXIT_OK


def evaluation_report(predictions: dict, examples, baselines: bool = True, lam: float = 0.7, k: int = 3) -> dict:
    """Corpus ROUGE, duplication and per-example rows; optionally LEAD3 / MMR on the same references."""
    from ..metrics import corpus_rouge, duplication, lead3, mmr_summary, rouge

    missing = [e.id for e in examples if e.id not in predictions]
    if missing:
        raise DatasetError(f"{len(missing)} reference example(s) have no prediction, e.g. {missing[:3]}")
    cands = [predictions[e.id] for e in examples]
    refs = [e.answer for e in examples]
    dup = duplication(cands)
    report = {
        "examples": len(examples),
        "rouge": corpus_rouge(cands, refs),
        "duplication": {str(n): r for n, r in dup.ratios.items()},
        "rows": [{"id": e.id, **{k2: v["f"] for k2, v in _short(rouge(c, r).as_dict()).items()}}
                 for e, c, r in zip(examples, cands, refs)],
    }
    if baselines:
        report["baselines"] = {
            "lead3": corpus_rouge([lead3(e.document) for e in examples], refs),
            "mmr": corpus_rouge([mmr_summary(e.question, e.document, lam, k) for e in examples], refs),
        }
    return report


def _short(d: dict) -> dict:
    return {"r1": d["rouge-1"], "r2": d["rouge-2"], "rl": d["rouge-l"]}


def cmd_evaluate(args) -> int:
    ds = load_dataset(_existing(args.references), "test")
    preds = {}
    with open(_existing(args.predictions), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                preds[rec["id"]] = rec["answer"]
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"{args.predictions}:{lineno}: bad prediction record ({exc})") from exc
    report = evaluation_report(preds, ds.examples, baselines=not args.no_baselines, lam=args.mmr_lambda, k=args.mmr_k)
    text = json.dumps(report, indent=2)
    if args.report:
        data_path(args.report).write_text(text + "\n", encoding="utf-8")
    summary = {"rouge": {k: round(v["f"], 4) for k, v in report["rouge"].items()},
               "duplication": {k: round(v, 4) for k, v in report["duplication"].items()}}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_make_fixtures(args) -> int:
    from .fixtures import make_fixture

    examples = make_fixture(args.task, args.size, args.seed, args.offset)
    write_dataset(data_path(args.out), examples)
    print(json.dumps({"task": args.task, "size": len(examples), "path": str(data_path(args.out))}))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    from .fixtures import TASKS

    parser = _Parser(prog="msg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-vocab", help="count tokens of a training set and write a vocabulary")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="two-phase training with per-epoch checkpoints")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--vocab")
    p.add_argument("--embeddings", help="whitespace-separated text vectors")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", help="epoch checkpoint to continue from")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("generate", cmd_generate, "decode answers for a dataset"),
                                 ("trace-hops", cmd_trace_hops, "export normalised per-hop sentence weights")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--vocab")
        if name == "generate":
            p.add_argument("--max-len", type=int, default=50)
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="ROUGE and duplication of predictions against references")
    p.add_argument("--predictions", required=True, help="JSONL with id and answer")
    p.add_argument("--references", required=True, help="dataset JSONL with answers")
    p.add_argument("--report", help="write the full JSON report here")
    p.add_argument("--no-baselines", action="store_true", help="skip LEAD3 / MMR")
    p.add_argument("--mmr-lambda", type=float, default=0.7)
    p.add_argument("--mmr-k", type=int, default=3)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("make-fixtures", help="write a synthetic corpus")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--offset", type=int, default=0, help="id offset, for disjoint train / test draws")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_fixtures)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    _echo_args(args)
    from ..training import TrainingError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DatasetError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except Exception as exc:  # noqa: BLE001 - last-resort categorisation
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
