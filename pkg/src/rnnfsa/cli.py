"""Command-line entry point: ``rnnfsa {gen,dataset,train,analyze,report,all}``.

Every ExperimentConfig field is also a ``--dotted.key`` flag.  Precedence is
defaults, then ``--config FILE``, then flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .automata import compile_regex, minimize
from .dataset import LabeledDataset, build_dataset
from .regex import Alphabet, parse, random_regex, render
from .rnn import RnnModel, init, train


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for key in pl.flatten(pl.ExperimentConfig()):
        p.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="VALUE")


def _config(args) -> pl.ExperimentConfig:
    cfg = pl.ExperimentConfig()
    if args.config:
        cfg = pl.loads_config(Path(args.config).read_text(), cfg)
    flags = {k[4:]: pl.parse_value(v) for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    if "regexes" in flags and isinstance(flags["regexes"], str):
        flags["regexes"] = [flags["regexes"]]
    return pl.apply_overrides(cfg, flags)


def _regexes_from(args, cfg) -> list[str]:
    if getattr(args, "regex_file", None):
        return [l.strip() for l in Path(args.regex_file).read_text(encoding="utf-8").splitlines() if l.strip()]
    return list(cfg.regexes)


def cmd_gen(args) -> int:
    cfg = _config(args)
    alphabet = Alphabet.from_string(cfg.generator.alphabet)
    seen, out = set(), []
    for i in range(cfg.n_languages):
        for draw in range(cfg.max_draws):
            rng = np.random.default_rng(pl.language_seed(cfg.seed, i, draw))
            ast = random_regex(cfg.generator, rng)
            dfa = minimize(compile_regex(ast, alphabet))
            if dfa not in seen:
                seen.add(dfa)
                out.append(render(ast))
                break
    text = "\n".join(out) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_dataset(args) -> int:
    cfg = _config(args)
    alphabet = Alphabet.from_string(cfg.alphabet) if cfg.alphabet else None
    dfa = minimize(compile_regex(parse(args.regex, alphabet), alphabet))
    ds = build_dataset(dfa, cfg.n_examples, cfg.max_len, np.random.default_rng(cfg.seed), args.regex, cfg.seed)
    Path(args.out).write_text(ds.dumps(), encoding="utf-8")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = LabeledDataset.loads(Path(args.dataset).read_text(encoding="utf-8"))
    _, init_rng, train_rng, _ = pl._rngs(cfg.seed, 4)
    model = init(ds.alphabet, cfg.rnn, init_rng, cfg.seed)
    model, stats = train(model, ds, cfg.train, train_rng)
    model.save(args.out)
    print(json.dumps({"epochs": len(stats.val_acc), "best_val_acc": stats.best_val_acc,
                      "reached_target": stats.reached_target}))
    return 0 if stats.reached_target else 3


def cmd_analyze(args) -> int:
    cfg = _config(args)
    ds = LabeledDataset.loads(Path(args.dataset).read_text(encoding="utf-8"))
    dfa = minimize(compile_regex(parse(ds.regex, ds.alphabet), ds.alphabet))
    model = RnnModel.load(args.checkpoint)
    task = pl.LanguageTask(0, ds.regex, cfg.seed, dfa, ds)
    res = pl.analyze_language(task, model, cfg, np.random.default_rng(cfg.seed))
    seqs = res.pop("_seqs")
    res.pop("_trajectories")
    record = {"schema_version": pl.SCHEMA_VERSION, "index": 0, "regex": ds.regex, "alphabet": str(ds.alphabet),
              "seed": cfg.seed, "mdfa": pl.mdfa_record(dfa), "dataset": {"digest": ds.digest(), "n": len(ds),
              "max_len": ds.max_len}, **res}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "record.json").write_text(pl.dumps_record(record))
    from .analysis import dendrogram

    (out / "mdfa_greedy.dot").write_text(pl.emit_dot(dfa, dendrogram(seqs["greedy"])))
    (out / "curves.csv").write_text(pl.curves_csv(record))
    return 0


def cmd_report(args) -> int:
    cfg = _config(args)
    records = pl.load_records(args.records)
    summary = pl.emit_report(records, args.out or args.records, cfg.threshold)
    print(json.dumps(summary["mean_auc"]))
    return 0


def cmd_all(args) -> int:
    cfg = _config(args)
    if getattr(args, "regex_file", None):
        cfg.regexes = tuple(_regexes_from(args, cfg))
    records, discards = pl.run_experiment_detailed(cfg)
    summary = pl.emit_report(records, cfg.output_dir, cfg.threshold)
    print(json.dumps({"records": len(records), "discards": len(discards), "mean_auc": summary["mean_auc"]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rnnfsa", description="Train recurrent recognizers of regular languages and compare them with the minimal DFA.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate distinct random regular expressions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("dataset", help="build a balanced accept/reject dataset for one expression")
    p.add_argument("--regex", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train a recognizer on a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="decode and abstract a trained recognizer")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="aggregate record.json files under a run directory")
    p.add_argument("--records", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("all", help="run the whole experiment and report")
    p.add_argument("--regex-file", help="one expression per line; replaces random generation")
    p.set_defaults(func=cmd_all)

    for p in sub.choices.values():
        _add_config_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable summary
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": args.command}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
