"""End-to-end experiments: generate languages, train recognizers, analyse, report."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis as an
from .automata import AbstractionNfa, Dfa, minimize, compile_regex
from .dataset import CannotBalance, LabeledDataset, NoWitness, build_dataset
from .decoder import DecoderConfig, fit, mlp_config
from .regex import Alphabet, GeneratorConfig, render_class, parse, random_regex, render
from .rnn import RnnConfig, RnnModel, TrainConfig, TrainingDiverged, init, record_trajectories, train, trajectories_csv

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_languages: int = 20
    # fixed expressions replace random generation when non-empty
    regexes: tuple = ()
    alphabet: str = ""
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    n_examples: int = 1000
    max_len: int = 20
    rnn: RnnConfig = field(default_factory=RnnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    mlp: DecoderConfig = field(default_factory=mlp_config)
    abstraction_kind: str = "linear"
    test_fraction: float = 0.2
    threshold: float = 0.9
    max_draws: int = 200
    output_dir: str = "runs/default"
    workers: int = 1
    export_trajectories: bool = False

    def validate(self) -> None:
        if self.n_languages < 1 or self.n_examples < 2 or self.max_len < 1 or self.workers < 1:
            raise ValueError("counts must be >= 1 (n_examples >= 2)")


# --- flat key-value config format ------------------------------------------------

def flatten(cfg, prefix: str = "") -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        key = prefix + f.name
        if dataclasses.is_dataclass(v):
            out.update(flatten(v, key + "."))
        else:
            out[key] = list(v) if isinstance(v, tuple) else v
    return out


def _coerce(current, value):
    if isinstance(current, tuple):
        return tuple(value)
    if isinstance(current, bool):
        return bool(value)
    if isinstance(current, float) and isinstance(value, int):
        return float(value)
    return value


def apply_overrides(cfg, values: dict):
    """Return a copy of ``cfg`` with dotted-key ``values`` applied."""
    cfg = dataclasses.replace(cfg)
    for key, value in values.items():
        target = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            sub = getattr(target, p, None)
            if not dataclasses.is_dataclass(sub):
                raise KeyError(f"unknown config key {key!r}")
            sub = dataclasses.replace(sub)
            setattr(target, p, sub)
            target = sub
        if not hasattr(target, parts[-1]) or dataclasses.is_dataclass(getattr(target, parts[-1])):
            raise KeyError(f"unknown config key {key!r}")
        setattr(target, parts[-1], _coerce(getattr(target, parts[-1]), value))
    return cfg


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def dumps_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in flatten(cfg).items())


def loads_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected 'key = value'")
        k, v = line.split("=", 1)
        values[k.strip()] = parse_value(v.strip())
    return apply_overrides(base or ExperimentConfig(), values)


# --- seeds -------------------------------------------------------------------------

def language_seed(master: int, index: int, draw: int = 0) -> int:
    """Stable per-language seed; independent of worker scheduling."""
    return int(np.random.SeedSequence([master, index, draw]).generate_state(1)[0])


def _rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# --- language preparation ---------------------------------------------------------------

@dataclass
class LanguageTask:
    index: int
    regex: str
    seed: int
    mdfa: Dfa
    dataset: LabeledDataset


def prepare_languages(config: ExperimentConfig):
    """Draw distinct languages (by canonical MDFA) that admit a balanced dataset.

    Returns (tasks, discards).
    """
    tasks, discards, seen = [], [], set()
    if config.regexes:
        alphabet = Alphabet.from_string(config.alphabet) if config.alphabet else None
        for i, text in enumerate(config.regexes):
            seed = language_seed(config.seed, i)
            try:
                ast = parse(text, alphabet)
                dfa = minimize(compile_regex(ast, alphabet))
                if dfa in seen:
                    raise CannotBalance("duplicate language")
                ds = build_dataset(dfa, config.n_examples, config.max_len, _rngs(seed, 1)[0], text, seed)
            except (CannotBalance, NoWitness, ValueError) as exc:
                discards.append({"index": i, "regex": text, "stage": "dataset", "reason": str(exc)})
                continue
            seen.add(dfa)
            tasks.append(LanguageTask(i, text, seed, dfa, ds))
        return tasks, discards

    alphabet = Alphabet.from_string(config.generator.alphabet)
    for i in range(config.n_languages):
        for draw in range(config.max_draws):
            seed = language_seed(config.seed, i, draw)
            gen_rng, ds_rng = _rngs(seed, 2)
            ast = random_regex(config.generator, gen_rng)
            text = render(ast)
            dfa = minimize(compile_regex(ast, alphabet))
            if dfa in seen:
                continue
            try:
                ds = build_dataset(dfa, config.n_examples, config.max_len, ds_rng, text, seed)
            except (CannotBalance, NoWitness) as exc:
                log.info("language %d draw %d (%s) skipped: %s", i, draw, text, exc)
                continue
            seen.add(dfa)
            tasks.append(LanguageTask(i, text, seed, dfa, ds))
            break
        else:
            discards.append({"index": i, "regex": None, "stage": "generate",
                             "reason": f"no usable language in {config.max_draws} draws"})
    return tasks, discards


# --- per-language analysis ----------------------------------------------------------------

def analyze_language(task: LanguageTask, model: RnnModel, config: ExperimentConfig, rng) -> dict:
    mdfa = task.mdfa
    trajs = record_trajectories(model, mdfa, task.dataset)
    ts = an.TrajectorySet.build(trajs, mdfa.alphabet)
    split = an.split_strings(ts.n_strings, config.test_fraction, rng)
    train_set, test_set = ts.subset(split[0]), ts.subset(split[1])
    base = AbstractionNfa.from_dfa(mdfa)

    t0 = time.perf_counter()
    decoders = {}
    for kind, hyper in (("linear", config.decoder), ("mlp", config.mlp)):
        dec = fit(kind, train_set.H, train_set.Q, mdfa.n_states, dataclasses.replace(hyper, kind=kind), rng)
        decoders[kind] = {
            "rho": an.decoding_accuracy(test_set, dec, base),
            "phi": an.transitional_accuracy(test_set, dec, base),
            "accuracy": float(np.mean(dec.predict_batch(test_set.H) == test_set.Q)),
            "absent_classes": dec.meta["absent_classes"],
        }
    t1 = time.perf_counter()
    hyper = config.decoder if config.abstraction_kind == "linear" else config.mlp
    hyper = dataclasses.replace(hyper, kind=config.abstraction_kind)
    seqs = {
        "greedy": an.greedy_abstraction(ts, mdfa, hyper, rng, config.abstraction_kind, split),
        "random": an.random_abstraction(ts, mdfa, hyper, rng, config.abstraction_kind, split),
    }
    t2 = time.perf_counter()
    M = mdfa.n_states
    out = {"decoders": decoders, "sequences": {}, "dendrograms": {}, "auc": {}, "auc_phi": {},
           "coarseness_ratio": {}}
    for name, seq in seqs.items():
        seq.check()
        out["sequences"][name] = seq.to_dict()
        out["dendrograms"][name] = an.dendrogram(seq).to_dict()
        out["auc"][name] = an.normalized_auc(seq.curve("rho"))
        out["auc_phi"][name] = an.normalized_auc(seq.curve("phi"))
        out["coarseness_ratio"][name] = an.coarseness_ratio_at(seq.curve("rho"), config.threshold, M)
    out["timing"] = {"decoders": t1 - t0, "abstraction": t2 - t1}
    out["_seqs"] = seqs
    out["_trajectories"] = trajs
    return out


def mdfa_record(dfa: Dfa) -> dict:
    d = dfa.to_dict()
    d["n_live_states"] = dfa.n_live_states
    d["dead_states"] = dfa.dead_states()
    return d


def process_language(task: LanguageTask, config: ExperimentConfig, out_dir: Optional[Path]) -> dict:
    """Train, gate and analyse one language; returns a record or a discard entry."""
    t0 = time.perf_counter()
    _, init_rng, train_rng, an_rng = _rngs(task.seed, 4)
    model = init(task.mdfa.alphabet, config.rnn, init_rng, task.seed)
    lang_dir = None
    if out_dir is not None:
        lang_dir = out_dir / f"lang_{task.index:04d}"
        lang_dir.mkdir(parents=True, exist_ok=True)
        (lang_dir / "regex.txt").write_text(task.regex + "\n")
        (lang_dir / "dataset.tsv").write_text(task.dataset.dumps())
        (lang_dir / "mdfa.dot").write_text(emit_dot(task.mdfa))
    try:
        model, stats = train(model, task.dataset, config.train, train_rng)
    except TrainingDiverged as exc:
        return {"discard": True, "index": task.index, "regex": task.regex, "stage": "train",
                "reason": str(exc), "n_states": task.mdfa.n_states}
    t1 = time.perf_counter()
    base = {"index": task.index, "regex": task.regex, "n_states": task.mdfa.n_states,
            "training": stats.to_dict()}
    if lang_dir is not None:
        model.save(lang_dir / "rnn.json")
    if not stats.reached_target:
        return dict(base, discard=True, stage="train-gate",
                    reason=f"best validation accuracy {stats.best_val_acc:.4f} < {config.train.target_accuracy}")
    res = analyze_language(task, model, config, an_rng)
    seqs, trajs = res.pop("_seqs"), res.pop("_trajectories")
    timing = res.pop("timing")
    record = {
        "schema_version": SCHEMA_VERSION,
        "index": task.index,
        "regex": task.regex,
        "alphabet": str(task.mdfa.alphabet),
        "seed": task.seed,
        "mdfa": mdfa_record(task.mdfa),
        "dataset": {"digest": task.dataset.digest(), "n": len(task.dataset), "max_len": task.dataset.max_len},
        "training": stats.to_dict(),
        **res,
        "timing": dict(timing, train=t1 - t0, total=time.perf_counter() - t0),
    }
    if lang_dir is not None:
        (lang_dir / "record.json").write_text(dumps_record(record))
        (lang_dir / "mdfa_greedy.dot").write_text(emit_dot(task.mdfa, an.dendrogram(seqs["greedy"])))
        (lang_dir / "curves.csv").write_text(curves_csv(record))
        if config.export_trajectories:
            (lang_dir / "trajectories.csv").write_text(trajectories_csv(trajs))
    return record


def dumps_record(record: dict) -> str:
    return json.dumps(record, indent=1, sort_keys=True)


def _worker(args):
    task, config, out_dir = args
    return process_language(task, config, out_dir)


def run_experiment_detailed(config: ExperimentConfig):
    """Returns (records, discards); writes per-language directories under ``output_dir``."""
    config.validate()
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(dumps_config(config))
    tasks, discards = prepare_languages(config)
    jobs = [(t, config, out_dir) for t in tasks]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    records = []
    for r in results:
        if r.get("discard"):
            log.warning("language %s discarded at %s: %s", r["index"], r["stage"], r["reason"])
            discards.append(r)
        else:
            records.append(r)
    if out_dir is not None:
        (out_dir / "discards.json").write_text(json.dumps(discards, indent=1, sort_keys=True))
    return records, discards


def run_experiment(config: ExperimentConfig) -> list[dict]:
    return run_experiment_detailed(config)[0]


# --- DOT ----------------------------------------------------------------------------------

def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_dot(dfa: Dfa, tree: Optional[an.DendrogramTree] = None, name: str = "mdfa") -> str:
    """DOT digraph of ``dfa``; an optional dendrogram is drawn as dashed merge nodes."""
    if tree is not None and tree.n_leaves != dfa.n_states:
        raise ValueError(f"dendrogram has {tree.n_leaves} leaves but the DFA has {dfa.n_states} states")
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point label=""];',
             f"  __start -> q{dfa.start};"]
    for q in range(dfa.n_states):
        shape = "doublecircle" if q in dfa.accepting else "circle"
        lines.append(f'  q{q} [shape={shape} label="{q}"];')
    for q in range(dfa.n_states):
        targets: dict[int, set] = {}
        for a, t in enumerate(dfa.delta[q]):
            targets.setdefault(int(t), set()).add(dfa.alphabet.symbols[a])
        for t in sorted(targets):
            label = render_class(frozenset(targets[t]))[1:-1]
            lines.append(f"  q{q} -> q{t} [label={_dot_quote(label)}];")
    if tree is not None:
        lines.append("  subgraph cluster_dendrogram {")
        lines.append('    label="merge order"; style=dashed;')
        for node in tree.nodes:
            lines.append(f'    d{node.id} [shape=box label="n={node.level}"];')
        for node in tree.nodes:
            for child in (node.left, node.right):
                ref = f"q{child}" if child < tree.n_leaves else f"d{child}"
                lines.append(f"    d{node.id} -> {ref} [style=dashed arrowhead=none];")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- reports ----------------------------------------------------------------------------------

def _csv(rows: list, header: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def curves_csv(record: dict) -> str:
    rows = []
    levels = {m: record["sequences"][m]["levels"] for m in record["sequences"]}
    for method, lvls in levels.items():
        for lv in lvls:
            rows.append([method, lv["coarseness"], lv["rho"], lv["phi"]])
    return _csv(rows, ["method", "coarseness", "rho", "phi"])


def summarize(records: list[dict], threshold: float = 0.9) -> dict:
    if not records:
        raise ValueError("no records to report")
    methods = ("greedy", "random")
    auc = {m: [r["auc"][m] for r in records] for m in methods}
    ratio = {m: [r["coarseness_ratio"][m] for r in records] for m in methods}
    wins = sum(g > r for g, r in zip(auc["greedy"], auc["random"]))
    losses = sum(g < r for g, r in zip(auc["greedy"], auc["random"]))
    lin = [r["decoders"]["linear"]["rho"] for r in records]
    mlp = [r["decoders"]["mlp"]["rho"] for r in records]
    anova = None
    if len(records) >= 2:
        try:
            res = an.anova_f([lin, mlp])
            anova = {"F": res.F, "dof": list(res.dof), "p": res.p, "F_critical_95": res.critical(0.05)}
        except ValueError as exc:
            anova = {"error": str(exc)}
    by_m: dict[int, list] = {}
    for r in records:
        by_m.setdefault(r["mdfa"]["n_states"], []).append(r)
    groups = {}
    for M, rs in sorted(by_m.items()):
        groups[str(M)] = {
            "count": len(rs),
            "mean_auc": {m: float(np.mean([r["auc"][m] for r in rs])) for m in methods},
            "mean_linear_rho": float(np.mean([r["decoders"]["linear"]["rho"] for r in rs])),
            "mean_mlp_rho": float(np.mean([r["decoders"]["mlp"]["rho"] for r in rs])),
        }
    return {
        "n_languages": len(records),
        "mean_auc": {m: float(np.mean(v)) for m, v in auc.items()},
        "mean_coarseness_ratio": {m: float(np.mean(v)) for m, v in ratio.items()},
        "threshold": threshold,
        "greedy_wins": wins, "greedy_losses": losses, "ties": len(records) - wins - losses,
        "sign_test_p": an.sign_test(wins, losses),
        "decoder_anova": anova,
        "by_n_states": groups,
    }


def emit_report(records: list[dict], out_dir, threshold: float = 0.9) -> dict:
    """Writes curves.csv, curves_by_M.csv, anova.csv and summary.json; returns the summary."""
    summary = summarize(records, threshold)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    agg: dict[tuple, list] = {}
    for r in records:
        M = r["mdfa"]["n_states"]
        for method, seq in r["sequences"].items():
            for lv in seq["levels"]:
                rows.append([r["index"], r["regex"], M, method, lv["coarseness"], lv["rho"], lv["phi"]])
                agg.setdefault((M, method, lv["coarseness"]), []).append((lv["rho"], lv["phi"]))
    (out / "curves.csv").write_text(_csv(rows, ["language", "regex", "M", "method", "coarseness", "rho", "phi"]))
    agg_rows = [[M, method, n, float(np.mean([v[0] for v in vals])), float(np.mean([v[1] for v in vals])), len(vals)]
                for (M, method, n), vals in sorted(agg.items())]
    (out / "curves_by_M.csv").write_text(
        _csv(agg_rows, ["M", "method", "coarseness", "mean_rho", "mean_phi", "count"]))
    a = summary["decoder_anova"] or {}
    anova_rows = [["linear_vs_mlp", a.get("F"), *(a.get("dof") or [None, None]), a.get("p"), a.get("F_critical_95")]]
    (out / "anova.csv").write_text(_csv(anova_rows, ["comparison", "F", "dof_between", "dof_within", "p", "F_critical_95"]))
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


def load_records(root) -> list[dict]:
    return [json.loads(p.read_text()) for p in sorted(Path(root).glob("lang_*/record.json"))]
