import json
import re

import numpy as np
import pytest

from rnnfsa import cli
from rnnfsa import pipeline as pl
from rnnfsa.analysis import DendrogramNode, DendrogramTree
from rnnfsa.automata import all_strings, mdfa
from rnnfsa.decoder import DecoderConfig, mlp_config
from rnnfsa.regex import Alphabet, GeneratorConfig
from rnnfsa.rnn import RnnConfig, TrainConfig

from conftest import CASE_REGEX


def small_config(tmp_path, **kw) -> pl.ExperimentConfig:
    base = dict(
        seed=1, regexes=(CASE_REGEX,), n_examples=300, max_len=12, output_dir=str(tmp_path / "run"),
        rnn=RnnConfig(hidden_size=16), train=TrainConfig(max_epochs=80, lr=5e-3),
        decoder=DecoderConfig(epochs=60), mlp=mlp_config(epochs=5),
    )
    base.update(kw)
    return pl.ExperimentConfig(**base)


@pytest.fixture(scope="module")
def case_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("case")
    cfg = small_config(tmp)
    records, discards = pl.run_experiment_detailed(cfg)
    return cfg, records, discards


# --- config ------------------------------------------------------------------------

def test_config_round_trip():
    cfg = pl.ExperimentConfig(seed=7, regexes=("a*b", "[ab]c"), generator=GeneratorConfig(max_states=9),
                              train=TrainConfig(lr=0.002), export_trajectories=True)
    text = pl.dumps_config(cfg)
    assert "train.lr = 0.002" in text
    assert pl.loads_config(text) == cfg


def test_config_overrides_and_errors():
    cfg = pl.apply_overrides(pl.ExperimentConfig(), {"rnn.hidden_size": 8, "decoder.l2": 0})
    assert cfg.rnn.hidden_size == 8 and cfg.decoder.l2 == 0.0 and isinstance(cfg.decoder.l2, float)
    assert pl.ExperimentConfig().rnn.hidden_size == 50
    with pytest.raises(KeyError):
        pl.apply_overrides(cfg, {"rnn.nope": 1})
    with pytest.raises(KeyError):
        pl.apply_overrides(cfg, {"rnn": 1})
    with pytest.raises(ValueError):
        pl.loads_config("seed 3")
    assert pl.loads_config("# comment\n\nseed = 3\n").seed == 3


def test_language_seed_stable():
    assert pl.language_seed(0, 3) == pl.language_seed(0, 3)
    assert len({pl.language_seed(0, i) for i in range(50)}) == 50


def test_prepare_languages_distinct():
    cfg = pl.ExperimentConfig(n_languages=6, n_examples=40, max_len=10,
                              generator=GeneratorConfig(min_states=3, max_states=6))
    tasks, discards = pl.prepare_languages(cfg)
    assert len(tasks) == 6 and not discards
    assert len({t.mdfa for t in tasks}) == 6
    for t in tasks:
        assert 3 <= t.mdfa.n_states <= 6
        t.dataset.check(t.mdfa)
    again, _ = pl.prepare_languages(cfg)
    assert [t.regex for t in again] == [t.regex for t in tasks]


def test_prepare_fixed_regexes_discards_duplicates():
    cfg = pl.ExperimentConfig(regexes=("a*b", "a*b|a*b", "ab"), n_examples=2, max_len=4)
    tasks, discards = pl.prepare_languages(cfg)
    assert [t.regex for t in tasks] == ["a*b", "ab"]
    assert discards[0]["regex"] == "a*b|a*b"


# --- DOT ------------------------------------------------------------------------------

DOT_EDGE = re.compile(r'^\s*q(\d+) -> q(\d+) \[label="(.*)"\];$')


def parse_dot(text, alphabet):
    nodes = {int(m) for m in re.findall(r"^\s*q(\d+) \[shape=", text, re.M)}
    accepting = {int(m) for m in re.findall(r"^\s*q(\d+) \[shape=doublecircle", text, re.M)}
    delta = {}
    for line in text.splitlines():
        m = DOT_EDGE.match(line)
        if m:
            body = m.group(3)
            syms = set()
            for lo, hi in re.findall(r"(.)(?:-(.))?", body):
                syms |= {chr(c) for c in range(ord(lo), ord(hi or lo) + 1)}
            for s in syms:
                assert (int(m.group(1)), s) not in delta
                delta[(int(m.group(1)), s)] = int(m.group(2))
    start = int(re.search(r"__start -> q(\d+);", text).group(1))
    return nodes, accepting, delta, start


def test_dot_sigma_star():
    d = mdfa("[ab]*", Alphabet.from_string("ab"))
    text = pl.emit_dot(d)
    assert text.count("doublecircle") == 1
    assert sum(1 for line in text.splitlines() if DOT_EDGE.match(line)) == 1
    assert 'q0 -> q0 [label="ab"];' in text


def test_dot_case_replays_language():
    d = mdfa(CASE_REGEX)
    nodes, accepting, delta, start = parse_dot(pl.emit_dot(d), d.alphabet)
    assert nodes == set(range(d.n_states)) and accepting == set(d.accepting)
    assert len(delta) == d.n_states * len(d.alphabet)
    for w in all_strings(d.alphabet, 5):
        q = start
        for c in w:
            q = delta[(q, c)]
        assert (q in accepting) == d.accepts(w)


def test_dot_dendrogram_cluster():
    d = mdfa(CASE_REGEX)
    tree = DendrogramTree(7, [DendrogramNode(7, 0, 1, 1, frozenset({0, 1})),
                              DendrogramNode(8, 7, 2, 2, frozenset({0, 1, 2}))])
    text = pl.emit_dot(d, tree)
    assert "cluster_dendrogram" in text and "d8 -> d7" in text and "d7 -> q0" in text
    with pytest.raises(ValueError):
        pl.emit_dot(d, DendrogramTree(3, []))


# --- reports ----------------------------------------------------------------------------

def fake_record(index, M, g, r, lin, mlp):
    levels = lambda vals: {"levels": [{"coarseness": n, "rho": v, "phi": v} for n, v in enumerate(vals)]}
    return {"index": index, "regex": f"r{index}", "mdfa": {"n_states": M},
            "sequences": {"greedy": levels(g), "random": levels(r)},
            "auc": {"greedy": float(np.trapezoid(g, dx=1 / (M - 1))), "random": float(np.trapezoid(r, dx=1 / (M - 1)))},
            "coarseness_ratio": {"greedy": 0.0, "random": 1 / M},
            "decoders": {"linear": {"rho": lin}, "mlp": {"rho": mlp}}}


def test_emit_report(tmp_path):
    recs = [fake_record(0, 3, [0.9, 1.0, 1.0], [0.9, 0.8, 1.0], 0.9, 0.92),
            fake_record(1, 3, [0.8, 0.9, 1.0], [0.8, 0.9, 1.0], 0.8, 0.85),
            fake_record(2, 4, [0.7, 0.9, 0.95, 1.0], [0.7, 0.75, 0.8, 1.0], 0.7, 0.71)]
    s = pl.emit_report(recs, tmp_path)
    # greedy AUCs by hand: 0.975, 0.9, (0.8 + 0.925 + 0.975) / 3 = 0.9
    assert s["mean_auc"]["greedy"] == pytest.approx((0.975 + 0.9 + 0.9) / 3)
    assert (s["greedy_wins"], s["greedy_losses"], s["ties"]) == (2, 0, 1)
    assert s["by_n_states"]["3"]["count"] == 2
    assert s["decoder_anova"]["dof"] == [1, 4]
    for name in ("curves.csv", "curves_by_M.csv", "anova.csv", "summary.json"):
        assert (tmp_path / name).read_text().splitlines()[0]
    assert len((tmp_path / "curves.csv").read_text().splitlines()) == 1 + 2 * (3 + 3 + 4)
    with pytest.raises(ValueError):
        pl.summarize([])


# --- end to end -------------------------------------------------------------------------

def test_case_end_to_end(case_run):
    cfg, records, discards = case_run
    assert not discards, discards
    (rec,) = records
    assert rec["mdfa"]["n_live_states"] == 6 and rec["mdfa"]["n_states"] == 7
    assert rec["schema_version"] == pl.SCHEMA_VERSION
    for method in ("greedy", "random"):
        levels = rec["sequences"][method]["levels"]
        assert [lv["coarseness"] for lv in levels] == list(range(7))
        assert levels[-1]["rho"] == 1.0
        assert 0 <= rec["auc"][method] <= 1
    lang = cfg.output_dir + "/lang_0000"
    for name in ("regex.txt", "dataset.tsv", "mdfa.dot", "rnn.json", "record.json", "mdfa_greedy.dot", "curves.csv"):
        assert (pl.Path(lang) / name).exists()
    assert pl.load_records(cfg.output_dir)[0]["regex"] == CASE_REGEX


def test_run_deterministic_modulo_timing(case_run, tmp_path):
    cfg, records, _ = case_run
    again = pl.run_experiment(pl.apply_overrides(cfg, {"output_dir": str(tmp_path / "again")}))

    def strip(r):
        r = json.loads(json.dumps(r))
        r.pop("timing")
        return r

    assert strip(again[0]) == strip(records[0])


def test_gate_failure_is_discarded(tmp_path):
    cfg = small_config(tmp_path, train=TrainConfig(max_epochs=1), rnn=RnnConfig(hidden_size=2))
    records, discards = pl.run_experiment_detailed(cfg)
    assert not records and discards[0]["stage"] == "train-gate"
    assert json.loads((tmp_path / "run" / "discards.json").read_text())[0]["stage"] == "train-gate"


# --- CLI ------------------------------------------------------------------------------------

def test_cli_gen_is_distinct(tmp_path, capsys):
    assert cli.main(["gen", "--n_languages", "5", "--generator.max_states", "6"]) == 0
    lines = capsys.readouterr().out.split()
    assert len(lines) == 5
    alphabet = Alphabet.from_string("abcd")
    assert len({mdfa(r, alphabet) for r in lines}) == 5


def test_cli_stages(tmp_path, capsys):
    ds, ck, out = tmp_path / "ds.tsv", tmp_path / "rnn.json", tmp_path / "an"
    flags = ["--n_examples", "200", "--max_len", "10", "--rnn.hidden_size", "16", "--train.lr", "0.005",
             "--train.max_epochs", "60", "--decoder.epochs", "30", "--mlp.epochs", "3"]
    assert cli.main(["dataset", "--regex", CASE_REGEX, "--out", str(ds), *flags]) == 0
    code = cli.main(["train", "--dataset", str(ds), "--out", str(ck), *flags])
    assert code in (0, 3) and ck.exists()
    assert "best_val_acc" in json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert cli.main(["analyze", "--dataset", str(ds), "--checkpoint", str(ck), "--out", str(out), *flags]) == 0
    rec = json.loads((out / "record.json").read_text())
    assert rec["mdfa"]["n_live_states"] == 6
    (out / "lang_0000").mkdir()
    (out / "record.json").rename(out / "lang_0000" / "record.json")
    assert cli.main(["report", "--records", str(out)]) == 0
    assert (out / "summary.json").exists()


def test_cli_config_file_then_flags(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("seed = 4\nrnn.hidden_size = 9\n")
    args = cli.build_parser().parse_args(["gen", "--config", str(path), "--seed", "5"])
    cfg = cli._config(args)
    assert cfg.seed == 5 and cfg.rnn.hidden_size == 9


def test_cli_error_exit(tmp_path, capsys):
    code = cli.main(["dataset", "--regex", "(ab", "--out", str(tmp_path / "x.tsv")])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "RegexSyntaxError" and err["command"] == "dataset"
