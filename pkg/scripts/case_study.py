#!/usr/bin/env python3
"""Case study of the language (([4-6]{2}[4-6]+)?)3[4-6]+.

Trains one recognizer, prints the MDFA and the greedy merge order, and writes the
MDFA with its merge dendrogram as DOT plus the raw hidden states as CSV (for an
external 2-D embedding).

    python3 scripts/case_study.py --seed 0 --out runs/case
"""
import argparse
from pathlib import Path

from rnnfsa import pipeline as pl

REGEX = "(([4-6]{2}[4-6]+)?)3[4-6]+"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/case")
    args = ap.parse_args()

    cfg = pl.ExperimentConfig(seed=args.seed, regexes=(REGEX,), output_dir=args.out, export_trajectories=True)
    records, discards = pl.run_experiment_detailed(cfg)
    if not records:
        raise SystemExit(f"no usable run: {discards}")
    rec = records[0]
    m = rec["mdfa"]
    print(f"MDFA: {m['n_live_states']} live states + dead {m['dead_states']}, accepting {m['accepting']}")
    for q, row in enumerate(m["delta"]):
        print(f"  {q}: " + "  ".join(f"{a}->{t}" for a, t in zip(m["alphabet"], row)))
    print(f"decoders at coarseness 0: linear rho={rec['decoders']['linear']['rho']:.4f} "
          f"mlp rho={rec['decoders']['mlp']['rho']:.4f}")
    for method in ("greedy", "random"):
        print(f"{method}: auc={rec['auc'][method]:.4f}")
        for lv in rec["sequences"][method]["levels"]:
            print(f"  n={lv['coarseness']} merged={lv['merged']} rho={lv['rho']:.4f} phi={lv['phi']:.4f} "
                  f"partition={lv['partition']}")
    lang = Path(args.out) / "lang_0000"
    print(f"DOT with dendrogram: {lang / 'mdfa_greedy.dot'}; hidden states: {lang / 'trajectories.csv'}")


if __name__ == "__main__":
    main()
