"""Statistics of the NNS and EE annotation simulators on a synthetic gold corpus.

    python scripts/run_samplers.py
"""

import argparse
import json

from eerner.samplers import EeConfig, NnsConfig, sample_ee, sample_nns
from eerner.synthetic import SyntheticTaskConfig, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sentences", type=int, default=3600)
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()
    gold, _ = generate_synthetic(SyntheticTaskConfig(rng_seed=11, doc_size=20), args.sentences)
    _, nns = sample_nns(gold, NnsConfig(rng_seed=args.seed))
    _, ee = sample_ee(gold, EeConfig(total_budget=args.budget, rng_seed=args.seed))
    for name, st in (("nns", nns), ("ee", ee)):
        summary = {"recall": st.recall, "precision": st.precision, "gold": st.n_gold, "kept": st.n_kept,
                   "max_per_doc": max(st.per_doc_counts), "position_bias": st.position_bias,
                   "gold_position_bias": st.gold_position_bias, **st.extra}
        print(name, json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
