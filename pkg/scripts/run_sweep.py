"""(rho, gamma) robustness sweep on the ambiguous synthetic task.

    python scripts/run_sweep.py --output results/sweep
"""

import argparse
import logging

from eerner.synthetic import ExperimentSpec, format_sweep, run_rho_gamma_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output", default="results/sweep")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--m-train", type=int, default=1000)
    ap.add_argument("--source", default="ee", choices=("ee", "synthetic"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    spec = ExperimentSpec(seeds=tuple(int(s) for s in args.seeds.split(",")), m_train=args.m_train,
                          source=args.source, output_dir=args.output)
    print(format_sweep(run_rho_gamma_sweep(spec)))


if __name__ == "__main__":
    main()
