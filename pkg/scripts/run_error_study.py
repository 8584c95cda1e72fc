"""Mean squared interpolation error per effective-data decile.

    python3 scripts/run_error_study.py --corpus data/desk --ratio 0.3
"""

import argparse
from pathlib import Path

from scipy.stats import spearmanr

from floatrefine.harness import ExperimentSpec, error_vs_xi_study
from floatrefine.parallel import set_threads


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True, type=Path)
    ap.add_argument("--ratio", type=float, default=0.3)
    ap.add_argument("--bins", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int)
    a = ap.parse_args()
    set_threads(a.threads)
    spec = ExperimentSpec(a.corpus, methods=("nn", "li", "ci", "ni"), seed=a.seed)
    table = error_vs_xi_study(spec, ratio=a.ratio, bins=a.bins)
    for method, row in table.items():
        err = row["mean_error"]
        rho = spearmanr(range(len(err)), err)[0]
        print(f"{method.value:>2} rho={rho:+.3f} " + " ".join(f"{e:6.2f}" for e in err))
    edges = next(iter(table.values()))["edges"]
    print("# xi edges " + " ".join(f"{e:.3g}" for e in edges))


if __name__ == "__main__":
    main()
