"""Fixed uniform strengths against the xi-adaptive strength map.

    python3 scripts/run_fixed_vs_adaptive.py --corpus data/desk11 [--method ci]
"""

import argparse
from pathlib import Path

from floatrefine.harness import DEFAULT_RATIOS, ExperimentSpec, fixed_vs_adaptive_study
from floatrefine.parallel import set_threads


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True, type=Path)
    ap.add_argument("--method", default="ci")
    ap.add_argument("--grid", default="5,10,20,40,60,100", help="fixed sigma^2 values")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int)
    a = ap.parse_args()
    set_threads(a.threads)
    grid = tuple(float(s) for s in a.grid.split(","))
    spec = ExperimentSpec(a.corpus, sample_ratios=DEFAULT_RATIOS, seed=a.seed)
    rows = fixed_vs_adaptive_study(spec, grid, a.method)
    print("ratio adaptive " + " ".join(f"{s:>7g}" for s in grid))
    for row in rows:
        print(f"{row['ratio']:5.2f} {row['adaptive']:+8.3f} " + " ".join(f"{row['fixed'][s]:+7.3f}" for s in grid))


if __name__ == "__main__":
    main()
