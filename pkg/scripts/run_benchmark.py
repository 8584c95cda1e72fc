"""Mean PSNR gain per (method, ratio) over a corpus.

    python3 scripts/run_benchmark.py --corpus data/desk11 --out results/bench.csv [--seed 1]
"""

import argparse
import time
from pathlib import Path

from floatrefine.harness import DEFAULT_RATIOS, ExperimentSpec, run_benchmark
from floatrefine.parallel import set_threads


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", required=True, type=Path)
    ap.add_argument("--out", type=Path, help="per-cell CSV")
    ap.add_argument("--denoiser", default="bm3d")
    ap.add_argument("--phi", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int)
    a = ap.parse_args()
    set_threads(a.threads)
    spec = ExperimentSpec(a.corpus, phi=a.phi, sample_ratios=DEFAULT_RATIOS, denoiser=a.denoiser, seed=a.seed)
    t0 = time.perf_counter()
    report = run_benchmark(spec)
    if a.out:
        a.out.parent.mkdir(parents=True, exist_ok=True)
        a.out.write_text(report.to_csv())
    gains = report.mean_gain()
    methods = sorted({m for m, _ in gains})
    print("ratio " + " ".join(f"{m:>8}" for m in methods))
    for r in spec.sample_ratios:
        print(f"{r:5.2f} " + " ".join(f"{gains[(m, r)]:+8.3f}" for m in methods))
    print(f"# {len(report.rows)} rows in {time.perf_counter() - t0:.0f}s, seed={a.seed}")


if __name__ == "__main__":
    main()
