"""Export a small grayscale desk corpus from the images bundled with scikit-image.

    python3 scripts/make_desk_corpus.py --out data/desk [--all]
"""

import argparse
from pathlib import Path

import numpy as np
import skimage.data
from skimage.color import rgb2gray

from floatrefine.image_core import write_image

DESK = ("camera", "astronaut", "coffee", "chelsea", "rocket")
EXTRA = ("moon", "coins", "brick", "grass", "gravel", "clock")


def gray8(name: str) -> np.ndarray:
    img = getattr(skimage.data, name)()
    if img.ndim == 3:
        img = rgb2gray(img[..., :3]) * 255.0
    return np.floor(np.asarray(img, dtype=float) + 0.5).clip(0, 255)


def export(out: Path, names=DESK) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in names:
        p = out / f"{name}.pgm"
        write_image(gray8(name), p)
        paths.append(p)
    return paths


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("data/desk"))
    ap.add_argument("--all", action="store_true", help="also export six extra images (11 total)")
    args = ap.parse_args()
    for p in export(args.out, DESK + EXTRA if args.all else DESK):
        print(p)
