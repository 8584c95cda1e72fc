"""Command-line entry point: ``floatrefine <subcommand> [flags]``.

Exit status is 0 on success, 1 on usage errors (usage text on stderr) and
2 on runtime errors (stage-labelled message on stderr). Every output file
is written to a temporary sibling and renamed into place on success.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .denoising import DenoiserKind, denoise_adaptive
from .effective_data import DEFAULT_RADIUS, compute_xi
from .floating_mesh import mesh_from_rotation, read_mesh, write_mesh
from .harness import DEFAULT_RATIOS, ExperimentSpec, cell_seed, list_corpus, prepare, run_benchmark, sample_mesh
from .image_core import read_image, write_image
from .interpolation import InterpolationMethod, reconstruct
from .parallel import set_threads
from .pipeline import RefineRequest, StageError, refine
from .strength_model import (
    DEFAULT_SIGMA_GRID,
    DEFAULT_XI_BINS,
    StrengthParams,
    build_gain_surface,
    default_params,
    fit_sigmoid,
)

log = logging.getLogger("floatrefine")

METHODS = ("nn", "li", "ci", "ni")
DENOISERS = ("bm3d", "blend")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


class Failure(Exception):
    """Runtime failure tagged with the stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (StageError, Failure):
        raise
    except Exception as exc:
        raise Failure(name, exc) from exc


# -- grid CSV helpers ------------------------------------------------------------------


def format_grid_csv(field: np.ndarray, column: str) -> str:
    h, w = field.shape
    ii, jj = np.indices((h, w))
    lines = [f"i,j,{column}"]
    lines += [f"{i},{j},{v:.17g}" for i, j, v in zip(ii.ravel().tolist(), jj.ravel().tolist(), field.ravel().tolist())]
    return "\n".join(lines) + "\n"


def read_grid_csv(path, shape) -> np.ndarray:
    h, w = shape
    out = np.full((h, w), np.nan)
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("i,j,"):
        raise ValueError(f"{path}:1: expected header 'i,j,<name>'")
    for n, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            i, j, v = line.split(",")
            i, j, v = int(i), int(j), float(v)
        except ValueError:
            raise ValueError(f"{path}:{n}: malformed row {line!r}") from None
        if not (0 <= i < h and 0 <= j < w):
            raise ValueError(f"{path}:{n}: pixel ({i},{j}) outside {w}x{h} image")
        out[i, j] = v
    if np.isnan(out).any():
        raise ValueError(f"{path}: missing {int(np.isnan(out).sum())} pixels")
    return out


def _scaled(field: np.ndarray) -> np.ndarray:
    top = field.max()
    return field * (255.0 / top) if top > 0 else field


def _load_params(path, method) -> StrengthParams:
    return StrengthParams.from_kv(path) if path else default_params(method)


# -- subcommands -----------------------------------------------------------------------


def cmd_reconstruct(a):
    mesh = _stage("input", read_mesh, a.mesh)
    img, outside = _stage("interpolation", reconstruct, mesh, a.width, a.height, a.method)
    _stage("output", write_image, img, a.out)
    if a.mask:
        _stage("output", write_image, outside * 255.0, a.mask)


def cmd_refine(a):
    mesh = _stage("input", read_mesh, a.mesh)
    params = _stage("input", _load_params, a.params, a.method)
    req = RefineRequest(mesh, a.width, a.height, a.method, params, a.denoiser, a.radius)
    res = refine(req)
    _stage("output", write_image, res.refined, a.out)
    if a.dump_xi:
        _stage("output", atomic_write_text, a.dump_xi, format_grid_csv(res.xi.values, "xi"))
    if a.dump_strength:
        _stage("output", atomic_write_text, a.dump_strength, format_grid_csv(res.strength, "strength"))
    if a.dump_initial:
        _stage("output", write_image, res.initial, a.dump_initial)


def cmd_denoise(a):
    img = _stage("input", read_image, a.input)
    if a.strength.startswith("uniform:"):
        value = _stage("input", float, a.strength.split(":", 1)[1])
        strength = np.full(img.shape, value)
    else:
        strength = _stage("input", read_grid_csv, a.strength, img.shape)
    out = _stage("denoise", denoise_adaptive, img, strength, a.kind)
    _stage("output", write_image, out, a.out)


def cmd_xi(a):
    mesh = _stage("input", read_mesh, a.mesh)
    xi = _stage("effective_data", compute_xi, mesh, a.width, a.height, a.radius)
    if a.out.lower().endswith((".pgm", ".png")):
        _stage("output", write_image, _scaled(xi.values), a.out)
    else:
        _stage("output", atomic_write_text, a.out, format_grid_csv(xi.values, "xi"))


def cmd_calibrate(a):
    print(f"seed={a.seed}")
    sigma_grid = tuple(float(s) for s in a.sigma_grid.split(","))

    def corpus():
        for path in list_corpus(a.corpus):
            ref, full = prepare(read_image(path), a.phi)
            for ratio in a.ratios:
                yield ref, sample_mesh(full, ratio, ref.size, cell_seed(a.seed, path.stem, ratio))

    items = _stage("corpus", list, corpus())
    surface = _stage("calibrate", build_gain_surface, items, a.method, a.denoiser, sigma_grid, a.bins, a.radius)
    report = _stage("fit", fit_sigmoid, surface, a.method, DenoiserKind.parse(a.denoiser).value)
    _stage("output", atomic_write_text, a.out, report.params.to_kv())
    p = report.params
    log.info("alpha=%.6g beta=%.6g gamma=%.6g residual=%.6g", p.alpha, p.beta, p.gamma, p.residual)


def cmd_bench(a):
    spec = _stage("input", ExperimentSpec.from_kv, a.spec)
    if a.seed is not None:
        spec.seed = a.seed
    print(f"seed={spec.seed}")
    report = _stage("bench", run_benchmark, spec)
    _stage("output", atomic_write_text, a.out, report.to_csv())
    failed = sum(1 for r in report.rows if r.gain_db != r.gain_db)
    if failed:
        log.warning("%d rows failed; see messages above", failed)


def cmd_mesh_rotate(a):
    img = _stage("input", read_image, a.input)
    mesh = _stage("mesh", mesh_from_rotation, img, a.degrees)
    _stage("output", write_mesh, mesh, a.out)


# -- parser ----------------------------------------------------------------------------


def _ratios(text):
    try:
        return tuple(float(r) for r in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from None


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _add_grid(p):
    p.add_argument("--mesh", required=True, help="mesh CSV (x,y,value)")
    p.add_argument("--width", required=True, type=_positive_int)
    p.add_argument("--height", required=True, type=_positive_int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="floatrefine", description="Reconstruct images from floating meshes and refine them adaptively.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--threads", type=_positive_int, help="worker cap (default: $FLOATREFINE_THREADS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("reconstruct", help="interpolate a mesh onto the grid")
    _add_grid(p)
    p.add_argument("--method", choices=METHODS, default="ci")
    p.add_argument("--out", required=True)
    p.add_argument("--mask", help="write the hull-exterior mask here")
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("refine", help="reconstruct and apply adaptive denoising")
    _add_grid(p)
    p.add_argument("--method", choices=METHODS, default="ci")
    p.add_argument("--params", help="params.kv (default: built-in values for the method)")
    p.add_argument("--denoiser", choices=DENOISERS, default="bm3d")
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS, help="xi truncation radius")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-xi")
    p.add_argument("--dump-strength")
    p.add_argument("--dump-initial")
    p.set_defaults(fn=cmd_refine)

    p = sub.add_parser("denoise", help="denoise an image with a strength map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--strength", required=True, help="i,j,value CSV or uniform:VALUE")
    p.add_argument("--kind", choices=DENOISERS, default="bm3d")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_denoise)

    p = sub.add_parser("xi", help="effective-data field of a mesh")
    _add_grid(p)
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS)
    p.add_argument("--out", required=True, help=".csv (i,j,xi) or .pgm/.png (scaled to 255)")
    p.set_defaults(fn=cmd_xi)

    p = sub.add_parser("calibrate", help="fit strength parameters on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--method", choices=METHODS, default="ci")
    p.add_argument("--denoiser", choices=DENOISERS, default="bm3d")
    p.add_argument("--out", required=True)
    p.add_argument("--phi", type=int, default=5)
    p.add_argument("--ratios", type=_ratios, default=DEFAULT_RATIOS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-grid", default=",".join(f"{s:g}" for s in DEFAULT_SIGMA_GRID))
    p.add_argument("--bins", type=int, default=DEFAULT_XI_BINS)
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("bench", help="run the benchmark described by a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the spec's seed")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("mesh-rotate", help="mesh of an image's pixels rotated about its center")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--degrees", required=True, type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_mesh_rotate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        if not argv:
            raise UsageError(ap.format_usage() + "floatrefine: error: a subcommand is required")
        args = ap.parse_args(argv)
        if args.command is None:
            raise UsageError(ap.format_usage() + "floatrefine: error: a subcommand is required")
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.threads:
        set_threads(args.threads)
    try:
        args.fn(args)
    except (StageError, Failure) as exc:
        sys.stderr.write(f"floatrefine {args.command}: error: {exc}\n")
        return 2
    except Exception as exc:  # anything unlabelled still reports its subcommand
        sys.stderr.write(f"floatrefine {args.command}: error: {type(exc).__name__}: {exc}\n")
        return 2
    finally:
        set_threads(None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
