"""Evaluation protocol: synthesize floating meshes from ordinary images and score refinement.

A source image is anti-alias filtered (cutoff 1/phi) and decimated by phi to
give the reference. The remaining filtered fine-grid pixels, placed at
(col/phi, row/phi) in reference units, form the floating mesh. Random
subsets of that mesh at a given sample ratio are reconstructed and compared
against the reference.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import read_kv
from .denoising import DenoiserKind, denoise_adaptive
from .effective_data import DEFAULT_RADIUS, compute_xi
from .floating_mesh import FloatingMesh
from .image_core import IMAGE_SUFFIXES, as_image, psnr, read_image, separable_lowpass
from .interpolation import InterpolationMethod, reconstruct
from .parallel import ordered_map
from .pipeline import RefineRequest, refine
from .strength_model import StrengthParams, default_params
from .triangulation import build_from_mesh

log = logging.getLogger(__name__)

CSV_COLUMNS = ("image", "method", "ratio", "psnr_initial_db", "psnr_refined_db", "gain_db", "seed")
DEFAULT_RATIOS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)


# -- reference and mesh synthesis ---------------------------------------------------


def _check_phi(src: np.ndarray, phi: int) -> None:
    if int(phi) != phi or phi < 2:
        raise ValueError(f"phi must be an integer >= 2, got {phi}")
    if min(src.shape) < phi:
        raise ValueError(f"image {src.shape} too small for phi={phi}")


def antialias(src, phi: int) -> np.ndarray:
    src = as_image(src)
    _check_phi(src, phi)
    return separable_lowpass(src, 1.0 / phi)


def reference_from_filtered(filtered: np.ndarray, phi: int) -> np.ndarray:
    h, w = filtered.shape
    return filtered[: (h // phi) * phi : phi, : (w // phi) * phi : phi].copy()


def mesh_from_filtered(filtered: np.ndarray, phi: int) -> FloatingMesh:
    rows, cols = np.indices(filtered.shape)
    off = (rows % phi != 0) | (cols % phi != 0)
    return FloatingMesh(cols[off] / phi, rows[off] / phi, filtered[off])


def make_reference(src, phi: int) -> np.ndarray:
    """Anti-alias filter with cutoff 1/phi, keep rows and columns divisible by phi."""
    return reference_from_filtered(antialias(src, phi), phi)


def make_floating_mesh(src, phi: int) -> FloatingMesh:
    """Filtered fine-grid pixels off the coarse lattice, in reference-grid units."""
    return mesh_from_filtered(antialias(src, phi), phi)


def prepare(src, phi: int):
    """(reference, full floating mesh) sharing one filtering pass."""
    filtered = antialias(src, phi)
    return reference_from_filtered(filtered, phi), mesh_from_filtered(filtered, phi)


def sample_count(ratio: float, ref_pixel_count: int) -> int:
    return int(math.floor(ratio * ref_pixel_count + 0.5))


def sample_mesh(mesh: FloatingMesh, ratio: float, ref_pixel_count: int, seed: int) -> FloatingMesh:
    """Uniform subset without replacement (partial Fisher-Yates), original order kept."""
    count = sample_count(ratio, ref_pixel_count)
    n = len(mesh)
    if count > n:
        raise ValueError(f"requested {count} samples but mesh holds only {n}")
    rng = np.random.default_rng(seed)
    u = rng.random(count).tolist()
    idx = list(range(n))
    for k in range(count):
        j = k + int(u[k] * (n - k))
        idx[k], idx[j] = idx[j], idx[k]
    return mesh.subset(np.sort(np.array(idx[:count], dtype=np.int64)))


def cell_seed(seed: int, image_id: str, ratio: float) -> int:
    digest = hashlib.blake2b(f"{image_id}|{ratio!r}".encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & (2**64 - 1)


# -- experiment description ----------------------------------------------------------


@dataclass
class ExperimentSpec:
    corpus_dir: Path
    phi: int = 5
    sample_ratios: tuple = DEFAULT_RATIOS
    methods: tuple = (InterpolationMethod.NN, InterpolationMethod.LI, InterpolationMethod.CI, InterpolationMethod.NI)
    denoiser: DenoiserKind = DenoiserKind.BM3D_HT
    params: dict = field(default_factory=dict)
    seed: int = 0
    truncation_radius: float = DEFAULT_RADIUS

    def __post_init__(self):
        self.corpus_dir = Path(self.corpus_dir)
        self.methods = tuple(InterpolationMethod.parse(m) for m in self.methods)
        self.denoiser = DenoiserKind.parse(self.denoiser)
        self.sample_ratios = tuple(float(r) for r in self.sample_ratios)
        if self.phi < 2:
            raise ValueError("phi must be >= 2")
        if any(not (0 < r <= 1) for r in self.sample_ratios):
            raise ValueError("sample ratios must lie in (0, 1]")
        if any(b <= a for a, b in zip(self.sample_ratios, self.sample_ratios[1:])):
            raise ValueError("sample ratios must be strictly ascending")
        self.params = {InterpolationMethod.parse(k): v for k, v in self.params.items()}

    def params_for(self, method) -> StrengthParams:
        method = InterpolationMethod.parse(method)
        return self.params.get(method) or default_params(method)

    @classmethod
    def from_kv(cls, path) -> "ExperimentSpec":
        path = Path(path)
        kv = read_kv(path)
        if "corpus_dir" not in kv:
            raise ValueError(f"{path}: missing key 'corpus_dir'")
        corpus = Path(kv["corpus_dir"])
        if not corpus.is_absolute():
            corpus = path.parent / corpus
        params = {}
        for key, value in kv.items():
            if key.startswith("params."):
                p = Path(value)
                params[key.split(".", 1)[1]] = StrengthParams.from_kv(p if p.is_absolute() else path.parent / p)
        kwargs = dict(corpus_dir=corpus, params=params)
        if "phi" in kv:
            kwargs["phi"] = int(kv["phi"])
        if "ratios" in kv:
            kwargs["sample_ratios"] = tuple(float(r) for r in kv["ratios"].split(","))
        if "methods" in kv:
            kwargs["methods"] = tuple(m.strip() for m in kv["methods"].split(","))
        if "denoiser" in kv:
            kwargs["denoiser"] = kv["denoiser"]
        if "seed" in kv:
            kwargs["seed"] = int(kv["seed"])
        if "truncation_radius" in kv:
            kwargs["truncation_radius"] = float(kv["truncation_radius"])
        return cls(**kwargs)


def list_corpus(corpus_dir) -> list[Path]:
    files = sorted(p for p in Path(corpus_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ValueError(f"no .pgm/.png images in {corpus_dir}")
    return files


# -- benchmark ---------------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    image: str
    method: str
    ratio: float
    psnr_initial_db: float
    psnr_refined_db: float
    gain_db: float
    seed: int


@dataclass
class BenchmarkReport:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.image, r.method, f"{r.ratio:g}", f"{r.psnr_initial_db:.6f}", f"{r.psnr_refined_db:.6f}", f"{r.gain_db:.6f}", r.seed]
            )
        return buf.getvalue()

    def mean_gain(self) -> dict:
        """{(method, ratio): mean gain in dB} over rows without errors."""
        acc: dict = {}
        for r in self.rows:
            if math.isfinite(r.gain_db):
                acc.setdefault((r.method, r.ratio), []).append(r.gain_db)
        return {k: math.fsum(v) / len(v) for k, v in sorted(acc.items())}


def _bench_image(spec: ExperimentSpec, path: Path) -> list:
    image_id = path.stem
    rows = []
    try:
        ref, full = prepare(read_image(path), spec.phi)
    except Exception as exc:
        log.error("%s: %s", image_id, exc)
        return [BenchRow(image_id, m.value, r, math.nan, math.nan, math.nan, cell_seed(spec.seed, image_id, r))
                for m in spec.methods for r in spec.sample_ratios]
    h, w = ref.shape
    for ratio in spec.sample_ratios:
        seed = cell_seed(spec.seed, image_id, ratio)
        try:
            mesh = sample_mesh(full, ratio, ref.size, seed)
            tri = build_from_mesh(mesh)
        except Exception as exc:
            log.error("%s @ %g: %s", image_id, ratio, exc)
            rows += [BenchRow(image_id, m.value, ratio, math.nan, math.nan, math.nan, seed) for m in spec.methods]
            continue
        for method in spec.methods:
            try:
                req = RefineRequest(mesh, w, h, method, spec.params_for(method), spec.denoiser, spec.truncation_radius)
                res = refine(req, threads=1, tri=tri)
                p0, p1 = psnr(ref, res.initial), psnr(ref, res.refined)
                rows.append(BenchRow(image_id, method.value, ratio, p0, p1, p1 - p0, seed))
            except Exception as exc:
                log.error("%s %s @ %g: %s", image_id, method.value, ratio, exc)
                rows.append(BenchRow(image_id, method.value, ratio, math.nan, math.nan, math.nan, seed))
        log.info("%s @ %g done", image_id, ratio)
    return rows


def run_benchmark(spec: ExperimentSpec, threads=None) -> BenchmarkReport:
    files = list_corpus(spec.corpus_dir)
    per_image = ordered_map(lambda p: _bench_image(spec, p), files, threads)
    rows = [r for rows in per_image for r in rows]
    rows.sort(key=lambda r: (r.image, r.method, r.ratio))
    return BenchmarkReport(rows)


# -- studies -----------------------------------------------------------------------


def _cells(spec: ExperimentSpec, ratio: float, threads=None):
    """Per image: (id, reference, sampled mesh, triangulation) at one ratio."""

    def one(path):
        ref, full = prepare(read_image(path), spec.phi)
        seed = cell_seed(spec.seed, path.stem, ratio)
        mesh = sample_mesh(full, ratio, ref.size, seed)
        return path.stem, ref, mesh, build_from_mesh(mesh)

    return ordered_map(one, list_corpus(spec.corpus_dir), threads)


def error_vs_xi_study(spec: ExperimentSpec, ratio: float = 0.3, bins: int = 10, threads=None) -> dict:
    """Mean squared error of the initial estimate per pooled xi quantile bin.

    Returns ``{method: {"edges": ..., "mean_error": ..., "population": ...}}``.
    """
    cells = _cells(spec, ratio, threads)
    xis = []
    errs = {m: [] for m in spec.methods}
    for _, ref, mesh, tri in cells:
        h, w = ref.shape
        xis.append(compute_xi(mesh, w, h, spec.truncation_radius).values.ravel())
        for m in spec.methods:
            initial, _ = reconstruct(mesh, w, h, m, tri=tri, threads=1)
            errs[m].append(((initial - ref) ** 2).ravel())
    xi = np.concatenate(xis)
    edges = np.quantile(xi, np.linspace(0, 1, bins + 1))
    b = np.clip(np.searchsorted(edges, xi, side="right") - 1, 0, bins - 1)
    pop = np.bincount(b, minlength=bins)
    out = {}
    for m in spec.methods:
        e = np.concatenate(errs[m])
        sums = np.array([math.fsum(e[b == k].tolist()) for k in range(bins)])
        with np.errstate(invalid="ignore"):
            out[m] = {"edges": edges, "mean_error": sums / pop, "population": pop}
    return out


def fixed_vs_adaptive_study(
    spec: ExperimentSpec,
    fixed_sigma_grid=(5.0, 10.0, 20.0, 40.0, 60.0, 100.0),
    method=InterpolationMethod.CI,
    threads=None,
) -> list:
    """Mean PSNR gain (dB) per ratio for uniform strengths and for the adaptive map.

    Each entry: ``{"ratio", "fixed": {sigma2: gain}, "adaptive": gain}``.
    """
    method = InterpolationMethod.parse(method)
    params = spec.params_for(method)
    table = []
    for ratio in spec.sample_ratios:
        cells = _cells(spec, ratio, threads)

        def one(cell):
            _, ref, mesh, tri = cell
            h, w = ref.shape
            req = RefineRequest(mesh, w, h, method, params, spec.denoiser, spec.truncation_radius)
            res = refine(req, threads=1, tri=tri)
            p0 = psnr(ref, res.initial)
            fixed = {
                s2: psnr(ref, denoise_adaptive(res.initial, np.full(ref.shape, s2), spec.denoiser, threads=1)) - p0
                for s2 in fixed_sigma_grid
            }
            return fixed, psnr(ref, res.refined) - p0

        results = ordered_map(one, cells, threads)
        n = len(results)
        table.append(
            {
                "ratio": ratio,
                "fixed": {s2: math.fsum(r[0][s2] for r in results) / n for s2 in fixed_sigma_grid},
                "adaptive": math.fsum(r[1] for r in results) / n,
            }
        )
    return table
