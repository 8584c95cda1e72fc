"""Spatially adaptive denoisers driven by a per-pixel strength (noise power) map.

``bm3d_hard_threshold`` is the hard-thresholding stage of block-matching and
3D filtering. The noise level applied to a group is read from the strength
map at the reference patch's center pixel. ``blend_denoise`` is a cheap
baseline useful for fast calibration runs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import correlate1d

from .parallel import ordered_map


class DenoiserKind(str, enum.Enum):
    BM3D_HT = "bm3d"
    BLEND = "blend"

    @classmethod
    def parse(cls, text) -> "DenoiserKind":
        if isinstance(text, cls):
            return text
        t = str(text).lower()
        if t in ("bm3d", "bm3d_ht"):
            return cls.BM3D_HT
        if t == "blend":
            return cls.BLEND
        raise ValueError(f"unknown denoiser {text!r}")


@dataclass(frozen=True)
class Bm3dConfig:
    patch_size: int = 8
    step: int = 4
    search_window: int = 39
    max_group: int = 16
    hard_threshold_lambda: float = 2.7

    def __post_init__(self):
        if self.patch_size < 4:
            raise ValueError("patch_size must be >= 4")
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if self.search_window <= self.patch_size:
            raise ValueError("search_window must exceed patch_size")
        if self.max_group < 1 or self.max_group & (self.max_group - 1):
            raise ValueError("max_group must be a power of two")


BLEND_C = 100.0


def _check_strength(img: np.ndarray, strength) -> np.ndarray:
    s = np.asarray(strength, dtype=np.float64)
    if s.ndim == 0:
        s = np.full(img.shape, float(s))
    if s.shape != img.shape:
        raise ValueError(f"dimension mismatch: strength {s.shape} vs image {img.shape}")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("strength must be finite and non-negative")
    return s


def gaussian_kernel(size: int = 5, std: float = 1.2) -> np.ndarray:
    n = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (n / std) ** 2)
    return k / k.sum()


def smooth(img: np.ndarray) -> np.ndarray:
    k = gaussian_kernel()
    return correlate1d(correlate1d(img, k, axis=1, mode="reflect"), k, axis=0, mode="reflect")


def blend_denoise(img, strength) -> np.ndarray:
    """(1 - w) * img + w * smooth(img) with w = s / (s + 100) per pixel."""
    img = np.asarray(img, dtype=np.float64)
    s = _check_strength(img, strength)
    w = s / (s + BLEND_C)
    return (1.0 - w) * img + w * smooth(img)


# -- BM3D hard thresholding ------------------------------------------------------------


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix (rows are basis vectors)."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    D = np.cos(np.pi * (2 * m + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    D[0] /= math.sqrt(2.0)
    return D


def haar_matrix(n: int) -> np.ndarray:
    """Orthonormal multi-level Haar matrix for n a power of two."""
    H = np.ones((1, 1))
    while H.shape[0] < n:
        m = H.shape[0]
        top = np.kron(H, [1.0, 1.0])
        bottom = np.kron(np.eye(m), [1.0, -1.0])
        H = np.vstack([top, bottom]) / math.sqrt(2.0)
    return H


def _lattice(extent: int, patch: int, step: int) -> list[int]:
    last = extent - patch
    pos = list(range(0, last + 1, step))
    if pos[-1] != last:
        pos.append(last)
    return pos


def _match_row(flat, r0: int, cols, cfg: Bm3dConfig):
    """Block matching for all reference patches whose top row is ``r0``."""
    hp, wp, _ = flat.shape
    radius = (cfg.search_window - cfg.patch_size) // 2
    rlo, rhi = max(0, r0 - radius), min(hp - 1, r0 + radius)
    groups = []
    for c0 in cols:
        clo, chi = max(0, c0 - radius), min(wp - 1, c0 + radius)
        cand = flat[rlo : rhi + 1, clo : chi + 1]
        d = np.sum((cand - flat[r0, c0]) ** 2, axis=2).ravel()
        d[(r0 - rlo) * (chi - clo + 1) + (c0 - clo)] = -1.0  # reference leads its group
        size = min(cfg.max_group, d.size)
        size = 1 << (size.bit_length() - 1)
        best = np.argsort(d, kind="stable")[:size]
        nc = chi - clo + 1
        groups.append((r0, c0, rlo + best // nc, clo + best % nc))
    return groups


def bm3d_hard_threshold(img, strength, cfg: Bm3dConfig | None = None, threads=None) -> np.ndarray:
    """Single-stage BM3D with per-reference-patch thresholds lambda * sqrt(strength)."""
    cfg = cfg or Bm3dConfig()
    img = np.asarray(img, dtype=np.float64)
    s = _check_strength(img, strength)
    h, w = img.shape
    ps = cfg.patch_size
    if h < ps or w < ps:
        raise ValueError(f"image {img.shape} smaller than patch size {ps}")
    flat = np.ascontiguousarray(sliding_window_view(img, (ps, ps)).reshape(h - ps + 1, w - ps + 1, ps * ps))
    rows = _lattice(h, ps, cfg.step)
    cols = _lattice(w, ps, cfg.step)
    banded = ordered_map(lambda r0: _match_row(flat, r0, cols, cfg), rows, threads)
    groups = [g for band in banded for g in band]

    D = dct_matrix(ps)
    M = np.kron(D, D)  # acts on row-major flattened patches
    off = (np.arange(ps)[:, None] * w + np.arange(ps)[None, :]).ravel()
    by_size: dict[int, list[int]] = {}
    for n, g in enumerate(groups):
        by_size.setdefault(len(g[2]), []).append(n)
    pieces = [None] * len(groups)
    for size, members in by_size.items():
        Hk = haar_matrix(size)
        gr = np.array([groups[n][2] for n in members])
        gc = np.array([groups[n][3] for n in members])
        stack = flat[gr, gc]  # (G, size, ps*ps)
        coef = np.einsum("ij,gjk,lk->gil", Hk, stack, M, optimize=True)
        centers = np.array(
            [s[groups[n][0] + ps // 2, groups[n][1] + ps // 2] for n in members]
        )
        thr = cfg.hard_threshold_lambda * np.sqrt(centers)
        keep = np.abs(coef) >= thr[:, None, None]
        coef = np.where(keep, coef, 0.0)
        kept = keep.reshape(len(members), -1).sum(axis=1)
        weight = 1.0 / np.maximum(kept, 1)
        est = np.einsum("ji,gjk,kl->gil", Hk, coef, M, optimize=True)
        for m, n in enumerate(members):
            pieces[n] = (gr[m] * w + gc[m], est[m], weight[m])
    # aggregate in fixed reference order
    idx = np.concatenate([(base[:, None] + off[None, :]).ravel() for base, _, _ in pieces])
    vals = np.concatenate([wt * est.ravel() for _, est, wt in pieces])
    wts = np.concatenate([np.full(est.size, wt) for _, est, wt in pieces])
    numer = np.bincount(idx, vals, h * w)
    denom = np.bincount(idx, wts, h * w)
    return (numer / denom).reshape(h, w)


def denoise_adaptive(img, strength, kind=DenoiserKind.BM3D_HT, cfg: Bm3dConfig | None = None, threads=None):
    """Denoise with a per-pixel strength map; output clamped to [0, 255]."""
    img = np.asarray(img, dtype=np.float64)
    s = _check_strength(img, strength)
    if not s.any():
        return img.copy()
    kind = DenoiserKind.parse(kind)
    if kind is DenoiserKind.BLEND:
        out = blend_denoise(img, s)
    else:
        out = bm3d_hard_threshold(img, s, cfg, threads)
    return np.clip(out, 0.0, 255.0)
