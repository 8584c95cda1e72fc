"""Effective-data field: exponentially distance-weighted sample count per pixel.

    xi(i, j) = sum over samples (x, y) of exp(-sqrt((j - x)^2 + (i - y)^2))

Distances are in reference-grid pixels. The fast path drops samples beyond
``truncation_radius``; each dropped sample contributes less than
exp(-radius), so the error is at most N * exp(-radius).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_RADIUS = 25.0


@dataclass(frozen=True, eq=False)
class XiField:
    values: np.ndarray  # (height, width)
    truncation_radius: float

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def compute_xi(mesh, width: int, height: int, truncation_radius: float = DEFAULT_RADIUS) -> XiField:
    if not truncation_radius > 0:
        raise ValueError(f"truncation radius must be positive, got {truncation_radius}")
    out = np.zeros(height * width)
    x = np.asarray(mesh.x, dtype=float)
    y = np.asarray(mesh.y, dtype=float)
    R = float(truncation_radius)
    reach = int(math.ceil(R)) + 1
    # bucket samples by the unit cell they fall in, keep those whose disk touches the grid
    ci = np.floor(y).astype(np.int64)
    cj = np.floor(x).astype(np.int64)
    keep = (ci > -reach - 1) & (ci < height + reach) & (cj > -reach - 1) & (cj < width + reach)
    x, y, ci, cj = x[keep], y[keep], ci[keep], cj[keep]
    dj = np.arange(-reach, reach + 2)
    cols = cj[:, None] + dj[None, :]
    ddx = cols - x[:, None]
    col_ok = (cols >= 0) & (cols < width)
    for di in range(-reach, reach + 2):
        rows = ci + di
        row_ok = (rows >= 0) & (rows < height)
        if not row_ok.any():
            continue
        ddy = (rows - y)[row_ok]
        d = np.sqrt(ddx[row_ok] ** 2 + ddy[:, None] ** 2)
        m = col_ok[row_ok] & (d <= R)
        flat = (rows[row_ok][:, None] * width + cols[row_ok])[m]
        out += np.bincount(flat, np.exp(-d[m]), height * width)
    return XiField(out.reshape(height, width), R)


def compute_xi_exact(mesh, width: int, height: int, chunk: int = 4096) -> XiField:
    """Untruncated O(pixels x samples) reference evaluation."""
    x = np.asarray(mesh.x, dtype=float)
    y = np.asarray(mesh.y, dtype=float)
    ii, jj = np.indices((height, width))
    pi, pj = ii.ravel().astype(float), jj.ravel().astype(float)
    out = np.zeros(pi.size)
    for s in range(0, len(x), chunk):
        xs, ys = x[s : s + chunk], y[s : s + chunk]
        d = np.sqrt((pj[:, None] - xs[None, :]) ** 2 + (pi[:, None] - ys[None, :]) ** 2)
        out += np.exp(-d).sum(axis=1)
    return XiField(out.reshape(height, width), math.inf)
