"""Samples at real-valued positions and their CSV serialization.

Coordinates are in reference-grid units: pixel ``(i, j)`` of an image sits
at ``x = j``, ``y = i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text

HEADER = "x,y,value"


class MeshFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FloatingMesh:
    """Immutable set of (x, y, value) samples with unique positions."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    bounds: tuple[float, float, float, float] = field(default=None)

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64).reshape(-1)
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not (len(x) == len(y) == len(v)):
            raise ValueError("x, y and values must have equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(v))):
            raise ValueError("mesh samples must be finite")
        dup = _first_duplicate(x, y)
        if dup is not None:
            raise ValueError(f"duplicate sample position ({x[dup]!r}, {y[dup]!r})")
        if self.bounds is None:
            b = (
                (float(x.min()), float(y.min()), float(x.max()), float(y.max()))
                if len(x)
                else (0.0, 0.0, 0.0, 0.0)
            )
        else:
            b = tuple(float(t) for t in self.bounds)
            if len(x) and (x.min() < b[0] or y.min() < b[1] or x.max() > b[2] or y.max() > b[3]):
                raise ValueError("sample outside mesh bounds")
        for a in (x, y, v):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bounds", b)

    def __len__(self) -> int:
        return len(self.x)

    def subset(self, index) -> "FloatingMesh":
        index = np.asarray(index)
        return FloatingMesh(self.x[index], self.y[index], self.values[index], self.bounds)

    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def _first_duplicate(x: np.ndarray, y: np.ndarray):
    if len(x) < 2:
        return None
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    same = (xs[1:] == xs[:-1]) & (ys[1:] == ys[:-1])
    if not same.any():
        return None
    return int(order[1:][same][0])


def mesh_from_grid(img) -> FloatingMesh:
    """Every pixel as a sample at its own integer position."""
    img = np.asarray(img, dtype=np.float64)
    ii, jj = np.indices(img.shape)
    return FloatingMesh(jj.ravel(), ii.ravel(), img.ravel())


def mesh_from_rotation(img, degrees: float) -> FloatingMesh:
    """Rotate every pixel position (x=j, y=i) about the image center."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    ii, jj = np.indices(img.shape)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    dx, dy = jj.ravel() - cx, ii.ravel() - cy
    return FloatingMesh(cx + c * dx - s * dy, cy + s * dx + c * dy, img.ravel())


def format_mesh(mesh: FloatingMesh) -> str:
    lines = [HEADER]
    for x, y, v in zip(mesh.x.tolist(), mesh.y.tolist(), mesh.values.tolist()):
        lines.append(f"{x:.17g},{y:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"


def write_mesh(mesh: FloatingMesh, path) -> None:
    atomic_write_text(path, format_mesh(mesh))


def parse_mesh(text: str, source: str = "<mesh>") -> FloatingMesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise MeshFormatError(f"{source}:1: expected header {HEADER!r}")
    xs, ys, vs = [], [], []
    seen = {}
    for n, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise MeshFormatError(f"{source}:{n}: expected 3 fields, got {len(parts)}")
        try:
            x, y, v = (float(p) for p in parts)
        except ValueError:
            raise MeshFormatError(f"{source}:{n}: malformed number in {line!r}") from None
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(v)):
            raise MeshFormatError(f"{source}:{n}: non-finite value")
        if (x, y) in seen:
            raise MeshFormatError(f"{source}:{n}: duplicate position (first on line {seen[(x, y)]})")
        seen[(x, y)] = n
        xs.append(x)
        ys.append(y)
        vs.append(v)
    return FloatingMesh(xs, ys, vs)


def read_mesh(path) -> FloatingMesh:
    return parse_mesh(Path(path).read_text(encoding="utf-8"), str(path))
