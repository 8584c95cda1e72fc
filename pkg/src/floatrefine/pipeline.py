"""End-to-end refinement: interpolate, measure effective data, map to strength, denoise."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .denoising import Bm3dConfig, DenoiserKind, denoise_adaptive
from .effective_data import DEFAULT_RADIUS, XiField, compute_xi
from .interpolation import InterpolationMethod, reconstruct
from .strength_model import StrengthParams, default_params, strength_map_from_xi
from .triangulation import build_from_mesh

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.__cause__ = cause


@dataclass
class RefineRequest:
    mesh: object
    width: int
    height: int
    method: InterpolationMethod = InterpolationMethod.CI
    params: StrengthParams | None = None
    denoiser: DenoiserKind = DenoiserKind.BM3D_HT
    truncation_radius: float = DEFAULT_RADIUS
    bm3d: Bm3dConfig | None = None

    def __post_init__(self):
        self.method = InterpolationMethod.parse(self.method)
        self.denoiser = DenoiserKind.parse(self.denoiser)
        if self.params is None:
            self.params = default_params(self.method)
        elif self.params.method is not self.method:
            log.warning(
                "strength parameters were fitted for %s but method is %s",
                self.params.method.value,
                self.method.value,
            )


@dataclass
class RefineResult:
    initial: np.ndarray
    refined: np.ndarray
    xi: XiField
    strength: np.ndarray
    outside: np.ndarray


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def refine(req: RefineRequest, threads=None, tri=None) -> RefineResult:
    """Run the four steps; never touches a reference image.

    ``tri`` may carry a prebuilt triangulation of ``req.mesh``.
    """
    if tri is None:
        tri = _stage("triangulation", build_from_mesh, req.mesh)
    initial, outside = _stage(
        "interpolation", reconstruct, req.mesh, req.width, req.height, req.method, tri=tri, threads=threads
    )
    xi = _stage("effective_data", compute_xi, req.mesh, req.width, req.height, req.truncation_radius)
    strength = _stage("strength", strength_map_from_xi, xi, req.params)
    refined = _stage("denoise", denoise_adaptive, initial, strength, req.denoiser, req.bm3d, threads)
    return RefineResult(initial, refined, xi, strength, outside)
