"""Denoising strength as a decreasing sigmoid of effective data, and its calibration.

    sigma2_opt(xi) = alpha * (1 - 1 / (1 + exp(-(xi / gamma + beta))))

Calibration sweeps uniform strengths over a corpus, averages the per-pixel
gain (squared-error reduction) in quantile bins of xi, takes the best
strength per bin and fits the sigmoid to that path by least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._io import format_kv, read_kv
from .denoising import DenoiserKind, denoise_adaptive
from .effective_data import DEFAULT_RADIUS, compute_xi
from .image_core import as_image
from .interpolation import InterpolationMethod, reconstruct

DEFAULT_SIGMA_GRID = (5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0, 100.0, 120.0)
DEFAULT_XI_BINS = 40


@dataclass(frozen=True)
class StrengthParams:
    alpha: float
    beta: float
    gamma: float
    method: InterpolationMethod = InterpolationMethod.CI
    denoiser: str = "bm3d"
    residual: float = float("nan")

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "method", InterpolationMethod.parse(self.method))

    def to_kv(self) -> str:
        return format_kv(
            [
                ("method", self.method.value.lower()),
                ("alpha", repr(self.alpha)),
                ("beta", repr(self.beta)),
                ("gamma", repr(self.gamma)),
                ("denoiser", self.denoiser),
                ("residual", repr(self.residual)),
            ]
        )

    @classmethod
    def from_kv(cls, path) -> "StrengthParams":
        kv = read_kv(path)
        try:
            return cls(
                alpha=float(kv["alpha"]),
                beta=float(kv["beta"]),
                gamma=float(kv["gamma"]),
                method=kv.get("method", "ci"),
                denoiser=kv.get("denoiser", "bm3d"),
                residual=float(kv.get("residual", "nan")),
            )
        except KeyError as exc:
            raise ValueError(f"{path}: missing key {exc.args[0]!r}") from None


# Values fitted for BM3D on a natural-image corpus.
# Recalibrate (see ``calibrate``) when using another denoiser or corpus.
PUBLISHED_DEFAULTS = {
    InterpolationMethod.LI: StrengthParams(73.69, -0.71, 0.68, InterpolationMethod.LI),
    InterpolationMethod.CI: StrengthParams(105.54, 0.08, 0.97, InterpolationMethod.CI),
    InterpolationMethod.NI: StrengthParams(44.14, -3.64, 0.27, InterpolationMethod.NI),
    InterpolationMethod.NN: StrengthParams(84.38, 0.40, 4.17, InterpolationMethod.NN),
}


def default_params(method) -> StrengthParams:
    return PUBLISHED_DEFAULTS[InterpolationMethod.parse(method)]


def sigmoid_curve(xi, alpha, beta, gamma):
    return alpha * expit(-(np.asarray(xi, dtype=float) / gamma + beta))


def sigma_opt(xi, params: StrengthParams):
    out = sigmoid_curve(xi, params.alpha, params.beta, params.gamma)
    return float(out) if np.ndim(out) == 0 else out


def strength_map_from_xi(xi, params: StrengthParams) -> np.ndarray:
    values = xi.values if hasattr(xi, "values") else np.asarray(xi, dtype=float)
    return sigmoid_curve(values, params.alpha, params.beta, params.gamma)


def gain(ref, initial, denoised) -> np.ndarray:
    """Per-pixel squared-error reduction (I - I~)^2 - (I - I~_D)^2."""
    ref, initial, denoised = (np.asarray(a, dtype=np.float64) for a in (ref, initial, denoised))
    if not (ref.shape == initial.shape == denoised.shape):
        raise ValueError(f"dimension mismatch: {ref.shape}, {initial.shape}, {denoised.shape}")
    return (ref - initial) ** 2 - (ref - denoised) ** 2


# -- gain surface -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GainSurface:
    xi_bins: np.ndarray  # (nbins + 1,) bin edges
    sigma_grid: np.ndarray  # (nsigma,)
    mean_gain: np.ndarray  # (nbins, nsigma), NaN where unpopulated
    population: np.ndarray  # (nbins,)
    xi_centers: np.ndarray  # (nbins,) mean xi of each bin, NaN where empty

    @property
    def populated(self) -> np.ndarray:
        return self.population > 0

    def max_gain_path(self):
        """(xi centers, best sigma^2, populations) over populated bins."""
        ok = self.populated
        best = self.sigma_grid[np.argmax(self.mean_gain[ok], axis=1)]
        return self.xi_centers[ok], best, self.population[ok]


def surface_from_samples(xi: np.ndarray, gains: np.ndarray, sigma_grid, xi_bin_count: int) -> GainSurface:
    """Bin pooled per-pixel (xi, gain-per-sigma) records into a :class:`GainSurface`.

    Bin edges are quantiles of ``xi``; per-cell means use exactly rounded
    sums so the result does not depend on record order.
    """
    xi = np.asarray(xi, dtype=float).ravel()
    gains = np.asarray(gains, dtype=float).reshape(len(xi), -1)
    edges = np.quantile(xi, np.linspace(0.0, 1.0, xi_bin_count + 1))
    b = np.clip(np.searchsorted(edges, xi, side="right") - 1, 0, xi_bin_count - 1)
    order = np.lexsort((xi, b))
    b_sorted = b[order]
    starts = np.searchsorted(b_sorted, np.arange(xi_bin_count + 1))
    nsig = gains.shape[1]
    mean = np.full((xi_bin_count, nsig), np.nan)
    centers = np.full(xi_bin_count, np.nan)
    pop = np.diff(starts)
    for k in range(xi_bin_count):
        if pop[k] == 0:
            continue
        sel = order[starts[k] : starts[k + 1]]
        centers[k] = math.fsum(xi[sel].tolist()) / pop[k]
        for s in range(nsig):
            mean[k, s] = math.fsum(gains[sel, s].tolist()) / pop[k]
    return GainSurface(edges, np.asarray(sigma_grid, dtype=float), mean, pop, centers)


def build_gain_surface(
    corpus,
    method,
    denoiser=DenoiserKind.BM3D_HT,
    sigma_grid=DEFAULT_SIGMA_GRID,
    xi_bin_count: int = DEFAULT_XI_BINS,
    truncation_radius: float = DEFAULT_RADIUS,
    cfg=None,
) -> GainSurface:
    """Sweep uniform strengths over ``corpus`` items of (reference image, mesh)."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    if sigma_grid.size == 0 or np.any(np.diff(sigma_grid) <= 0):
        raise ValueError("sigma grid must be non-empty and strictly ascending")
    if xi_bin_count < 2:
        raise ValueError("need at least 2 xi bins")
    xis, gains = [], []
    for ref, mesh in corpus:
        ref = as_image(ref)
        h, w = ref.shape
        initial, _ = reconstruct(mesh, w, h, method)
        xis.append(compute_xi(mesh, w, h, truncation_radius).values.ravel())
        cols = [
            gain(ref, initial, denoise_adaptive(initial, np.full(ref.shape, s2), denoiser, cfg)).ravel()
            for s2 in sigma_grid
        ]
        gains.append(np.column_stack(cols))
    return surface_from_samples(np.concatenate(xis), np.concatenate(gains), sigma_grid, xi_bin_count)


# -- sigmoid regression -------------------------------------------------------------


class SigmoidFitError(RuntimeError):
    def __init__(self, message, best: StrengthParams | None = None):
        super().__init__(message)
        self.best = best


@dataclass
class FitReport:
    params: StrengthParams
    residual: float
    iterations: int
    path_xi: np.ndarray = field(repr=False)
    path_sigma: np.ndarray = field(repr=False)


def _jacobian(xi, alpha, beta, log_gamma):
    gamma = math.exp(log_gamma)
    z = xi / gamma + beta
    s = expit(-z)  # model = alpha * s
    ds_dz = -s * (1.0 - s)
    return np.column_stack(
        [s, alpha * ds_dz, alpha * ds_dz * (-xi / gamma)]
    ), alpha * s


def fit_sigmoid_path(
    xi,
    sigma,
    weights=None,
    method=InterpolationMethod.CI,
    denoiser: str = "bm3d",
    max_iter: int = 200,
    tol: float = 1e-13,
) -> FitReport:
    """Weighted least-squares fit of the sigmoid to a (xi, sigma^2) path.

    A coarse grid over (alpha, beta, gamma) seeds damped Gauss-Newton
    iterations in (alpha, beta, log gamma).
    """
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(sigma, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if len(np.unique(y)) < 3:
        raise SigmoidFitError("insufficient distinct path values")
    w = w / w.sum()
    sw = np.sqrt(w)

    alphas = np.array([0.5, 1.0, 2.0]) * y.max()
    betas = np.arange(-5.0, 5.0 + 1e-9, 0.5)
    gammas = np.geomspace(0.05, 10.0, 25)
    A, B, G = np.meshgrid(alphas, betas, gammas, indexing="ij")
    A, B, G = A.ravel(), B.ravel(), G.ravel()
    pred = A[:, None] * expit(-(xi[None, :] / G[:, None] + B[:, None]))
    cost = np.sum(w * (pred - y) ** 2, axis=1)
    seeds = np.argsort(cost, kind="stable")[:5]

    best = None
    for s in seeds.tolist():
        theta = np.array([A[s], B[s], math.log(G[s])])
        J, f = _jacobian(xi, *theta)
        c = float(np.sum(w * (f - y) ** 2))
        lam = 1e-6
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            r = sw * (y - f)
            Jw = J * sw[:, None]
            JtJ = Jw.T @ Jw
            step = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ) + 1e-300), Jw.T @ r)
            cand = theta + step
            if cand[0] > 0 and np.all(np.isfinite(cand)):
                Jc, fc = _jacobian(xi, *cand)
                cc = float(np.sum(w * (fc - y) ** 2))
            else:
                cc = math.inf
            if cc <= c:
                small = np.all(np.abs(step) <= 1e-11 * (1.0 + np.abs(theta)))
                theta, J, f = cand, Jc, fc
                improvement = c - cc
                c = cc
                lam = max(lam / 10.0, 1e-12)
                if small or improvement <= tol * max(c, 1e-300) or c <= 1e-300:
                    converged = True
                    break
            else:
                lam *= 10.0
                if lam > 1e12:
                    converged = True
                    break
        if best is None or c < best[0]:
            best = (c, theta, it, converged)
    c, theta, it, converged = best
    params = StrengthParams(
        float(theta[0]), float(theta[1]), float(math.exp(theta[2])), method, denoiser, math.sqrt(c)
    )
    if not converged:
        raise SigmoidFitError(
            f"no convergence after {max_iter} iterations (best so far: alpha={params.alpha:.6g}, "
            f"beta={params.beta:.6g}, gamma={params.gamma:.6g}, residual={params.residual:.6g})",
            params,
        )
    return FitReport(params, math.sqrt(c), it, xi, y)


def fit_sigmoid(surface: GainSurface, method=InterpolationMethod.CI, denoiser: str = "bm3d") -> FitReport:
    """Fit the sigmoid to the max-gain path of ``surface``, weighting bins by population."""
    if surface.populated.sum() < 3:
        raise SigmoidFitError("insufficient populated bins")
    xi, best, pop = surface.max_gain_path()
    return fit_sigmoid_path(xi, best, pop, method, denoiser)
