"""Birational invariants: the volume-scaling exponent and its companions.

The prior mass of the near-truth set scales as

    Prior{ K <= t }  ~  c * t^lam * log(1/t)^(m-1)      (t -> 0)

and the pair (lam, m) is computable three ways here:

* ``rlct_from_charts``: exact rational arithmetic on monomialized local
  normal forms, K = u^(2k) with prior factor |u|^h per chart:
  lam = min over charts and coordinates of (h_j + 1) / (2 k_j), m = the
  maximal number of coordinates attaining the min in any minimizing chart.
* ``rlct_volume_fit``: regression of an empirical volume profile log V(t)
  on log t (with the log log(1/t) exponent pinned per candidate m).
* ``invariants_from_errors``: inversion of the large-n limits of the scaled
  generalization/training errors g = n(E[G] - S), t = n(E[T] - S):

      nu = (g - t) / (2 sigma^2),     lam = nu + beta (g + t) / 2.

``nu_from_v`` reads the second invariant off the functional variance limit
E[V] -> 2 nu / beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import FitError, ValidationError
from .models import ModelSpec, TrueProcess, PriorSpec, XQuadrature, population_k_many
from . import seeds

__all__ = [
    "Chart",
    "ChartSet",
    "rlct_from_charts",
    "linear_reference_charts",
    "VolumeProfile",
    "volume_profile",
    "default_t_grid",
    "InvariantEstimate",
    "rlct_volume_fit",
    "nu_from_v",
    "invariants_from_errors",
]


# --------------------------------------------------------------------------
# exact chart computation


@dataclass(frozen=True)
class Chart:
    """Local normal form K = prod u_j^(2 k_j) with prior factor prod |u_j|^h_j."""

    k: tuple[int, ...]
    h: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.k) != len(self.h) or not self.k:
            raise ValidationError("chart exponent tuples must be nonempty and equally long")
        if any(kj < 0 for kj in self.k) or any(hj < 0 for hj in self.h):
            raise ValidationError("chart exponents must be nonnegative integers")
        if all(kj == 0 for kj in self.k):
            raise ValidationError("a chart needs at least one k_j > 0")


@dataclass(frozen=True)
class ChartSet:
    """A finite cover of the zero set by monomial charts."""

    charts: tuple[Chart, ...]

    def __post_init__(self) -> None:
        if not self.charts:
            raise ValidationError("chart set must contain at least one chart")


def _chart_min(chart: Chart) -> tuple[Fraction, int]:
    # per-coordinate ratio (h_j + 1) / (2 k_j); k_j = 0 contributes +inf
    ratios = [Fraction(hj + 1, 2 * kj) for kj, hj in zip(chart.k, chart.h) if kj > 0]
    lam = min(ratios)
    return lam, ratios.count(lam)


def rlct_from_charts(chart_set: ChartSet) -> tuple[Fraction, int]:
    """Exact (lam, multiplicity) of a chart cover.

    lam is the smallest per-coordinate ratio over all charts; the
    multiplicity is the largest attainment count among charts realizing lam.
    """
    per_chart = [_chart_min(c) for c in chart_set.charts]
    lam = min(l for l, _ in per_chart)
    mult = max(m for l, m in per_chart if l == lam)
    return lam, mult


def linear_reference_charts(d: int) -> ChartSet:
    """Blow-up chart of |w|^2 at the origin in R^d: yields (d/2, 1)."""
    if d < 1:
        raise ValidationError("d must be >= 1")
    return ChartSet(charts=(Chart(k=(1,) + (0,) * (d - 1), h=(d - 1,) + (0,) * (d - 1)),))


# --------------------------------------------------------------------------
# empirical volume profile


@dataclass(frozen=True, eq=False)
class VolumeProfile:
    """Empirical prior mass of {K <= t} on a grid of thresholds."""

    ts: np.ndarray
    fractions: np.ndarray
    counts: np.ndarray
    n_samples: int
    seed: int

    def __post_init__(self) -> None:
        if not (self.ts.shape == self.fractions.shape == self.counts.shape):
            raise ValidationError("profile arrays must align")
        if np.any(np.diff(self.ts) <= 0):
            raise ValidationError("thresholds must be strictly increasing")


def default_t_grid(median_k: float, n_points: int = 12, lo_factor: float = 1e-5, hi_factor: float = 1e-1) -> np.ndarray:
    """Threshold grid spanning four decades below the typical K value."""
    if not (median_k > 0 and lo_factor < hi_factor):
        raise ValidationError("median_k must be positive and lo_factor < hi_factor")
    return median_k * np.geomspace(lo_factor, hi_factor, n_points)


def volume_profile(
    model: ModelSpec,
    truth: TrueProcess,
    xq: XQuadrature,
    seed: int,
    n_samples: int = 200_000,
    t_grid: np.ndarray | None = None,
    grid_points: int = 12,
    grid_lo: float = 1e-5,
    grid_hi: float = 1e-1,
    prior: PriorSpec | None = None,
    chunk: int = 4096,
) -> VolumeProfile:
    """Estimate Prior{K <= t} by direct prior sampling.

    K is evaluated on the shared input quadrature.  When ``t_grid`` is
    omitted it is placed relative to the sampled median of K using the
    ``grid_*`` settings.
    """
    if n_samples < 100_000:
        raise ValidationError("volume profile needs n_samples >= 100000")
    prior = prior if prior is not None else model.prior
    rng = seeds.generator(seed)
    ks = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        take = min(chunk, n_samples - start)
        ws = prior.sample(rng, take)
        ks[start : start + take] = population_k_many(model, truth, ws, xq)
    ks.sort()
    if t_grid is None:
        t_grid = default_t_grid(float(np.median(ks)), grid_points, grid_lo, grid_hi)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if np.any(t_grid <= 0):
        raise ValidationError("thresholds must be positive")
    counts = np.searchsorted(ks, t_grid, side="right").astype(np.int64)
    return VolumeProfile(
        ts=t_grid,
        fractions=counts / n_samples,
        counts=counts,
        n_samples=n_samples,
        seed=int(seed),
    )


# --------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class InvariantEstimate:
    """One method's estimate of the invariants; unused fields stay None."""

    method: str
    lam: float | None = None
    lam_se: float | None = None
    multiplicity: int | None = None
    nu: float | None = None
    nu_se: float | None = None
    flags: tuple[str, ...] = ()

    def require_lam(self) -> float:
        if self.lam is None:
            raise ValidationError(f"method {self.method!r} did not estimate the volume exponent")
        return self.lam

    def require_nu(self) -> float:
        if self.nu is None:
            raise ValidationError(f"method {self.method!r} did not estimate the variance invariant")
        return self.nu


def rlct_volume_fit(profile: VolumeProfile, d: int) -> InvariantEstimate:
    """Fit log V(t) = const + lam log t + (m-1) log log(1/t) over m in 1..d.

    The log-log exponent is pinned to m-1 for each candidate m, so m is
    selected by residual, not fitted.  The fit weights each threshold by its
    hit count: the delta-method variance of log V-hat is ~1/count, so this is
    inverse-variance weighting, and it stops near-empty thresholds (whose log
    is both noisy and biased) from steering the slope through their extreme
    leverage.  Thresholds with under 10 hits are dropped outright.  Requires
    at least 8 usable points spanning two decades; points with under 100 hits
    only raise a flag.
    """
    if d < 1:
        raise ValidationError("d must be >= 1")
    usable = (profile.counts >= 10) & (profile.ts < 1.0)
    ts = profile.ts[usable]
    fractions = profile.fractions[usable]
    counts = profile.counts[usable].astype(np.float64)
    if ts.size < 8:
        raise FitError(f"volume fit needs >= 8 usable thresholds, got {ts.size}")
    if ts.max() / ts.min() < 100.0:
        raise FitError("volume fit is ill-conditioned: usable thresholds span under two decades")
    flags = []
    if np.any(counts < 100):
        flags.append("low-count-thresholds")

    log_t = np.log(ts)
    log_v = np.log(fractions)
    log_log = np.log(np.log(1.0 / ts))
    design = np.column_stack([np.ones_like(log_t), log_t])
    sqrt_w = np.sqrt(counts)
    design_w = design * sqrt_w[:, None]
    gram_inv = np.linalg.inv(design_w.T @ design_w)

    best: tuple[float, int, float, float] | None = None  # (rss, m, lam, lam_se)
    for m in range(1, d + 1):
        y = log_v - (m - 1) * log_log
        coef, _, _, _ = np.linalg.lstsq(design_w, y * sqrt_w, rcond=None)
        rss = float(np.sum((y * sqrt_w - design_w @ coef) ** 2))
        dof = ts.size - 2
        # counts give the noise variance directly; inflate by the reduced
        # chi-square when the law itself deviates from a pure power
        scale = max(1.0, rss / dof) if dof > 0 else 1.0
        lam_se = math.sqrt(scale * gram_inv[1, 1])
        if best is None or rss < best[0]:
            best = (rss, m, float(coef[1]), lam_se)

    assert best is not None
    _, mult, lam, lam_se = best
    if lam <= 0:
        raise FitError("volume fit produced a nonpositive exponent; profile is flat")
    return InvariantEstimate(
        method="volume-fit",
        lam=lam,
        lam_se=lam_se,
        multiplicity=mult,
        flags=tuple(flags),
    )


def nu_from_v(mean_v: float, beta: float, se_v: float = 0.0) -> InvariantEstimate:
    """Variance invariant from the functional variance limit E[V] -> 2 nu / beta."""
    if beta <= 0:
        raise ValidationError("beta must be positive")
    nu = 0.5 * beta * mean_v
    flags = ("nu-negative-at-this-n",) if nu < 0 else ()
    return InvariantEstimate(method="v-limit", nu=nu, nu_se=0.5 * beta * se_v, flags=flags)


def invariants_from_errors(
    g_scaled: float,
    t_scaled: float,
    beta: float,
    sigma: float,
    se_g: float = 0.0,
    se_t: float = 0.0,
    cov_gt: float = 0.0,
) -> InvariantEstimate:
    """Invert the error limits g = (lam-nu)/beta + nu sigma^2, t = (lam-nu)/beta - nu sigma^2.

    g_scaled/t_scaled are the scaled means n(mean G - S), n(mean T - S); the
    optional second-moment inputs propagate to standard errors linearly.
    """
    if beta <= 0 or sigma <= 0:
        raise ValidationError("beta and sigma must be positive")
    nu = (g_scaled - t_scaled) / (2.0 * sigma**2)
    lam = nu + 0.5 * beta * (g_scaled + t_scaled)
    dnu_dg = 1.0 / (2.0 * sigma**2)
    dlam_dg = dnu_dg + 0.5 * beta
    dlam_dt = -dnu_dg + 0.5 * beta
    nu_var = dnu_dg**2 * (se_g**2 + se_t**2) - 2.0 * dnu_dg**2 * cov_gt
    lam_var = dlam_dg**2 * se_g**2 + dlam_dt**2 * se_t**2 + 2.0 * dlam_dg * dlam_dt * cov_gt
    flags = []
    if nu < 0:
        flags.append("nu-negative-at-this-n")
    if lam <= 0:
        flags.append("lam-nonpositive-at-this-n")
    return InvariantEstimate(
        method="error-inversion",
        lam=lam,
        lam_se=math.sqrt(max(lam_var, 0.0)),
        nu=nu,
        nu_se=math.sqrt(max(nu_var, 0.0)),
        flags=tuple(flags),
    )
