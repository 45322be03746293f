"""Error estimators computed from posterior samples.

Everything here reduces to the first two posterior moments of the regression
map at a fixed set of inputs (``PredictiveMoments``).  With f = r - r0:

* training error        T = 1/(2n) sum_i |y_i - E_w r(x_i, .)|^2
* generalization error  G = S + 1/2 E_X |E_w f(X, .)|^2,  S = N sigma^2 / 2
* functional variance   V = sum_i (E_w |r(x_i, .)|^2 - |E_w r(x_i, .)|^2)
* corrected estimate    G_hat = (1 + 2 beta V / (n N)) * T
* decompositions        D1 = n E_w E_X |f|^2     D2 = n E_X |E_w f|^2
                        D3 = sum_i E_w |f(x_i)|^2   D4 = sum_i |E_w f(x_i)|^2
* residual coupling     sum_i (y_i - r0(x_i)) . (E_w r(x_i, .) - r0(x_i)),
  whose expectation equals sigma^2 * beta * E[V]

Moments accumulate deviations from the map at the first draw, so the
variance-like quantities are formed from small numbers directly, never as a
difference of O(1) terms; per-input variances clamp at zero.  That makes
V >= 0, 0 <= D4 <= D3 and V = D3 - D4 hold at machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset
from .errors import ValidationError
from .models import ModelSpec, TrueProcess, XQuadrature
from .posterior import PosteriorSamples

__all__ = [
    "PredictiveMoments",
    "predictive_moments",
    "training_error",
    "generalization_error",
    "functional_variance",
    "waic_estimate",
    "DStatistics",
    "d_statistics",
    "stein_diagnostic",
    "ErrorReport",
    "compute_error_report",
    "REPORT_COLUMNS",
    "report_to_row",
    "report_from_row",
]


# --------------------------------------------------------------------------
# posterior moments of the regression map


@dataclass(frozen=True, eq=False)
class PredictiveMoments:
    """First two posterior moments of r at fixed inputs.

    mean: (K, N) posterior mean map.  sq: (K,) posterior mean of |r|^2.
    var: (K,) posterior variance mass sum_N Var_w r, clamped nonnegative.
    """

    mean: np.ndarray
    sq: np.ndarray
    var: np.ndarray


def predictive_moments(
    samples: PosteriorSamples,
    xs: np.ndarray,
    model: ModelSpec,
    *,
    max_draws: int | None = None,
    chunk: int = 256,
) -> PredictiveMoments:
    """Accumulate E_w r and E_w |r|^2 at each input row.

    ``max_draws`` thins the draws with a fixed stride before accumulating
    (weighted draws are never thinned).  Work proceeds in draw chunks so the
    (draws, inputs) evaluation matrix never materializes at once.
    """
    draws = samples.draws
    weights = samples.weights
    if max_draws is not None and weights is None and draws.shape[0] > max_draws:
        stride = -(-draws.shape[0] // max_draws)
        draws = draws[::stride]
    n_draws = draws.shape[0]

    ref = model.evaluate_many(draws[:1], xs)[0]  # (K, N)
    sum_dev = np.zeros_like(ref)
    sum_dev_sq = np.zeros(ref.shape[0])
    weight_total = 0.0
    for start in range(0, n_draws, chunk):
        block = model.evaluate_many(draws[start : start + chunk], xs) - ref[None, :, :]
        if weights is None:
            sum_dev += block.sum(axis=0)
            sum_dev_sq += np.einsum("jkn,jkn->k", block, block)
            weight_total += block.shape[0]
        else:
            wb = weights[start : start + chunk]
            sum_dev += np.tensordot(wb, block, axes=(0, 0))
            sum_dev_sq += np.einsum("j,jkn,jkn->k", wb, block, block)
            weight_total += float(wb.sum())

    mean_dev = sum_dev / weight_total
    mean_dev_sq = sum_dev_sq / weight_total
    mean = ref + mean_dev
    var = np.maximum(mean_dev_sq - np.einsum("kn,kn->k", mean_dev, mean_dev), 0.0)
    sq = mean_dev_sq + 2.0 * np.einsum("kn,kn->k", ref, mean_dev) + np.einsum("kn,kn->k", ref, ref)
    return PredictiveMoments(mean=mean, sq=sq, var=var)


def _f_moments(moments: PredictiveMoments, r0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # moments of f = r - r0 from moments of r: per input, |E f|^2 and E |f|^2
    fbar = moments.mean - r0
    fbar_sq = np.einsum("kn,kn->k", fbar, fbar)
    return fbar_sq, fbar_sq + moments.var


# --------------------------------------------------------------------------
# scalar estimators


def training_error(
    samples: PosteriorSamples,
    dataset: Dataset,
    model: ModelSpec,
    moments: PredictiveMoments | None = None,
) -> float:
    """Mean squared distance of responses to the posterior mean map, halved."""
    m = moments if moments is not None else predictive_moments(samples, dataset.xs, model)
    resid = dataset.ys - m.mean
    return 0.5 * float(np.einsum("kn,kn->", resid, resid)) / dataset.n


def generalization_error(
    samples: PosteriorSamples,
    truth: TrueProcess,
    model: ModelSpec,
    xq: XQuadrature,
    moments: PredictiveMoments | None = None,
) -> float:
    """Expected squared distance of the posterior mean map to the truth, plus the noise floor."""
    m = moments if moments is not None else predictive_moments(samples, xq.nodes, model)
    fbar_sq, _ = _f_moments(m, truth.r0(xq.nodes))
    return truth.s_value + 0.5 * float(fbar_sq.mean())


def functional_variance(
    samples: PosteriorSamples,
    dataset: Dataset,
    model: ModelSpec,
    moments: PredictiveMoments | None = None,
) -> float:
    """Summed posterior variance of the map at the training inputs."""
    m = moments if moments is not None else predictive_moments(samples, dataset.xs, model)
    return float(m.var.sum())


def waic_estimate(t: float, v: float, n: int, n_out: int, beta: float) -> float:
    """Corrected generalization estimate (1 + 2 beta V / (n N)) * T."""
    if n < 1 or n_out < 1:
        raise ValidationError("n and n_out must be >= 1")
    if v < 0 or t < 0 or beta < 0:
        raise ValidationError("t, v, beta must be nonnegative")
    return (1.0 + 2.0 * beta * v / (n * n_out)) * t


@dataclass(frozen=True)
class DStatistics:
    """Scaled second-moment decompositions of f = r - r0.

    d1/d2 integrate over the input law (times n), d3/d4 sum over the training
    inputs.  Always d2 <= d1, d4 <= d3, and d3 - d4 equals the functional
    variance.
    """

    d1: float
    d2: float
    d3: float
    d4: float


def d_statistics(
    samples: PosteriorSamples,
    dataset: Dataset,
    truth: TrueProcess,
    model: ModelSpec,
    xq: XQuadrature,
    train_moments: PredictiveMoments | None = None,
    x_moments: PredictiveMoments | None = None,
) -> DStatistics:
    """Compute all four decompositions from shared moment sets."""
    tm = train_moments if train_moments is not None else predictive_moments(samples, dataset.xs, model)
    xm = x_moments if x_moments is not None else predictive_moments(samples, xq.nodes, model)
    fbar_sq_x, f_sq_x = _f_moments(xm, truth.r0(xq.nodes))
    fbar_sq_tr, f_sq_tr = _f_moments(tm, truth.r0(dataset.xs))
    n = dataset.n
    return DStatistics(
        d1=n * float(f_sq_x.mean()),
        d2=n * float(fbar_sq_x.mean()),
        d3=float(f_sq_tr.sum()),
        d4=float(fbar_sq_tr.sum()),
    )


def stein_diagnostic(
    samples: PosteriorSamples,
    dataset: Dataset,
    truth: TrueProcess,
    model: ModelSpec,
    moments: PredictiveMoments | None = None,
) -> float:
    """Noise-residual coupling sum_i (y_i - r0(x_i)) . (E_w r(x_i,.) - r0(x_i)).

    Its expectation over datasets equals sigma^2 * beta * E[V], which makes
    the sampled pair (value, V) a finite-n consistency check.
    """
    m = moments if moments is not None else predictive_moments(samples, dataset.xs, model)
    r0 = truth.r0(dataset.xs)
    return float(np.einsum("kn,kn->", dataset.ys - r0, m.mean - r0))


# --------------------------------------------------------------------------
# per-replication report


@dataclass(frozen=True)
class ErrorReport:
    """All estimators for one (dataset, posterior) pair, plus provenance."""

    n: int
    beta: float
    replication: int
    t: float
    g: float
    v: float
    s: float
    g_hat: float
    d1: float
    d2: float
    d3: float
    d4: float
    stein_lhs: float
    seed: int
    mcmc_seed: int
    converged: bool
    max_rhat: float

    def __post_init__(self) -> None:
        if self.v < -1e-12 or self.t < 0:
            raise ValidationError("report requires t >= 0 and v >= 0")
        if self.g < self.s - 1e-12:
            raise ValidationError("generalization error cannot undercut the noise floor")


REPORT_COLUMNS = (
    "n",
    "beta",
    "replication",
    "T",
    "G",
    "V",
    "S",
    "G_hat",
    "D1",
    "D2",
    "D3",
    "D4",
    "stein_lhs",
    "seed",
    "mcmc_seed",
    "converged",
    "max_rhat",
)

_COLUMN_TO_FIELD = {
    "T": "t",
    "G": "g",
    "V": "v",
    "S": "s",
    "G_hat": "g_hat",
    "D1": "d1",
    "D2": "d2",
    "D3": "d3",
    "D4": "d4",
}
_INT_FIELDS = {"n", "replication", "seed", "mcmc_seed"}
_BOOL_FIELDS = {"converged"}


def report_to_row(report: ErrorReport) -> list[str]:
    """Serialize for CSV with exact float round-trip."""
    row = []
    for col in REPORT_COLUMNS:
        value = getattr(report, _COLUMN_TO_FIELD.get(col, col))
        if isinstance(value, bool):
            row.append("1" if value else "0")
        elif isinstance(value, (int, np.integer)):
            row.append(str(int(value)))
        else:
            row.append(format(value, ".17g"))
    return row


def report_from_row(row: list[str]) -> ErrorReport:
    if len(row) != len(REPORT_COLUMNS):
        raise ValidationError(f"report row has {len(row)} fields, expected {len(REPORT_COLUMNS)}")
    kwargs = {}
    for col, raw in zip(REPORT_COLUMNS, row):
        name = _COLUMN_TO_FIELD.get(col, col)
        if name in _INT_FIELDS:
            kwargs[name] = int(raw)
        elif name in _BOOL_FIELDS:
            kwargs[name] = raw == "1"
        else:
            kwargs[name] = float(raw)
    return ErrorReport(**kwargs)


def compute_error_report(
    samples: PosteriorSamples,
    dataset: Dataset,
    truth: TrueProcess,
    model: ModelSpec,
    xq: XQuadrature,
    *,
    replication: int = 0,
    mcmc_seed: int = 0,
    x_moment_max_draws: int | None = None,
) -> ErrorReport:
    """Evaluate every estimator once, sharing the two moment passes."""
    train_moments = predictive_moments(samples, dataset.xs, model)
    x_moments = predictive_moments(samples, xq.nodes, model, max_draws=x_moment_max_draws)
    t = training_error(samples, dataset, model, train_moments)
    g = generalization_error(samples, truth, model, xq, x_moments)
    v = functional_variance(samples, dataset, model, train_moments)
    d = d_statistics(samples, dataset, truth, model, xq, train_moments, x_moments)
    diag = samples.diagnostics
    return ErrorReport(
        n=dataset.n,
        beta=samples.beta,
        replication=replication,
        t=t,
        g=g,
        v=v,
        s=truth.s_value,
        g_hat=waic_estimate(t, v, dataset.n, model.n_out, samples.beta),
        d1=d.d1,
        d2=d.d2,
        d3=d.d3,
        d4=d.d4,
        stein_lhs=stein_diagnostic(samples, dataset, truth, model, train_moments),
        seed=dataset.seed,
        mcmc_seed=mcmc_seed,
        converged=diag.converged,
        max_rhat=diag.max_rhat if math.isfinite(diag.max_rhat) else float("inf"),
    )
