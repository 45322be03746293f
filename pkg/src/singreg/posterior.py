"""Gibbs posterior sampling and expectations.

The target density on the parameter region is

    p(w) dw  propto  exp(-beta * H(w)) * prior(w) dw

with H the empirical square error of a fixed dataset (H = 0 when no dataset
is attached, which makes the target the prior itself).

Two interchangeable backends produce a ``PosteriorSamples``:

* ``sample_posterior``: random-walk Metropolis, all chains advanced in one
  vectorized step loop, proposal scales adapted during burn-in only, with
  optional parallel tempering for multimodal targets.  Fully deterministic
  given (target, config, seed): every random number is pregenerated from
  per-chain Philox streams.
* ``grid_posterior``: deterministic midpoint quadrature with coarse-to-fine
  zoom onto the region where the posterior mass lives (cells whose log
  density is within a window of the maximum).  Draws are cell centers and
  carry normalized weights.

``expectation`` consumes either representation; constants are integrated
exactly (the mean is computed on deviations from the first draw).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import Dataset
from .errors import ValidationError
from .models import ModelSpec, XQuadrature, empirical_square_error_many
from . import seeds

__all__ = [
    "GibbsTarget",
    "McmcConfig",
    "PtConfig",
    "GridConfig",
    "Diagnostics",
    "PosteriorSamples",
    "XQuadrature",
    "sample_posterior",
    "grid_posterior",
    "expectation",
    "quadrature_expectation",
    "split_rhat",
    "effective_sample_size",
    "dump_draws_csv",
]


# --------------------------------------------------------------------------
# target


@dataclass(frozen=True, eq=False)
class GibbsTarget:
    """Unnormalized log posterior -beta * H(w) + log prior(w).

    ``dataset=None`` drops the data term entirely (H = 0), so the target is
    the prior; beta = 0 does the same with a dataset attached.
    """

    model: ModelSpec
    dataset: Dataset | None
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValidationError("beta must be finite and >= 0")
        if self.dataset is not None:
            if self.dataset.xs.shape[1] != self.model.m_in:
                raise ValidationError("dataset input dimension does not match the model")
            if self.dataset.ys.shape[1] != self.model.n_out:
                raise ValidationError("dataset output dimension does not match the model")

    def h_many(self, ws: np.ndarray) -> np.ndarray:
        """Empirical square error at each parameter row, shape (J,)."""
        ws = np.asarray(ws, dtype=np.float64)
        if self.dataset is None:
            return np.zeros(ws.shape[0])
        return empirical_square_error_many(self.model, self.dataset.xs, self.dataset.ys, ws)

    def log_unnorm_many(self, ws: np.ndarray) -> np.ndarray:
        """Unnormalized log density at each row; -inf outside the region."""
        ws = np.asarray(ws, dtype=np.float64)
        out = self.model.prior.log_density_many(ws)
        inside = np.isfinite(out)
        if self.beta > 0 and inside.any():
            out[inside] -= self.beta * self.h_many(ws[inside])
        return out

    def log_unnorm(self, w: np.ndarray) -> float:
        return float(self.log_unnorm_many(np.asarray(w, dtype=np.float64)[None, :])[0])


# --------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class PtConfig:
    """Parallel tempering: geometric ladder of inverse temperatures.

    Rung t runs at beta * ratio^t; rung 0 is the target.  Adjacent rungs
    propose state swaps every ``swap_every`` steps.
    """

    n_temps: int = 4
    ratio: float = 0.5
    swap_every: int = 50

    def __post_init__(self) -> None:
        if self.n_temps < 2:
            raise ValidationError("tempering needs n_temps >= 2")
        if not (0.0 < self.ratio < 1.0):
            raise ValidationError("tempering ratio must be in (0, 1)")
        if self.swap_every < 1:
            raise ValidationError("swap_every must be >= 1")


@dataclass(frozen=True)
class McmcConfig:
    """Random-walk Metropolis settings.

    ``draws_per_chain`` counts kept draws; the chain advances
    ``burn_in + draws_per_chain * thinning`` steps.  Proposal scales start at
    ``init_step_frac`` times the region widths and adapt only during burn-in
    (whole-vector x1.1 / 1.1 nudges toward an acceptance rate inside
    [accept_low, accept_high], assessed every ``adapt_window`` steps).
    """

    n_chains: int = 4
    burn_in: int = 5000
    draws_per_chain: int = 20000
    thinning: int = 1
    rhat_limit: float = 1.05
    init_step_frac: float = 0.1
    adapt_window: int = 100
    accept_low: float = 0.2
    accept_high: float = 0.4
    tempering: PtConfig | None = None

    def __post_init__(self) -> None:
        if self.n_chains < 2:
            raise ValidationError("need n_chains >= 2 for split-chain diagnostics")
        if self.draws_per_chain < 100:
            raise ValidationError("need draws_per_chain >= 100")
        if self.burn_in < 0 or self.thinning < 1:
            raise ValidationError("burn_in must be >= 0 and thinning >= 1")
        if self.rhat_limit <= 1.0:
            raise ValidationError("rhat_limit must exceed 1")
        if self.init_step_frac <= 0:
            raise ValidationError("init_step_frac must be positive")
        if not (0.0 < self.accept_low < self.accept_high < 1.0):
            raise ValidationError("need 0 < accept_low < accept_high < 1")
        if self.adapt_window < 10:
            raise ValidationError("adapt_window must be >= 10")


@dataclass(frozen=True)
class GridConfig:
    """Deterministic quadrature backend settings (d <= 4).

    Each level lays a midpoint grid over the current box, keeps cells whose
    log density is within ``log_window`` of the maximum, and shrinks the box
    to their padded bounding hull.  The final level's cells become weighted
    draws.
    """

    points_per_axis: int = 48
    levels: int = 3
    log_window: float = 40.0
    pad_cells: int = 2
    max_nodes: int = 2**21

    def __post_init__(self) -> None:
        if self.points_per_axis < 8:
            raise ValidationError("points_per_axis must be >= 8")
        if self.levels < 1:
            raise ValidationError("levels must be >= 1")
        if self.log_window <= 0 or self.pad_cells < 0:
            raise ValidationError("log_window must be positive and pad_cells >= 0")


# --------------------------------------------------------------------------
# samples and diagnostics


@dataclass(frozen=True, eq=False)
class Diagnostics:
    """Convergence summary attached to every sample set."""

    method: str
    rhat: np.ndarray
    ess: np.ndarray
    acceptance_rate: tuple[float, ...]
    converged: bool
    rhat_limit: float
    swap_acceptance: tuple[float, ...] | None = None

    @property
    def max_rhat(self) -> float:
        arr = np.asarray(self.rhat, dtype=np.float64)
        if arr.size == 0:
            return 1.0
        return float(np.max(arr))


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    """Posterior draws (J, d) with optional per-draw weights.

    MCMC draws are equally weighted (``weights=None``) and ordered chain by
    chain; grid draws carry normalized quadrature weights.
    """

    draws: np.ndarray
    beta: float
    weights: np.ndarray | None
    diagnostics: Diagnostics
    n_chains: int
    draws_per_chain: int

    def __post_init__(self) -> None:
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise ValidationError("draws must have shape (J, d), J >= 1")
        if self.weights is not None:
            if self.weights.shape != (self.draws.shape[0],):
                raise ValidationError("weights must align with draws")
            if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
                raise ValidationError("weights must be finite and nonnegative")
        self.draws.setflags(write=False)
        if self.weights is not None:
            self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.draws.shape[0]


# --------------------------------------------------------------------------
# chain diagnostics


def _split_chains(chains: np.ndarray) -> np.ndarray:
    c, length, d = chains.shape
    half = length // 2
    if half < 2:
        raise ValidationError("chains too short to split")
    return np.concatenate([chains[:, :half, :], chains[:, half : 2 * half, :]], axis=0)


def _autocovariance(seqs: np.ndarray) -> np.ndarray:
    # biased autocovariance rows via FFT, denominator = length
    length = seqs.shape[1]
    centered = seqs - seqs.mean(axis=1, keepdims=True)
    size = 1 << (2 * length - 1).bit_length()
    freq = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(freq * np.conj(freq), n=size, axis=1)[:, :length]
    return acov / length


def _chain_moments(split: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # returns (within, between-inflated variance, var_plus) per coordinate
    length = split.shape[1]
    within = split.var(axis=1, ddof=1).mean(axis=0)
    between = length * split.mean(axis=1).var(axis=0, ddof=1)
    var_plus = (length - 1) / length * within + between / length
    return within, between, var_plus


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction per coordinate.

    chains: (C, L, d).  Constant coordinates report 1.0.
    """
    split = _split_chains(np.asarray(chains, dtype=np.float64))
    within, _, var_plus = _chain_moments(split)
    out = np.ones(chains.shape[2])
    live = within > 0
    out[live] = np.sqrt(var_plus[live] / within[live])
    out[(~live) & (var_plus > 0)] = np.inf
    return out


def effective_sample_size(chains: np.ndarray) -> np.ndarray:
    """Autocorrelation-based effective sample size per coordinate.

    Split chains, FFT autocovariances, initial monotone positive sequence on
    paired lags.  Constant coordinates report the full draw count.
    """
    chains = np.asarray(chains, dtype=np.float64)
    split = _split_chains(chains)
    s, length, d = split.shape
    total = chains.shape[0] * chains.shape[1]
    within, _, var_plus = _chain_moments(split)
    out = np.full(d, float(total))
    for j in range(d):
        if within[j] <= 0 or var_plus[j] <= 0:
            continue
        acov = _autocovariance(split[:, :, j])
        rho = 1.0 - (within[j] - acov.mean(axis=0)) / var_plus[j]
        rho[0] = 1.0
        # Geyer pairs: sum while positive, enforce nonincreasing
        tau = 0.0
        prev = np.inf
        for k in range(0, (length - 1) // 2):
            pair = rho[2 * k] + rho[2 * k + 1]
            if pair <= 0:
                break
            pair = min(pair, prev)
            tau += pair
            prev = pair
        tau = max(2.0 * tau - 1.0, 1e-3)
        out[j] = s * length / tau
    return out


# --------------------------------------------------------------------------
# random-walk Metropolis


def sample_posterior(target: GibbsTarget, config: McmcConfig, seed: int) -> PosteriorSamples:
    """Draw from the target with vectorized random-walk Metropolis chains."""
    model = target.model
    d = model.d
    n_chains = config.n_chains
    pt = config.tempering
    n_temps = pt.n_temps if pt is not None else 1
    kept_per_chain = config.draws_per_chain
    steps = config.burn_in + kept_per_chain * config.thinning
    betas = target.beta * (pt.ratio ** np.arange(n_temps) if pt is not None else np.ones(1))

    swap_every = pt.swap_every if pt is not None else steps + 1
    n_swap_events = steps // swap_every + 1

    # one Philox stream per chain drives init, proposals, accepts, and swaps
    normals = np.empty((n_chains, n_temps, steps, d))
    log_unif = np.empty((n_chains, n_temps, steps))
    log_swap = np.empty((n_chains, n_swap_events, max(n_temps - 1, 1)))
    state = np.empty((n_chains, n_temps, d))
    for c in range(n_chains):
        rng = seeds.generator(seeds.mix(seed, c))
        normals[c] = rng.standard_normal((n_temps, steps, d))
        log_unif[c] = np.log(rng.random((n_temps, steps)))
        log_swap[c] = np.log(rng.random((n_swap_events, max(n_temps - 1, 1))))
        state[c] = model.prior.sample(rng, n_temps)

    log_prior = model.prior.log_density_many(state.reshape(-1, d)).reshape(n_chains, n_temps)
    h_cur = target.h_many(state.reshape(-1, d)).reshape(n_chains, n_temps)

    scales = np.broadcast_to(config.init_step_frac * model.region.widths(), (n_chains, n_temps, d)).copy()
    window_accepts = np.zeros((n_chains, n_temps))
    post_accepts = np.zeros(n_chains)
    swap_attempts = np.zeros(max(n_temps - 1, 1))
    swap_accepts = np.zeros(max(n_temps - 1, 1))

    kept = np.empty((n_chains, kept_per_chain, d))
    kept_idx = 0
    swap_event = 0

    for step in range(steps):
        proposal = state + scales * normals[:, :, step, :]
        flat = proposal.reshape(-1, d)
        lp_prop = model.prior.log_density_many(flat)
        inside = np.isfinite(lp_prop)
        h_prop = np.zeros(flat.shape[0])
        if inside.any():
            h_prop[inside] = target.h_many(flat[inside])
        lp_prop = lp_prop.reshape(n_chains, n_temps)
        h_prop = h_prop.reshape(n_chains, n_temps)
        inside = inside.reshape(n_chains, n_temps)

        log_ratio = np.where(
            inside,
            -betas[None, :] * (h_prop - h_cur) + (lp_prop - log_prior),
            -np.inf,
        )
        accept = log_unif[:, :, step] < log_ratio
        mask = accept[:, :, None]
        state = np.where(mask, proposal, state)
        h_cur = np.where(accept, h_prop, h_cur)
        log_prior = np.where(accept, lp_prop, log_prior)

        if step < config.burn_in:
            window_accepts += accept
            if (step + 1) % config.adapt_window == 0:
                rate = window_accepts / config.adapt_window
                scales[rate < config.accept_low] /= 1.1
                scales[rate > config.accept_high] *= 1.1
                window_accepts[:] = 0.0
        else:
            post_accepts += accept[:, 0]
            if (step - config.burn_in) % config.thinning == config.thinning - 1:
                kept[:, kept_idx, :] = state[:, 0, :]
                kept_idx += 1

        if pt is not None and (step + 1) % swap_every == 0:
            for t in range(n_temps - 1):
                log_alpha = (betas[t] - betas[t + 1]) * (h_cur[:, t] - h_cur[:, t + 1])
                do = log_swap[:, swap_event, t] < log_alpha
                swap_attempts[t] += n_chains
                swap_accepts[t] += int(do.sum())
                idx = np.flatnonzero(do)
                if idx.size:
                    for arr in (state, h_cur, log_prior):
                        tmp = arr[idx, t].copy()
                        arr[idx, t] = arr[idx, t + 1]
                        arr[idx, t + 1] = tmp
            swap_event += 1

    assert kept_idx == kept_per_chain
    rhat = split_rhat(kept)
    ess = effective_sample_size(kept)
    post_steps = steps - config.burn_in
    diagnostics = Diagnostics(
        method="mcmc",
        rhat=rhat,
        ess=ess,
        acceptance_rate=tuple(float(a) / post_steps for a in post_accepts),
        converged=bool(np.all(np.isfinite(rhat)) and np.all(rhat <= config.rhat_limit)),
        rhat_limit=config.rhat_limit,
        swap_acceptance=(
            tuple(float(a) / max(t, 1.0) for a, t in zip(swap_accepts, swap_attempts)) if pt is not None else None
        ),
    )
    return PosteriorSamples(
        draws=kept.reshape(n_chains * kept_per_chain, d),
        beta=target.beta,
        weights=None,
        diagnostics=diagnostics,
        n_chains=n_chains,
        draws_per_chain=kept_per_chain,
    )


# --------------------------------------------------------------------------
# deterministic grid backend


def grid_posterior(target: GibbsTarget, grid: GridConfig) -> PosteriorSamples:
    """Quadrature representation of the target on a zoomed midpoint grid."""
    model = target.model
    d = model.d
    if d > 4:
        raise ValidationError("grid backend supports d <= 4 only")
    if grid.points_per_axis**d > grid.max_nodes:
        raise ValidationError(
            f"grid would allocate {grid.points_per_axis**d} nodes (> max_nodes={grid.max_nodes}); lower points_per_axis"
        )
    lo_full, hi_full = model.region.bounding_box()
    lo, hi = lo_full.copy(), hi_full.copy()
    points = grid.points_per_axis

    nodes = logw = None
    for level in range(grid.levels):
        offsets = (np.arange(points) + 0.5) / points
        axes = [lo[j] + (hi[j] - lo[j]) * offsets for j in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        mesh = mesh[model.region.contains_many(mesh)]
        if mesh.shape[0] == 0:
            raise ValidationError("grid level contains no nodes inside the region")
        logw = target.log_unnorm_many(mesh)
        top = float(np.max(logw))
        if not np.isfinite(top):
            raise ValidationError("posterior is -inf on every grid node")
        nodes = mesh
        if level == grid.levels - 1:
            break
        sel = logw >= top - grid.log_window
        cell = (hi - lo) / points
        margin = (0.5 + grid.pad_cells) * cell
        lo = np.maximum(lo_full, nodes[sel].min(axis=0) - margin)
        hi = np.minimum(hi_full, nodes[sel].max(axis=0) + margin)

    assert nodes is not None and logw is not None
    shifted = logw - np.max(logw)
    weights = np.exp(shifted)
    weights /= weights.sum()
    diagnostics = Diagnostics(
        method="grid",
        rhat=np.ones(d),
        ess=np.full(d, float(nodes.shape[0])),
        acceptance_rate=(),
        converged=True,
        rhat_limit=math.inf,
    )
    return PosteriorSamples(
        draws=nodes,
        beta=target.beta,
        weights=weights,
        diagnostics=diagnostics,
        n_chains=0,
        draws_per_chain=nodes.shape[0],
    )


# --------------------------------------------------------------------------
# expectations


def expectation(samples: PosteriorSamples, f) -> float | np.ndarray:
    """Posterior mean of a vectorized functional f: (J, d) -> (J,) or (J, k).

    Computed on deviations from the first draw, so constants come back exact.
    """
    vals = np.asarray(f(samples.draws), dtype=np.float64)
    if vals.shape[0] != samples.size:
        raise ValidationError("functional must return one row per draw")
    ref = vals[0]
    dev = vals - ref
    if samples.weights is None:
        mean = ref + dev.mean(axis=0)
    else:
        wn = samples.weights / samples.weights.sum()
        mean = ref + np.tensordot(wn, dev, axes=(0, 0))
    if np.ndim(mean) == 0:
        return float(mean)
    return mean


def quadrature_expectation(target: GibbsTarget, f, grid: GridConfig) -> float | np.ndarray:
    """Grid-backend posterior mean of f; beta = 0 gives a plain grid average."""
    return expectation(grid_posterior(target, grid), f)


# --------------------------------------------------------------------------
# draw export


def dump_draws_csv(samples: PosteriorSamples, path: str | Path) -> None:
    """Write draws as CSV (w_1..w_d, chain, iteration) for external inspection."""
    path = Path(path)
    d = samples.draws.shape[1]
    per_chain = samples.draws_per_chain
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"w_{j + 1}" for j in range(d)] + ["chain", "iteration"])
        for idx in range(samples.size):
            chain, iteration = (idx // per_chain, idx % per_chain) if samples.n_chains else (0, idx)
            writer.writerow([format(v, ".17g") for v in samples.draws[idx]] + [chain, iteration])
