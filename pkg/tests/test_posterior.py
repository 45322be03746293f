"""Posterior sampling backends against a dense-quadrature conjugate oracle.

For a one-parameter linear model with uniform prior, the tempered posterior
density on [-1, 1] is exp(-beta/2 * sum_i (y_i - w x_i)^2) up to a constant,
so any posterior expectation can be computed to ~1e-10 with a dense trapezoid
rule.  Both backends (zoomed midpoint grid, random-walk Metropolis) must
reproduce those oracle moments within their own accuracy budgets.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from singreg import (
    Diagnostics,
    GibbsTarget,
    GridConfig,
    McmcConfig,
    PtConfig,
    ValidationError,
    dump_draws_csv,
    effective_sample_size,
    expectation,
    generate,
    grid_posterior,
    make_model,
    make_truth,
    quadrature_expectation,
    sample_posterior,
    split_rhat,
)

# --- oracle -----------------------------------------------------------------


def _dense_moments(target: GibbsTarget, k: int = 400001) -> tuple[float, float]:
    """Posterior mean and second moment of w by trapezoid on [-1, 1]."""
    grid = np.linspace(-1.0, 1.0, k)
    logw = target.log_unnorm_many(grid[:, None])
    logw -= logw.max()
    dens = np.exp(logw)
    z = np.trapezoid(dens, grid)
    mean = np.trapezoid(grid * dens, grid) / z
    second = np.trapezoid(grid**2 * dens, grid) / z
    return float(mean), float(second)


@pytest.fixture(scope="module")
def linear1_target():
    model = make_model("linear-1")
    truth = make_truth("linear-1", sigma=0.1)
    dataset = generate(truth, n=50, seed=2024)
    return GibbsTarget(model=model, dataset=dataset, beta=1.0)


# --- grid backend -----------------------------------------------------------


def test_grid_posterior_matches_dense_oracle(linear1_target):
    oracle_mean, oracle_second = _dense_moments(linear1_target)
    samples = grid_posterior(linear1_target, GridConfig(points_per_axis=48, levels=3))
    mean = expectation(samples, lambda w: w[:, 0])
    second = expectation(samples, lambda w: w[:, 0] ** 2)
    assert mean == pytest.approx(oracle_mean, abs=5e-6)
    assert second == pytest.approx(oracle_second, abs=5e-6)
    assert samples.diagnostics.converged
    assert samples.diagnostics.method == "grid"


def test_grid_zoom_levels_improve_accuracy(linear1_target):
    oracle_mean, _ = _dense_moments(linear1_target)
    errs = []
    for levels in (1, 3):
        samples = grid_posterior(linear1_target, GridConfig(points_per_axis=32, levels=levels))
        errs.append(abs(expectation(samples, lambda w: w[:, 0]) - oracle_mean))
    assert errs[1] <= errs[0]


def test_grid_weights_are_a_probability_vector(linear1_target):
    samples = grid_posterior(linear1_target, GridConfig(points_per_axis=24, levels=2))
    assert samples.weights is not None
    assert samples.weights.min() >= 0
    assert samples.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert linear1_target.model.region.contains_many(samples.draws).all()


def test_grid_posterior_2d_recovers_the_prior_without_data():
    # beta-0-like limit: no dataset means the target is the prior itself,
    # whose moments on the box are mean 0 and var 1/3 per coordinate
    model = make_model("linear-2")
    target = GibbsTarget(model=model, dataset=None, beta=1.0)
    samples = grid_posterior(target, GridConfig(points_per_axis=40, levels=1))
    mean = expectation(samples, lambda w: w)
    second = expectation(samples, lambda w: w**2)
    np.testing.assert_allclose(mean, [0.0, 0.0], atol=1e-12)
    # midpoint-rule second-moment bias is h^2/12 = 2.08e-4 at 40 cells
    np.testing.assert_allclose(second, [1 / 3, 1 / 3], atol=2.5e-4)


def test_grid_rejects_high_dimension():
    model = make_model("linear-5")
    target = GibbsTarget(model=model, dataset=None, beta=1.0)
    with pytest.raises(ValidationError):
        grid_posterior(target, GridConfig())


# --- mcmc backend -----------------------------------------------------------


def test_mcmc_matches_dense_oracle(linear1_target):
    oracle_mean, oracle_second = _dense_moments(linear1_target)
    config = McmcConfig(n_chains=4, burn_in=1000, draws_per_chain=5000)
    samples = sample_posterior(linear1_target, config, seed=77)
    assert samples.diagnostics.converged
    assert samples.draws.shape == (20000, 1)
    # posterior sd ~ 0.08 at n=50 given beta Sum x^2 ~ 150; with ess >= ~2000
    # the mean estimate carries se <~ 0.002
    mean = expectation(samples, lambda w: w[:, 0])
    second = expectation(samples, lambda w: w[:, 0] ** 2)
    assert mean == pytest.approx(oracle_mean, abs=0.01)
    assert second == pytest.approx(oracle_second, abs=0.01)


def test_mcmc_is_deterministic_per_seed(linear1_target):
    config = McmcConfig(n_chains=2, burn_in=200, draws_per_chain=300)
    a = sample_posterior(linear1_target, config, seed=5)
    b = sample_posterior(linear1_target, config, seed=5)
    np.testing.assert_array_equal(a.draws, b.draws)
    assert a.diagnostics.acceptance_rate == b.diagnostics.acceptance_rate
    c = sample_posterior(linear1_target, config, seed=6)
    assert not np.array_equal(a.draws, c.draws)


def test_mcmc_draws_stay_inside_the_region():
    model = make_model("sinmix")
    truth = make_truth("sinmix", sigma=1.0)
    dataset = generate(truth, n=30, seed=1)
    target = GibbsTarget(model=model, dataset=dataset, beta=1.0)
    config = McmcConfig(n_chains=2, burn_in=300, draws_per_chain=500)
    samples = sample_posterior(target, config, seed=3)
    assert model.region.contains_many(samples.draws).all()


def test_mcmc_thinning_controls_kept_draws(linear1_target):
    config = McmcConfig(n_chains=2, burn_in=200, draws_per_chain=250, thinning=4)
    samples = sample_posterior(linear1_target, config, seed=9)
    assert samples.draws.shape == (500, 1)
    assert samples.n_chains == 2 and samples.draws_per_chain == 250


def test_mcmc_acceptance_rate_lands_in_the_adapted_window(linear1_target):
    config = McmcConfig(n_chains=4, burn_in=2000, draws_per_chain=2000)
    samples = sample_posterior(linear1_target, config, seed=21)
    rates = samples.diagnostics.acceptance_rate
    assert len(rates) == 4
    assert all(0.1 <= r <= 0.55 for r in rates)


def test_parallel_tempering_agrees_with_plain_chains(linear1_target):
    oracle_mean, _ = _dense_moments(linear1_target)
    config = McmcConfig(
        n_chains=2,
        burn_in=1000,
        draws_per_chain=4000,
        tempering=PtConfig(n_temps=3, ratio=0.5, swap_every=25),
    )
    samples = sample_posterior(linear1_target, config, seed=13)
    assert samples.diagnostics.swap_acceptance is not None
    assert len(samples.diagnostics.swap_acceptance) == 2  # one rate per adjacent pair
    assert all(0.0 < s <= 1.0 for s in samples.diagnostics.swap_acceptance)
    assert expectation(samples, lambda w: w[:, 0]) == pytest.approx(oracle_mean, abs=0.015)


def test_prior_recovery_without_data_mcmc():
    model = make_model("linear-1")
    target = GibbsTarget(model=model, dataset=None, beta=1.0)
    config = McmcConfig(n_chains=4, burn_in=500, draws_per_chain=4000)
    samples = sample_posterior(target, config, seed=31)
    assert expectation(samples, lambda w: w[:, 0]) == pytest.approx(0.0, abs=0.03)
    assert expectation(samples, lambda w: w[:, 0] ** 2) == pytest.approx(1 / 3, abs=0.03)


# --- expectation ------------------------------------------------------------


def test_expectation_is_exact_on_constants(linear1_target):
    samples = grid_posterior(linear1_target, GridConfig(points_per_axis=16, levels=1))
    val = expectation(samples, lambda w: np.full(w.shape[0], 3.25))
    assert val == 3.25
    config = McmcConfig(n_chains=2, burn_in=100, draws_per_chain=200)
    mc = sample_posterior(linear1_target, config, seed=1)
    assert expectation(mc, lambda w: np.full(w.shape[0], -7.5)) == -7.5


def test_expectation_handles_vector_valued_functionals(linear1_target):
    samples = grid_posterior(linear1_target, GridConfig(points_per_axis=32, levels=2))
    vec = expectation(samples, lambda w: np.concatenate([w, w**2], axis=1))
    assert vec.shape == (2,)
    assert vec[0] == pytest.approx(expectation(samples, lambda w: w[:, 0]), abs=1e-14)
    assert vec[1] == pytest.approx(expectation(samples, lambda w: w[:, 0] ** 2), abs=1e-14)


def test_quadrature_expectation_shortcut(linear1_target):
    grid = GridConfig(points_per_axis=24, levels=2)
    a = quadrature_expectation(linear1_target, lambda w: w[:, 0], grid)
    b = expectation(grid_posterior(linear1_target, grid), lambda w: w[:, 0])
    assert a == b


# --- convergence diagnostics ------------------------------------------------


def test_split_rhat_near_one_for_iid_chains():
    rng = np.random.default_rng(0)
    chains = rng.standard_normal((4, 2000, 2))
    r = split_rhat(chains)
    assert r.shape == (2,)
    assert np.all(r < 1.02)


def test_split_rhat_flags_diverged_chains():
    rng = np.random.default_rng(0)
    chains = rng.standard_normal((2, 1000, 1))
    chains[1] += 10.0
    assert split_rhat(chains)[0] > 3.0


def test_split_rhat_flags_a_trend_within_one_chain():
    # split halves of a drifting chain have different means
    chains = np.linspace(0, 1, 2000).reshape(1, 2000, 1) + 0.01 * np.random.default_rng(1).standard_normal((2, 2000, 1))
    assert split_rhat(chains).max() > 1.5


def test_split_rhat_constant_coordinate_reports_one():
    chains = np.zeros((2, 100, 1))
    assert split_rhat(chains)[0] == 1.0


def test_ess_iid_is_near_the_draw_count():
    rng = np.random.default_rng(3)
    chains = rng.standard_normal((4, 4000, 1))
    ess = effective_sample_size(chains)[0]
    assert 0.5 * 16000 < ess <= 1.3 * 16000


def test_ess_ar1_matches_the_autocorrelation_formula():
    # AR(1) with coefficient phi has ess ratio (1 - phi) / (1 + phi)
    phi = 0.9
    rng = np.random.default_rng(7)
    c, l = 4, 20000
    innov = rng.standard_normal((c, l))
    chains = np.empty((c, l))
    chains[:, 0] = innov[:, 0]
    for t in range(1, l):
        chains[:, t] = phi * chains[:, t - 1] + math.sqrt(1 - phi**2) * innov[:, t]
    ess = effective_sample_size(chains[:, :, None])[0]
    expected = c * l * (1 - phi) / (1 + phi)
    assert ess == pytest.approx(expected, rel=0.35)


def test_ess_constant_chain_is_full_size():
    chains = np.ones((2, 500, 1))
    assert effective_sample_size(chains)[0] == 1000


def test_diagnostics_max_rhat():
    diag = Diagnostics(
        method="mcmc",
        rhat=np.array([1.01, 1.2]),
        ess=np.array([100.0, 50.0]),
        acceptance_rate=(0.3, 0.3),
        converged=False,
        rhat_limit=1.05,
    )
    assert diag.max_rhat == pytest.approx(1.2)


# --- target and config validation -------------------------------------------


def test_gibbs_target_log_density_matches_hand_computation():
    model = make_model("linear-1")
    truth = make_truth("linear-1", sigma=0.1)
    dataset = generate(truth, n=8, seed=4)
    beta = 0.7
    target = GibbsTarget(model=model, dataset=dataset, beta=beta)
    w = np.array([[0.3]])
    h = 0.5 * math.fsum((dataset.ys[i, 0] - 0.3 * dataset.xs[i, 0]) ** 2 for i in range(8))
    expected = -beta * h + math.log(0.5)  # uniform prior density on [-1, 1]
    assert target.log_unnorm_many(w)[0] == pytest.approx(expected, rel=1e-12)
    outside = target.log_unnorm_many(np.array([[1.5]]))
    assert outside[0] == -math.inf


def test_gibbs_target_rejects_negative_beta():
    model = make_model("linear-1")
    with pytest.raises(ValidationError):
        GibbsTarget(model=model, dataset=None, beta=-0.5)


def test_mcmc_config_validation():
    with pytest.raises(ValidationError):
        McmcConfig(n_chains=1)
    with pytest.raises(ValidationError):
        McmcConfig(draws_per_chain=10)
    with pytest.raises(ValidationError):
        McmcConfig(thinning=0)
    with pytest.raises(ValidationError):
        McmcConfig(burn_in=-1)
    with pytest.raises(ValidationError):
        PtConfig(n_temps=1)
    with pytest.raises(ValidationError):
        PtConfig(ratio=1.5)
    with pytest.raises(ValidationError):
        GridConfig(points_per_axis=1)


# --- draw export ------------------------------------------------------------


def test_dump_draws_csv(tmp_path, linear1_target):
    config = McmcConfig(n_chains=2, burn_in=100, draws_per_chain=150)
    samples = sample_posterior(linear1_target, config, seed=8)
    path = tmp_path / "draws.csv"
    dump_draws_csv(samples, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "w_1,chain,iteration"
    assert len(lines) == 1 + 300
    first = lines[1].split(",")
    assert float(first[0]) == pytest.approx(samples.draws[0, 0], rel=1e-15)
    assert first[1] == "0" and first[2] == "0"
