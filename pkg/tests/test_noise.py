import math

import numpy as np
import pytest
from conftest import OU_VG_TRUE, ou_vg_model

from levysde import rng as lrng
from levysde.gqmle import FitConfig
from levysde.laws import GaussianLaw, StandardizedBilateralGammaLaw, VarianceGammaLaw
from levysde.model import SamplingScheme
from levysde.noise import (
    GaussianObjective,
    MObjective,
    NoiseFitError,
    VarianceGammaObjective,
    aic_select,
    fit_noise,
    h3,
    kernel_density,
    make_objective,
    write_selection_csv,
)
from levysde.residuals import recover
from levysde.sim import euler_simulate


class _ZeroObjective(MObjective):
    labels = ("z",)
    lower = np.array([0.0])
    upper = np.array([1.0])

    def m(self, eps, eta):
        return np.zeros(np.asarray(eps).shape[0])


def test_h3_zero_objective():
    assert h3(np.arange(10.0), _ZeroObjective(), [0.5]) == 0.0


def test_h3_gaussian_matches_direct_loop():
    rng = np.random.default_rng(1)
    eps = rng.standard_normal(257)
    sigma = 1.3
    got = h3(eps, GaussianObjective(), [sigma], t_n=257.4)
    oracle = math.fsum(
        -0.5 * math.log(2 * math.pi) - math.log(sigma) - e * e / (2 * sigma * sigma)
        for e in eps
    ) / 257.4
    assert got == pytest.approx(oracle, rel=1e-14)


def test_h3_reports_bad_residual_index():
    eps = np.array([0.5, -0.2, np.e, 0.1])
    obj = GaussianObjective()
    with pytest.raises(NoiseFitError, match="index 2"):
        h3(np.where(eps == np.e, np.inf, eps) * np.array([1, 1, np.inf, 1]), obj, [1.0])


def test_h3_vg_ordering_on_sde_residuals():
    m = ou_vg_model()
    obj = VarianceGammaObjective()
    diffs_low, diffs_high = [], []
    for seed in range(5):
        data = euler_simulate(m, OU_VG_TRUE, SamplingScheme(terminal=200.0, n=10000),
                              seed=100 + seed).dataset
        eps = recover(data, m, OU_VG_TRUE).unit[:, 0]
        at_true = h3(eps, obj, [1.0])
        diffs_low.append(at_true - h3(eps, obj, [0.5]))
        diffs_high.append(at_true - h3(eps, obj, [1.5]))
    assert np.median(diffs_low) > 0
    assert np.median(diffs_high) > 0


def test_fit_noise_gaussian_closed_form():
    rng = np.random.default_rng(2)
    eps = 0.8 * rng.standard_normal(1500)
    nf = fit_noise(eps, GaussianLaw(), FitConfig(multistart_count=3))
    closed = math.sqrt(np.mean(eps**2))
    assert nf.eta_hat["sigma"] == pytest.approx(closed, rel=1e-6)
    # -2 sum m at the estimate
    direct = -2.0 * np.sum(-0.5 * np.log(2 * np.pi) - np.log(nf.eta_hat["sigma"])
                           - eps**2 / (2 * nf.eta_hat["sigma"] ** 2))
    assert nf.neg2_m_sum == pytest.approx(direct, rel=1e-12)


def test_fit_noise_vg_recovers_eta():
    eps = VarianceGammaLaw().sample(1000, 1.0, {"eta": 1.0}, lrng.stream(33))[:, 0]
    nf = fit_noise(eps, VarianceGammaLaw(), FitConfig(multistart_count=2))
    assert abs(nf.eta_hat["eta"] - 1.0) < 0.3


def test_fit_noise_degenerate_residuals():
    with pytest.raises(NoiseFitError, match="degenerate"):
        fit_noise(np.zeros(100), GaussianLaw())


def test_fit_noise_sampling_distribution_recovery():
    # independent draws bypass the SDE entirely; mean of eta_hat over
    # replications should sit within 3 MC standard errors of the truth
    cfg = FitConfig(multistart_count=1, start={"eta": 0.7})
    hats = []
    for rep in range(50):
        eps = VarianceGammaLaw().sample(1000, 1.0, {"eta": 1.0},
                                        lrng.stream(4000 + rep))[:, 0]
        hats.append(fit_noise(eps, VarianceGammaLaw(), cfg).eta_hat["eta"])
    hats = np.array(hats)
    assert abs(hats.mean() - 1.0) < 3.0 * hats.std() / math.sqrt(len(hats))


def test_h3_gradient_matches_fd_gaussian():
    rng = np.random.default_rng(3)
    eps = rng.standard_normal(400)
    obj = GaussianObjective()
    for s in (0.7, 1.0, 1.6):
        analytic = obj.d_eta(eps, np.array([s])).sum() / len(eps)
        step = np.cbrt(np.finfo(float).eps) * max(1.0, s)
        fd = (h3(eps, obj, [s + step]) - h3(eps, obj, [s - step])) / (2 * step)
        assert analytic == pytest.approx(fd, rel=1e-5)


def test_vg_objective_analytic_eps_derivative():
    obj = VarianceGammaObjective()
    eps = np.array([-2.1, -0.4, 0.3, 1.7])
    eta = np.array([1.2])
    analytic = obj.d_eps(eps, eta)[:, 0]
    step = 1e-6
    fd = (obj.m(eps + step, eta) - obj.m(eps - step, eta)) / (2 * step)
    assert np.allclose(analytic, fd, rtol=1e-6)


def test_gaussian_objective_cross_derivative():
    obj = GaussianObjective()
    eps = np.array([0.5, -1.0])
    eta = np.array([0.9])
    got = obj.d_eta_d_eps(eps, eta)
    base = MObjective.d_eta_d_eps(obj, eps, eta)  # numeric fallback path
    assert np.allclose(got, base, rtol=1e-6, atol=1e-8)


# ---------------------------------------------------------------------------
# AIC selection


def test_aic_single_candidate():
    eps = np.random.default_rng(4).standard_normal(300)
    rows = aic_select(eps, ("gaussian",))
    assert len(rows) == 1 and rows[0]["rank"] == 1 and rows[0]["family"] == "gaussian"
    assert rows[0]["k"] == 1


def test_aic_prefers_generating_family_both_ways():
    cfg = FitConfig(multistart_count=2)
    vg_wins = gauss_wins = 0
    for seed in range(5):
        v = VarianceGammaLaw().sample(1000, 1.0, {"eta": 1.0}, lrng.stream(8000 + seed))[:, 0]
        vg_wins += aic_select(v, ("gaussian", "vg"), cfg)[0]["family"] == "vg"
        g = GaussianLaw().sample(1000, 1.0, {"sigma": 1.0}, lrng.stream(9100 + seed))[:, 0]
        gauss_wins += aic_select(g, ("gaussian", "vg"), cfg)[0]["family"] == "gaussian"
    assert vg_wins >= 4
    assert gauss_wins >= 4


def test_aic_permutation_invariance():
    eps = VarianceGammaLaw().sample(500, 1.0, {"eta": 1.0}, lrng.stream(44))[:, 0]
    cfg = FitConfig(multistart_count=2)
    a = aic_select(eps, ("gaussian", "vg"), cfg)
    b = aic_select(np.random.default_rng(0).permutation(eps), ("gaussian", "vg"), cfg)
    assert [r["family"] for r in a] == [r["family"] for r in b]
    assert a[0]["aic"] == pytest.approx(b[0]["aic"], rel=1e-12)


def test_aic_failures_recorded_not_fatal():
    eps = np.concatenate([np.zeros(50), [1e-9]])  # nearly degenerate
    rows = aic_select(eps, ("gaussian", "vg"), FitConfig(multistart_count=1))
    assert len(rows) == 2
    assert all("rank" in r for r in rows)


def test_aic_four_family_roster_runs(tmp_path):
    eps = VarianceGammaLaw().sample(400, 1.0, {"eta": 1.0}, lrng.stream(55))[:, 0]
    rows = aic_select(eps, cfg=FitConfig(multistart_count=1))
    assert [r["rank"] for r in rows] == [1, 2, 3, 4]
    path = tmp_path / "sel.csv"
    write_selection_csv(rows, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "family,k,eta_hat,logL,AIC,rank"
    assert len(lines) == 5


# ---------------------------------------------------------------------------
# Kernel density


def test_kernel_density_symmetric_two_points():
    grid, dens = kernel_density(np.array([-1.0, 1.0]), bandwidth=1.0)
    assert np.allclose(dens, dens[::-1], atol=1e-12)
    assert grid[0] == pytest.approx(-4.0) and grid[-1] == pytest.approx(4.0)


def test_kernel_density_normalization():
    x = np.random.default_rng(6).standard_normal(2000)
    grid, dens = kernel_density(x)
    assert abs(np.trapezoid(dens, grid) - 1.0) < 1e-3


def test_kernel_density_matches_normal():
    x = np.random.default_rng(7).standard_normal(10**5)
    grid, dens = kernel_density(x)
    mask = np.abs(grid) <= 2.0
    phi = np.exp(-0.5 * grid[mask] ** 2) / math.sqrt(2 * math.pi)
    assert np.max(np.abs(dens[mask] - phi)) < 0.02


def test_kernel_density_errors():
    with pytest.raises(NoiseFitError):
        kernel_density(np.array([1.0]))
    with pytest.raises(NoiseFitError):
        kernel_density(np.full(10, 3.3))
    with pytest.raises(NoiseFitError):
        kernel_density(np.array([0.0, 1.0]), bandwidth=-1.0)


def test_make_objective_dispatch():
    assert isinstance(make_objective(GaussianLaw()), GaussianObjective)
    assert isinstance(make_objective(VarianceGammaLaw()), VarianceGammaObjective)
    obj = make_objective(StandardizedBilateralGammaLaw())
    assert obj.labels == ("m", "p")
