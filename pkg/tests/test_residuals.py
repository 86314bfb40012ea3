import numpy as np
import pytest
from conftest import (
    BIVARIATE_TRUE,
    OU_VG_TRUE,
    bivariate_vg_model,
    constant_scale_model,
    ou_vg_model,
)

from levysde.model import Dataset, SamplingScheme
from levysde.residuals import (
    ResidualError,
    aggregate,
    recover,
    small_increments,
    unit_blocks,
)
from levysde.sim import euler_simulate


def test_small_increments_zero_drift_constant_scale():
    m = constant_scale_model()
    data = euler_simulate(m, {"gamma": 0.5, "eta": 1.0},
                          SamplingScheme(terminal=5.0, n=100), seed=1).dataset
    got = small_increments(data, m, {"gamma": 0.5})
    assert np.allclose(got[:, 0], data.increments()[:, 0] / 0.5, rtol=0, atol=1e-15)


def test_round_trip_at_true_parameters_univariate():
    m = ou_vg_model()
    out = euler_simulate(m, OU_VG_TRUE, SamplingScheme(terminal=100.0, n=5000), seed=2)
    got = small_increments(out.dataset, m, OU_VG_TRUE)
    assert np.max(np.abs(got - out.noise_increments)) < 1e-12


def test_round_trip_at_true_parameters_bivariate():
    m = bivariate_vg_model()
    out = euler_simulate(m, BIVARIATE_TRUE, SamplingScheme(terminal=50.0, n=2500), seed=3)
    got = small_increments(out.dataset, m, BIVARIATE_TRUE)
    assert got.shape == (2500, 2)
    assert np.max(np.abs(got - out.noise_increments)) < 1e-12


def test_residual_count_matches_steps():
    m = ou_vg_model()
    out = euler_simulate(m, OU_VG_TRUE, SamplingScheme(terminal=20.0, n=600), seed=4)
    assert small_increments(out.dataset, m, OU_VG_TRUE).shape[0] == 600


# ---------------------------------------------------------------------------
# unit_blocks (0-based ranges; the 1-based block {a..b} is range(a-1, b))


def test_unit_blocks_quarter_step():
    # h = 0.25, T = 1: A_1 = {1,2,3,4}
    assert unit_blocks(4, 1.0, 0.25) == [range(0, 4)]


def test_unit_blocks_two_units():
    # h = 0.25, T = 2: A_2 = {5,6,7,8}
    blocks = unit_blocks(8, 2.0, 0.25)
    assert blocks == [range(0, 4), range(4, 8)]


def test_unit_blocks_ragged_sizes():
    # n = 10, T = 3 (h = 0.3): sizes 3, 3, 4
    blocks = unit_blocks(10, 3.0, 0.3)
    assert blocks == [range(0, 3), range(3, 6), range(6, 10)]
    # enumeration oracle in exact rationals: j*3/10 <= i
    from fractions import Fraction

    for i, b in enumerate(blocks, start=1):
        js = [j for j in range(1, 11) if i - 1 < Fraction(3, 10) * j <= i]
        assert list(b) == [j - 1 for j in js]


def test_unit_blocks_float_step_misclassification_guard():
    # h = 0.02 as a float is slightly above 1/50; naive floor(i/h) drops j = 50i
    blocks = unit_blocks(50000, 1000.0000000000002, 1000.0000000000002 / 50000)
    assert len(blocks) == 1000
    sizes = {len(b) for b in blocks}
    assert sizes == {50}
    assert blocks[-1].stop == 50000


def test_unit_blocks_partial_terminal_unit_dropped():
    # T = 2.5, n = 10 (h = 0.25): only 2 complete units; j in {9, 10} dropped
    blocks = unit_blocks(10, 2.5, 0.25)
    assert blocks == [range(0, 4), range(4, 8)]


def test_unit_blocks_errors():
    with pytest.raises(ResidualError, match="complete unit"):
        unit_blocks(10, 0.5, 0.05)


def test_unit_blocks_partition_invariant():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(10, 2000))
        T = float(rng.integers(1, 20)) + rng.choice([0.0, 0.5, 1.0 / 3.0])
        if T < 1 or n / T < 1:
            continue
        blocks = unit_blocks(n, T, T / n)
        # disjoint, consecutive, covering {1..floor(floor(T)*n/T)}
        prev_stop = 0
        for b in blocks:
            assert b.start == prev_stop
            prev_stop = b.stop
        sizes = [len(b) for b in blocks]
        assert max(sizes) - min(sizes) <= 1
        assert {int(np.floor(n / T)), int(np.ceil(n / T))} >= set(sizes)


def test_aggregate_telescoping_closed_form():
    # zero drift, c = gamma, integer 1/h: eps_i = (X_{i} - X_{i-1 units}) / gamma
    m = constant_scale_model()
    out = euler_simulate(m, {"gamma": 0.5, "eta": 1.0},
                         SamplingScheme(terminal=10.0, n=500), seed=5)
    series = recover(out.dataset, m, {"gamma": 0.5})
    x = out.dataset.values[::50, 0]  # unit-time marks every 50 steps
    expected = np.diff(x) / 0.5
    assert np.allclose(series.unit[:, 0], expected, atol=1e-12)


def test_aggregate_linearity():
    rng = np.random.default_rng(7)
    small_a = rng.standard_normal((100, 1))
    small_b = rng.standard_normal((100, 1))
    blocks = unit_blocks(100, 10.0, 0.1)
    assert np.allclose(aggregate(small_a + small_b, blocks),
                       aggregate(small_a, blocks) + aggregate(small_b, blocks))


def test_unit_round_trip_reproduces_true_unit_increments():
    m = ou_vg_model()
    out = euler_simulate(m, OU_VG_TRUE, SamplingScheme(terminal=100.0, n=5000), seed=8)
    series = recover(out.dataset, m, OU_VG_TRUE)
    truth = aggregate(out.noise_increments, series.blocks)
    assert series.unit.shape == (100, 1)
    assert np.max(np.abs(series.unit - truth)) < 1e-10


def test_unit_count_is_floor_terminal():
    m = ou_vg_model()
    out = euler_simulate(m, OU_VG_TRUE, SamplingScheme(terminal=1000.0, n=50000), seed=9)
    series = recover(out.dataset, m, OU_VG_TRUE)
    assert series.unit.shape[0] == 1000


def test_standardized_noise_sanity():
    m = ou_vg_model()
    out = euler_simulate(m, OU_VG_TRUE, SamplingScheme(terminal=200.0, n=10000), seed=10)
    series = recover(out.dataset, m, OU_VG_TRUE)
    eps = series.unit[:, 0]
    assert abs(eps.mean()) < 0.1
    assert abs(eps.var() - 1.0) < 0.15


def test_residual_csv_exports(tmp_path):
    m = ou_vg_model()
    out = euler_simulate(m, OU_VG_TRUE, SamplingScheme(terminal=5.0, n=100), seed=11)
    series = recover(out.dataset, m, OU_VG_TRUE)
    up = tmp_path / "unit.csv"
    sp = tmp_path / "small.csv"
    series.write_unit_csv(up)
    series.write_small_csv(sp, out.dataset.times[1:])
    unit_lines = up.read_text().strip().splitlines()
    assert unit_lines[0] == "i,eps_1"
    assert len(unit_lines) == 6
    small_lines = sp.read_text().strip().splitlines()
    assert small_lines[0] == "j,t_j,dJ_1"
    assert len(small_lines) == 101
    back = np.array([float(l.split(",")[1]) for l in unit_lines[1:]])
    assert np.array_equal(back, series.unit[:, 0])
