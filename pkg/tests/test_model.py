import io
import math

import numpy as np
import pytest
from conftest import bivariate_vg_model, ou_vg_model, power_scale_model

from levysde.laws import GaussianLaw, VarianceGammaLaw
from levysde.model import (
    DataError,
    Dataset,
    ModelError,
    SamplingScheme,
    build_model,
    load_csv,
    model_config,
    model_from_config,
)


def test_build_ou_vg_partition():
    m = ou_vg_model()
    assert m.gamma_names == ("gamma",)
    assert m.alpha_names == ("alpha1", "alpha2")
    assert m.dim_state == 1 and m.dim_noise == 1
    assert m.noise_param_names == ("eta",)
    assert m.scale_is_diagonal


def test_build_bivariate_diagonal():
    m = bivariate_vg_model()
    assert m.dim_state == 2 and m.dim_noise == 2
    assert m.gamma_names == ("gamma1", "gamma2")
    assert set(m.alpha_names) == {"alpha11", "alpha12", "alpha21", "alpha22"}
    assert m.scale_is_diagonal
    assert m.noise_param_names == ("eta1", "eta2")


def test_build_power_scale_partition():
    m = power_scale_model()
    assert m.gamma_names == ("gamma1", "gamma2")
    assert m.alpha_names == ("alpha1", "alpha2")


def test_shared_parameter_rejected():
    with pytest.raises(ModelError, match="both drift and scale"):
        build_model("a*X", "a", ("X",), None, {"a": (0.1, 1.0)})


def test_unused_parameter_rejected():
    with pytest.raises(ModelError, match="never used"):
        build_model("a*X", "1+0*X", ("X",), None,
                    {"a": (0.1, 1.0), "b": (0.1, 1.0)})


def test_unbounded_box_rejected():
    with pytest.raises(ModelError, match="bounded box"):
        build_model("a*X", "g", ("X",), None,
                    {"a": (0.1, 1.0), "g": (0.0, math.inf)})


def test_degenerate_scale_rejected_at_probe():
    with pytest.raises(ModelError, match="degenerate scale"):
        build_model("a*X", "0", ("X",), None, {"a": (0.1, 1.0)})


def test_law_dimension_mismatch():
    with pytest.raises(ModelError, match="dimension"):
        build_model("a*X", "g", ("X",),
                    __import__("levysde.laws", fromlist=["ProductLaw"]).ProductLaw(
                        [VarianceGammaLaw(), VarianceGammaLaw()]),
                    {"a": (0.1, 1.0), "g": (0.1, 1.0)})


def test_coefficient_evaluation_shapes():
    m = bivariate_vg_model()
    pvec = m.param_vector({"alpha11": 0.4, "alpha12": 0.25, "gamma1": 0.2,
                           "alpha21": 0.3, "alpha22": 0.3, "gamma2": 0.1})
    X = np.random.default_rng(0).normal(size=(7, 2))
    a = m.drift(X, pvec)
    c = m.scale(X, pvec)
    da = m.drift_dalpha(X, pvec)
    dc = m.scale_dgamma(X, pvec)
    assert a.shape == (7, 2)
    assert c.shape == (7, 2, 2)
    assert da.shape == (7, 2, 4)
    assert dc.shape == (7, 2, 2, 2)
    # spot values
    assert a[0, 0] == pytest.approx(0.4 * (0.25 - X[0, 0] - 0.2 * X[0, 1]))
    assert c[0, 0, 0] == pytest.approx(0.2)
    assert c[0, 0, 1] == 0.0
    d2c = m.scale_d2gamma(X, pvec)
    assert d2c.shape == (7, 2, 2, 2, 2)
    assert np.all(d2c == 0.0)  # scale linear in gamma


def test_model_rebuild_is_semantically_identical():
    m = power_scale_model(law=VarianceGammaLaw())
    m2 = model_from_config(model_config(m))
    assert m2.gamma_names == m.gamma_names and m2.alpha_names == m.alpha_names
    rng = np.random.default_rng(3)
    pvec = rng.uniform(0.1, 0.9, size=len(m.param_names))
    X = rng.uniform(0.5, 4.0, size=(11, 1))
    assert np.array_equal(m.drift(X, pvec), m2.drift(X, pvec))
    assert np.array_equal(m.scale(X, pvec), m2.scale(X, pvec))
    assert np.array_equal(m.scale_dgamma(X, pvec), m2.scale_dgamma(X, pvec))


def test_sampling_scheme():
    s = SamplingScheme(terminal=1000.0, n=50000)
    assert s.h == pytest.approx(0.02)
    assert len(s.times) == 50001
    with pytest.raises(ModelError):
        SamplingScheme(terminal=0.0, n=10)
    with pytest.raises(ModelError):
        SamplingScheme(terminal=1.0, n=1)


# ---------------------------------------------------------------------------
# Dataset / CSV


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_minimal_grid(tmp_path):
    p = _write(tmp_path, "X\n1.0\n2.0\n3.0\n")
    ds = load_csv(p, delta=0.5)
    assert np.allclose(ds.times, [0.0, 0.5, 1.0])
    assert ds.values.shape == (3, 1)


def test_load_csv_long_series_terminal(tmp_path):
    rows = "\n".join(f"{v:.6f}" for v in np.linspace(3.0, 8.0, 17615))
    p = _write(tmp_path, "X\n" + rows + "\n")
    ds = load_csv(p, delta=1.0 / 30.0)
    assert ds.n_steps == 17614
    assert ds.terminal == pytest.approx(587.1333, abs=1e-3)


def test_load_csv_nan_rejected(tmp_path):
    p = _write(tmp_path, "X\n1.0\nnan\n3.0\n")
    with pytest.raises(DataError, match="row 2"):
        load_csv(p, delta=0.5)


def test_load_csv_non_numeric_rejected(tmp_path):
    p = _write(tmp_path, "t,X\n0,1.0\n0.5,oops\n1.0,3.0\n")
    with pytest.raises(DataError, match="row 2.*'X'"):
        load_csv(p)


def test_load_csv_ragged_rejected(tmp_path):
    p = _write(tmp_path, "t,X\n0,1.0\n0.5\n1.0,3.0\n")
    with pytest.raises(DataError, match="ragged row 2"):
        load_csv(p)


def test_load_csv_non_equispaced_rejected(tmp_path):
    p = _write(tmp_path, "t,X\n0,1.0\n0.5,2.0\n1.2,3.0\n2.0,1.0\n")
    with pytest.raises(DataError, match="not equispaced"):
        load_csv(p, time_column="t")


def test_load_csv_time_column(tmp_path):
    p = _write(tmp_path, "t,X1,X2\n0,1,5\n0.25,2,6\n0.5,3,7\n")
    ds = load_csv(p, time_column="t")
    assert ds.dim == 2
    assert ds.delta == pytest.approx(0.25)


def test_load_csv_delta_conflicts_with_time_column(tmp_path):
    p = _write(tmp_path, "t,X\n0,1\n1,2\n2,3\n")
    with pytest.raises(DataError, match="conflicts with delta"):
        load_csv(p, delta=0.5)


def test_load_csv_needs_spacing_information(tmp_path):
    p = _write(tmp_path, "X\n1\n2\n3\n")
    with pytest.raises(DataError, match="delta"):
        load_csv(p)


def test_dataset_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    values = rng.standard_normal((50, 2)) * np.pi
    ds = Dataset(times=np.arange(50) * 0.098,
                 values=values)
    p = tmp_path / "round.csv"
    ds.write_csv(p, state_names=("X1", "X2"))
    back = load_csv(p, time_column="t")
    assert np.array_equal(back.values, ds.values)
    assert np.array_equal(back.times, ds.times)


def test_dataset_validation():
    with pytest.raises(DataError, match="at least 3"):
        Dataset(times=np.array([0.0, 1.0]), values=np.array([1.0, 2.0]))
    with pytest.raises(DataError, match="non-finite"):
        Dataset(times=np.arange(4.0), values=np.array([1.0, np.nan, 2.0, 3.0]))
    with pytest.raises(DataError, match="increasing"):
        Dataset(times=np.array([0.0, 1.0, 0.5]), values=np.arange(3.0))
