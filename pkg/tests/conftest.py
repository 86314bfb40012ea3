"""Shared model builders for the test suite (the three workflow models)."""

import numpy as np

from levysde import expr as ex
from levysde.laws import ProductLaw, VarianceGammaLaw
from levysde.model import SdeModel, build_model


def ou_vg_model():
    """Mean-reverting univariate model with symmetric VG noise."""
    return build_model(
        drift_texts="alpha1*(alpha2-X)",
        scale_texts="gamma",
        state_vars=("X",),
        law=VarianceGammaLaw(),
        bounds={"alpha1": (0.01, 2.0), "alpha2": (0.01, 2.0), "gamma": (0.01, 2.0)},
    )


OU_VG_TRUE = {"alpha1": 0.4, "alpha2": 0.25, "gamma": 0.25, "eta": 1.0}


def bivariate_vg_model():
    """Two coupled mean-reverting states, diagonal scale, independent VG noise."""
    return build_model(
        drift_texts=["alpha11*(alpha12-X1-0.2*X2)", "alpha21*(alpha22-X2)"],
        scale_texts=["gamma1", "gamma2"],
        state_vars=("X1", "X2"),
        law=ProductLaw([VarianceGammaLaw(), VarianceGammaLaw()]),
        bounds={
            "alpha11": (0.01, 2.0), "alpha12": (0.01, 2.0),
            "alpha21": (0.01, 2.0), "alpha22": (0.01, 2.0),
            "gamma1": (0.01, 2.0), "gamma2": (0.01, 2.0),
        },
    )


BIVARIATE_TRUE = {
    "alpha11": 0.4, "alpha12": 0.25, "gamma1": 0.2, "eta1": 1.0,
    "alpha21": 0.3, "alpha22": 0.3, "gamma2": 0.1, "eta2": 1.0,
}


def power_scale_model(law=None):
    """Linear drift with power-law scale (the log-price workflow model)."""
    return build_model(
        drift_texts="alpha1+alpha2*X",
        scale_texts="gamma1*X^gamma2",
        state_vars=("X",),
        law=law,
        bounds={
            "alpha1": (1e-10, 5.0), "alpha2": (-1.0, 1.0),
            "gamma1": (1e-10, 1.0), "gamma2": (0.0, 2.0),
        },
    )


def zero_scale_model():
    """Deterministic edge case: scale literally 0 (bypasses the build probe)."""
    table = ex.SymbolTable(state_vars=("X",), params=("alpha1", "alpha2"),
                           bounds={"alpha1": (0.01, 2.0), "alpha2": (0.01, 2.0)})
    return SdeModel(
        table=table,
        drift_exprs=(ex.parse("alpha1*(alpha2-X)", table),),
        scale_exprs=((ex.parse("0", table),),),
        law=VarianceGammaLaw(),
        gamma_names=(),
        alpha_names=("alpha1", "alpha2"),
        bounds={"alpha1": (0.01, 2.0), "alpha2": (0.01, 2.0)},
    )


def pure_noise_model():
    """No drift, unit scale: the path is the running sum of the increments."""
    table = ex.SymbolTable(state_vars=("X",), params=())
    return SdeModel(
        table=table,
        drift_exprs=(ex.parse("0", table),),
        scale_exprs=((ex.parse("1", table),),),
        law=VarianceGammaLaw(),
        gamma_names=(),
        alpha_names=(),
        bounds={},
    )


def constant_scale_model(law=None):
    """No drift, constant free scale gamma (closed-form estimator oracles)."""
    return build_model(
        drift_texts="0",
        scale_texts="gamma",
        state_vars=("X",),
        law=law if law is not None else VarianceGammaLaw(),
        bounds={"gamma": (0.01, 2.0)},
    )
