"""Noise-parameter inference from unit-time residuals.

The M-objective H3(eta) = (1/T_n) sum_i m(eps_hat_i, eta) is maximized over a
box; for the built-in families m is the unit-time log-density, so the fit is
(quasi) maximum likelihood. AIC-based family selection and a Gaussian-kernel
density estimate of the residual law round out the workflow.

eta-derivatives of m default to central differences (step
cbrt(machine eps) * max(1, |eta|)); the Gaussian objective is fully analytic
and the variance-gamma objective has an analytic epsilon-derivative (a Bessel
recurrence), with eta-differencing on top.

AIC caveat: the criterion is the plain 2k - 2 logL heuristic. Residual-based
information criteria may need corrections for the plug-in effect of the
coefficient estimates; none are applied here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gqmle import EstimationError, FitConfig, _fsum, optimize_box
from .laws import (
    GaussianLaw,
    LevyLaw,
    StandardizedBilateralGammaLaw,
    StandardizedNormalTemperedStableLaw,
    VarianceGammaLaw,
)

_FD_STEP = float(np.cbrt(np.finfo(float).eps))


class NoiseFitError(EstimationError):
    pass


def _steps(eta: np.ndarray) -> np.ndarray:
    return _FD_STEP * np.maximum(1.0, np.abs(eta))


class MObjective:
    """m(eps, eta) with the derivative set the asymptotics need.

    eps is (m,) univariate or (m, r) multivariate; eta a vector in
    label order. Subclasses override the numeric-differencing defaults
    where analytic forms exist.
    """

    labels: tuple = ()
    lower: np.ndarray = None
    upper: np.ndarray = None

    def m(self, eps, eta) -> np.ndarray:
        raise NotImplementedError

    def d_eps(self, eps, eta) -> np.ndarray:
        """d m / d eps -> (m, r), central differences by default."""
        eps = np.asarray(eps, dtype=float)
        shape = eps.shape
        flat = eps.reshape(shape[0], -1)
        out = np.empty(flat.shape)
        for k in range(flat.shape[1]):
            step = _FD_STEP * np.maximum(1.0, np.abs(flat[:, k]))
            hi = flat.copy(); hi[:, k] += step
            lo = flat.copy(); lo[:, k] -= step
            out[:, k] = (np.asarray(self.m(hi.reshape(shape), eta))
                         - np.asarray(self.m(lo.reshape(shape), eta))) / (2.0 * step)
        return out

    def d_eta(self, eps, eta) -> np.ndarray:
        """d m / d eta -> (m, p)."""
        eta = np.asarray(eta, dtype=float)
        steps = _steps(eta)
        cols = []
        for k in range(eta.size):
            hi = eta.copy(); hi[k] += steps[k]
            lo = eta.copy(); lo[k] -= steps[k]
            cols.append((self.m(eps, hi) - self.m(eps, lo)) / (2.0 * steps[k]))
        return np.stack(cols, axis=-1)

    def d2_eta(self, eps, eta) -> np.ndarray:
        """d^2 m / d eta^2 -> (m, p, p), differencing the eta-gradient."""
        eta = np.asarray(eta, dtype=float)
        steps = _steps(eta)
        cols = []
        for k in range(eta.size):
            hi = eta.copy(); hi[k] += steps[k]
            lo = eta.copy(); lo[k] -= steps[k]
            cols.append((self.d_eta(eps, hi) - self.d_eta(eps, lo)) / (2.0 * steps[k]))
        out = np.stack(cols, axis=-1)           # (m, p, p)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def d_eta_d_eps(self, eps, eta) -> np.ndarray:
        """d^2 m / d eta d eps -> (m, p, r), differencing d_eps in eta."""
        eta = np.asarray(eta, dtype=float)
        steps = _steps(eta)
        rows = []
        for k in range(eta.size):
            hi = eta.copy(); hi[k] += steps[k]
            lo = eta.copy(); lo[k] -= steps[k]
            rows.append((self.d_eps(eps, hi) - self.d_eps(eps, lo)) / (2.0 * steps[k]))
        return np.stack(rows, axis=1)


class LawObjective(MObjective):
    """Quasi-likelihood objective m = unit-time log-density of a law."""

    def __init__(self, law: LevyLaw, lower=None, upper=None):
        self.law = law
        self.labels = law.param_labels
        dl, du = _default_eta_box(law)
        self.lower = np.asarray(dl if lower is None else lower, dtype=float)
        self.upper = np.asarray(du if upper is None else upper, dtype=float)

    def _params(self, eta):
        return dict(zip(self.labels, np.asarray(eta, dtype=float)))

    def m(self, eps, eta):
        eps = np.asarray(eps, dtype=float)
        if self.law.dim == 1:
            eps = eps.reshape(-1)
        with np.errstate(all="ignore"):
            return np.asarray(self.law.log_density(eps, 1.0, self._params(eta)),
                              dtype=float)


class GaussianObjective(LawObjective):
    """N(0, sigma^2) log-likelihood with the full analytic derivative set."""

    def __init__(self, lower=None, upper=None):
        super().__init__(GaussianLaw(), lower, upper)

    def m(self, eps, eta):
        (s,) = np.asarray(eta, dtype=float)
        x = np.asarray(eps, dtype=float).reshape(-1)
        return -0.5 * math.log(2.0 * math.pi) - math.log(s) - x * x / (2.0 * s * s)

    def d_eps(self, eps, eta):
        (s,) = np.asarray(eta, dtype=float)
        x = np.asarray(eps, dtype=float).reshape(-1)
        return (-x / (s * s))[:, None]

    def d_eta(self, eps, eta):
        (s,) = np.asarray(eta, dtype=float)
        x = np.asarray(eps, dtype=float).reshape(-1)
        return (-1.0 / s + x * x / s**3)[:, None]

    def d2_eta(self, eps, eta):
        (s,) = np.asarray(eta, dtype=float)
        x = np.asarray(eps, dtype=float).reshape(-1)
        return (1.0 / s**2 - 3.0 * x * x / s**4)[:, None, None]

    def d_eta_d_eps(self, eps, eta):
        (s,) = np.asarray(eta, dtype=float)
        x = np.asarray(eps, dtype=float).reshape(-1)
        return (2.0 * x / s**3)[:, None, None]


class VarianceGammaObjective(LawObjective):
    """Symmetric VG log-likelihood; analytic in eps, differenced in eta."""

    def __init__(self, lower=None, upper=None):
        super().__init__(VarianceGammaLaw(), lower, upper)

    def d_eps(self, eps, eta):
        from .specfun import log_bessel_k

        (e,) = np.asarray(eta, dtype=float)
        x = np.asarray(eps, dtype=float).reshape(-1)
        ax = np.abs(x)
        nu = e - 0.5
        s = ax * math.sqrt(2.0 * e)
        # d/dx log f = sign(x) [ nu/|x| - sqrt(2 eta) (K_{nu-1}+K_{nu+1})/(2 K_nu) ]
        log_knu = log_bessel_k(nu, s)
        ratio = 0.5 * (np.exp(log_bessel_k(nu - 1.0, s) - log_knu)
                       + np.exp(log_bessel_k(nu + 1.0, s) - log_knu))
        val = nu / ax - math.sqrt(2.0 * e) * ratio
        return (np.sign(x) * val)[:, None]


def _default_eta_box(law: LevyLaw):
    if isinstance(law, GaussianLaw):
        return [1e-4], [1e4]
    if isinstance(law, VarianceGammaLaw):
        return [0.05], [100.0]
    if isinstance(law, StandardizedBilateralGammaLaw):
        return [1e-3, 0.01], [50.0, 0.99]
    if isinstance(law, StandardizedNormalTemperedStableLaw):
        return [0.05, 0.05, -10.0], [0.95, 50.0, 10.0]
    raise NoiseFitError(f"no default eta box for {type(law).__name__}")


def make_objective(law_or_objective, lower=None, upper=None) -> MObjective:
    if isinstance(law_or_objective, MObjective):
        return law_or_objective
    law = law_or_objective
    if isinstance(law, GaussianLaw):
        return GaussianObjective(lower, upper)
    if isinstance(law, VarianceGammaLaw):
        return VarianceGammaObjective(lower, upper)
    return LawObjective(law, lower, upper)


# ---------------------------------------------------------------------------
# H3 and the noise fit


@dataclass(frozen=True)
class NoiseFit:
    eta_hat: dict
    h3_value: float
    neg2_m_sum: float              # -2 sum_i m(eps_hat_i, eta_hat)
    diagnostics: list = field(default_factory=list, repr=False)

    @property
    def log_likelihood(self) -> float:
        return -0.5 * self.neg2_m_sum


def h3(unit_residuals, objective: MObjective, eta, t_n: float | None = None) -> float:
    """(1/T_n) sum_i m(eps_hat_i, eta); T_n defaults to the residual count."""
    eps = np.asarray(unit_residuals, dtype=float)
    count = eps.shape[0]
    t_n = float(t_n) if t_n is not None else float(count)
    vals = np.asarray(objective.m(eps, np.asarray(eta, dtype=float)), dtype=float)
    if not np.all(np.isfinite(vals)):
        i = int(np.argwhere(~np.isfinite(vals))[0][0])
        raise NoiseFitError(f"objective not finite at residual index {i} "
                            f"(eps = {eps[i]!r}, eta = {np.asarray(eta)!r})")
    return _fsum(vals) / t_n


def fit_noise(unit_residuals, law_or_objective, cfg: FitConfig | None = None,
              t_n: float | None = None) -> NoiseFit:
    """Maximize H3 over the eta box."""
    cfg = cfg or FitConfig()
    eps = np.asarray(unit_residuals, dtype=float)
    if eps.shape[0] < 2:
        raise NoiseFitError("need at least 2 unit-time residuals")
    if np.ptp(eps) == 0.0:
        raise NoiseFitError("degenerate residuals: all values identical")
    obj = make_objective(law_or_objective)
    count = eps.shape[0]
    t_n = float(t_n) if t_n is not None else float(count)
    lower = np.array([(cfg.lower or {}).get(p, lo) for p, lo in zip(obj.labels, obj.lower)])
    upper = np.array([(cfg.upper or {}).get(p, hi) for p, hi in zip(obj.labels, obj.upper)])
    start = (np.array([cfg.start[p] for p in obj.labels])
             if cfg.start and all(p in cfg.start for p in obj.labels) else None)

    def value(eta):
        try:
            return h3(eps, obj, eta, t_n)
        except NoiseFitError:
            return -np.inf  # optimizer treats the region as invalid

    def grad(eta):
        g = obj.d_eta(eps, np.asarray(eta, dtype=float))
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite eta-gradient")
        return g.sum(axis=0) / t_n

    eta_hat, best, diag = optimize_box(value, grad, start, lower, upper, cfg)
    total = _fsum(obj.m(eps, eta_hat))
    return NoiseFit(
        eta_hat=dict(zip(obj.labels, eta_hat.tolist())),
        h3_value=float(best),
        neg2_m_sum=-2.0 * total,
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# AIC family selection


DEFAULT_FAMILIES = ("gaussian", "vg", "bgamma_std", "nts_std")

_FAMILY_LAWS = {
    "gaussian": GaussianLaw,
    "vg": VarianceGammaLaw,
    "bgamma_std": StandardizedBilateralGammaLaw,
    "nts_std": StandardizedNormalTemperedStableLaw,
}


def aic_select(unit_residuals, candidate_families=DEFAULT_FAMILIES,
               cfg: FitConfig | None = None, t_n: float | None = None) -> list:
    """Fit each family and rank by AIC = 2k - 2 sum_i m(eps_i, eta_hat).

    Families may be names from the built-in roster, laws, or MObjectives.
    Failures are recorded in the table (rank last), not raised. Ties break by
    smaller k, then name.
    """
    eps = np.asarray(unit_residuals, dtype=float)
    rows = []
    for fam in candidate_families:
        if isinstance(fam, str):
            name = fam
            try:
                law = _FAMILY_LAWS[fam]()
            except KeyError:
                raise NoiseFitError(
                    f"unknown family {fam!r}; known: {sorted(_FAMILY_LAWS)}") from None
        else:
            law = fam
            name = type(fam).__name__
        row = {"family": name, "k": len(make_objective(law).labels)}
        try:
            nf = fit_noise(eps, law, cfg, t_n)
            row["eta_hat"] = nf.eta_hat
            row["logL"] = -0.5 * nf.neg2_m_sum
            row["aic"] = 2.0 * row["k"] + nf.neg2_m_sum
            row["error"] = None
        except (EstimationError, ArithmeticError, ValueError) as e:
            row.update({"eta_hat": None, "logL": None, "aic": math.inf, "error": str(e)})
        rows.append(row)
    rows.sort(key=lambda r: (r["aic"], r["k"], r["family"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows


def write_selection_csv(rows, path) -> None:
    """Schema: family,k,eta_hat,logL,AIC,rank (eta_hat as name=value|...)."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "k", "eta_hat", "logL", "AIC", "rank"])
        for r in rows:
            eta = ("|".join(f"{k}={v:.17g}" for k, v in r["eta_hat"].items())
                   if r["eta_hat"] else (r["error"] or ""))
            logl = f"{r['logL']:.17g}" if r["logL"] is not None else ""
            aic = f"{r['aic']:.17g}" if math.isfinite(r["aic"]) else "inf"
            w.writerow([r["family"], r["k"], eta, logl, aic, r["rank"]])


# ---------------------------------------------------------------------------
# Kernel density


def kernel_density(unit_residuals, bandwidth: float | None = None):
    """Gaussian-kernel density on a 512-point grid.

    Default bandwidth is Silverman's rule 0.9 * min(sd, IQR/1.34) * N^(-1/5);
    the grid spans the data plus 3 bandwidths each side.
    """
    x = np.asarray(unit_residuals, dtype=float).reshape(-1)
    if x.size < 2:
        raise NoiseFitError("need at least 2 residuals for a density estimate")
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread == 0.0:
        raise NoiseFitError("zero-variance input; no density estimate")
    if bandwidth is None:
        bandwidth = 0.9 * spread * x.size ** (-0.2)
    elif bandwidth <= 0:
        raise NoiseFitError(f"bandwidth must be positive, got {bandwidth!r}")
    grid = np.linspace(x.min() - 3.0 * bandwidth, x.max() + 3.0 * bandwidth, 512)
    dens = np.empty(512)
    norm = 1.0 / (x.size * bandwidth * math.sqrt(2.0 * math.pi))
    for i, g in enumerate(grid):
        z = (g - x) / bandwidth
        dens[i] = norm * np.exp(-0.5 * z * z).sum()
    return grid, dens
