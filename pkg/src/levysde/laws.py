"""Noise-law objects: samplers, densities, characteristic functions.

Each law bundles everything the pipeline needs about a driving-noise family:
a generator of dt-time increments, (log-)density of those increments where
available, the characteristic function where it has a usable closed form,
parameter labels, and the dimension. Laws are immutable; sampling takes an
explicit numpy Generator so streams can be split across components and
replicates.

Built-in families:

* VarianceGammaLaw    -- symmetric variance gamma, standardized to unit
                         variance per unit time via nu = 1/(eta*dt),
                         sigma = sqrt(dt); one parameter eta > 0.
* GaussianLaw         -- N(0, sigma^2 * dt); the Brownian reference family.
* BilateralGammaLaw   -- difference of two gamma subordinators,
                         bgamma(delta1*t, gamma1, delta2*t, gamma2).
* NormalTemperedStableLaw -- normal mean-variance mixture of an exponentially
                         tempered positive stable subordinator.
* StandardizedBilateralGammaLaw / StandardizedNormalTemperedStableLaw --
                         reduced parametrizations that satisfy the mean-0 /
                         variance-1 moment constraints identically; these are
                         the fitting-side families.
* EmpiricalLaw        -- resamples stored increments (forecasting).
* ProductLaw          -- independent univariate components, for multivariate
                         driving noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import gamma as _gamma_fn
from .specfun import log_bessel_k, log_gamma, log_whittaker_w


class LawError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


class LevyLaw:
    """Interface shared by all noise laws.

    param_labels is the ordered tuple of free parameter names; dim the number
    of noise components. sample() returns an (n, dim) array of increments over
    a step of length dt. log_density/char_fn are optional (raise
    NotImplementedError where a family has none).
    """

    param_labels: tuple = ()
    dim: int = 1

    def _vector(self, params: dict) -> np.ndarray:
        try:
            return np.array([float(params[k]) for k in self.param_labels])
        except KeyError as e:
            raise LawError(f"missing law parameter {e.args[0]!r}; need {self.param_labels}") from None

    def sample(self, n: int, dt: float, params: dict, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, x, dt: float, params: dict):
        raise NotImplementedError(f"{type(self).__name__} has no density")

    def char_fn(self, u, dt: float, params: dict):
        raise NotImplementedError(f"{type(self).__name__} has no characteristic function")

    def validate(self, params: dict) -> None:
        self._vector(params)


def _check_positive(name: str, value: float) -> None:
    if not (value > 0) or not math.isfinite(value):
        raise LawError(f"{name} must be positive and finite, got {value!r}")


def _check_sampling_args(n: int, dt: float) -> None:
    if n < 0:
        raise LawError(f"sample count must be nonnegative, got {n}")
    _check_positive("dt", dt)


# ---------------------------------------------------------------------------
# Variance gamma


class VarianceGammaLaw(LevyLaw):
    """Symmetric variance gamma, unit variance per unit model time.

    The dt-increment is sigma*sqrt(G)*Z with sigma = sqrt(dt), Z standard
    normal and G ~ Gamma(shape eta*dt, scale 1/(eta*dt)), matching the
    characteristic function (1 + u^2/(2*eta))^(-eta*dt).
    """

    param_labels = ("eta",)
    dim = 1

    def validate(self, params: dict) -> None:
        (eta,) = self._vector(params)
        _check_positive("eta", eta)

    def sample(self, n, dt, params, rng):
        (eta,) = self._vector(params)
        _check_positive("eta", eta)
        _check_sampling_args(n, dt)
        shape = eta * dt
        g = rng.gamma(shape, 1.0 / shape, size=n)
        z = rng.standard_normal(n)
        return (math.sqrt(dt) * np.sqrt(g) * z)[:, None]

    def log_density(self, x, dt, params):
        (eta,) = self._vector(params)
        _check_positive("eta", eta)
        _check_positive("dt", dt)
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 0
        x = np.atleast_1d(x)
        k = eta * dt
        ax = np.abs(x)
        out = np.empty_like(ax)
        nz = ax > 0.0
        # f(x) = 2*eta^k/(sqrt(2pi)*Gamma(k)) * (x^2/(2eta))^((k-1/2)/2) * K_{k-1/2}(|x|*sqrt(2eta))
        const = math.log(2.0) + k * math.log(eta) - 0.5 * math.log(2.0 * math.pi) - log_gamma(k)
        axnz = ax[nz]
        out[nz] = (
            const
            + 0.5 * (k - 0.5) * (2.0 * np.log(axnz) - math.log(2.0 * eta))
            + log_bessel_k(k - 0.5, axnz * math.sqrt(2.0 * eta))
        )
        if np.any(~nz):
            if k > 0.5:
                # finite limit: f(0) = sqrt(eta)*Gamma(k-1/2)/(sqrt(2pi)*Gamma(k))
                out[~nz] = 0.5 * math.log(eta) + log_gamma(k - 0.5) - 0.5 * math.log(2.0 * math.pi) - log_gamma(k)
            else:
                out[~nz] = np.inf  # density diverges at the origin for small shape
        return float(out[0]) if squeeze else out

    def char_fn(self, u, dt, params):
        (eta,) = self._vector(params)
        u = np.asarray(u, dtype=float)
        return (1.0 + u**2 / (2.0 * eta)) ** (-eta * dt)


def vg_sample(n, dt, eta, rng):
    return VarianceGammaLaw().sample(n, dt, {"eta": eta}, rng)[:, 0]


def vg_unit_log_density(x, eta):
    return VarianceGammaLaw().log_density(x, 1.0, {"eta": eta})


# ---------------------------------------------------------------------------
# Gaussian reference family


class GaussianLaw(LevyLaw):
    """Brownian increments N(0, sigma^2 * dt); sigma = 1 is the standardized case."""

    param_labels = ("sigma",)
    dim = 1

    def validate(self, params: dict) -> None:
        (sigma,) = self._vector(params)
        _check_positive("sigma", sigma)

    def sample(self, n, dt, params, rng):
        (sigma,) = self._vector(params)
        _check_positive("sigma", sigma)
        _check_sampling_args(n, dt)
        return (sigma * math.sqrt(dt) * rng.standard_normal(n))[:, None]

    def log_density(self, x, dt, params):
        (sigma,) = self._vector(params)
        _check_positive("sigma", sigma)
        x = np.asarray(x, dtype=float)
        var = sigma * sigma * dt
        return -0.5 * math.log(2.0 * math.pi * var) - x * x / (2.0 * var)

    def char_fn(self, u, dt, params):
        (sigma,) = self._vector(params)
        u = np.asarray(u, dtype=float)
        return np.exp(-0.5 * sigma * sigma * dt * u**2)


# ---------------------------------------------------------------------------
# Bilateral gamma


def _bgamma_logpdf_positive(x, d1, g1, d2, g2):
    # positive-axis closed form via the Whittaker function
    lam = 0.5 * (d1 - d2)
    mu = 0.5 * (d1 + d2 - 1.0)
    return (
        d1 * math.log(g1)
        + d2 * math.log(g2)
        - 0.5 * (d1 + d2) * math.log(g1 + g2)
        - log_gamma(d1)
        + (0.5 * (d1 + d2) - 1.0) * np.log(x)
        - 0.5 * x * (g1 - g2)
        + log_whittaker_w(lam, mu, x * (g1 + g2))
    )


class BilateralGammaLaw(LevyLaw):
    """Difference of two independent gamma subordinators.

    The time-t increment is bgamma(delta1*t, gamma1, delta2*t, gamma2), i.e.
    Gamma(delta1*t, rate gamma1) - Gamma(delta2*t, rate gamma2). Mean and
    variance at unit time are delta1/gamma1 - delta2/gamma2 and
    delta1/gamma1^2 + delta2/gamma2^2.
    """

    param_labels = ("delta1", "gamma1", "delta2", "gamma2")
    dim = 1

    def validate(self, params: dict) -> None:
        d1, g1, d2, g2 = self._vector(params)
        for name, v in zip(("gamma1", "gamma2"), (g1, g2)):
            _check_positive(name, v)
        if d1 < 0 or d2 < 0:
            raise LawError("delta1 and delta2 must be nonnegative")

    def sample(self, n, dt, params, rng):
        self.validate(params)
        _check_sampling_args(n, dt)
        d1, g1, d2, g2 = self._vector(params)
        pos = rng.gamma(d1 * dt, 1.0 / g1, size=n) if d1 > 0 else np.zeros(n)
        neg = rng.gamma(d2 * dt, 1.0 / g2, size=n) if d2 > 0 else np.zeros(n)
        return (pos - neg)[:, None]

    def log_density(self, x, dt, params):
        self.validate(params)
        d1, g1, d2, g2 = self._vector(params)
        if d1 <= 0 or d2 <= 0:
            raise LawError("bilateral gamma density needs delta1 > 0 and delta2 > 0")
        d1, d2 = d1 * dt, d2 * dt
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 0
        x = np.atleast_1d(x).astype(float)
        if np.any(x == 0.0):
            raise LawError("bilateral gamma density is evaluated away from x = 0")
        out = np.empty_like(x)
        pos = x > 0
        if np.any(pos):
            out[pos] = _bgamma_logpdf_positive(x[pos], d1, g1, d2, g2)
        if np.any(~pos):
            # symmetry: p(x; d1,g1,d2,g2) = p(-x; d2,g2,d1,g1)
            out[~pos] = _bgamma_logpdf_positive(-x[~pos], d2, g2, d1, g1)
        return float(out[0]) if squeeze else out

    def char_fn(self, u, dt, params):
        d1, g1, d2, g2 = self._vector(params)
        u = np.asarray(u, dtype=float)
        return (1.0 - 1j * u / g1) ** (-d1 * dt) * (1.0 + 1j * u / g2) ** (-d2 * dt)


def bgamma_sample(n, dt, params, rng):
    return BilateralGammaLaw().sample(n, dt, params, rng)[:, 0]


def bgamma_density(x, t, params):
    return np.exp(BilateralGammaLaw().log_density(x, t, params))


def bgamma_check_standardized(params) -> tuple:
    """Residuals of the standardization constraints (mean, variance - 1)."""
    d1 = float(params["delta1"])
    g1 = float(params["gamma1"])
    d2 = float(params["delta2"])
    g2 = float(params["gamma2"])
    return (d1 / g1 - d2 / g2, d1 / g1**2 + d2 / g2**2 - 1.0)


class StandardizedBilateralGammaLaw(LevyLaw):
    """Bilateral gamma constrained to mean 0 and unit variance per unit time.

    Free parameters: m > 0, the common jump mean scale delta_i/gamma_i, and
    p in (0, 1), the share of variance carried by the positive subordinator.
    The natural parameters are gamma1 = m/p, delta1 = m^2/p, gamma2 = m/(1-p),
    delta2 = m^2/(1-p), which satisfy both constraints identically.
    """

    param_labels = ("m", "p")
    dim = 1
    _base = BilateralGammaLaw()

    @staticmethod
    def to_natural(params: dict) -> dict:
        m = float(params["m"])
        p = float(params["p"])
        _check_positive("m", m)
        if not (0.0 < p < 1.0):
            raise LawError(f"p must lie in (0, 1), got {p!r}")
        return {
            "delta1": m * m / p,
            "gamma1": m / p,
            "delta2": m * m / (1.0 - p),
            "gamma2": m / (1.0 - p),
        }

    def validate(self, params: dict) -> None:
        self.to_natural(params)

    def sample(self, n, dt, params, rng):
        return self._base.sample(n, dt, self.to_natural(params), rng)

    def log_density(self, x, dt, params):
        return self._base.log_density(x, dt, self.to_natural(params))

    def char_fn(self, u, dt, params):
        return self._base.char_fn(u, dt, self.to_natural(params))


# ---------------------------------------------------------------------------
# Normal tempered stable


def _positive_stable(alpha: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Standard positive alpha-stable draws, E[exp(-lam*S)] = exp(-lam^alpha).

    Kanter's representation (the one-sided Chambers-Mallows-Stuck special
    case): with U ~ U(0, pi) and W ~ Exp(1),
        S = (A(U) / W)^((1-alpha)/alpha),
        A(u) = sin(alpha*u)^(alpha/(1-alpha)) * sin((1-alpha)*u)
               / sin(u)^(1/(1-alpha)).
    """
    u = rng.uniform(0.0, math.pi, size=n)
    w = rng.standard_exponential(n)
    ratio = alpha / (1.0 - alpha)
    log_a = (
        ratio * np.log(np.sin(alpha * u))
        + np.log(np.sin((1.0 - alpha) * u))
        - (1.0 + ratio) * np.log(np.sin(u))
    )
    return np.exp((log_a - np.log(w)) / ratio)


def _tempered_stable(alpha, a_total, b, n, rng, max_rounds=1000):
    """TS(alpha, a_total, b) draws: Levy density a_total * z^(-1-alpha) * exp(-b*z).

    Exact sampling: scale a standard positive stable by
    c = (a_total * Gamma(1-alpha)/alpha)^(1/alpha), then reject with
    acceptance probability exp(-b * S).
    """
    c = (a_total * _gamma_fn(1.0 - alpha) / alpha) ** (1.0 / alpha)
    out = np.empty(n)
    filled = 0
    proposed = 0
    for _ in range(max_rounds):
        if filled >= n:
            break
        m = max(n - filled, 16)
        with np.errstate(over="ignore"):
            cand = c * _positive_stable(alpha, m, rng)
            keep = rng.random(m) < np.exp(-b * cand)
        kept = cand[keep]
        proposed += m
        take = min(kept.size, n - filled)
        out[filled : filled + take] = kept[:take]
        filled += take
    if filled < n:
        rate = filled / max(proposed, 1)
        raise SamplingError(
            f"tempered-stable rejection sampler stalled: acceptance rate {rate:.3g} "
            f"after {proposed} proposals (alpha={alpha}, a={a_total}, b={b})"
        )
    return out


class NormalTemperedStableLaw(LevyLaw):
    """NTS(alpha, a, b, beta, mu): normal mean-variance mixture of a tempered
    stable subordinator.

    The time-t increment is mu*t + tau*beta + sqrt(tau)*N(0,1) with
    tau ~ TS(alpha, a*t, b). The density has no closed form; log_density
    inverts the characteristic function

        E exp(iuZ_t) = exp(iu*mu*t + a*Gamma(-alpha)*t*((b - i*beta*u + u^2/2)^alpha - b^alpha))

    numerically on a cached FFT grid. The Blumenthal-Getoor index is 2*alpha.
    """

    param_labels = ("alpha", "a", "b", "beta", "mu")
    dim = 1

    def __init__(self):
        self._density_cache = {}

    def validate(self, params: dict) -> None:
        al, a, b, beta, mu = self._vector(params)
        if not (0.0 < al < 1.0):
            raise LawError(f"alpha must lie in (0, 1), got {al!r}")
        _check_positive("a", a)
        _check_positive("b", b)

    def sample(self, n, dt, params, rng):
        self.validate(params)
        _check_sampling_args(n, dt)
        al, a, b, beta, mu = self._vector(params)
        tau = _tempered_stable(al, a * dt, b, n, rng)
        z = rng.standard_normal(n)
        return (mu * dt + tau * beta + np.sqrt(tau) * z)[:, None]

    def char_fn(self, u, dt, params):
        self.validate(params)
        al, a, b, beta, mu = self._vector(params)
        u = np.asarray(u, dtype=complex)
        inner = (b - 1j * beta * u + 0.5 * u**2) ** al - b**al
        return np.exp(1j * u * mu * dt + a * _gamma_fn(-al) * dt * inner)

    def _grid(self, dt, key_params):
        key = (round(dt, 12),) + key_params
        got = self._density_cache.get(key)
        if got is None:
            got = _fft_density_grid(
                lambda u: self.char_fn(u, dt, dict(zip(self.param_labels, key_params)))
            )
            if len(self._density_cache) > 64:
                self._density_cache.clear()
            self._density_cache[key] = got
        return got

    def log_density(self, x, dt, params):
        self.validate(params)
        vec = tuple(float(params[k]) for k in self.param_labels)
        grid_x, logf = self._grid(dt, vec)
        x = np.asarray(x, dtype=float)
        out = np.interp(x, grid_x, logf, left=-np.inf, right=-np.inf)
        return float(out) if x.ndim == 0 else out


def nts_sample(n, dt, params, rng):
    return NormalTemperedStableLaw().sample(n, dt, params, rng)[:, 0]


def nts_levy_density(z, params):
    """Levy density of NTS; |z| is used in the Bessel argument."""
    al = float(params["alpha"])
    a = float(params["a"])
    b = float(params["b"])
    beta = float(params["beta"])
    z = np.asarray(z, dtype=float)
    squeeze = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z == 0.0):
        raise LawError("Levy density is undefined at z = 0")
    s = 2.0 * b + beta * beta
    logg = (
        0.5 * math.log(2.0 / math.pi)
        + math.log(a)
        + beta * z
        + (-0.5 * al - 0.25) * (2.0 * np.log(np.abs(z)) - math.log(s))
        + log_bessel_k(al + 0.5, np.abs(z) * math.sqrt(s))
    )
    out = np.exp(logg)
    return float(out[0]) if squeeze else out


def nts_standardized_params(alpha: float, b: float, beta: float) -> dict:
    """Solve a and mu from the mean-0 / variance-1 constraints."""
    if not (0.0 < alpha < 1.0):
        raise LawError(f"alpha must lie in (0, 1), got {alpha!r}")
    _check_positive("b", b)
    g = alpha * _gamma_fn(-alpha) * b ** (alpha - 1.0)  # negative for alpha in (0,1)
    bracket = (alpha - 1.0) * beta * beta / b - 1.0  # negative
    a = 1.0 / (g * bracket)
    mu = a * g * beta
    return {"alpha": alpha, "a": a, "b": b, "beta": beta, "mu": mu}


class StandardizedNormalTemperedStableLaw(LevyLaw):
    """NTS restricted to mean 0 and unit variance per unit time.

    Free parameters (alpha, b, beta); a and mu are solved from the moment
    constraints by nts_standardized_params.
    """

    param_labels = ("alpha", "b", "beta")
    dim = 1

    def __init__(self):
        self._base = NormalTemperedStableLaw()

    @staticmethod
    def to_natural(params: dict) -> dict:
        return nts_standardized_params(
            float(params["alpha"]), float(params["b"]), float(params["beta"])
        )

    def validate(self, params: dict) -> None:
        self.to_natural(params)

    def sample(self, n, dt, params, rng):
        return self._base.sample(n, dt, self.to_natural(params), rng)

    def log_density(self, x, dt, params):
        return self._base.log_density(x, dt, self.to_natural(params))

    def char_fn(self, u, dt, params):
        return self._base.char_fn(u, dt, self.to_natural(params))


# ---------------------------------------------------------------------------
# Empirical resampling law


@dataclass(frozen=True)
class EmpiricalLaw(LevyLaw):
    """Resamples stored increments uniformly with replacement.

    stored_increments were observed over steps of length source_dt, so the law
    only knows that marginal: sampling at a different dt is refused.
    """

    stored_increments: np.ndarray
    source_dt: float

    param_labels = ()
    dim = 1

    def __post_init__(self):
        arr = np.asarray(self.stored_increments, dtype=float).ravel()
        if arr.size == 0:
            raise LawError("empirical law needs at least one stored increment")
        if not np.all(np.isfinite(arr)):
            raise LawError("stored increments must be finite")
        object.__setattr__(self, "stored_increments", arr)

    def sample(self, n, dt, params, rng):
        _check_sampling_args(n, dt)
        if not math.isclose(dt, self.source_dt, rel_tol=1e-9):
            raise LawError(
                f"empirical law stores {self.source_dt}-time increments; cannot sample at dt={dt}"
            )
        idx = rng.integers(0, self.stored_increments.size, size=n)
        return self.stored_increments[idx][:, None]


def empirical_sample(n, law: EmpiricalLaw, rng):
    return law.sample(n, law.source_dt, {}, rng)[:, 0]


# ---------------------------------------------------------------------------
# Product of independent univariate laws


class ProductLaw(LevyLaw):
    """Independent univariate components stacked into a multivariate law.

    Parameter labels are made unique: when two components share a label, every
    component's labels get a 1-based ordinal suffix (eta -> eta1, eta2),
    matching the usual naming of componentwise noise parameters.
    """

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise LawError("product law needs at least one component")
        for c in components:
            if c.dim != 1:
                raise LawError("product law components must be univariate")
        self.components = components
        raw = [c.param_labels for c in components]
        flat = [lab for labs in raw for lab in labs]
        if len(set(flat)) == len(flat):
            mapping = [{lab: lab for lab in labs} for labs in raw]
        else:
            mapping = [
                {lab: f"{lab}{i + 1}" for lab in labs} for i, labs in enumerate(raw)
            ]
        self._label_maps = mapping
        self.param_labels = tuple(m[lab] for labs, m in zip(raw, mapping) for lab in labs)
        self.dim = len(components)

    def _component_params(self, params: dict, i: int) -> dict:
        return {src: params[pub] for src, pub in self._label_maps[i].items()}

    def validate(self, params: dict) -> None:
        self._vector(params)
        for i, c in enumerate(self.components):
            c.validate(self._component_params(params, i))

    def sample(self, n, dt, params, rng):
        streams = rng.spawn(len(self.components))
        cols = [
            c.sample(n, dt, self._component_params(params, i), streams[i])[:, 0]
            for i, c in enumerate(self.components)
        ]
        return np.column_stack(cols)

    def log_density(self, x, dt, params):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.dim:
            raise LawError(f"expected {self.dim} columns, got {x.shape[-1]}")
        total = np.zeros(x.shape[0])
        for i, c in enumerate(self.components):
            total = total + c.log_density(x[:, i], dt, self._component_params(params, i))
        return total

    def char_fn(self, u, dt, params):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1 and u.shape[0] == self.dim:
            u = u[None, :]
        out = np.ones(u.shape[0], dtype=complex)
        for i, c in enumerate(self.components):
            out = out * c.char_fn(u[:, i], dt, self._component_params(params, i))
        return out


def product_sample(laws, n, dt, params, rng):
    return ProductLaw(laws).sample(n, dt, params, rng)


def product_log_density(laws, x, dt, params):
    return ProductLaw(laws).log_density(x, dt, params)


# ---------------------------------------------------------------------------
# Config registry (CLI law blocks and model round-tripping)

_FAMILIES = {
    "vg": VarianceGammaLaw,
    "gaussian": GaussianLaw,
    "bgamma": BilateralGammaLaw,
    "bgamma_std": StandardizedBilateralGammaLaw,
    "nts": NormalTemperedStableLaw,
    "nts_std": StandardizedNormalTemperedStableLaw,
}


def law_from_config(spec: dict | None):
    """Build a law from a config block like {"family": "vg"}.

    "product" takes a "components" list of sub-blocks; "none" (or a missing
    block) means no law, which supports model-free coefficient fitting.
    """
    if spec is None:
        return None
    family = spec.get("family")
    if family is None:
        raise LawError("law block needs a 'family' key")
    if family == "none":
        return None
    if family == "product":
        comps = spec.get("components")
        if not comps:
            raise LawError("product law needs a nonempty 'components' list")
        return ProductLaw([law_from_config(c) for c in comps])
    cls = _FAMILIES.get(family)
    if cls is None:
        raise LawError(f"unknown law family {family!r}; known: {sorted(_FAMILIES)} + product, none")
    return cls()


def law_to_config(law) -> dict:
    if law is None:
        return {"family": "none"}
    if isinstance(law, ProductLaw):
        return {"family": "product",
                "components": [law_to_config(c) for c in law.components]}
    for name, cls in _FAMILIES.items():
        if type(law) is cls:
            return {"family": name}
    raise LawError(f"{type(law).__name__} has no config representation")


# ---------------------------------------------------------------------------
# Fourier inversion on a grid (for laws without closed-form densities)


def _fft_density_grid(char_fn, u_max: float = 400.0, n_points: int = 2**14):
    """Density grid by FFT inversion of a characteristic function.

    Samples phi on [-u_max, u_max) and returns (x_grid, log_density) with
    x-spacing pi/u_max. Intended for standardized (mean ~ 0, variance ~ 1)
    laws, whose support is well inside the implied x-range.
    """
    du = 2.0 * u_max / n_points
    u = (np.arange(n_points) - n_points // 2) * du
    phi = char_fn(u)
    dx = 2.0 * math.pi / (n_points * du)
    x = (np.arange(n_points) - n_points // 2) * dx
    # f(x_j) = (1/2pi) * sum_k phi(u_k) exp(-i u_k x_j) du, realized as an FFT
    # with phase shifts for the centered grids
    shift = np.exp(1j * u * x[0])
    vals = np.fft.fft(phi * shift) * du / (2.0 * math.pi)
    f = np.real(np.exp(1j * u[0] * (x - x[0])) * vals)
    f = np.maximum(f, 1e-320)
    keep = f > 1e-300
    return x[keep], np.log(f[keep])
