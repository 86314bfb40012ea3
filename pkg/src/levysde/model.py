"""Model assembly, sampling grids, and dataset ingestion.

An SdeModel bundles the drift vector a(x, alpha), the scale matrix
c(x, gamma), the driving-noise law, and the parameter partition
(gamma = scale parameters, alpha = drift parameters, eta = noise parameters).
Symbolic derivatives of every coefficient entry up to second order are
precompiled at build time; the quasi-likelihoods, residuals, and asymptotic
matrices all evaluate through them.

Datasets are strictly equispaced (non-equispaced files are rejected at
ingestion) and stored as a times vector plus an (n+1, d) value matrix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .laws import LevyLaw


class ModelError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingScheme:
    """Equispaced time grid: n steps of width h = (T - t0)/n."""

    terminal: float
    n: int
    t0: float = 0.0

    def __post_init__(self):
        if not (self.terminal > self.t0):
            raise ModelError(f"terminal {self.terminal} must exceed t0 {self.t0}")
        if self.n < 2:
            raise ModelError(f"need at least 2 steps, got n={self.n}")

    @property
    def h(self) -> float:
        return (self.terminal - self.t0) / self.n

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n + 1) * self.h


@dataclass(frozen=True)
class Dataset:
    """Observed or simulated path on an equispaced grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or values.shape[0] != times.shape[0]:
            raise DataError("times and values must have matching leading length")
        if times.shape[0] < 3:
            raise DataError("need at least 3 observations")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        if not np.all(np.isfinite(times)):
            raise DataError("non-finite time values")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise DataError("times must be strictly increasing")
        h = (times[-1] - times[0]) / (times.shape[0] - 1)
        off = np.abs(steps - h) > 1e-9 * max(abs(h), 1.0)
        if np.any(off):
            j = int(np.argmax(off))
            raise DataError(
                f"grid is not equispaced: step {j} has width {steps[j]!r}, expected {h!r}"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def delta(self) -> float:
        return (self.times[-1] - self.times[0]) / self.n_steps

    @property
    def terminal(self) -> float:
        return float(self.times[-1])

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def write_csv(self, path, state_names=None) -> None:
        d = self.dim
        names = list(state_names) if state_names else [f"X{k + 1}" for k in range(d)]
        if len(names) != d:
            raise DataError(f"{len(names)} names for {d} columns")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + names)
            for t, row in zip(self.times, self.values):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def load_csv(path, delta: float | None = None, time_column: str | None = None) -> Dataset:
    """Read an observation CSV (header row required, '.' decimal point).

    With ``delta``, times are t0 + j*delta; a leading "t" column, if present,
    is cross-checked against delta and dropped. With ``time_column``, times
    come from that column and must be equispaced. Ragged rows, non-numeric
    cells, and non-equispaced grids are rejected with their location.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row {i + 1} ({len(row)} of {len(header)} cells)")
            parsed = []
            for j, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {i + 1}, column {header[j]!r}: {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite value at row {i + 1}, column {header[j]!r}")
                parsed.append(v)
            rows.append(parsed)
    if len(rows) < 3:
        raise DataError(f"{path}: need at least 3 observations, found {len(rows)}")
    data = np.asarray(rows, dtype=float)

    if time_column is not None:
        if time_column not in header:
            raise DataError(f"{path}: no column named {time_column!r}")
        tcol = header.index(time_column)
        times = data[:, tcol]
        values = np.delete(data, tcol, axis=1)
        ds = Dataset(times=times, values=values)
        if delta is not None and not math.isclose(ds.delta, delta, rel_tol=1e-9):
            raise DataError(f"{path}: grid spacing {ds.delta} does not match delta={delta}")
        return ds
    if delta is None:
        if header and header[0] == "t":
            return load_csv(path, time_column="t")
        raise DataError(f"{path}: pass delta=... or a time column (no 't' header found)")
    if header and header[0] == "t":
        tcol = data[:, 0]
        steps = np.diff(tcol)
        if np.any(np.abs(steps - delta) > 1e-9 * max(delta, 1.0)):
            j = int(np.argmax(np.abs(steps - delta) > 1e-9 * max(delta, 1.0)))
            raise DataError(f"{path}: time column conflicts with delta={delta} at step {j}")
        data = data[:, 1:]
    times = np.arange(data.shape[0]) * delta
    return Dataset(times=times, values=data)


# ---------------------------------------------------------------------------
# Model


def _compile_matrix(exprs):
    return [[ex.compile_fn(e) for e in row] for row in exprs]


@dataclass(frozen=True)
class SdeModel:
    """Validated SDE description with precompiled coefficient derivatives.

    dX_t = a(X_t, alpha) dt + c(X_t-, gamma) dJ_t, X d-dimensional, J
    r-dimensional.  table.params fixes the canonical theta order
    (gamma and alpha interleaved as declared); gamma_names/alpha_names give
    the partition.
    """

    table: ex.SymbolTable
    drift_exprs: tuple            # d expressions
    scale_exprs: tuple            # d rows of r expressions
    law: LevyLaw | None
    gamma_names: tuple
    alpha_names: tuple
    bounds: dict
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- basic shape ----------------------------------------------------

    @property
    def state_vars(self) -> tuple:
        return self.table.state_vars

    @property
    def dim_state(self) -> int:
        return len(self.drift_exprs)

    @property
    def dim_noise(self) -> int:
        return len(self.scale_exprs[0])

    @property
    def param_names(self) -> tuple:
        return self.table.params

    @property
    def noise_param_names(self) -> tuple:
        return self.law.param_labels if self.law is not None else ()

    def param_vector(self, params: dict) -> np.ndarray:
        try:
            return np.array([float(params[k]) for k in self.table.params])
        except KeyError as e:
            raise ModelError(f"missing parameter {e.args[0]!r}") from None

    def split_theta(self, params: dict):
        g = np.array([float(params[k]) for k in self.gamma_names])
        a = np.array([float(params[k]) for k in self.alpha_names])
        return g, a

    @property
    def scale_is_diagonal(self) -> bool:
        if self.dim_state != self.dim_noise:
            return False
        for i, row in enumerate(self.scale_exprs):
            for j, e in enumerate(row):
                if i != j and e.ast != ex.Const(0.0):
                    return False
        return True

    # -- compiled evaluation --------------------------------------------

    def _compiled(self, kind: str):
        got = self._cache.get(kind)
        if got is not None:
            return got
        if kind == "drift":
            made = [ex.compile_fn(e) for e in self.drift_exprs]
        elif kind == "scale":
            made = _compile_matrix(self.scale_exprs)
        elif kind == "drift_da":
            made = [[ex.compile_fn(ex.differentiate(e, p)) for p in self.alpha_names]
                    for e in self.drift_exprs]
        elif kind == "scale_dg":
            made = [[[ex.compile_fn(ex.differentiate(e, p)) for p in self.gamma_names]
                     for e in row] for row in self.scale_exprs]
        elif kind == "drift_d2a":
            made = [[[ex.compile_fn(ex.differentiate(ex.differentiate(e, p), q))
                      for q in self.alpha_names] for p in self.alpha_names]
                    for e in self.drift_exprs]
        elif kind == "scale_d2g":
            made = [[[[ex.compile_fn(ex.differentiate(ex.differentiate(e, p), q))
                       for q in self.gamma_names] for p in self.gamma_names]
                     for e in row] for row in self.scale_exprs]
        else:  # pragma: no cover
            raise KeyError(kind)
        self._cache[kind] = made
        return made

    def drift(self, states: np.ndarray, pvec: np.ndarray) -> np.ndarray:
        """a(x, alpha) for states (..., d) -> (..., d)."""
        fns = self._compiled("drift")
        return np.stack([f(states, pvec) for f in fns], axis=-1)

    def scale(self, states: np.ndarray, pvec: np.ndarray) -> np.ndarray:
        """c(x, gamma) for states (..., d) -> (..., d, r)."""
        fns = self._compiled("scale")
        return np.stack(
            [np.stack([f(states, pvec) for f in row], axis=-1) for row in fns], axis=-2
        )

    def drift_dalpha(self, states, pvec) -> np.ndarray:
        """d a / d alpha -> (..., d, p_alpha)."""
        base = np.shape(states)[:-1]
        d, pa = self.dim_state, len(self.alpha_names)
        if pa == 0:
            return np.zeros(base + (d, 0))
        fns = self._compiled("drift_da")
        return np.stack(
            [np.stack([f(states, pvec) for f in row], axis=-1) for row in fns], axis=-2
        )

    def scale_dgamma(self, states, pvec) -> np.ndarray:
        """d c / d gamma -> (..., d, r, p_gamma)."""
        base = np.shape(states)[:-1]
        d, r, pg = self.dim_state, self.dim_noise, len(self.gamma_names)
        if pg == 0:
            return np.zeros(base + (d, r, 0))
        fns = self._compiled("scale_dg")
        return np.stack(
            [np.stack(
                [np.stack([f(states, pvec) for f in cell], axis=-1) for cell in row],
                axis=-2)
             for row in fns], axis=-3)

    def drift_d2alpha(self, states, pvec) -> np.ndarray:
        """d^2 a / d alpha^2 -> (..., d, p_alpha, p_alpha)."""
        base = np.shape(states)[:-1]
        d, pa = self.dim_state, len(self.alpha_names)
        if pa == 0:
            return np.zeros(base + (d, 0, 0))
        fns = self._compiled("drift_d2a")
        return np.stack(
            [np.stack(
                [np.stack([f(states, pvec) for f in cell], axis=-1) for cell in row],
                axis=-2)
             for row in fns], axis=-3)

    def scale_d2gamma(self, states, pvec) -> np.ndarray:
        """d^2 c / d gamma^2 -> (..., d, r, p_gamma, p_gamma)."""
        base = np.shape(states)[:-1]
        d, r, pg = self.dim_state, self.dim_noise, len(self.gamma_names)
        if pg == 0:
            return np.zeros(base + (d, r, 0, 0))
        fns = self._compiled("scale_d2g")
        out = []
        for row in fns:
            cells = []
            for cell in row:
                cells.append(np.stack(
                    [np.stack([f(states, pvec) for f in col], axis=-1) for col in cell],
                    axis=-2))
            out.append(np.stack(cells, axis=-3))
        return np.stack(out, axis=-4)


def _normalize_scale_texts(scale_texts, d: int):
    if isinstance(scale_texts, str):
        if d != 1:
            raise ModelError("a single scale expression needs a univariate state")
        return [[scale_texts]]
    rows = list(scale_texts)
    if rows and isinstance(rows[0], str):
        if len(rows) != d:
            raise ModelError(f"diagonal scale needs {d} entries, got {len(rows)}")
        return [[rows[i] if i == j else "0" for j in range(d)] for i in range(d)]
    rows = [list(r) for r in rows]
    if len(rows) != d or any(len(r) != len(rows[0]) for r in rows):
        raise ModelError("scale matrix must be rectangular with d rows")
    return rows


def build_model(drift_texts, scale_texts, state_vars, law, bounds) -> SdeModel:
    """Parse, partition, and validate a model description.

    drift_texts: str or list of d strings. scale_texts: str, list of d
    strings (diagonal), or d x r nested lists. bounds: {param: (lo, hi)} with
    finite lo < hi; its key order fixes the canonical parameter order.
    Parameters must be exclusive to drift or scale, every declared parameter
    must be used, and the scale must be nondegenerate at random probes.
    """
    if isinstance(drift_texts, str):
        drift_texts = [drift_texts]
    drift_texts = list(drift_texts)
    d = len(drift_texts)
    state_vars = tuple(state_vars)
    if len(state_vars) != d:
        raise ModelError(f"{d} drift expressions for {len(state_vars)} state variables")
    scale_rows = _normalize_scale_texts(scale_texts, d)
    r = len(scale_rows[0])

    params = tuple(bounds.keys())
    for name, (lo, hi) in bounds.items():
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ModelError(f"parameter {name!r} needs a bounded box with lower < upper")
    table = ex.SymbolTable(state_vars=state_vars, params=params, bounds=dict(bounds))

    drift_exprs = tuple(ex.parse(t, table) for t in drift_texts)
    scale_exprs = tuple(tuple(ex.parse(t, table) for t in row) for row in scale_rows)

    drift_free = frozenset().union(*[ex.free_symbols(e) for e in drift_exprs])
    scale_free = frozenset().union(*[ex.free_symbols(e) for row in scale_exprs for e in row])
    alpha = tuple(p for p in params if p in drift_free)
    gamma = tuple(p for p in params if p in scale_free)
    shared = set(alpha) & set(gamma)
    if shared:
        raise ModelError(
            f"parameters {sorted(shared)} appear in both drift and scale; "
            "the stepwise estimator needs an exclusive partition"
        )
    unused = [p for p in params if p not in drift_free and p not in scale_free]
    if unused:
        raise ModelError(f"declared parameters never used: {unused}")

    if law is not None:
        if law.dim != r:
            raise ModelError(f"law dimension {law.dim} does not match scale columns {r}")
        overlap = set(law.param_labels) & set(params)
        if overlap:
            raise ModelError(f"noise parameters {sorted(overlap)} collide with coefficient names")

    model = SdeModel(
        table=table,
        drift_exprs=drift_exprs,
        scale_exprs=scale_exprs,
        law=law,
        gamma_names=gamma,
        alpha_names=alpha,
        bounds=dict(bounds),
    )
    _probe_scale(model)
    return model


def model_config(model: SdeModel) -> dict:
    """Serializable description; build_model(**from it) is semantically identical."""
    from .laws import law_to_config

    return {
        "state_vars": list(model.state_vars),
        "drift": [str(e) for e in model.drift_exprs],
        "scale": [[str(e) for e in row] for row in model.scale_exprs],
        "law": law_to_config(model.law),
        "bounds": {k: list(v) for k, v in model.bounds.items()},
    }


def model_from_config(cfg: dict) -> SdeModel:
    from .laws import law_from_config

    return build_model(
        drift_texts=cfg["drift"],
        scale_texts=cfg["scale"],
        state_vars=cfg["state_vars"],
        law=law_from_config(cfg.get("law")),
        bounds={k: tuple(v) for k, v in cfg["bounds"].items()},
    )


def _probe_scale(model: SdeModel, n_probes: int = 100) -> None:
    """Reject scales that vanish at random (x, gamma) probes.

    Probes where the expression leaves its domain (nan) are skipped; at least
    one probe must evaluate, and every evaluated probe must have
    |det c c^T| > 0.
    """
    rng = np.random.default_rng(0)
    d, r = model.dim_state, model.dim_noise
    lo = np.array([model.bounds[p][0] for p in model.param_names])
    hi = np.array([model.bounds[p][1] for p in model.param_names])
    valid = 0
    with np.errstate(all="ignore"):
        for _ in range(n_probes):
            x = rng.uniform(-5.0, 5.0, size=(1, d))
            pvec = rng.uniform(lo, hi)
            c = model.scale(x, pvec)[0]
            if not np.all(np.isfinite(c)):
                continue
            valid += 1
            gram = c @ c.T
            det = np.linalg.det(gram)
            if not det > 1e-300:
                raise ModelError(
                    f"degenerate scale at probe x={x[0]!r} (|det cc^T| = {det!r})"
                )
    if valid == 0:
        raise ModelError("scale expression never evaluated finitely at any probe")
