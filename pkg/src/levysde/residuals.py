"""Recovery of noise increments from a fitted path, and unit-time aggregation.

The small-time residual for step j is

    dJ_hat_j = c_{j-1}(gamma_hat)^{-1} (Delta_j X - h a_{j-1}(alpha_hat)),

which inverts the Euler recursion exactly at the true parameters. Unit-time
residuals sum dJ_hat_j over the blocks A_i = { j : i-1 < t_j <= i },
i = 1..floor(T); a trailing partial unit interval is dropped.

Block boundaries are computed in exact integer arithmetic. The float grid
step h = T/n cannot be trusted for the boundary test j*h <= i (e.g. h = 0.3
or h = 0.02 misclassify indices), so T is snapped to the rational the grid
was built from and floor(i*n/T) evaluated over integers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .gqmle import DegenerateScaleError
from .model import Dataset, SdeModel


class ResidualError(ValueError):
    pass


@dataclass(frozen=True)
class ResidualSeries:
    small: np.ndarray          # (n, r) estimated dt-time increments
    unit: np.ndarray           # (floor(T), r) unit-time residuals
    blocks: list               # 0-based half-open ranges into `small`
    theta_used: dict

    def write_unit_csv(self, path) -> None:
        r = self.unit.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i"] + [f"eps_{k + 1}" for k in range(r)])
            for i, row in enumerate(self.unit, start=1):
                w.writerow([i] + [f"{v:.17g}" for v in row])

    def write_small_csv(self, path, times) -> None:
        from .sim import write_increments_csv

        write_increments_csv(path, times, self.small)


def small_increments(data: Dataset, model: SdeModel, theta_hat: dict) -> np.ndarray:
    """Invert the Euler recursion at theta_hat; (n, r) matrix of dJ_hat."""
    if data.dim != model.dim_state:
        raise ResidualError(
            f"dataset has {data.dim} columns, model has {model.dim_state} states")
    pvec = model.param_vector(theta_hat)
    states = data.values[:-1]
    h = data.delta
    resid = data.increments() - h * model.drift(states, pvec)   # (n, d)
    c = model.scale(states, pvec)                               # (n, d, r)
    if model.scale_is_diagonal:
        cd = np.einsum("jkk->jk", c)
        bad = ~(np.abs(cd) > 0) | ~np.isfinite(cd)
        if np.any(bad):
            j = int(np.argwhere(bad)[0][0])
            raise DegenerateScaleError(f"degenerate scale at observation index {j}")
        return resid / cd
    if model.dim_state != model.dim_noise:
        raise ResidualError(
            "residual recovery needs a square (d = r) scale matrix")
    try:
        return np.linalg.solve(c, resid[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as e:
        raise DegenerateScaleError(f"scale matrix not invertible along the path: {e}") from e


def unit_blocks(n: int, terminal: float, h: float) -> list:
    """Blocks A_i = {j : i-1 < j h <= i}, i = 1..floor(T), as 0-based ranges.

    range(start, stop) covers increments start..stop-1, i.e. the 1-based js
    start+1..stop. Exact: j h <= i iff j <= i n / T with T rationalized.
    """
    if n < 1:
        raise ResidualError("need at least one increment")
    t_rat = Fraction(terminal).limit_denominator(10**9)
    if t_rat < 1:
        raise ResidualError(f"no complete unit interval: T = {terminal}")
    n_units = int(t_rat)  # floor for a positive rational
    num, den = t_rat.numerator, t_rat.denominator
    blocks = []
    prev = 0
    for i in range(1, n_units + 1):
        stop = (i * n * den) // num
        blocks.append(range(prev, min(stop, n)))
        prev = stop
    return blocks


def aggregate(small: np.ndarray, blocks: list) -> np.ndarray:
    """Unit-time residuals: row i sums `small` over block i."""
    small = np.atleast_2d(np.asarray(small, dtype=float))
    if small.shape[0] < (blocks[-1].stop if blocks else 0):
        raise ResidualError(
            f"blocks reference increment {blocks[-1].stop}, have {small.shape[0]}")
    out = np.empty((len(blocks), small.shape[1]))
    for i, b in enumerate(blocks):
        out[i] = small[b.start : b.stop].sum(axis=0)
    return out


def recover(data: Dataset, model: SdeModel, theta_hat: dict) -> ResidualSeries:
    """Small-time residuals plus their unit-time aggregation."""
    small = small_increments(data, model, theta_hat)
    blocks = unit_blocks(data.n_steps, data.terminal - data.times[0], data.delta)
    unit = aggregate(small, blocks)
    return ResidualSeries(small=small, unit=unit, blocks=blocks,
                          theta_used=dict(theta_hat))
