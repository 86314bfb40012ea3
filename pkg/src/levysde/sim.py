"""Euler-scheme simulation with law-driven jump increments.

The recursion is X_{t_j} = X_{t_{j-1}} + a(X_{t_{j-1}}, alpha) h
+ c(X_{t_{j-1}}, gamma) dJ_j, with the dJ_j drawn from the model's noise law
at step size h. The exact increments are retained in the output so residual
recovery can be checked against them bit-for-bit (up to float addition
error).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rng as lrng
from .model import Dataset, ModelError, SamplingScheme, SdeModel


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimOutput:
    dataset: Dataset
    noise_increments: np.ndarray  # (n, r), the exact dJ draws used
    seed: int | None
    replicate: int | None = None

    def write_csv(self, path, state_names=None) -> None:
        self.dataset.write_csv(path, state_names=state_names)

    def write_increments_csv(self, path) -> None:
        write_increments_csv(path, self.dataset.times[1:], self.noise_increments)


def write_increments_csv(path, times, increments) -> None:
    """Sidecar schema: j, t_j, dJ_1, ..., dJ_r (17 significant digits)."""
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    if increments.shape[0] != len(times):
        increments = increments.T
    r = increments.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "t_j"] + [f"dJ_{k + 1}" for k in range(r)])
        for j, (t, row) in enumerate(zip(times, increments), start=1):
            w.writerow([j, f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def _check_in_box(model: SdeModel, params: dict) -> None:
    for name in model.param_names:
        lo, hi = model.bounds[name]
        v = float(params[name])
        if not (lo <= v <= hi):
            raise ModelError(f"parameter {name}={v} outside its box [{lo}, {hi}]")


def euler_simulate(model: SdeModel, params: dict, scheme: SamplingScheme,
                   x0=None, seed=0) -> SimOutput:
    """Simulate one path; `params` holds coefficient and noise parameters."""
    if model.law is None:
        raise SimulationError("model has no noise law; cannot simulate")
    _check_in_box(model, params)
    d, r = model.dim_state, model.dim_noise
    if x0 is None:
        x0 = np.zeros(d)
    x0 = np.asarray(x0, dtype=float).reshape(d)

    stream = seed if isinstance(seed, np.random.Generator) else lrng.stream(seed)
    seed_label = None if isinstance(seed, np.random.Generator) else int(seed)
    noise_params = {k: float(params[k]) for k in model.law.param_labels}
    model.law.validate(noise_params)

    n, h = scheme.n, scheme.h
    dJ = model.law.sample(n, h, noise_params, stream)
    pvec = model.param_vector(params)

    from . import expr as ex

    drift_fns = model._compiled("drift")
    scale_fns = model._compiled("scale")
    state_set = set(model.state_vars)
    scale_state_free = all(
        not (ex.free_symbols(e) & state_set) for row in model.scale_exprs for e in row
    )
    if scale_state_free:
        # constant scale along the path: the noise part vectorizes up front
        c_const = model.scale(np.zeros((1, d)), pvec)[0]
        noise_part = dJ @ c_const.T  # (n, d)
    path = np.empty((n + 1, d))
    path[0] = x0
    x = x0.copy()
    state = np.empty((1, d))
    for j in range(n):
        state[0] = x
        for i in range(d):
            step = drift_fns[i](state, pvec)[0] * h
            if scale_state_free:
                step = step + noise_part[j, i]
            else:
                for k in range(r):
                    step += scale_fns[i][k](state, pvec)[0] * dJ[j, k]
            x[i] = x[i] + step
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"non-finite state at step {j + 1}: {x!r}")
        path[j + 1] = x

    dataset = Dataset(times=scheme.times, values=path)
    return SimOutput(dataset=dataset, noise_increments=dJ, seed=seed_label)


def simulate_batch(model: SdeModel, params: dict, scheme: SamplingScheme,
                   master_seed: int, reps: int, x0=None) -> list:
    """Independent replicates with per-replicate streams split from one seed."""
    if reps < 1:
        raise SimulationError(f"reps must be >= 1, got {reps}")
    streams = lrng.split(int(master_seed), reps)
    out = []
    for i, stream in enumerate(streams):
        try:
            one = euler_simulate(model, params, scheme, x0=x0, seed=stream)
        except SimulationError as e:
            raise SimulationError(f"replicate {i}: {e}") from e
        out.append(SimOutput(dataset=one.dataset,
                             noise_increments=one.noise_increments,
                             seed=int(master_seed), replicate=i))
    return out
