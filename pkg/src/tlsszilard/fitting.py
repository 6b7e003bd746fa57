"""Simultaneous least-squares fit of model parameters to population curves."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from tlsszilard.dynamics import PropagationError, run_deterministic
from tlsszilard.model import Experiment, SystemParams

log = logging.getLogger(__name__)

FIT_PARAMS = ("a", "b", "c", "gamma_q", "gamma_t", "p_th")

DEFAULT_BOUNDS = {
    "a": (1e2, 1e5),
    "b": (0.05, 5.0),
    "c": (0.0, 0.5),
    "gamma_q": (0.0, 1e5),
    "gamma_t": (0.0, 1e3),
    "p_th": (0.0, 0.49),
}


class FitError(RuntimeError):
    pass


@dataclass
class Dataset:
    experiment: Experiment
    times: np.ndarray          # relative to experiment.origin()
    p_q: np.ndarray
    stderr: np.ndarray | None = None
    fit_window: float = 1e-3
    name: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p_q = np.asarray(self.p_q, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.p_q.shape or np.any(self.stderr <= 0):
                raise ValueError("stderr must be positive and match p_q")
        if self.times.shape != self.p_q.shape:
            raise ValueError("times and p_q differ in length")
        if not np.any(self.window_mask):
            raise ValueError(f"dataset {self.name!r} has no samples inside the fit window")

    @property
    def window_mask(self) -> np.ndarray:
        return (self.times >= 0) & (self.times <= self.fit_window)


@dataclass
class FitProblem:
    datasets: list
    free_params: tuple = ("a", "b", "gamma_q")
    base: SystemParams = field(default_factory=SystemParams)
    bounds: dict = field(default_factory=dict)
    seed: int = 0
    restarts: int = 3
    max_iter: int = 4000

    def __post_init__(self):
        self.free_params = tuple(self.free_params)
        if not self.datasets:
            raise ValueError("fit problem needs at least one dataset")
        for p in self.free_params:
            if p not in FIT_PARAMS:
                raise ValueError(f"cannot fit {p!r}; choose from {FIT_PARAMS}")
        if len(set(self.free_params)) != len(self.free_params):
            raise ValueError("duplicate free parameters")
        merged = {p: tuple(DEFAULT_BOUNDS[p]) for p in FIT_PARAMS}
        for p, (lo, hi) in self.bounds.items():
            if p not in FIT_PARAMS:
                raise ValueError(f"bounds given for unknown parameter {p!r}")
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {p} must be finite and ordered, got {(lo, hi)}")
            merged[p] = (float(lo), float(hi))
        self.bounds = merged

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[p][0] for p in self.free_params])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[p][1] for p in self.free_params])

    def params_for(self, candidate) -> SystemParams:
        return self.base.with_values(**dict(zip(self.free_params, map(float, candidate))))

    def initial_vector(self) -> np.ndarray:
        flat = self.base.flat()
        return np.array([flat[p] for p in self.free_params], dtype=float)


@dataclass
class FitResult:
    values: dict
    residual_norm: float
    initial_residual_norm: float
    uncertainties: dict
    n_evaluations: int
    iterations: int
    converged: bool
    message: str
    params: SystemParams

    def to_json(self) -> dict:
        return {
            "values": self.values,
            "uncertainties": self.uncertainties,
            "residual_norm": self.residual_norm,
            "initial_residual_norm": self.initial_residual_norm,
            "n_evaluations": self.n_evaluations,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
        }


def model_curve(ds: Dataset, params: SystemParams, window_only: bool = True) -> np.ndarray:
    t = ds.times[ds.window_mask] if window_only else ds.times
    return run_deterministic(ds.experiment, params, t).p_q


def residuals(problem: FitProblem, candidate) -> np.ndarray:
    """Weighted residuals (model - data)/stderr over every dataset's fit window."""
    candidate = np.asarray(candidate, dtype=float)
    if candidate.size != len(problem.free_params):
        raise ValueError("candidate length does not match the free parameters")
    if np.any(candidate < problem.lower - 1e-12) or np.any(candidate > problem.upper + 1e-12):
        raise ValueError(f"candidate {candidate} outside bounds")
    try:
        params = problem.params_for(candidate)
        out = []
        for ds in problem.datasets:
            m = ds.window_mask
            r = model_curve(ds, params) - ds.p_q[m]
            if ds.stderr is not None:
                r = r / ds.stderr[m]
            out.append(r)
    except (PropagationError, ValueError) as err:
        raise FitError(f"model evaluation failed at {dict(zip(problem.free_params, candidate))}: {err}") from err
    return np.concatenate(out)


def _jacobian(problem: FitProblem, x: np.ndarray, r0: np.ndarray) -> np.ndarray:
    lo, hi = problem.lower, problem.upper
    J = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = 1e-5 * max(abs(x[j]), 1e-3 * (hi[j] - lo[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] = min(x[j] + h, hi[j])
        xm[j] = max(x[j] - h, lo[j])
        J[:, j] = (residuals(problem, xp) - residuals(problem, xm)) / (xp[j] - xm[j])
    return J


def _uncertainties(problem: FitProblem, x: np.ndarray, r: np.ndarray) -> dict:
    if x.size == 0:
        return {}
    J = _jacobian(problem, x, r)
    weighted = all(ds.stderr is not None for ds in problem.datasets)
    dof = max(r.size - x.size, 1)
    scale = 1.0 if weighted else float(r @ r) / dof
    try:
        cov = np.linalg.inv(J.T @ J) * scale
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(x.size, np.nan)
    return dict(zip(problem.free_params, map(float, err)))


def fit(problem: FitProblem, initial=None) -> FitResult:
    """Bounded Nelder-Mead on the residual sum of squares, with seeded restarts.

    The search runs in bound-normalised coordinates. Each restart starts
    from the incumbent best point perturbed by 10% of the box width.
    """
    x0 = problem.initial_vector() if initial is None else np.asarray(initial, dtype=float)
    lo, hi = problem.lower, problem.upper
    if x0.size != len(problem.free_params):
        raise ValueError("initial vector does not match the free parameters")
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError(f"initial point {x0} outside bounds")

    r0 = residuals(problem, x0)
    norm0 = float(np.linalg.norm(r0))
    if x0.size == 0:
        return FitResult({}, norm0, norm0, {}, 1, 0, True, "no free parameters", problem.base)

    span = hi - lo

    def to_unit(x):
        return (x - lo) / span

    def from_unit(u):
        return lo + np.clip(u, 0.0, 1.0) * span

    n_eval = 0

    def cost(u):
        nonlocal n_eval
        n_eval += 1
        r = residuals(problem, from_unit(u))
        return float(r @ r)

    rng = np.random.default_rng(problem.seed)
    best_u, best_f = to_unit(x0), norm0**2
    iterations, converged, message = 0, True, "initial point not improved"
    for attempt in range(problem.restarts + 1):
        start = best_u if attempt == 0 else np.clip(best_u + 0.1 * rng.standard_normal(best_u.size), 0.0, 1.0)
        res = minimize(cost, start, method="Nelder-Mead", bounds=[(0.0, 1.0)] * best_u.size,
                       options={"maxiter": problem.max_iter, "xatol": 1e-7, "fatol": 1e-10,
                                "adaptive": best_u.size > 2})
        iterations += int(res.nit)
        if attempt == 0:
            converged, message = bool(res.success), str(res.message)
        if res.fun < best_f:
            best_u, best_f = np.clip(res.x, 0.0, 1.0), float(res.fun)
            converged, message = bool(res.success), str(res.message)
        log.debug("restart %d: cost %.6g (%s)", attempt, res.fun, res.message)
    if not converged:
        log.warning("fit stopped without converging: %s", message)

    x = from_unit(best_u)
    r = residuals(problem, x)
    norm = float(np.linalg.norm(r))
    if norm > norm0:
        x, r, norm = x0, r0, norm0
    return FitResult(
        values=dict(zip(problem.free_params, map(float, x))),
        residual_norm=norm,
        initial_residual_norm=norm0,
        uncertainties=_uncertainties(problem, x, r),
        n_evaluations=n_eval,
        iterations=iterations,
        converged=converged,
        message=message,
        params=problem.params_for(x),
    )


def profile_parameter(problem: FitProblem, param: str, grid, initial=None) -> list[tuple[float, float]]:
    """Best residual norm with ``param`` pinned at each grid value (others refit)."""
    if param not in FIT_PARAMS:
        raise ValueError(f"unknown parameter {param!r}")
    lo, hi = problem.bounds[param]
    others = tuple(p for p in problem.free_params if p != param)
    start = problem.initial_vector() if initial is None else np.asarray(initial, dtype=float)
    start_map = dict(zip(problem.free_params, start))
    out = []
    for value in grid:
        if not lo <= value <= hi:
            raise ValueError(f"grid value {value} outside bounds of {param}")
        sub = FitProblem(
            datasets=problem.datasets,
            free_params=others,
            base=problem.base.with_values(**{param: float(value)}),
            bounds={p: problem.bounds[p] for p in others},
            seed=problem.seed,
            restarts=problem.restarts,
            max_iter=problem.max_iter,
        )
        x0 = np.array([start_map.get(p, sub.base.flat()[p]) for p in others])
        out.append((float(value), fit(sub, x0).residual_norm))
    return out
