"""Deterministic qubit + TLS rate equations.

Writing x = p - p_th turns the affine system into dx/dt = A x with a
symmetric A (the qubit couples to TLS k with the same rate in both
rows), so propagation is an exact eigen-expansion rather than ODE
stepping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from tlsszilard.constants import H_OVER_KB
from tlsszilard.model import (
    Experiment,
    FreeDecay,
    Initialize,
    Monitor,
    PiPulseTrain,
    PopulationState,
    Stabilize,
    SystemParams,
    Wait,
    thermal_population,
)

log = logging.getLogger(__name__)


class PropagationError(RuntimeError):
    pass


class Propagator:
    """Spectral form of the rate matrix for one parameter set."""

    def __init__(self, params: SystemParams):
        self.params = params
        G = params.couplings
        n = G.size
        gq, gt = params.qubit.gamma_q, params.ladder.gamma_t
        A = np.zeros((n + 1, n + 1))
        A[0, 0] = -(gq + G.sum())
        A[0, 1:] = G
        A[1:, 0] = G
        A[np.arange(1, n + 1), np.arange(1, n + 1)] = -(gt + G)
        self.generator = A
        self.p_th = params.qubit.p_th
        # inhomogeneous drive of the original (unshifted) equations
        self.drive = self.p_th * np.concatenate(([gq], np.full(n, gt)))
        try:
            w, V = np.linalg.eigh(A)
        except np.linalg.LinAlgError as err:
            raise PropagationError(f"eigendecomposition failed for {params}") from err
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(V))):
            raise PropagationError(f"non-finite spectrum for {params}")
        scale = max(1.0, np.abs(A).max())
        resid = np.abs((V * w) @ V.T - A).max()
        if resid > 1e-9 * scale:
            raise PropagationError(f"spectral reconstruction residual {resid:.3g} too large")
        self.eigenvalues = w
        self.eigenvectors = V

    def evolve(self, p0: np.ndarray, dts: np.ndarray) -> np.ndarray:
        """Population vectors after each delay in ``dts`` (shape (len(dts), n+1))."""
        dts = np.atleast_1d(np.asarray(dts, dtype=float))
        V, w = self.eigenvectors, self.eigenvalues
        c = V.T @ (np.asarray(p0, dtype=float) - self.p_th)
        decay = np.exp(np.outer(dts, w))
        out = self.p_th + (decay * c) @ V.T
        # avoid the eigenbasis round trip where nothing happens
        out[dts == 0] = p0
        return out

    def derivative(self, p: np.ndarray) -> np.ndarray:
        return self.generator @ (np.asarray(p) - self.p_th)


@lru_cache(maxsize=256)
def propagator(params: SystemParams) -> Propagator:
    return Propagator(params)


def propagate(state: PopulationState, params: SystemParams, dt: float) -> PopulationState:
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    v = propagator(params).evolve(state.vector(), [dt])[0]
    return PopulationState.from_vector(v, state.t + dt)


def _clamped(p_t: np.ndarray, params: SystemParams, dts: np.ndarray, qubit_value: float) -> np.ndarray:
    G = params.couplings
    gt, pth = params.ladder.gamma_t, params.qubit.p_th
    rate = gt + G
    with np.errstate(invalid="ignore", divide="ignore"):
        p_inf = np.where(rate > 0, (G * qubit_value + gt * pth) / rate, p_t)
    return p_inf + (p_t - p_inf) * np.exp(-np.outer(dts, rate))


def propagate_clamped(state: PopulationState, params: SystemParams, dt: float,
                      qubit_value: float) -> PopulationState:
    """TLS relaxation with the qubit population held fixed.

    Stabilization uses 0 or 1; any value in [0, 1] is accepted.
    """
    if not 0.0 <= qubit_value <= 1.0:
        raise ValueError(f"clamp value must lie in [0, 1], got {qubit_value}")
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    p_t = _clamped(state.p_t, params, np.array([dt]), qubit_value)[0]
    return PopulationState(float(qubit_value), np.clip(p_t, 0, 1), state.t + dt)


@dataclass
class DeterministicResult:
    times: np.ndarray          # relative to the experiment origin
    p_q: np.ndarray
    p_t: np.ndarray            # (len(times), n_tls)
    params: SystemParams
    origin: float = 0.0

    @property
    def gamma_up(self) -> np.ndarray:
        return self.p_t @ self.params.couplings + self.params.qubit.gamma_q * self.params.qubit.p_th

    @property
    def gamma_down(self) -> np.ndarray:
        return self.params.gamma_1 - self.gamma_up

    @property
    def p_eq(self) -> np.ndarray:
        return self.gamma_up / self.params.gamma_1

    @property
    def states(self) -> list[PopulationState]:
        return [PopulationState(float(q), t_, float(t) + self.origin)
                for q, t_, t in zip(self.p_q, self.p_t, self.times)]

    def at(self, t: float) -> int:
        """Index of the sample closest to relative time ``t``."""
        return int(np.argmin(np.abs(self.times - t)))


def _segments(exp: Experiment):
    """Flatten the protocol into ("set", value) / ("flip",) / ("free"|"clamp0"|"clamp1", duration)."""
    for step in exp.steps:
        if isinstance(step, Stabilize):
            yield ("clamp1" if step.target == "e" else "clamp0", step.duration)
        elif isinstance(step, Initialize):
            yield ("set", 1.0 if step.target == "e" else 0.0)
        elif isinstance(step, PiPulseTrain):
            for _ in range(step.n_pi):
                yield ("flip",)
                if step.t_pi > 0:
                    yield ("free", step.t_pi)
        elif isinstance(step, (Monitor, FreeDecay, Wait)):
            # readout back-action is not part of the deterministic model
            yield ("free", step.duration)


def default_grid(exp: Experiment, n: int = 400) -> np.ndarray:
    end = exp.duration - exp.origin()
    if end <= 1e-6:
        return np.array([0.0, max(end, 0.0)]) if end > 0 else np.array([0.0])
    return np.concatenate(([0.0], np.geomspace(1e-6, end, n)))


def run_deterministic(exp: Experiment, params: SystemParams, times=None) -> DeterministicResult:
    """Evolve the mean populations through the protocol.

    ``times`` are relative to ``exp.origin()`` (start of the last
    Monitor/FreeDecay step) and may be negative to look into the
    preparation. Instantaneous operations at a sample time are applied
    before sampling.
    """
    origin = exp.origin()
    times = default_grid(exp) if times is None else np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    abs_t = times + origin
    if abs_t[0] < -1e-15 or abs_t[-1] > exp.duration * (1 + 1e-12) + 1e-15:
        raise ValueError("sample times fall outside the protocol")

    prop = propagator(params)
    n = params.n_tls
    out = np.empty((times.size, n + 1))
    filled = 0
    v = exp.initial(params).vector()
    t0 = 0.0
    for seg in _segments(exp):
        kind = seg[0]
        if kind == "set":
            v = v.copy()
            v[0] = seg[1]
            continue
        if kind == "flip":
            v = v.copy()
            v[0] = 1.0 - v[0]
            continue
        dur = seg[1]
        t1 = t0 + dur
        stop = np.searchsorted(abs_t, t1, side="left")
        sel = slice(filled, stop)
        dts = np.concatenate((abs_t[sel] - t0, [dur]))
        if kind == "free":
            vals = prop.evolve(v, dts)
        else:
            q = 1.0 if kind == "clamp1" else 0.0
            pt = _clamped(v[1:], params, dts, q)
            vals = np.column_stack((np.full(dts.size, q), pt))
        out[sel] = vals[:-1]
        filled = stop
        v = vals[-1]
        t0 = t1
    # samples at (or numerically beyond) the very end of the protocol
    out[filled:] = v
    out = np.clip(out, 0.0, 1.0)
    return DeterministicResult(times, out[:, 0].copy(), out[:, 1:].copy(), params, origin)


@dataclass
class HeatCurve:
    times: np.ndarray
    heat: np.ndarray           # reservoir heat reduction in k_B T
    peak: float
    t_peak: float
    beta_eps: float


def heat_extraction_curve(params: SystemParams, T: float, times=None) -> HeatCurve:
    """Reservoir heat reduction after one Szilard cooling step from equilibrium at T."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    beta_eps = H_OVER_KB * params.qubit.f01 / T
    params = params.with_values(p_th=thermal_population(params.qubit.f01, T))
    prop = propagator(params)
    pth = params.qubit.p_th
    p0 = np.full(params.n_tls + 1, pth)
    p0[0] = 0.0
    if times is None:
        times = np.linspace(0.0, 1e-3, 2001)
    times = np.asarray(times, dtype=float)

    def heat(dts):
        v = prop.evolve(p0, dts)
        return beta_eps * (pth - v[:, 1:]).sum(axis=1)

    h = heat(times)
    i = int(np.argmax(h))
    lo = times[max(i - 1, 0)]
    hi = times[min(i + 1, times.size - 1)]
    peak, t_peak = float(h[i]), float(times[i])
    if hi > lo:
        res = minimize_scalar(lambda t: -heat([t])[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        if -res.fun > peak:
            peak, t_peak = float(-res.fun), float(res.x)
    return HeatCurve(times, h, peak, t_peak, beta_eps)
