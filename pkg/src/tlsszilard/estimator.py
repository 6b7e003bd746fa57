"""Transition rates and T1 from ensembles of jump traces."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from tlsszilard.trajectory import KIND_MONITOR, JumpTrace

log = logging.getLogger(__name__)


class EstimatorError(RuntimeError):
    pass


@dataclass
class RateSeries:
    """Time-resolved rates; NaN marks strobes with an empty conditioning set."""

    times: np.ndarray
    gamma_up: np.ndarray
    gamma_down: np.ndarray
    gamma_up_err: np.ndarray
    gamma_down_err: np.ndarray
    n_g: np.ndarray
    n_e: np.ndarray
    window: int = 1

    def __post_init__(self):
        n = self.times.size
        for name in ("gamma_up", "gamma_down", "gamma_up_err", "gamma_down_err", "n_g", "n_e"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} has wrong length")

    @property
    def gamma_1(self) -> np.ndarray:
        return self.gamma_up + self.gamma_down

    @property
    def p_eq(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.gamma_up / self.gamma_1

    @property
    def gamma_1_err(self) -> np.ndarray:
        return np.hypot(self.gamma_up_err, self.gamma_down_err)

    @property
    def t1(self) -> np.ndarray:
        return 1.0 / self.gamma_1

    def columns(self) -> dict:
        return {
            "t": self.times,
            "gamma_up": self.gamma_up,
            "gamma_up_err": self.gamma_up_err,
            "gamma_down": self.gamma_down,
            "gamma_down_err": self.gamma_down_err,
            "gamma_1": self.gamma_1,
            "p_eq": self.p_eq,
        }


def _monitor_block(ensemble: list[JumpTrace], step: int | None, use_true: bool = False):
    if not ensemble:
        raise ValueError("ensemble is empty")
    table = ensemble[0].strobes
    mon = table.kind == KIND_MONITOR
    if step is None:
        if not mon.any():
            raise ValueError("ensemble has no monitor strobes")
        step = int(table.step[mon].max())
    sel = np.flatnonzero(table.step == step)
    if sel.size == 0:
        raise ValueError(f"step {step} issued no strobes")
    attr = "true_states" if use_true else "assigned_states"
    states = np.stack([getattr(tr, attr)[sel] for tr in ensemble])
    # picosecond rounding removes the residue of subtracting absolute times
    times = np.round(table.times[sel] - table.step_start[step], 12)
    return times, states


def _rate(stay, n, t_rep):
    """-ln(stay/n)/t_rep with a delta-method stderr; NaN where undefined."""
    stay = np.asarray(stay, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = stay / n
        rate = -np.log(P) / t_rep
        err = np.sqrt((1.0 - P) / (P * n)) / t_rep
    bad = (n == 0) | (stay == 0)
    rate[bad] = np.nan
    err[bad] = np.nan
    return rate, err


def _transition_counts(states: np.ndarray):
    a, b = states[:, :-1], states[:, 1:]
    n_g = (a == 0).sum(axis=0)
    n_e = (a == 1).sum(axis=0)
    gg = ((a == 0) & (b == 0)).sum(axis=0)
    ee = ((a == 1) & (b == 1)).sum(axis=0)
    return n_g, n_e, gg, ee


def _series(times, n_g, n_e, gg, ee, t_rep) -> RateSeries:
    up, up_err = _rate(gg, n_g, t_rep)
    down, down_err = _rate(ee, n_e, t_rep)
    missing = int(np.count_nonzero((n_g == 0) | (n_e == 0)))
    if missing:
        log.info("%d of %d points have an empty conditioning set", missing, times.size)
    return RateSeries(np.asarray(times, dtype=float), up, down, up_err, down_err,
                      np.asarray(n_g), np.asarray(n_e))


def extract_rates(ensemble: list[JumpTrace], t_rep: float, step: int | None = None,
                  use_true: bool = False) -> RateSeries:
    """Gamma_up = -ln P_gg / t_rep and Gamma_down = -ln P_ee / t_rep per strobe.

    P_gg(i) is the fraction of traces assigned g at strobe i that are
    again assigned g at i+1. Times are relative to the start of the
    monitored step (default: the last Monitor step).
    """
    times, states = _monitor_block(ensemble, step, use_true)
    if states.shape[1] < 2:
        raise ValueError("need at least two strobes per trace")
    n_g, n_e, gg, ee = _transition_counts(states)
    return _series(times[:-1], n_g, n_e, gg, ee, t_rep)


def pooled_rates(ensemble: list[JumpTrace], t_rep: float, edges, step: int | None = None,
                 use_true: bool = False) -> RateSeries:
    """Rates with transition counts pooled over time bins [edges[i], edges[i+1]).

    Bin times are the geometric mean of the edges when both are positive.
    """
    times, states = _monitor_block(ensemble, step, use_true)
    n_g, n_e, gg, ee = _transition_counts(states)
    t = times[:-1]
    edges = np.asarray(edges, dtype=float)
    idx = np.searchsorted(edges, t, side="right") - 1
    nb = edges.size - 1
    ok = (idx >= 0) & (idx < nb)

    def pool(x):
        return np.bincount(idx[ok], weights=x[ok], minlength=nb)

    lo, hi = edges[:-1], edges[1:]
    with np.errstate(invalid="ignore", over="ignore"):
        centers = np.where(lo > 0, np.sqrt(np.abs(lo * hi)), 0.5 * (lo + hi))
    return _series(centers, pool(n_g), pool(n_e), pool(gg), pool(ee), t_rep)


def moving_average(series: RateSeries, window: int) -> RateSeries:
    """Centred boxcar on Gamma_up and Gamma_down; derived channels follow."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be an odd positive integer, got {window}")
    if window == 1:
        return replace(series)
    h = window // 2

    def smooth(x, err):
        out = np.full_like(x, np.nan)
        out_err = np.full_like(x, np.nan)
        for i in range(x.size):
            seg = slice(max(0, i - h), min(x.size, i + h + 1))
            v, e = x[seg], err[seg]
            good = np.isfinite(v)
            m = good.sum()
            if m:
                out[i] = v[good].mean()
                out_err[i] = np.sqrt(np.nansum(e[good] ** 2)) / m
        return out, out_err

    up, up_err = smooth(series.gamma_up, series.gamma_up_err)
    down, down_err = smooth(series.gamma_down, series.gamma_down_err)
    return replace(series, gamma_up=up, gamma_down=down, gamma_up_err=up_err,
                   gamma_down_err=down_err, window=window * series.window)


def population_series(ensemble: list[JumpTrace], t_rep: float | None = None, step: int | None = None,
                      use_true: bool = False):
    """Excited fraction per strobe with binomial stderr: (times, p_q, stderr)."""
    times, states = _monitor_block(ensemble, step, use_true)
    n = states.shape[0]
    p = states.mean(axis=0)
    return times, p, np.sqrt(p * (1.0 - p) / n)


def jump_t1(ensemble: list[JumpTrace], t_rep: float, window: tuple[float, float] | None = None,
            step: int | None = None) -> tuple[float, float]:
    """T1 = 1/(Gamma_up + Gamma_down) from transitions pooled over ``window``."""
    lo, hi = window if window is not None else (-np.inf, np.inf)
    s = pooled_rates(ensemble, t_rep, [lo, hi], step)
    g1, err = float(s.gamma_1[0]), float(s.gamma_1_err[0])
    if not np.isfinite(g1):
        raise EstimatorError("no transitions in the T1 window")
    return 1.0 / g1, err / g1**2


def fit_exponential_t1(times, p_q, fit_window: float, baseline: float, sigma=None) -> tuple[float, float]:
    """Fit baseline + (p0 - baseline) exp(-t/T1) to samples with t <= fit_window."""
    times = np.asarray(times, dtype=float)
    p_q = np.asarray(p_q, dtype=float)
    sel = times <= fit_window
    if sel.sum() < 3:
        raise ValueError("fit window contains fewer than 3 points")
    t, y = times[sel], p_q[sel]
    s = None if sigma is None else np.asarray(sigma, dtype=float)[sel]

    def model(t, p0, T1):
        return baseline + (p0 - baseline) * np.exp(-t / T1)

    span = max(t[-1] - t[0], 1e-12)
    amp = y[0] - baseline
    guess = span
    tail = (y - baseline) / amp if amp != 0 else None
    if tail is not None and np.all(tail[1:] > 0) and tail[-1] < 1:
        guess = -(t[-1] - t[0]) / np.log(tail[-1] / max(tail[0], 1e-300))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(model, t, y, p0=[y[0], guess], sigma=s,
                                   absolute_sigma=s is not None, maxfev=20000,
                                   xtol=1e-14, ftol=1e-14, gtol=1e-14)
    except RuntimeError as err:
        raise EstimatorError(f"exponential fit did not converge on {sel.sum()} points "
                             f"(window {fit_window:g} s, baseline {baseline:g}): {err}") from err
    T1 = float(popt[1])
    T1_err = float(np.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) else float("nan")
    return T1, T1_err
