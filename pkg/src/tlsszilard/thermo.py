"""Szilard-engine bookkeeping for a ground state plus a d-fold excited manifold.

Energies enter as the dimensionless beta*eps; results are in units of
eps, k_B or k_B T as noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tlsszilard.constants import H_OVER_KB
from tlsszilard.model import SystemParams


def _check_d(d: int) -> None:
    if d < 1 or int(d) != d:
        raise ValueError(f"degeneracy must be a positive integer, got {d}")


def _log_z(d, beta_eps):
    # ln(d + e^{beta eps}) without overflow
    return np.logaddexp(np.log(d), beta_eps)


def excited_population(d: int, beta_eps):
    _check_d(d)
    return np.exp(np.log(d) - _log_z(d, beta_eps))


def internal_energy(d: int, beta_eps):
    """U / eps = d / (d + e^{beta eps})."""
    return excited_population(d, beta_eps)


def entropy_split(d: int, beta_eps):
    """(S_rev, S_irr, S) in units of k_B, with S_rev = beta U."""
    _check_d(d)
    beta_eps = np.asarray(beta_eps, dtype=float)
    s_rev = beta_eps * excited_population(d, beta_eps)
    # ln(d + e^{beta eps}) - beta eps, written to avoid cancellation when cold
    s_irr = np.logaddexp(0.0, np.log(d) - beta_eps)
    out = (s_rev, s_irr, s_rev + s_irr)
    return tuple(float(x) for x in out) if beta_eps.ndim == 0 else out


def measurement_entropy_reduction(d: int, beta_eps):
    """Average entropy removed by a ground/excited-manifold projection, in k_B."""
    _, _, s = entropy_split(d, beta_eps)
    return s - excited_population(d, beta_eps) * math.log(d)


def irr_rev_ratio(d: int, beta_eps):
    """Delta S_irr / Delta S_rev for a full reset from thermal equilibrium."""
    s_rev, s_irr, _ = entropy_split(d, beta_eps)
    return s_irr / s_rev


def cop(T_A: float, T_R: float, irr_rev_ratio: float) -> float:
    """Refrigeration coefficient of performance; Carnot when the ratio is 0."""
    if not T_R > 0:
        raise ValueError(f"T_R must be positive, got {T_R}")
    if not T_A > T_R:
        raise ValueError(f"need T_A > T_R, got T_A={T_A}, T_R={T_R}")
    if irr_rev_ratio < 0:
        raise ValueError(f"entropy ratio must be non-negative, got {irr_rev_ratio}")
    return T_R / (T_A - T_R + T_A * irr_rev_ratio)


def carnot_cop(T_A: float, T_R: float) -> float:
    return cop(T_A, T_R, 0.0)


@dataclass(frozen=True)
class CycleSummary:
    """One measure-and-reset cycle. Energies in k_B T_R, entropies in k_B."""

    beta_eps: float
    delta_u: float
    delta_s: float
    delta_s_rev: float
    delta_s_irr: float
    w_m: float
    w_q: float
    dq_r: float
    cop: float | None


def cycle_summary(params: SystemParams, T_A: float, T_R: float, d: int = 1) -> CycleSummary:
    """First cooling cycle with the qubit starting in equilibrium at T_R."""
    if not (T_A > 0 and T_R > 0):
        raise ValueError("temperatures must be positive")
    beta_eps = H_OVER_KB * params.qubit.f01 / T_R
    s_rev, s_irr, _ = entropy_split(d, beta_eps)
    ds = float(measurement_entropy_reduction(d, beta_eps))
    du = float(beta_eps * internal_energy(d, beta_eps))
    c = cop(T_A, T_R, s_irr / s_rev) if T_A > T_R else None
    return CycleSummary(
        beta_eps=beta_eps,
        delta_u=du,
        delta_s=ds,
        delta_s_rev=s_rev,
        delta_s_irr=s_irr,
        w_m=T_A / T_R * ds,
        w_q=-du,
        dq_r=s_rev,
        cop=c,
    )
