"""Flux algebra of the SQUID-junction fluxonium.

Phases are in radians for ``effective_junction``; the partition works in
units of the flux quantum (multiples of 2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from tlsszilard.constants import EJ_EFF_HZ, LOOP_AREA_RATIO, PHI_EXT_OPERATING


@dataclass(frozen=True)
class SquidParams:
    ej1: float
    ej2: float
    v_ratio: float = LOOP_AREA_RATIO
    phi_ext: float = PHI_EXT_OPERATING

    def __post_init__(self):
        if self.ej1 < 0 or self.ej2 < 0:
            raise ValueError("Josephson energies must be non-negative")
        if not self.v_ratio > 0:
            raise ValueError(f"v_ratio must be positive, got {self.v_ratio}")

    @classmethod
    def symmetric(cls, ej_eff: float = EJ_EFF_HZ, **kw) -> "SquidParams":
        return cls(ej_eff / 2, ej_eff / 2, **kw)


def effective_junction(ej1: float, ej2: float, phi_s: float) -> tuple[float, float]:
    """Signed effective Josephson energy and its phase offset.

    E1 cos(x) + E2 cos(x - phi_s) = ej_eff * cos(x - phi_s/2 - offset).
    """
    e_sum = (ej1 + ej2) * math.cos(phi_s / 2)
    e_diff = (ej2 - ej1) * math.sin(phi_s / 2)
    if e_sum == 0.0:
        if e_diff == 0.0:
            return 0.0, 0.0
        return abs(e_diff), math.atan2(e_diff, 0.0)
    return math.copysign(math.hypot(e_sum, e_diff), e_sum), math.atan(e_diff / e_sum)


def flux_partition(v_ratio: float, phi_ext: float) -> tuple[float, float, float]:
    """(phi_s, phi_l, phi_l + phi_s) in flux quanta for a globally applied flux."""
    if not v_ratio > 0:
        raise ValueError(f"v_ratio must be positive, got {v_ratio}")
    f = 1.0 / (2.0 * v_ratio + 1.0)
    return 2.0 * f * phi_ext, (1.0 - f) * phi_ext, (1.0 + f) * phi_ext


def interference_condition(v_ratio: float, bound: int = 1000, tol: float = 1e-9):
    """Search integers 1 <= m <= bound for V = (2k - 1) / (2m).

    Returns (satisfiable, (m, k) or None). Integer V never qualifies.
    """
    if bound < 1:
        raise ValueError("search bound must be >= 1")
    if not v_ratio > 0:
        raise ValueError(f"v_ratio must be positive, got {v_ratio}")
    for m in range(1, bound + 1):
        odd = 2.0 * m * v_ratio
        n = round(odd)
        if n % 2 == 1 and abs(odd - n) <= tol * max(1.0, odd):
            k = (n + 1) // 2
            if abs(k) <= bound:
                return True, (m, k)
    return False, None


def interference_fraction(v_ratio: float, bound: int = 1000) -> Fraction | None:
    ok, wit = interference_condition(v_ratio, bound)
    return Fraction(2 * wit[1] - 1, 2 * wit[0]) if ok else None
