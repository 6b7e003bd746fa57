"""Parameters, the TLS coupling ladder, and protocol descriptions.

All rates are plain s^-1. The "kHz" values quoted for the ladder
amplitude and the qubit rate mean 10^3 s^-1; conversion to angular
"2 pi kHz" happens only in reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from tlsszilard.constants import F01_HZ, H_OVER_KB, T_EFF_K


def thermal_population(f: float, T: float) -> float:
    """Excited population of a two-level system with splitting ``f`` at ``T``."""
    if f <= 0:
        raise ValueError(f"frequency must be positive, got {f}")
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T}; use population_to_temperature for inverted states")
    if math.isinf(T):
        return 0.5
    return 1.0 / (1.0 + math.exp(H_OVER_KB * f / T))


def population_to_temperature(p: float, f: float) -> float:
    """Signed effective temperature (K) of a two-level population ``p``.

    Negative for p > 0.5 (inversion).
    """
    if not 0.0 < p < 1.0 or p == 0.5:
        raise ValueError(f"population {p} has no finite temperature")
    if f <= 0:
        raise ValueError(f"frequency must be positive, got {f}")
    return H_OVER_KB * f / math.log((1.0 - p) / p)


def multilevel_thermal(levels: Sequence[float], T: float) -> np.ndarray:
    """Boltzmann populations of levels given as energies in Hz."""
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        raise ValueError("need at least one level")
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T}")
    x = -H_OVER_KB * (levels - levels.min()) / T
    w = np.exp(x - x.max())
    return w / w.sum()


@dataclass(frozen=True)
class QubitParams:
    f01: float = F01_HZ
    gamma_q: float = 10.9e3
    p_th: float = field(default_factory=lambda: thermal_population(F01_HZ, T_EFF_K))
    allow_inverted: bool = False

    def __post_init__(self):
        if not self.f01 > 0:
            raise ValueError(f"f01 must be positive, got {self.f01}")
        if not self.gamma_q >= 0:
            raise ValueError(f"gamma_q must be non-negative, got {self.gamma_q}")
        ok = 0.0 <= self.p_th <= 1.0 if self.allow_inverted else 0.0 <= self.p_th < 0.5
        if not ok:
            raise ValueError(f"p_th={self.p_th} out of range (set allow_inverted for p_th >= 0.5)")


@dataclass(frozen=True)
class LadderParams:
    a: float = 5.0e3
    b: float = 0.48
    c: float = 0.0
    n_tls: int = 51
    gamma_t: float = 20.0

    def __post_init__(self):
        if not self.a >= 0:
            raise ValueError(f"a must be non-negative, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"b must be positive (b=0 makes the Lorentzian singular), got {self.b}")
        if not 0.0 <= self.c <= 0.5:
            raise ValueError(f"c must lie in [0, 0.5], got {self.c}")
        if int(self.n_tls) != self.n_tls or self.n_tls < 0:
            raise ValueError(f"n_tls must be a non-negative integer, got {self.n_tls}")
        # n_tls == 0 is the uncoupled qubit; otherwise the ladder must be centred
        if self.n_tls != 0 and self.n_tls % 2 == 0:
            raise ValueError(f"n_tls must be odd so the ladder is symmetric, got {self.n_tls}")
        if not self.gamma_t >= 0:
            raise ValueError(f"gamma_t must be non-negative, got {self.gamma_t}")

    @property
    def indices(self) -> np.ndarray:
        half = (self.n_tls - 1) // 2
        return np.arange(-half, half + 1) if self.n_tls else np.arange(0)


@dataclass(frozen=True)
class SystemParams:
    qubit: QubitParams = field(default_factory=QubitParams)
    ladder: LadderParams = field(default_factory=LadderParams)

    @property
    def n_tls(self) -> int:
        return self.ladder.n_tls

    @property
    def couplings(self) -> np.ndarray:
        return build_coupling_ladder(self.ladder)

    @property
    def gamma_1(self) -> float:
        """Qubit energy relaxation rate, intrinsic plus all TLS channels."""
        return self.qubit.gamma_q + total_coupling(self.ladder)

    def with_values(self, **values) -> "SystemParams":
        """Copy with flat parameter names (a, b, c, gamma_t, n_tls, gamma_q, p_th, f01) replaced."""
        q = {k: v for k, v in values.items() if k in ("f01", "gamma_q", "p_th")}
        lad = {k: v for k, v in values.items() if k in ("a", "b", "c", "n_tls", "gamma_t")}
        unknown = set(values) - set(q) - set(lad)
        if unknown:
            raise KeyError(f"unknown parameters {sorted(unknown)}")
        return SystemParams(replace(self.qubit, **q), replace(self.ladder, **lad))

    def flat(self) -> dict:
        return {
            "a": self.ladder.a,
            "b": self.ladder.b,
            "c": self.ladder.c,
            "n_tls": self.ladder.n_tls,
            "gamma_t": self.ladder.gamma_t,
            "gamma_q": self.qubit.gamma_q,
            "p_th": self.qubit.p_th,
            "f01": self.qubit.f01,
        }


def build_coupling_ladder(ladder: LadderParams) -> np.ndarray:
    """Qubit-TLS transfer rates a / (b^2 + (k - c)^2), k = -(n-1)/2 .. (n-1)/2."""
    if ladder.n_tls % 2 == 0 and ladder.n_tls != 0:
        raise ValueError(f"n_tls must be odd, got {ladder.n_tls}")
    if ladder.b == 0:
        raise ValueError("b = 0 makes the coupling ladder singular")
    k = ladder.indices
    return ladder.a / (ladder.b**2 + (k - ladder.c) ** 2)


def total_coupling(ladder: LadderParams) -> float:
    return float(build_coupling_ladder(ladder).sum())


def derive_g_delta(ladder: LadderParams, gamma_phi: float) -> tuple[float, float]:
    """Coupling strength g and ladder spacing Delta (both s^-1) for a dephasing rate.

    Divide by 2 pi for the "2 pi kHz" convention.
    """
    if not gamma_phi > 0:
        raise ValueError(f"gamma_phi must be positive, got {gamma_phi}")
    g = math.sqrt(ladder.a * gamma_phi / (2.0 * ladder.b**2))
    delta = gamma_phi / ladder.b
    return g, delta


@dataclass(frozen=True)
class PopulationState:
    p_q: float
    p_t: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        p_t = np.asarray(self.p_t, dtype=float)
        object.__setattr__(self, "p_t", p_t)
        tol = 1e-9
        if not -tol <= self.p_q <= 1 + tol:
            raise ValueError(f"p_q={self.p_q} outside [0, 1]")
        if p_t.ndim != 1 or (p_t.size and (p_t.min() < -tol or p_t.max() > 1 + tol)):
            raise ValueError("p_t must be a 1-d array of probabilities")

    @classmethod
    def thermal(cls, params: SystemParams, t: float = 0.0) -> "PopulationState":
        p = params.qubit.p_th
        return cls(p, np.full(params.n_tls, p), t)

    def vector(self) -> np.ndarray:
        return np.concatenate(([self.p_q], self.p_t))

    @classmethod
    def from_vector(cls, v: np.ndarray, t: float = 0.0) -> "PopulationState":
        v = np.clip(v, 0.0, 1.0)
        return cls(float(v[0]), v[1:].copy(), t)

    def __eq__(self, other):
        if not isinstance(other, PopulationState):
            return NotImplemented
        return self.p_q == other.p_q and self.t == other.t and np.array_equal(self.p_t, other.p_t)

    __hash__ = None


# --- protocol steps -------------------------------------------------------

def _check_target(target: str) -> None:
    if target not in ("g", "e"):
        raise ValueError(f"target must be 'g' or 'e', got {target!r}")


@dataclass(frozen=True)
class Stabilize:
    """N measure-and-correct rounds spaced by t_rep."""

    target: str
    n: int
    t_rep: float = 2e-6

    def __post_init__(self):
        _check_target(self.target)
        if self.n < 0 or int(self.n) != self.n:
            raise ValueError(f"repetitions must be a non-negative integer, got {self.n}")
        if not self.t_rep > 0:
            raise ValueError(f"t_rep must be positive, got {self.t_rep}")

    @property
    def duration(self) -> float:
        return self.n * self.t_rep


@dataclass(frozen=True)
class Initialize:
    target: str

    def __post_init__(self):
        _check_target(self.target)

    duration = 0.0


@dataclass(frozen=True)
class Monitor:
    duration: float
    t_rep: float = 2e-6

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"duration must be non-negative, got {self.duration}")
        if not self.t_rep > 0:
            raise ValueError(f"t_rep must be positive, got {self.t_rep}")

    @property
    def n_strobes(self) -> int:
        return int(math.floor(self.duration / self.t_rep + 1e-9))


@dataclass(frozen=True)
class PiPulseTrain:
    """n_pi unconditional pi-pulses, each followed by t_pi of free evolution."""

    n_pi: int
    t_pi: float

    def __post_init__(self):
        if self.n_pi < 0 or int(self.n_pi) != self.n_pi:
            raise ValueError(f"n_pi must be a non-negative integer, got {self.n_pi}")
        if not self.t_pi >= 0:
            raise ValueError(f"t_pi must be non-negative, got {self.t_pi}")

    @property
    def duration(self) -> float:
        return self.n_pi * self.t_pi


@dataclass(frozen=True)
class FreeDecay:
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"duration must be non-negative, got {self.duration}")


@dataclass(frozen=True)
class Wait:
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"duration must be non-negative, got {self.duration}")


Step = Union[Stabilize, Initialize, Monitor, PiPulseTrain, FreeDecay, Wait]
STEP_TYPES = {
    "stabilize": Stabilize,
    "initialize": Initialize,
    "monitor": Monitor,
    "pi_pulse_train": PiPulseTrain,
    "free_decay": FreeDecay,
    "wait": Wait,
}


@dataclass(frozen=True)
class Experiment:
    """Ordered protocol. ``initial_state`` is "thermal" or a PopulationState."""

    steps: tuple
    initial_state: Union[str, PopulationState] = "thermal"

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        if not steps:
            raise ValueError("experiment needs at least one step")
        for s in steps:
            if not isinstance(s, tuple(STEP_TYPES.values())):
                raise TypeError(f"unknown step {s!r}")
        if isinstance(self.initial_state, str) and self.initial_state != "thermal":
            raise ValueError(f"initial_state must be 'thermal' or a PopulationState, got {self.initial_state!r}")

    def start_times(self) -> list[float]:
        out, t = [], 0.0
        for s in self.steps:
            out.append(t)
            t += s.duration
        return out

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.steps)

    def observation_index(self) -> int | None:
        """Index of the last Monitor/FreeDecay step, the default observation window."""
        for i in range(len(self.steps) - 1, -1, -1):
            if isinstance(self.steps[i], (Monitor, FreeDecay)):
                return i
        return None

    def origin(self) -> float:
        """Absolute time at which the observation window starts (0 if none)."""
        i = self.observation_index()
        return 0.0 if i is None else self.start_times()[i]

    def initial(self, params: SystemParams) -> PopulationState:
        if isinstance(self.initial_state, PopulationState):
            if self.initial_state.p_t.size != params.n_tls:
                raise ValueError("explicit initial state does not match n_tls")
            return self.initial_state
        return PopulationState.thermal(params)
