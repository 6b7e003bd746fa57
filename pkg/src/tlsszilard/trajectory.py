"""Quantum-jump simulation of one qubit bit plus n TLS bits.

Each run is an exact continuous-time Markov chain (competing
exponential clocks) between stroboscopic single-shot readouts. The
qubit-TLS exchange is symmetric, which makes the ensemble mean of
every bit obey the deterministic rate equations exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from tlsszilard.model import (
    Experiment,
    FreeDecay,
    Initialize,
    Monitor,
    PiPulseTrain,
    Stabilize,
    SystemParams,
    Wait,
)

# program opcodes
OP_EVOLVE = 0
OP_MEASURE = 1
OP_FLIP = 2

# strobe kinds
KIND_STABILIZE = 0
KIND_INITIALIZE = 1
KIND_MONITOR = 2


@dataclass(frozen=True)
class ReadoutModel:
    """Gaussian IQ clouds plus per-shot demolition flips.

    ``separation_sigma`` is the distance between cloud centres in units of
    the cloud standard deviation; ``np.inf`` gives noiseless readout.
    """

    separation_sigma: float = 5.6
    demolition_down: float = 0.0
    demolition_up: float = 0.0
    centers: tuple = ((0.0, 0.0), (1.0, 0.0))

    def __post_init__(self):
        if not self.separation_sigma > 0:
            raise ValueError(f"separation_sigma must be positive, got {self.separation_sigma}")
        for name in ("demolition_down", "demolition_up"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        c = np.asarray(self.centers, dtype=float)
        if c.shape != (2, 2) or np.allclose(c[0], c[1]):
            raise ValueError("centers must be two distinct IQ points")
        object.__setattr__(self, "centers", tuple(map(tuple, c.tolist())))

    @classmethod
    def perfect(cls) -> "ReadoutModel":
        return cls(separation_sigma=math.inf)

    @property
    def sigma(self) -> float:
        c = np.asarray(self.centers)
        return float(np.linalg.norm(c[1] - c[0]) / self.separation_sigma)


@dataclass(frozen=True)
class MicroState:
    qubit: int
    tls: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        tls = np.asarray(self.tls, dtype=np.int8)
        if self.qubit not in (0, 1) or np.any((tls != 0) & (tls != 1)):
            raise ValueError("micro state holds bits only")
        object.__setattr__(self, "tls", tls)


@dataclass
class StrobeTable:
    """Per-strobe metadata shared by every trace of an ensemble."""

    times: np.ndarray          # absolute time of each measurement
    step: np.ndarray           # index of the protocol step that issued it
    kind: np.ndarray           # KIND_* code
    step_start: np.ndarray     # absolute start time of every protocol step


@dataclass
class JumpTrace:
    assigned_states: np.ndarray
    iq_points: np.ndarray      # (n, 2); shape (n, 0) when IQ recording is off
    pi_pulse_fired: np.ndarray
    true_states: np.ndarray    # qubit bit just before each readout
    strobes: StrobeTable = field(repr=False)

    def __post_init__(self):
        n = self.assigned_states.size
        if not (self.pi_pulse_fired.size == n and self.true_states.size == n
                and self.iq_points.shape[0] == n and self.strobes.times.size == n):
            raise ValueError("trace arrays must have equal length")

    @property
    def times(self) -> np.ndarray:
        return self.strobes.times

    def __len__(self):
        return self.assigned_states.size


# --- kernels ------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _evolve(q, tls, dt, G, gq, gt, pth, rng):
    """Gillespie evolution of the bits over ``dt``; returns the new qubit bit."""
    n = tls.size
    remaining = dt
    while True:
        rq = gq * (1.0 - pth) if q == 1 else gq * pth
        total = rq
        for k in range(n):
            total += gt * (1.0 - pth) if tls[k] == 1 else gt * pth
            if tls[k] != q:
                total += G[k]
        if total <= 0.0:
            return q
        wait = rng.exponential(1.0 / total)
        if wait >= remaining:
            return q
        remaining -= wait
        u = rng.random() * total
        if u < rq:
            q = 1 - q
            continue
        u -= rq
        for k in range(n):
            r = gt * (1.0 - pth) if tls[k] == 1 else gt * pth
            if u < r:
                tls[k] = 1 - tls[k]
                break
            u -= r
            if tls[k] != q:
                if u < G[k]:
                    tls[k] = q
                    q = 1 - q
                    break
                u -= G[k]
        # falling through the loop (rounding slack at the top of the range) is a null event


@numba.njit(cache=True, nogil=True)
def _run_one(ops, args, targets, G, gq, gt, pth, q0, tls0, sep, c0, c1, d_down, d_up,
             record_iq, rng, assigned, true_states, pi_fired, iq):
    q = q0
    tls = tls0.copy()
    perfect = not np.isfinite(sep)
    dist = math.sqrt((c1[0] - c0[0]) ** 2 + (c1[1] - c0[1]) ** 2)
    sigma = 0.0 if perfect else dist / sep
    s = 0
    for i in range(ops.size):
        op = ops[i]
        if op == OP_EVOLVE:
            q = _evolve(q, tls, args[i], G, gq, gt, pth, rng)
        elif op == OP_FLIP:
            q = 1 - q
        else:
            true_states[s] = q
            if q == 1:
                if d_down > 0.0 and rng.random() < d_down:
                    q = 0
            else:
                if d_up > 0.0 and rng.random() < d_up:
                    q = 1
            cx = c1[0] if q == 1 else c0[0]
            cy = c1[1] if q == 1 else c0[1]
            if perfect:
                a = q
                ix, iy = cx, cy
            else:
                ix = cx + sigma * rng.standard_normal()
                iy = cy + sigma * rng.standard_normal()
                d0 = (ix - c0[0]) ** 2 + (iy - c0[1]) ** 2
                d1 = (ix - c1[0]) ** 2 + (iy - c1[1]) ** 2
                a = 1 if d1 < d0 else 0
            assigned[s] = a
            if record_iq:
                iq[s, 0] = ix
                iq[s, 1] = iy
            tgt = targets[i]
            if tgt >= 0 and a != tgt:
                q = 1 - q
                pi_fired[s] = 1
            s += 1
    return q


# --- protocol compilation -------------------------------------------------

@dataclass
class Program:
    ops: np.ndarray
    args: np.ndarray
    targets: np.ndarray
    strobes: StrobeTable


def compile_experiment(exp: Experiment) -> Program:
    """Flatten an experiment into evolve/measure/flip instructions.

    Stabilize: N x (measure + conditional flip, evolve t_rep).
    Initialize: one measure + conditional flip.
    Monitor: M x (evolve t_rep, measure), M = floor(duration / t_rep).
    """
    ops, args, targets = [], [], []
    s_times, s_step, s_kind = [], [], []
    starts = exp.start_times()
    for idx, step in enumerate(exp.steps):
        t = starts[idx]
        if isinstance(step, Stabilize):
            tgt = 1 if step.target == "e" else 0
            for _ in range(step.n):
                ops += [OP_MEASURE, OP_EVOLVE]
                args += [0.0, step.t_rep]
                targets += [tgt, -1]
                s_times.append(t)
                s_step.append(idx)
                s_kind.append(KIND_STABILIZE)
                t += step.t_rep
        elif isinstance(step, Initialize):
            ops.append(OP_MEASURE)
            args.append(0.0)
            targets.append(1 if step.target == "e" else 0)
            s_times.append(t)
            s_step.append(idx)
            s_kind.append(KIND_INITIALIZE)
        elif isinstance(step, Monitor):
            m = step.n_strobes
            for _ in range(m):
                ops += [OP_EVOLVE, OP_MEASURE]
                args += [step.t_rep, 0.0]
                targets += [-1, -1]
                t += step.t_rep
                s_times.append(t)
                s_step.append(idx)
                s_kind.append(KIND_MONITOR)
            rest = step.duration - m * step.t_rep
            if rest > 0:
                ops.append(OP_EVOLVE)
                args.append(rest)
                targets.append(-1)
        elif isinstance(step, PiPulseTrain):
            for _ in range(step.n_pi):
                ops += [OP_FLIP, OP_EVOLVE]
                args += [0.0, step.t_pi]
                targets += [-1, -1]
        elif isinstance(step, (FreeDecay, Wait)):
            ops.append(OP_EVOLVE)
            args.append(step.duration)
            targets.append(-1)
    table = StrobeTable(
        np.asarray(s_times, dtype=float),
        np.asarray(s_step, dtype=np.int32),
        np.asarray(s_kind, dtype=np.int8),
        np.asarray(starts, dtype=float),
    )
    return Program(np.asarray(ops, dtype=np.int8), np.asarray(args, dtype=float),
                   np.asarray(targets, dtype=np.int8), table)


# --- public api -----------------------------------------------------------

def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.default_rng(seed)


def _initial_bits(exp: Experiment, params: SystemParams, rng: np.random.Generator):
    p0 = exp.initial(params).vector()
    bits = (rng.random(p0.size) < p0).astype(np.int8)
    return int(bits[0]), bits[1:].copy()


def step_ctmc(state: MicroState, params: SystemParams, dt: float, rng) -> MicroState:
    """Exact CTMC evolution of one micro state over ``dt``."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    rng = _as_rng(rng)
    tls = state.tls.copy()
    q = _evolve(int(state.qubit), tls, float(dt), params.couplings, params.qubit.gamma_q,
                params.ladder.gamma_t, params.qubit.p_th, rng)
    return MicroState(int(q), tls, state.t + dt)


def measure(state: MicroState, readout: ReadoutModel, rng):
    """Single-shot readout: demolition, IQ sample, nearest-centre assignment.

    Returns (assigned bit, iq point, post-measurement MicroState).
    """
    rng = _as_rng(rng)
    c = np.asarray(readout.centers)
    q = state.qubit
    if q == 1 and readout.demolition_down > 0 and rng.random() < readout.demolition_down:
        q = 0
    elif q == 0 and readout.demolition_up > 0 and rng.random() < readout.demolition_up:
        q = 1
    if math.isinf(readout.separation_sigma):
        return q, c[q].copy(), MicroState(q, state.tls, state.t)
    iq = c[q] + readout.sigma * rng.standard_normal(2)
    assigned = int(np.sum((iq - c[1]) ** 2) < np.sum((iq - c[0]) ** 2))
    return assigned, iq, MicroState(q, state.tls, state.t)


def _run_into(prog: Program, params: SystemParams, readout: ReadoutModel, exp: Experiment,
              rng: np.random.Generator, record_iq: bool, assigned, true_states, pi_fired, iq):
    q0, tls0 = _initial_bits(exp, params, rng)
    c = np.asarray(readout.centers, dtype=float)
    _run_one(prog.ops, prog.args, prog.targets, params.couplings, params.qubit.gamma_q,
             params.ladder.gamma_t, params.qubit.p_th, q0, tls0, float(readout.separation_sigma),
             c[0], c[1], readout.demolition_down, readout.demolition_up, record_iq, rng,
             assigned, true_states, pi_fired, iq)


def run_trajectory(exp: Experiment, params: SystemParams, readout: ReadoutModel, seed,
                   record_iq: bool = True, program: Program | None = None) -> JumpTrace:
    prog = program or compile_experiment(exp)
    n = prog.strobes.times.size
    assigned = np.zeros(n, np.int8)
    true_states = np.zeros(n, np.int8)
    pi_fired = np.zeros(n, np.int8)
    iq = np.zeros((n, 2 if record_iq else 0))
    iq_buf = iq if record_iq else np.zeros((0, 2))
    _run_into(prog, params, readout, exp, _as_rng(seed), record_iq,
              assigned, true_states, pi_fired, iq_buf)
    return JumpTrace(assigned, iq, pi_fired, true_states, prog.strobes)


def trajectory_seeds(master_seed: int, n_traj: int) -> list[np.random.SeedSequence]:
    """Independent child streams; trajectory i always gets child i."""
    return np.random.SeedSequence(int(master_seed)).spawn(n_traj)


def run_ensemble(exp: Experiment, params: SystemParams, readout: ReadoutModel, master_seed: int,
                 n_traj: int, workers: int = 1, record_iq: bool = True, chunk: int = 256) -> list[JumpTrace]:
    """``n_traj`` independent trajectories, bit-identical for any ``workers``/``chunk``."""
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    prog = compile_experiment(exp)
    seeds = trajectory_seeds(master_seed, n_traj)
    n = prog.strobes.times.size
    assigned = np.zeros((n_traj, n), np.int8)
    true_states = np.zeros((n_traj, n), np.int8)
    pi_fired = np.zeros((n_traj, n), np.int8)
    iq = np.zeros((n_traj, n, 2 if record_iq else 0), np.float64)
    dummy = np.zeros((0, 2))

    def work(lo, hi):
        for i in range(lo, hi):
            _run_into(prog, params, readout, exp, _as_rng(seeds[i]), record_iq,
                      assigned[i], true_states[i], pi_fired[i], iq[i] if record_iq else dummy)

    bounds = [(lo, min(lo + chunk, n_traj)) for lo in range(0, n_traj, chunk)]
    if workers <= 1:
        for lo, hi in bounds:
            work(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for f in [pool.submit(work, lo, hi) for lo, hi in bounds]:
                f.result()
    return [JumpTrace(assigned[i], iq[i], pi_fired[i], true_states[i], prog.strobes)
            for i in range(n_traj)]
