import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tlsszilard.model import SystemParams
from tlsszilard.trajectory import KIND_MONITOR, JumpTrace, StrobeTable

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return SystemParams()


def traces_from_bits(bits: np.ndarray, t_rep: float) -> list[JumpTrace]:
    """Wrap an (n_traj, n_strobes) bit array as monitor-strobe jump traces."""
    bits = np.asarray(bits, dtype=np.int8)
    n = bits.shape[1]
    table = StrobeTable(times=t_rep * np.arange(1, n + 1), step=np.zeros(n, np.int64),
                        kind=np.full(n, KIND_MONITOR, np.int8), step_start=np.zeros(1))
    return [JumpTrace(b, np.zeros((n, 0)), np.zeros(n, np.int8), b, table) for b in bits]


def markov_bits(rng, n_traj, n_strobes, p_up, p_down, p0=0.0) -> np.ndarray:
    """Discrete two-state chain with per-strobe flip probabilities."""
    out = np.empty((n_traj, n_strobes), np.int8)
    s = (rng.random(n_traj) < p0).astype(np.int8)
    for i in range(n_strobes):
        out[:, i] = s
        u = rng.random(n_traj)
        s = np.where(s == 0, (u < p_up), (u >= p_down)).astype(np.int8)
    return out


@pytest.fixture(scope="session")
def inverted_ensemble(params):
    """1000 trajectories: Stabilize(e, 10^4) + Initialize(g) + 50 ms of monitoring."""
    from tlsszilard.model import Experiment, Initialize, Monitor, Stabilize
    from tlsszilard.trajectory import ReadoutModel, run_ensemble

    exp = Experiment((Stabilize("e", 10_000, 2e-6), Initialize("g"), Monitor(50e-3, 2e-6)))
    return exp, run_ensemble(exp, params, ReadoutModel(), 2024, 1000, record_iq=False, workers=4)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for rep in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", []):
        for key, value in getattr(rep, "user_properties", []):
            if key == "acceptance" and rep.when == "call":
                lines.append(value)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
