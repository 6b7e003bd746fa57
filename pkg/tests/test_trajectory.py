import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tlsszilard.dynamics import run_deterministic
from tlsszilard.estimator import extract_rates, population_series, pooled_rates
from tlsszilard.model import (
    Experiment,
    Initialize,
    Monitor,
    PiPulseTrain,
    PopulationState,
    Stabilize,
    SystemParams,
    Wait,
)
from tlsszilard.trajectory import (
    KIND_MONITOR,
    KIND_STABILIZE,
    MicroState,
    ReadoutModel,
    compile_experiment,
    measure,
    run_ensemble,
    run_trajectory,
    step_ctmc,
)

# frozen from scripts/oracles.py
MISASSIGN_5_6_SIGMA = 0.002555130330427932
EXCHANGE_MEAN_Q = 0.7744058180470133   # one TLS, rate 3 kHz, 100 us, start (q=1, t=0)

QUIET = SystemParams().with_values(a=0.0, gamma_q=0.0, gamma_t=0.0, p_th=0.0)


def test_readout_model_validation():
    with pytest.raises(ValueError):
        ReadoutModel(separation_sigma=0.0)
    with pytest.raises(ValueError):
        ReadoutModel(demolition_down=1.0)
    assert ReadoutModel().sigma == pytest.approx(1 / 5.6)


def test_zero_rates_leave_state_unchanged():
    s = MicroState(1, np.array([1, 0, 1, 1, 0], np.int8))
    out = step_ctmc(s, QUIET.with_values(n_tls=5), 1.0, 0)
    assert out.qubit == 1
    np.testing.assert_array_equal(out.tls, s.tls)
    assert out.t == 1.0


def test_single_tls_exchange_closed_form():
    p = SystemParams().with_values(a=3e3, b=1.0, n_tls=1, gamma_q=0.0, gamma_t=0.0, p_th=0.0)
    exp = Experiment((Monitor(1e-4, 1e-4),), initial_state=PopulationState(1.0, np.zeros(1)))
    ens = run_ensemble(exp, p, ReadoutModel.perfect(), 7, 100_000, record_iq=False, workers=4)
    q = np.mean([tr.true_states[0] for tr in ens])
    assert abs(q - EXCHANGE_MEAN_Q) < 3 * math.sqrt(EXCHANGE_MEAN_Q * (1 - EXCHANGE_MEAN_Q) / len(ens))


def test_misassignment_rate_at_default_separation():
    n_strobes, n_traj = 5000, 100
    fractions = []
    for q0 in (0.0, 1.0):
        exp = Experiment((Monitor(n_strobes * 1e-6, 1e-6),), initial_state=PopulationState(q0, np.zeros(0)))
        ens = run_ensemble(exp, QUIET.with_values(n_tls=0), ReadoutModel(), 11, n_traj, record_iq=False)
        wrong = np.mean([np.mean(tr.assigned_states != tr.true_states) for tr in ens])
        fractions.append(wrong)
    total = np.mean(fractions)
    sigma = math.sqrt(MISASSIGN_5_6_SIGMA / (2 * n_strobes * n_traj))
    assert abs(total - MISASSIGN_5_6_SIGMA) < 3 * sigma


def test_single_shot_measure_matches_cloud():
    rng = np.random.default_rng(0)
    r = ReadoutModel()
    a, iq, post = measure(MicroState(1, np.zeros(0, np.int8)), r, rng)
    assert post.qubit == 1 and iq.shape == (2,)
    a, iq, post = measure(MicroState(0, np.zeros(0, np.int8)), ReadoutModel.perfect(), rng)
    assert a == 0 and np.array_equal(iq, r.centers[0])


def test_demolition_adds_decay_rate():
    readout = ReadoutModel(separation_sigma=math.inf, demolition_down=0.04)
    exp = Experiment((Initialize("e"), Monitor(2e-4, 2e-6)), initial_state=PopulationState(1.0, np.zeros(0)))
    ens = run_ensemble(exp, QUIET.with_values(n_tls=0), readout, 3, 2000, record_iq=False)
    rates = pooled_rates(ens, 2e-6, [0, np.inf])
    # an excited qubit survives each shot with probability 0.96
    assert rates.gamma_down[0] == pytest.approx(-math.log(0.96) / 2e-6, rel=0.1)
    assert rates.gamma_down[0] == pytest.approx(20e3, rel=0.1)


def test_perfect_readout_reports_true_state(params):
    exp = Experiment((Stabilize("e", 50), Initialize("g"), Monitor(2e-4)))
    tr = run_trajectory(exp, params, ReadoutModel.perfect(), 5)
    np.testing.assert_array_equal(tr.assigned_states, tr.true_states)


def test_feedback_fires_only_on_first_strobe_without_dynamics():
    exp = Experiment((Stabilize("g", 20),), initial_state=PopulationState(1.0, np.zeros(0)))
    tr = run_trajectory(exp, QUIET.with_values(n_tls=0), ReadoutModel.perfect(), 0)
    np.testing.assert_array_equal(tr.pi_pulse_fired, [1] + [0] * 19)


def test_program_layout():
    exp = Experiment((Stabilize("e", 3), Initialize("g"), Monitor(1e-5, 2e-6), PiPulseTrain(2, 1e-6)))
    prog = compile_experiment(exp)
    kinds = prog.strobes.kind
    assert np.count_nonzero(kinds == KIND_STABILIZE) == 3
    assert np.count_nonzero(kinds == KIND_MONITOR) == 5
    mon = prog.strobes.times[kinds == KIND_MONITOR] - prog.strobes.step_start[2]
    np.testing.assert_allclose(mon, 2e-6 * np.arange(1, 6))


def test_pi_probability_during_ground_stabilization_tracks_excitation_rate(params):
    t_rep = 2e-6
    exp = Experiment((Stabilize("g", 5000, t_rep),))
    ens = run_ensemble(exp, params, ReadoutModel.perfect(), 21, 2000, record_iq=False, workers=4)
    fired = np.stack([tr.pi_pulse_fired for tr in ens]).mean(axis=0)
    early, late = fired[1:200].mean(), fired[-1000:].mean()
    assert early > late
    # late rounds: P_pi = 1 - exp(-Gamma_up t_rep) with the clamped mean-field Gamma_up
    det = run_deterministic(Experiment((Stabilize("g", 5000, t_rep), Monitor(t_rep, t_rep))), params, [0.0])
    want = 1 - math.exp(-det.gamma_up[0] * t_rep)
    assert late == pytest.approx(want, rel=0.1)


def test_wait_restores_thermal_ensemble(params):
    exp = Experiment((Stabilize("e", 1000), Wait(50e-3), Monitor(2e-6)))
    ens = run_ensemble(exp, params, ReadoutModel.perfect(), 4, 20_000, record_iq=False, workers=4)
    p = np.mean([tr.true_states[-1] for tr in ens])
    p_th = params.qubit.p_th
    assert abs(p - p_th) < 3 * math.sqrt(p_th * (1 - p_th) / len(ens)) + 0.005


def test_ground_stabilization_fidelity(params):
    exp = Experiment((Stabilize("g", 10_000), Initialize("g"), Monitor(2e-6)))
    ens = run_ensemble(exp, params, ReadoutModel(), 8, 300, record_iq=False, workers=4)
    first = np.mean([tr.assigned_states[-1] for tr in ens])
    assert first < 0.02


def test_detailed_balance_without_coupling():
    p = SystemParams().with_values(a=0.0, n_tls=5, gamma_t=2e3, gamma_q=5e3)
    rng = np.random.default_rng(12)
    s = MicroState(1, np.ones(5, np.int8))
    occ = []
    for _ in range(4000):
        s = step_ctmc(s, p, 1e-3, rng)
        occ.append(np.concatenate(([s.qubit], s.tls)))
    occ = np.array(occ[100:])
    p_th = p.qubit.p_th
    np.testing.assert_allclose(occ.mean(axis=0), p_th, atol=4 * math.sqrt(p_th * (1 - p_th) / len(occ)))


def test_mean_field_exactness_for_free_decay(params):
    exp = Experiment((Initialize("e"), Monitor(200e-6, 2e-6)))
    ens = run_ensemble(exp, params, ReadoutModel.perfect(), 0, 10_000, record_iq=False, workers=4)
    t, p, _ = population_series(ens, use_true=True)
    d = run_deterministic(exp, params, t).p_q
    assert np.all(np.abs(p - d) <= 3 * np.sqrt(d * (1 - d) / len(ens)))


def test_same_seed_same_ensemble_any_worker_count(params):
    exp = Experiment((Stabilize("e", 200), Initialize("g"), Monitor(2e-4)))
    a = run_ensemble(exp, params, ReadoutModel(), 99, 40, workers=1)
    b = run_ensemble(exp, params, ReadoutModel(), 99, 40, workers=4, chunk=7)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.assigned_states, y.assigned_states)
        np.testing.assert_array_equal(x.iq_points, y.iq_points)
        np.testing.assert_array_equal(x.pi_pulse_fired, y.pi_pulse_fired)
    c = run_ensemble(exp, params, ReadoutModel(), 100, 40)
    assert any(not np.array_equal(x.iq_points, y.iq_points) for x, y in zip(a, c))


def test_trajectory_i_is_independent_of_ensemble_size(params):
    exp = Experiment((Initialize("e"), Monitor(1e-4)))
    small = run_ensemble(exp, params, ReadoutModel(), 5, 3)
    big = run_ensemble(exp, params, ReadoutModel(), 5, 10)
    for x, y in zip(small, big):
        np.testing.assert_array_equal(x.iq_points, y.iq_points)


def test_different_seeds_agree_statistically(params):
    exp = Experiment((Initialize("e"), Monitor(100e-6, 2e-6)))
    r = [pooled_rates(run_ensemble(exp, params, ReadoutModel(), s, 3000, record_iq=False), 2e-6, [0, np.inf])
         for s in (1, 2)]
    diff = abs(r[0].gamma_1[0] - r[1].gamma_1[0])
    assert diff < 3 * math.hypot(r[0].gamma_1_err[0], r[1].gamma_1_err[0])


def test_single_trajectory_ensemble(params):
    ens = run_ensemble(Experiment((Monitor(1e-5),)), params, ReadoutModel(), 0, 1)
    assert len(ens) == 1
    with pytest.raises(ValueError):
        run_ensemble(Experiment((Monitor(1e-5),)), params, ReadoutModel(), 0, 0)


@given(n=st.integers(1, 30), seed=st.integers(0, 2**63))
def test_traces_are_bits(n, seed):
    exp = Experiment((Stabilize("e", n), Initialize("g"), Monitor(n * 2e-6)))
    tr = run_trajectory(exp, SystemParams(), ReadoutModel(), seed)
    for arr in (tr.assigned_states, tr.true_states, tr.pi_pulse_fired):
        assert set(np.unique(arr)) <= {0, 1}
    assert len(tr) == 2 * n + 1


def test_rates_from_ensemble_have_expected_shape(params):
    exp = Experiment((Stabilize("e", 100), Initialize("g"), Monitor(1e-4)))
    ens = run_ensemble(exp, params, ReadoutModel(), 2, 50)
    rs = extract_rates(ens, 2e-6)
    assert rs.times.size == 49
