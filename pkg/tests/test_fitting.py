import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlsszilard.dynamics import run_deterministic
from tlsszilard.fitting import Dataset, FitError, FitProblem, fit, profile_parameter, residuals
from tlsszilard.model import Experiment, Initialize, Monitor, Stabilize, SystemParams

TRUTH = SystemParams()
BOUNDS = {"a": (1e2, 3e4), "b": (0.1, 3.0), "gamma_q": (0.0, 5e4)}
START = TRUTH.with_values(a=3e3, b=0.8, gamma_q=20e3)


def protocol(init, n=1000, monitor=1e-3):
    return Experiment((Stabilize("e", n, 2e-6), Initialize(init), Monitor(monitor, 2e-6)))


def make_datasets(noise=0.0, seed=0, truth=TRUTH, n_points=500):
    rng = np.random.default_rng(seed)
    t = np.linspace(2e-6, 1e-3, n_points)
    out = []
    for init in "ge":
        exp = protocol(init)
        p = run_deterministic(exp, truth, t).p_q
        err = None
        if noise:
            p = p + noise * rng.standard_normal(t.size)
            err = np.full(t.size, noise)
        out.append(Dataset(exp, t, p, err, fit_window=1e-3, name=init))
    return out


@pytest.fixture(scope="module")
def clean():
    return make_datasets()


@pytest.fixture(scope="module")
def noisy():
    return make_datasets(noise=0.005, seed=1)


def test_truth_has_zero_residual(clean):
    prob = FitProblem(clean, base=TRUTH, bounds=BOUNDS)
    assert np.linalg.norm(residuals(prob, prob.initial_vector())) < 1e-8


def test_perturbing_amplitude_increases_residual(clean):
    prob = FitProblem(clean, base=TRUTH, bounds=BOUNDS)
    x = prob.initial_vector()
    base = np.linalg.norm(residuals(prob, x))
    x[0] *= 1.1
    assert np.linalg.norm(residuals(prob, x)) > base


def test_no_free_parameters_only_evaluates(clean):
    res = fit(FitProblem(clean, free_params=(), base=START))
    assert res.values == {} and res.iterations == 0 and res.n_evaluations == 1
    assert res.residual_norm == res.initial_residual_norm > 0


def test_round_trip_recovery(noisy):
    res = fit(FitProblem(noisy, base=START, bounds=BOUNDS))
    assert res.values["a"] == pytest.approx(5.0e3, rel=0.05)
    assert res.values["b"] == pytest.approx(0.48, rel=0.05)
    assert res.values["gamma_q"] == pytest.approx(10.9e3, rel=0.10)
    assert res.residual_norm < res.initial_residual_norm
    # reduced chi-square near one for correctly weighted data
    assert res.residual_norm**2 / (1000 - 3) == pytest.approx(1.0, abs=0.15)
    assert all(np.isfinite(v) and v > 0 for v in res.uncertainties.values())


def test_fit_is_deterministic(clean):
    prob = FitProblem(clean[:1], free_params=("a",), base=START, bounds=BOUNDS, restarts=1)
    a, b = fit(prob), fit(prob)
    assert a.values == b.values and a.residual_norm == b.residual_norm


@settings(max_examples=5)
@given(a0=st.floats(1e2, 3e4), b0=st.floats(0.1, 3.0))
def test_fit_stays_in_bounds_and_never_worsens(a0, b0):
    ds = make_datasets(n_points=40)[:1]
    bounds = {"a": (1e2, 3e4), "b": (0.1, 3.0)}
    prob = FitProblem(ds, free_params=("a", "b"), base=TRUTH.with_values(a=a0, b=b0), bounds=bounds,
                      restarts=1, max_iter=300)
    res = fit(prob)
    for k, (lo, hi) in bounds.items():
        assert lo <= res.values[k] <= hi
    assert res.residual_norm <= res.initial_residual_norm


def test_profile_of_amplitude_minimised_at_truth(clean):
    prob = FitProblem(clean, free_params=("a", "b"), base=TRUTH, bounds=BOUNDS, restarts=0)
    grid = [4.0e3, 4.5e3, 5.0e3, 5.5e3, 6.0e3]
    prof = profile_parameter(prob, "a", grid)
    assert min(prof, key=lambda r: r[1])[0] == 5.0e3


def test_profile_of_offset_minimised_at_generating_value(clean):
    prob = FitProblem(clean, free_params=("c",), base=TRUTH)
    prof = profile_parameter(prob, "c", [0.0, 0.1, 0.25, 0.5])
    norms = [r[1] for r in prof]
    assert np.argmin(norms) == 0
    assert np.all(np.diff(norms) > 0)


def test_no_coupling_cannot_explain_data(clean):
    prob = FitProblem(clean, free_params=("gamma_q",), base=TRUTH.with_values(a=1e2), bounds=BOUNDS)
    res = fit(prob)
    assert res.residual_norm > 100 * max(np.linalg.norm(residuals(FitProblem(clean, base=TRUTH), [5e3, 0.48, 10.9e3])), 1e-6)


def test_problem_validation(clean):
    with pytest.raises(ValueError):
        FitProblem([], base=TRUTH)
    with pytest.raises(ValueError):
        FitProblem(clean, free_params=("n_tls",))
    with pytest.raises(ValueError):
        FitProblem(clean, bounds={"a": (2.0, 1.0)})
    with pytest.raises(ValueError):
        Dataset(protocol("g"), [2e-3, 3e-3], [0.1, 0.2], fit_window=1e-3)
    with pytest.raises(ValueError):
        fit(FitProblem(clean, base=TRUTH.with_values(a=2e5)))


def test_model_failure_is_reported(clean):
    prob = FitProblem(clean, base=TRUTH, bounds=BOUNDS)
    with pytest.raises(ValueError):
        residuals(prob, [1e9, 0.5, 1e4])
    with pytest.raises(FitError):
        residuals(FitProblem(clean, free_params=("b",), base=TRUTH, bounds={"b": (0.0, 1.0)}), [0.0])


def test_result_serialises(noisy):
    res = fit(FitProblem(noisy[:1], free_params=("gamma_q",), base=TRUTH, bounds=BOUNDS, restarts=0))
    js = res.to_json()
    assert set(js["values"]) == {"gamma_q"}
    assert js["converged"] in (True, False)
