"""Print the headline model numbers: protocol equilibria, heat curve, T1 estimator trend.

    python scripts/reproduce_numbers.py [--trajectories 4000] [--workers 4]
"""

import argparse

import numpy as np

from tlsszilard.dynamics import heat_extraction_curve, run_deterministic
from tlsszilard.estimator import fit_exponential_t1, jump_t1
from tlsszilard.model import (
    Experiment,
    FreeDecay,
    Initialize,
    Monitor,
    PiPulseTrain,
    Stabilize,
    SystemParams,
    population_to_temperature,
)
from tlsszilard.thermo import cycle_summary
from tlsszilard.trajectory import ReadoutModel, run_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trajectories", type=int, default=4000)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    params = SystemParams()
    print(f"Gamma_1 = {params.gamma_1 / 1e3:.3f} kHz (T1 = {1e6 / params.gamma_1:.2f} us)")

    for target in "eg":
        exp = Experiment((Stabilize(target, 10_000, 2e-6), Initialize("g"), Monitor(50e-3, 2e-6)))
        p_eq = run_deterministic(exp, params, [0.0]).p_eq[0]
        temp = population_to_temperature(p_eq, params.qubit.f01) * 1e3
        print(f"Stabilize({target}) x 1e4: p_eq = {p_eq:.4f}, T = {temp:.2f} mK")

    hc = heat_extraction_curve(params, 28.3e-3)
    du = cycle_summary(params, 50e-3, 28.3e-3).delta_u
    print(f"heat extraction peak {hc.peak:.4f} k_BT at {hc.t_peak * 1e6:.1f} us "
          f"(first-cycle dU {du:.4f}, ratio {hc.peak / du:.3f})")

    decay = Experiment((PiPulseTrain(1, 0.0), FreeDecay(1e-3)))
    t = np.linspace(0, 20e-6, 41)
    fitted = fit_exponential_t1(t, run_deterministic(decay, params, t).p_q, 20e-6, params.qubit.p_th)[0]
    print(f"20 us window exponential fit: T1 = {fitted * 1e6:.2f} us")
    readout = ReadoutModel(demolition_down=0.04)
    for t_rep in (2e-6, 5e-6, 10e-6, 20e-6):
        exp = Experiment((PiPulseTrain(1, 0.0), Monitor(200e-6, t_rep)))
        ens = run_ensemble(exp, params, readout, 10 + int(round(t_rep * 1e6)), args.trajectories,
                           record_iq=False, workers=args.workers)
        t1, err = jump_t1(ens, t_rep)
        print(f"jump T1 at t_rep = {t_rep * 1e6:4.0f} us: {t1 * 1e6:.2f} +- {err * 1e6:.2f} us")


if __name__ == "__main__":
    main()
