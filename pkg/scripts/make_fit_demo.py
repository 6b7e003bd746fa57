"""Write noisy synthetic population curves and a matching fit problem JSON.

    python scripts/make_fit_demo.py out/fit_demo
    tlsszilard fit --config out/fit_demo/fit.json --out out/fit_demo/result
"""

import argparse
import json
from pathlib import Path

import numpy as np

from tlsszilard.config import csv_text, experiment_to_json
from tlsszilard.dynamics import run_deterministic
from tlsszilard.model import Experiment, Initialize, Monitor, Stabilize, SystemParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--noise", type=float, default=0.005)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(args.seed)
    params = SystemParams()
    t = np.linspace(2e-6, 1e-3, 500)
    datasets = []
    for init in "ge":
        exp = Experiment((Stabilize("e", 1000, 2e-6), Initialize(init), Monitor(50e-3, 2e-6)))
        p = run_deterministic(exp, params, t).p_q + args.noise * rng.standard_normal(t.size)
        name = f"stabe_n1000_init{init}.csv"
        (args.outdir / name).write_text(csv_text(
            {"t": t, "p_q": p, "stderr": np.full(t.size, args.noise)}, comment=None))
        datasets.append({"csv": name, "experiment": experiment_to_json(exp), "fit_window_us": 1000, "name": init})

    problem = {
        "free": ["a_khz", "b", "gamma_q_khz"],
        "bounds": {"a_khz": [0.1, 30], "b": [0.1, 3], "gamma_q_khz": [0, 50]},
        "datasets": datasets,
        "seed": 0,
        "restarts": 2,
    }
    (args.outdir / "fit.json").write_text(json.dumps(problem, indent=2) + "\n")
    print(f"wrote {len(datasets)} datasets and fit.json to {args.outdir}")


if __name__ == "__main__":
    main()
