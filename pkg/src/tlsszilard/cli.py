"""Command-line runner: simulate, fit, thermo, flux.

Exit codes: 0 success, 2 configuration error, 3 runtime error. Errors are
reported as a single JSON object on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from tlsszilard import __version__
from tlsszilard.config import (
    MODE_ALIASES,
    PARAM_KEYS,
    ConfigError,
    RunConfig,
    canonical_json,
    csv_text,
    load_json,
    parse_experiment,
    parse_run_config,
    parse_system,
    parse_time,
    read_csv,
)
from tlsszilard.constants import H_OVER_KB
from tlsszilard.device import effective_junction, flux_partition, interference_condition
from tlsszilard.dynamics import default_grid, heat_extraction_curve, run_deterministic
from tlsszilard.estimator import extract_rates, moving_average, population_series
from tlsszilard.fitting import Dataset, FitProblem, fit
from tlsszilard.model import Monitor, SystemParams, population_to_temperature, thermal_population
from tlsszilard.thermo import carnot_cop, cop, entropy_split, internal_energy, measurement_entropy_reduction
from tlsszilard.trajectory import run_ensemble

log = logging.getLogger("tlsszilard")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
_KEY_TO_PARAM = {key: (name, scale) for name, (key, scale) in PARAM_KEYS.items()}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _check_writable(out: Path) -> None:
    probe = out
    while not probe.exists():
        if probe.parent == probe:
            break
        probe = probe.parent
    if probe.exists() and not probe.is_dir():
        raise ConfigError(f"output path {probe} is not a directory")
    if not os.access(probe, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")


def _write_all(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        tmp = out / f".{name}.tmp"
        with open(tmp, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, out / name)


def _manifest(config_json: dict, config_hash: str, files: dict[str, str], kind: str) -> str:
    body = {
        "command": kind,
        "config": config_json,
        "config_hash": config_hash,
        "version": __version__,
        "files": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(files.items())},
    }
    if "master_seed" in config_json:
        body["master_seed"] = config_json["master_seed"]
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


# --- simulate -------------------------------------------------------------

def _deterministic_files(cfg: RunConfig, tag: str) -> dict[str, str]:
    exp, params = cfg.experiment, cfg.system
    res = run_deterministic(exp, params, default_grid(exp, cfg.grid_points))
    cols = {"t": res.times, "p_q": res.p_q, "p_eq": res.p_eq,
            "gamma_up": res.gamma_up, "gamma_down": res.gamma_down}
    for j, k in enumerate(params.ladder.indices):
        cols[f"p_t_{int(k)}"] = res.p_t[:, j]
    zero = np.zeros_like(res.times)
    rates = {"t": res.times, "gamma_up": res.gamma_up, "gamma_up_err": zero,
             "gamma_down": res.gamma_down, "gamma_down_err": zero,
             "gamma_1": res.gamma_up + res.gamma_down, "p_eq": res.p_eq}
    return {"populations.csv": csv_text(cols, tag), "rates.csv": csv_text(rates, tag)}


def _stochastic_files(cfg: RunConfig, tag: str) -> dict[str, str]:
    exp = cfg.experiment
    monitors = [s for s in exp.steps if isinstance(s, Monitor)]
    if not monitors:
        raise ConfigError("stochastic mode needs at least one monitor step")
    t_rep = monitors[-1].t_rep
    ens = run_ensemble(exp, cfg.system, cfg.readout, cfg.master_seed, cfg.n_traj,
                       workers=cfg.workers, record_iq=cfg.write_traces)
    rates = moving_average(extract_rates(ens, t_rep), cfg.rate_window)
    t, p, err = population_series(ens)
    files = {
        "rates.csv": csv_text(rates.columns(), tag),
        "populations_stochastic.csv": csv_text({"t": t, "p_q": p, "stderr": err}, tag),
    }
    if cfg.write_traces:
        n_s = ens[0].times.size
        files["traces.csv"] = csv_text({
            "traj_id": np.repeat(np.arange(len(ens)), n_s),
            "strobe_index": np.tile(np.arange(n_s), len(ens)),
            "t": np.tile(ens[0].times, len(ens)),
            "assigned": np.concatenate([tr.assigned_states for tr in ens]),
            "I": np.concatenate([tr.iq_points[:, 0] for tr in ens]),
            "Q": np.concatenate([tr.iq_points[:, 1] for tr in ens]),
            "pi_fired": np.concatenate([tr.pi_pulse_fired for tr in ens]),
        }, tag)
    return files


def cmd_simulate(args) -> int:
    if args.config is None:
        raise ConfigError("simulate needs --config")
    raw = load_json(args.config)
    if isinstance(raw, dict) and "config" in raw and "config_hash" in raw:
        raw = raw["config"]
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.trajectories is not None:
        raw["n_traj"] = args.trajectories
    if args.mode is not None:
        raw["mode"] = MODE_ALIASES[args.mode]
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.out is not None:
        raw["outputs"] = args.out
    cfg = parse_run_config(raw)
    out = Path(cfg.outputs)
    _check_writable(out)

    h = cfg.hash()
    tag = f"config_hash={h}"
    files: dict[str, str] = {}
    if cfg.mode in ("deterministic", "both"):
        files.update(_deterministic_files(cfg, tag))
        if cfg.mode == "both":
            files["rates_deterministic.csv"] = files.pop("rates.csv")
    if cfg.mode in ("stochastic", "both"):
        files.update(_stochastic_files(cfg, tag))
    files["manifest.json"] = _manifest(cfg.result_json(), h, files, "simulate")
    _write_all(out, files)
    print(json.dumps({"status": "ok", "outputs": str(out), "config_hash": h, "files": sorted(files)}))
    return EXIT_OK


# --- fit ------------------------------------------------------------------

def _param_names(keys, where):
    out = []
    for k in keys:
        if k not in _KEY_TO_PARAM:
            raise ConfigError(f"{where}: unknown parameter {k!r}")
        out.append(_KEY_TO_PARAM[k][0])
    return out


def build_fit_problem(spec: dict, root: Path, seed: int | None = None) -> FitProblem:
    if not isinstance(spec, dict):
        raise ConfigError("fit problem must be a JSON object")
    allowed = {"system", "free", "bounds", "datasets", "seed", "restarts", "max_iter", "outputs"}
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"fit problem: unknown field(s) {sorted(extra)}")
    base = parse_system(spec.get("system", {}))
    free = _param_names(spec.get("free", ["a_khz", "b", "gamma_q_khz"]), "free")
    bounds = {}
    for k, v in spec.get("bounds", {}).items():
        name, scale = _KEY_TO_PARAM.get(k, (None, None))
        if name is None:
            raise ConfigError(f"bounds: unknown parameter {k!r}")
        try:
            bounds[name] = (float(v[0]) * scale, float(v[1]) * scale)
        except (TypeError, ValueError, IndexError) as err:
            raise ConfigError(f"bounds[{k}] must be [lo, hi]") from err
    sets = spec.get("datasets")
    if not isinstance(sets, list) or not sets:
        raise ConfigError("fit problem needs a non-empty 'datasets' list")
    datasets = []
    for i, d in enumerate(sets):
        where = f"datasets[{i}]"
        if not isinstance(d, dict) or "csv" not in d or "experiment" not in d:
            raise ConfigError(f"{where}: needs 'csv' and 'experiment'")
        path = Path(d["csv"])
        if not path.is_absolute():
            path = root / path
        cols = read_csv(path)
        if "t" not in cols or "p_q" not in cols:
            raise ConfigError(f"{path}: needs columns t and p_q")
        try:
            datasets.append(Dataset(
                experiment=parse_experiment(d["experiment"]),
                times=cols["t"], p_q=cols["p_q"], stderr=cols.get("stderr"),
                fit_window=parse_time(d, "fit_window", where, required=False, default=1e-3),
                name=str(d.get("name", path.stem)),
            ))
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"{where}: {err}") from err
    try:
        return FitProblem(datasets, tuple(free), base, bounds,
                          seed=int(spec.get("seed", 0) if seed is None else seed),
                          restarts=int(spec.get("restarts", 3)), max_iter=int(spec.get("max_iter", 4000)))
    except ValueError as err:
        raise ConfigError(f"fit problem: {err}") from err


def _to_config_units(values: dict) -> dict:
    out = {}
    for name, v in values.items():
        key, scale = PARAM_KEYS[name]
        out[key] = v / scale
    return out


def cmd_fit(args) -> int:
    if args.config is None:
        raise ConfigError("fit needs --config")
    spec = load_json(args.config)
    problem = build_fit_problem(spec, Path(args.config).resolve().parent, args.seed)
    out = Path(args.out if args.out is not None else spec.get("outputs", "fit_out"))
    _check_writable(out)
    h = hashlib.sha256(canonical_json(spec).encode()).hexdigest()
    res = fit(problem)
    body = res.to_json()
    body["values"] = _to_config_units(res.values)
    body["uncertainties"] = _to_config_units(res.uncertainties)
    body["config_hash"] = h
    files = {"fit_result.json": json.dumps(body, indent=2, sort_keys=True) + "\n"}
    files["manifest.json"] = _manifest(spec, h, files, "fit")
    _write_all(out, files)
    print(json.dumps({"status": "ok", "outputs": str(out), "config_hash": h,
                      "residual_norm": res.residual_norm, "values": body["values"]}))
    return EXIT_OK


# --- thermo ---------------------------------------------------------------

def thermo_report(p_th: float | None, temperature: float | None, f01: float, d: int,
                  t_a: list[float], heat: bool = False) -> dict:
    if (p_th is None) == (temperature is None):
        raise ConfigError("give exactly one of --p-th and --temperature-mk")
    if p_th is not None:
        if not 0 < p_th < 0.5:
            raise ConfigError(f"--p-th must lie in (0, 0.5), got {p_th}")
        temperature = population_to_temperature(p_th, f01)
    if not temperature > 0 or not f01 > 0:
        raise ConfigError("temperature and frequency must be positive")
    if d < 1:
        raise ConfigError(f"--d must be >= 1, got {d}")
    beta_eps = H_OVER_KB * f01 / temperature
    s_rev, s_irr, s = entropy_split(d, beta_eps)
    ratio = s_irr / s_rev
    rows = []
    for ta in t_a:
        ta_k = ta * 1e-3
        if ta_k > temperature:
            rows.append({"t_a_mk": ta, "cop": cop(ta_k, temperature, ratio),
                         "carnot": carnot_cop(ta_k, temperature)})
        else:
            rows.append({"t_a_mk": ta, "cop": None, "carnot": None})
    report = {
        "temperature_mk": temperature * 1e3,
        "p_th": thermal_population(f01, temperature),
        "d": d,
        "beta_eps": beta_eps,
        "delta_u_kbt": float(beta_eps * internal_energy(d, beta_eps)),
        "delta_s_kb": float(measurement_entropy_reduction(d, beta_eps)),
        "s_rev_kb": s_rev,
        "s_irr_kb": s_irr,
        "irr_rev_ratio": ratio,
        "cop_table": rows,
    }
    if heat:
        hc = heat_extraction_curve(SystemParams().with_values(f01=f01), temperature)
        report["heat_peak_kbt"] = hc.peak
        report["heat_peak_time_us"] = hc.t_peak * 1e6
        report["heat_to_energy_ratio"] = hc.peak / report["delta_u_kbt"]
    return report


def cmd_thermo(args) -> int:
    rep = thermo_report(args.p_th, args.temperature_mk, args.f01_ghz * 1e9, args.d, args.t_a_mk, args.heat)
    if args.json:
        print(json.dumps(rep, sort_keys=True))
        return EXIT_OK
    print(f"T_R = {rep['temperature_mk']:.4g} mK (p_th = {rep['p_th']:.4g}, d = {rep['d']}, "
          f"beta*eps = {rep['beta_eps']:.4g})")
    print(f"Delta U = {rep['delta_u_kbt']:.4g} k_B T")
    print(f"Delta S = {rep['delta_s_kb']:.4g} k_B")
    print(f"S_rev = {rep['s_rev_kb']:.4g} k_B, S_irr = {rep['s_irr_kb']:.4g} k_B, "
          f"S_irr/S_rev = {rep['irr_rev_ratio']:.4g}")
    if "heat_peak_kbt" in rep:
        print(f"peak reservoir heat = {rep['heat_peak_kbt']:.4g} k_B T at {rep['heat_peak_time_us']:.4g} us "
              f"({rep['heat_to_energy_ratio']:.3g} of Delta U)")
    print("T_A [mK]    COP         Carnot")
    for r in rep["cop_table"]:
        if r["cop"] is None:
            print(f"{r['t_a_mk']:<11.4g} n/a (T_A <= T_R)")
        else:
            print(f"{r['t_a_mk']:<11.4g} {r['cop']:<11.4g} {r['carnot']:.4g}")
    return EXIT_OK


# --- flux -----------------------------------------------------------------

def cmd_flux(args) -> int:
    if not args.v > 0:
        raise ConfigError(f"--v must be positive, got {args.v}")
    if args.bound < 1:
        raise ConfigError("--bound must be >= 1")
    phi_s, phi_l, phi_total = flux_partition(args.v, args.phi_ext)
    ok, witness = interference_condition(args.v, args.bound)
    rep = {"v": args.v, "phi_ext": args.phi_ext, "phi_s": phi_s, "phi_l": phi_l,
           "phi_l_plus_phi_s": phi_total, "condition_satisfiable": ok,
           "witness": None if witness is None else {"m": witness[0], "k": witness[1]}}
    if (args.ej1_ghz is None) != (args.ej2_ghz is None):
        raise ConfigError("give both --ej1-ghz and --ej2-ghz")
    if args.ej1_ghz is not None:
        if args.ej1_ghz < 0 or args.ej2_ghz < 0:
            raise ConfigError("Josephson energies must be non-negative")
        ej, off = effective_junction(args.ej1_ghz, args.ej2_ghz, 2 * math.pi * phi_s)
        rep["ej_eff_ghz"] = ej
        rep["phase_offset_rad"] = off
    if args.json:
        print(json.dumps(rep, sort_keys=True))
        return EXIT_OK
    print(f"V = {args.v:g}, phi_ext = {args.phi_ext:g} Phi_0")
    print(f"phi_s = {phi_s:.6g} Phi_0, phi_l = {phi_l:.6g} Phi_0, phi_l + phi_s = {phi_total:.6g} Phi_0")
    if "ej_eff_ghz" in rep:
        print(f"E_J_eff = {rep['ej_eff_ghz']:.6g} GHz (phase offset {rep['phase_offset_rad']:.4g} rad)")
    if ok:
        print(f"interference condition satisfiable: V = (2k-1)/(2m) with m = {witness[0]}, k = {witness[1]}")
    else:
        print(f"interference condition not satisfiable for V = {args.v:g} (searched 1 <= m <= {args.bound})")
    return EXIT_OK


# --- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tlsszilard", description=__doc__.splitlines()[0], allow_abbrev=False)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a protocol deterministically and/or stochastically")
    s.add_argument("--config", required=True, help="run config or manifest JSON")
    s.add_argument("--out", help="output directory (overrides config)")
    s.add_argument("--seed", type=int, help="master seed (overrides config)")
    s.add_argument("--trajectories", type=int, help="number of trajectories (overrides config)")
    s.add_argument("--mode", choices=sorted(MODE_ALIASES), help="det, stoch or both")
    s.add_argument("--workers", type=int, help="trajectory worker threads")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit model parameters to population CSVs")
    f.add_argument("--config", required=True, help="fit problem JSON")
    f.add_argument("--out", help="output directory")
    f.add_argument("--seed", type=int, help="restart seed (overrides problem)")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("thermo", help="engine energy/entropy bookkeeping and COP table")
    t.add_argument("--p-th", type=float, help="thermal excited population")
    t.add_argument("--temperature-mk", type=float, help="reservoir temperature in mK")
    t.add_argument("--f01-ghz", type=float, default=1.2)
    t.add_argument("--d", type=int, default=1, help="excited-manifold degeneracy")
    t.add_argument("--t-a-mk", type=float, nargs="+", default=[30.0, 50.0, 100.0, 300.0],
                   help="hot-bath temperatures for the COP table")
    t.add_argument("--heat", action="store_true", help="also compute the reservoir heat peak")
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_thermo)

    x = sub.add_parser("flux", help="flux partition and interference condition")
    x.add_argument("--v", type=float, default=50.0, help="loop-area ratio")
    x.add_argument("--phi-ext", type=float, default=21.48, help="applied flux in flux quanta")
    x.add_argument("--bound", type=int, default=1000, help="search bound for m and k")
    x.add_argument("--ej1-ghz", type=float)
    x.add_argument("--ej2-ghz", type=float)
    x.add_argument("--json", action="store_true")
    x.set_defaults(func=cmd_flux)
    return p


def _error(kind: str, code: int, err: BaseException) -> int:
    print(json.dumps({"status": "error", "kind": kind, "exit_code": code,
                      "type": type(err).__name__, "message": str(err)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as err:
        return _error("config", EXIT_CONFIG, err)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        return _error("config", EXIT_CONFIG, err)
    except Exception as err:  # noqa: BLE001 - every other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        return _error("runtime", EXIT_RUNTIME, err)


if __name__ == "__main__":
    sys.exit(main())
