"""JSON run configurations and CSV/JSON output helpers.

Config fields carry their unit in the name (``a_khz``, ``t_rep_us``,
``duration_ms``). Here "kHz" on a rate means 10^3 s^-1.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tlsszilard.model import (
    Experiment,
    FreeDecay,
    Initialize,
    LadderParams,
    Monitor,
    PiPulseTrain,
    PopulationState,
    QubitParams,
    Stabilize,
    SystemParams,
    Wait,
    thermal_population,
)
from tlsszilard.trajectory import ReadoutModel


class ConfigError(ValueError):
    pass


# internal parameter -> (config key, scale to SI)
PARAM_KEYS = {
    "f01": ("f01_ghz", 1e9),
    "gamma_q": ("gamma_q_khz", 1e3),
    "p_th": ("p_th", 1.0),
    "a": ("a_khz", 1e3),
    "b": ("b", 1.0),
    "c": ("c", 1.0),
    "n_tls": ("n_tls", 1),
    "gamma_t": ("gamma_t_per_s", 1.0),
}
_TIME_UNITS = {"_s": 1.0, "_ms": 1e-3, "_us": 1e-6}
MODES = ("deterministic", "stochastic", "both")
MODE_ALIASES = {"det": "deterministic", "stoch": "stochastic", "both": "both"}


def _take(d: dict, key: str, where: str, default=None, required=False):
    if key in d:
        return d[key]
    if required:
        raise ConfigError(f"{where}: missing field {key!r}")
    return default


def _reject_unknown(d: dict, allowed, where: str) -> None:
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")


def parse_time(d: dict, base: str, where: str, required=True, default=None) -> float:
    hits = [(base + sfx, scale) for sfx, scale in _TIME_UNITS.items() if base + sfx in d]
    if len(hits) > 1:
        raise ConfigError(f"{where}: give {base} in exactly one unit")
    if not hits:
        if required:
            raise ConfigError(f"{where}: missing {base}_s/_ms/_us")
        return default
    key, scale = hits[0]
    v = d[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ConfigError(f"{where}: {key} must be a finite number")
    return float(v) * scale


def _time_keys(base: str) -> list[str]:
    return [base + s for s in _TIME_UNITS]


def parse_system(d: dict) -> SystemParams:
    where = "system"
    if not isinstance(d, dict):
        raise ConfigError("system must be an object")
    _reject_unknown(d, [k for k, _ in PARAM_KEYS.values()] + ["temperature_mk"], where)
    vals = {}
    for name, (key, scale) in PARAM_KEYS.items():
        if key in d:
            v = d[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"{where}: {key} must be a number")
            vals[name] = int(v) if name == "n_tls" else float(v) * scale
    if "temperature_mk" in d:
        if "p_th" in d:
            raise ConfigError(f"{where}: give either p_th or temperature_mk")
        try:
            vals["p_th"] = thermal_population(vals.get("f01", QubitParams().f01), float(d["temperature_mk"]) * 1e-3)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"{where}: {err}") from err
    try:
        return SystemParams().with_values(**vals)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def system_to_json(p: SystemParams) -> dict:
    flat = p.flat()
    return {key: (flat[name] if scale == 1 else flat[name] / scale) for name, (key, scale) in PARAM_KEYS.items()}


def parse_readout(d: dict) -> ReadoutModel:
    where = "readout"
    if not isinstance(d, dict):
        raise ConfigError("readout must be an object")
    _reject_unknown(d, ["separation_sigma", "demolition_down", "demolition_up", "centers"], where)
    kw = {}
    for k in ("demolition_down", "demolition_up", "centers"):
        if k in d:
            kw[k] = d[k]
    if "separation_sigma" in d:
        sep = d["separation_sigma"]
        kw["separation_sigma"] = math.inf if sep in (None, "inf") else sep
    try:
        return ReadoutModel(**kw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def readout_to_json(r: ReadoutModel) -> dict:
    return {
        "separation_sigma": "inf" if math.isinf(r.separation_sigma) else r.separation_sigma,
        "demolition_down": r.demolition_down,
        "demolition_up": r.demolition_up,
        "centers": [list(c) for c in r.centers],
    }


def parse_step(d: dict, i: int):
    where = f"experiment.steps[{i}]"
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"{where}: each step needs a 'kind'")
    kind = d["kind"]
    try:
        if kind == "stabilize":
            _reject_unknown(d, ["kind", "target", "n"] + _time_keys("t_rep"), where)
            return Stabilize(_take(d, "target", where, required=True), int(_take(d, "n", where, required=True)),
                             parse_time(d, "t_rep", where, required=False, default=2e-6))
        if kind == "initialize":
            _reject_unknown(d, ["kind", "target"], where)
            return Initialize(_take(d, "target", where, required=True))
        if kind == "monitor":
            _reject_unknown(d, ["kind"] + _time_keys("duration") + _time_keys("t_rep"), where)
            return Monitor(parse_time(d, "duration", where), parse_time(d, "t_rep", where, required=False, default=2e-6))
        if kind == "pi_pulse_train":
            _reject_unknown(d, ["kind", "n_pi"] + _time_keys("t_pi"), where)
            return PiPulseTrain(int(_take(d, "n_pi", where, required=True)), parse_time(d, "t_pi", where))
        if kind == "free_decay":
            _reject_unknown(d, ["kind"] + _time_keys("duration"), where)
            return FreeDecay(parse_time(d, "duration", where))
        if kind == "wait":
            _reject_unknown(d, ["kind"] + _time_keys("duration"), where)
            return Wait(parse_time(d, "duration", where))
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"{where}: {err}") from err
    raise ConfigError(f"{where}: unknown step kind {kind!r}")


def step_to_json(s) -> dict:
    if isinstance(s, Stabilize):
        return {"kind": "stabilize", "target": s.target, "n": s.n, "t_rep_s": s.t_rep}
    if isinstance(s, Initialize):
        return {"kind": "initialize", "target": s.target}
    if isinstance(s, Monitor):
        return {"kind": "monitor", "duration_s": s.duration, "t_rep_s": s.t_rep}
    if isinstance(s, PiPulseTrain):
        return {"kind": "pi_pulse_train", "n_pi": s.n_pi, "t_pi_s": s.t_pi}
    if isinstance(s, FreeDecay):
        return {"kind": "free_decay", "duration_s": s.duration}
    if isinstance(s, Wait):
        return {"kind": "wait", "duration_s": s.duration}
    raise TypeError(s)


def parse_experiment(d: dict) -> Experiment:
    where = "experiment"
    if not isinstance(d, dict):
        raise ConfigError("experiment must be an object")
    _reject_unknown(d, ["steps", "initial_state"], where)
    steps = _take(d, "steps", where, required=True)
    if not isinstance(steps, list) or not steps:
        raise ConfigError(f"{where}: steps must be a non-empty list")
    init = d.get("initial_state", "thermal")
    if isinstance(init, dict):
        try:
            init = PopulationState(float(init["p_q"]), np.asarray(init["p_t"], dtype=float))
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"{where}.initial_state: {err}") from err
    try:
        return Experiment(tuple(parse_step(s, i) for i, s in enumerate(steps)), init)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def experiment_to_json(e: Experiment) -> dict:
    init = e.initial_state
    if isinstance(init, PopulationState):
        init = {"p_q": init.p_q, "p_t": init.p_t.tolist()}
    return {"initial_state": init, "steps": [step_to_json(s) for s in e.steps]}


@dataclass
class RunConfig:
    system: SystemParams = field(default_factory=SystemParams)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    experiment: Experiment = field(default_factory=lambda: Experiment(
        (Stabilize("e", 10_000), Initialize("g"), Monitor(50e-3))))
    n_traj: int = 100
    master_seed: int = 0
    outputs: str = "out"
    mode: str = "deterministic"
    workers: int = 1
    grid_points: int = 400
    rate_window: int = 5
    write_traces: bool = True

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode != "deterministic" and self.n_traj < 1:
            raise ConfigError("n_traj must be >= 1 in stochastic modes")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if self.rate_window < 1 or self.rate_window % 2 == 0:
            raise ConfigError("rate_window must be an odd positive integer")

    def to_json(self) -> dict:
        return {
            "system": system_to_json(self.system),
            "readout": readout_to_json(self.readout),
            "experiment": experiment_to_json(self.experiment),
            "n_traj": self.n_traj,
            "master_seed": self.master_seed,
            "outputs": self.outputs,
            "mode": self.mode,
            "workers": self.workers,
            "grid_points": self.grid_points,
            "rate_window": self.rate_window,
            "write_traces": self.write_traces,
        }

    def result_json(self) -> dict:
        """Resolved config minus execution details (worker count, output directory)."""
        d = self.to_json()
        d.pop("workers")
        d.pop("outputs")
        return d

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.result_json()).encode()).hexdigest()


_RUN_KEYS = ["system", "readout", "experiment", "n_traj", "master_seed", "outputs", "mode", "workers",
             "grid_points", "rate_window", "write_traces"]


def _int(d, key, default):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer")
    return v


def parse_run_config(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in d and "config_hash" in d:
        # a manifest from an earlier run
        d = d["config"]
    _reject_unknown(d, _RUN_KEYS, "config")
    mode = d.get("mode", "deterministic")
    cfg = RunConfig(
        system=parse_system(d.get("system", {})),
        readout=parse_readout(d.get("readout", {})),
        experiment=parse_experiment(d["experiment"]) if "experiment" in d else RunConfig().experiment,
        n_traj=_int(d, "n_traj", 100),
        master_seed=_int(d, "master_seed", 0),
        outputs=str(d.get("outputs", "out")),
        mode=MODE_ALIASES.get(mode, mode),
        workers=_int(d, "workers", 1),
        grid_points=_int(d, "grid_points", 400),
        rate_window=_int(d, "rate_window", 5),
        write_traces=bool(d.get("write_traces", True)),
    )
    cfg.validate()
    return cfg


def load_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as err:
        raise ConfigError(f"file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err


def load_run_config(path) -> RunConfig:
    return parse_run_config(load_json(path))


# --- output helpers -------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fmt(x) -> str:
    """Shortest round-trip text for a number."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def csv_text(columns: dict, comment: str | None = None) -> str:
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = cols[0].shape[0] if cols else 0
    if any(c.shape[0] != n for c in cols):
        raise ValueError("CSV columns differ in length")
    text = [c.tolist() for c in cols]
    lines = [] if comment is None else [f"# {comment}"]
    lines.append(",".join(names))
    for row in zip(*text):
        lines.append(",".join(map(fmt, row)))
    return "\n".join(lines) + "\n"


def read_csv(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"dataset file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"{path}: empty CSV")
    header = lines[0].split(",")
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err
    data = data.reshape(-1, len(header))
    return {h: data[:, i] for i, h in enumerate(header)}


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
