"""Write one run config per (N, initial state, stabilization target) combination.

Usage: python scripts/make_protocol_grid.py [output_dir]
"""

import itertools
import json
import sys
from pathlib import Path

BASE = Path(__file__).resolve().parents[1] / "configs" / "default.json"


def main(out_dir: str = "configs/protocol_grid") -> None:
    base = json.loads(BASE.read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for n, init, stab in itertools.product((10, 1000, 10000), "ge", "ge"):
        cfg = json.loads(json.dumps(base))
        cfg["experiment"]["steps"] = [
            {"kind": "stabilize", "target": stab, "n": n, "t_rep_us": 2},
            {"kind": "initialize", "target": init},
            {"kind": "monitor", "duration_ms": 50, "t_rep_us": 2},
        ]
        name = f"stab{stab}_n{n}_init{init}"
        cfg["outputs"] = f"out/{name}"
        (out / f"{name}.json").write_text(json.dumps(cfg, indent=2) + "\n")
        print(out / f"{name}.json")


if __name__ == "__main__":
    main(*sys.argv[1:])
