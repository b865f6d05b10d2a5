"""Shape and angle statistics of the orthogonal-lattice preset far up the T ladder.

The preset ladder stops at T = 200; this extends it to see how fast the
shape histogram approaches the invariant one.
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from orbitlab.harness import ExperimentConfig, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ladder", type=float, nargs="+", default=[50, 100, 200, 400, 800, 1600])
    ap.add_argument("--bins", type=int, default=20)
    a = ap.parse_args()
    d = json.loads((ROOT / "presets" / "sargent-shapira.json").read_text())
    cfg = ExperimentConfig.from_json(d)
    stats = [{"kind": "ks_theta"}, {"kind": "shape_bins", "bins": a.bins}]
    cfg = replace(cfg, T_ladder=a.ladder, stats=stats, thresholds={})
    rep = run_experiment(cfg)
    print(f"{'T':>7} {'points':>7} {'ks_theta':>9} {'shape_tv':>9} {'filled':>7}")
    for r in rep["rows"]:
        print(f"{r['T']:7g} {r['count']:7d} {r['ks_theta']:9.4f} {r['shape_discrepancy']:9.4f} {r['bins_filled']:7.2f}")


if __name__ == "__main__":
    main()
