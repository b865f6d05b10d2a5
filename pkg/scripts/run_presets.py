"""Run every preset under presets/ and write reports to out/<name>/."""

import argparse
import json
import sys
from pathlib import Path

from orbitlab.harness import ExperimentConfig, emit, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(ROOT / "out"))
    ap.add_argument("names", nargs="*", help="preset names (default: all)")
    a = ap.parse_args()
    paths = sorted((ROOT / "presets").glob("*.json"))
    if a.names:
        paths = [p for p in paths if p.stem in a.names]
    worst = 0
    for path in paths:
        cfg = ExperimentConfig.from_json(json.loads(path.read_text()))
        report = run_experiment(cfg)
        code = emit(report, Path(a.out) / path.stem)
        worst = max(worst, code)
        top = report["rows"][-1] if report["rows"] else {}
        failed = [k for k, v in report["verdicts"].items() if not v]
        print(f"{path.stem:20s} {'pass' if code == 0 else 'FAIL'}  T={top.get('T')} points={top.get('count')} "
              f"ks={top.get('ks_theta')} shape={top.get('shape_discrepancy')} {' '.join(failed)}")
    return worst


if __name__ == "__main__":
    sys.exit(main())
