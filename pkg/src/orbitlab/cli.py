"""Command line entry point: ``lab run|enumerate|density|predict|report``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .enumeration import GammaSpec, Norm, enumerate_ball
from .harness import ExperimentConfig, emit, evaluate, load_report, run_experiment, start_from_json
from .limits import StartError, classify_start, sample_predicted
from .quadrature import QuadratureSpec, eval_w_infty, eval_w_P0, eval_w_theta0


class InputError(Exception):
    pass


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"{path}: {e}") from e


def _norm_arg(s: str) -> Norm:
    if s.startswith("{"):
        return Norm.from_json(json.loads(s))
    return Norm(s)


def _gamma_arg(s: str) -> GammaSpec:
    if s.startswith("{"):
        return GammaSpec.from_json(json.loads(s))
    return GammaSpec.from_json(s)


def _write(out: str | None, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def cmd_run(a) -> int:
    cfg = ExperimentConfig.from_json(_load_json(a.config), out_dir=a.out)
    if a.seed is not None:
        cfg.seed = a.seed
    report = run_experiment(cfg)
    out = cfg.out_dir or "out"
    code = emit(report, out)
    for row in report["rows"]:
        print(json.dumps({k: row[k] for k in ("T", "count", "ks_theta", "shape_discrepancy", "bins_filled")}))
    for name, ok in report["verdicts"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return code


def cmd_enumerate(a) -> int:
    ball = enumerate_ball(_gamma_arg(a.gamma), _norm_arg(a.norm), a.T)
    _write(a.out, json.dumps(ball.to_json()) + "\n")
    print(f"#Γ_T = {ball.count}", file=sys.stderr)
    return 0


CASE_ALIASES = {"nondeg": "P0", "deg-high": "infty", "deg-low": "theta0"}


def cmd_density(a) -> int:
    spec = QuadratureSpec(mc_samples=a.samples, seed=a.seed)
    norm = _norm_arg(a.norm)
    case = CASE_ALIASES.get(a.case, a.case)
    if case == "theta0":
        prof = eval_w_theta0(a.theta0, norm, a.grid, spec)
    else:
        g0 = np.eye(a.n + 1) if a.g0 is None else np.array(json.loads(a.g0), dtype=float)
        f = eval_w_P0 if case == "P0" else eval_w_infty
        prof = f(a.r, a.n, g0, norm, a.grid, spec)
    _write(a.out, json.dumps(prof.to_json()) + "\n")
    return 0


def cmd_predict(a) -> int:
    gamma = _gamma_arg(a.gamma)
    start = start_from_json(_load_json(a.start), gamma)
    law = classify_start(start, gamma, _norm_arg(a.norm))
    s = sample_predicted(law, a.N, a.seed)
    lines = []
    for i in range(a.N):
        rec = {}
        if s["theta"] is not None:
            rec["theta"] = float(s["theta"][i])
        else:
            rec["frame"] = law.profile.reps[int(s["rep"][i])].tolist()
        rec["fiber"] = None if s["fiber_x"] is None else {"x": float(s["fiber_x"][i]), "y": float(s["fiber_y"][i])}
        rec["packet_index"] = None if s["packet_index"] is None else int(s["packet_index"][i])
        lines.append(json.dumps(rec))
    _write(a.out, "\n".join(lines) + "\n")
    print(f"case {law.case}", file=sys.stderr)
    return 0


def cmd_report(a) -> int:
    try:
        report = load_report(a.dir)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(str(e)) from e
    verdicts = evaluate(report)
    for name, ok in verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if all(verdicts.values()) else 1


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("enumerate", help="list Γ_T")
    e.add_argument("--gamma", default="phi-sl2z")
    e.add_argument("--norm", default="frobenius")
    e.add_argument("--T", type=float, required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_enumerate)

    d = sub.add_parser("density", help="evaluate a limiting density profile")
    d.add_argument("--case", choices=("P0", "infty", "theta0", *CASE_ALIASES), default="P0")
    d.add_argument("--r", type=int, default=2)
    d.add_argument("--n", type=int, default=2)
    d.add_argument("--g0", help="JSON matrix; identity by default")
    d.add_argument("--theta0", type=float, default=0.0)
    d.add_argument("--norm", default="frobenius")
    d.add_argument("--grid", type=int, default=64)
    d.add_argument("--samples", type=int, default=20000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_density)

    q = sub.add_parser("predict", help="sample the predicted limit law")
    q.add_argument("--start", required=True)
    q.add_argument("--gamma", default="phi-sl2z")
    q.add_argument("--norm", default="frobenius")
    q.add_argument("--N", type=int, default=1000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_predict)

    rep = sub.add_parser("report", help="re-evaluate thresholds of a finished run")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    a = parser().parse_args(argv)
    try:
        return a.func(a)
    except (InputError, StartError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
