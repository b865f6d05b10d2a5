"""Acceptance criteria, one PASS/FAIL line each.

Run with pytest (lines are repeated in the terminal summary) or directly:
``python3 tests/test_acceptance.py``.
"""

import json
import sys
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import random_sl2  # noqa: E402
from test_geometry import _mp_a, _mp_g1_g2  # noqa: E402

from orbitlab.enumeration import GammaSpec, Norm, enumerate_ball, enumerate_ball_bfs, enumerate_ball_direct, growth_report  # noqa: E402
from orbitlab.geometry import (  # noqa: E402
    bases_infty,
    bases_zero,
    build_isogeny_phi,
    embed_K,
    make_a,
    make_d1_d2,
    make_delta_upsilon,
    make_g1_g2,
    make_k_theta,
    make_R1_R2,
    make_u,
    sl2_delta,
    sl2_kappa,
    sl2_upsilon,
    star,
)
from orbitlab.harness import ExperimentConfig, report_bytes, run_experiment  # noqa: E402
from orbitlab.lattices import canonical_class  # noqa: E402
from orbitlab.limits import classify_start, detect_special  # noqa: E402
from orbitlab.quadrature import (  # noqa: E402
    QuadratureSpec,
    bT_limit_check,
    brute_force_profile,
    eval_w_infty,
    eval_w_P0,
    eval_w_theta0,
    haar_sample_SO,
    normalized_volume_constant,
    vol_ball_mc,
    volume_constant,
)

PRESETS = Path(__file__).resolve().parent.parent / "presets"
PHI = GammaSpec()
FRO = Norm()
SEED = 20240611
LINES: list[str] = []


def record(number: int, title: str, checks: dict[str, bool], detail: str = "") -> bool:
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  [{detail}]"
    if failed:
        line += f"  failed: {', '.join(failed)}"
    LINES.append(line)
    print(line)
    return ok


def preset(name: str) -> ExperimentConfig:
    return ExperimentConfig.from_json(json.loads((PRESETS / f"{name}.json").read_text()))


def _int_invertible(rng, m):
    while True:
        y = rng.integers(-4, 5, (m, m)).astype(float)
        if abs(np.linalg.det(y)) > 0.5:
            return y


def criterion_1() -> bool:
    rng = np.random.default_rng(SEED)
    c = {}
    c["phi on delta, upsilon, kappa"] = all(
        np.abs(build_isogeny_phi(sl2_delta(s)) - make_a(s)).max() < 1e-9
        and np.abs(build_isogeny_phi(sl2_upsilon(s)) - make_u([s])).max() < 1e-9
        and np.abs(build_isogeny_phi(sl2_kappa(s / 2)) - make_k_theta(s)).max() < 1e-9
        for s in np.linspace(-2, 2, 9)
    )
    hom = []
    for _ in range(20):
        g, h = random_sl2(rng), random_sl2(rng)
        lhs = build_isogeny_phi(g @ h)
        hom.append(np.abs(lhs - build_isogeny_phi(g) @ build_isogeny_phi(h)).max() <= 1e-9 * max(1.0, np.abs(lhs).max()))
    c["phi homomorphism"] = all(hom)
    laws = []
    for _ in range(20):
        s, t = rng.uniform(-2, 2, 2)
        x, y = rng.normal(size=(2, 2))
        laws.append(np.allclose(make_a(s, 3) @ make_a(t, 3), make_a(s + t, 3), atol=1e-9, rtol=0))
        laws.append(np.allclose(make_u(x) @ make_u(y), make_u(x + y), atol=1e-9, rtol=0))
        laws.append(np.allclose(make_k_theta(s) @ make_k_theta(t), make_k_theta(s + t), atol=1e-9, rtol=0))
        g = embed_K(haar_sample_SO(3, rng)) @ make_a(s, 3)
        laws.append(np.allclose(star(star(g)), g, atol=1e-9, rtol=0))
    c["group laws"] = all(laws)
    bracket = []
    for n in (2, 3, 4):
        for s in np.linspace(2, 12, 11):
            g1, g2 = _mp_g1_g2(mp.mpf(s), n)
            a = _mp_a(mp.mpf(s), n)
            I = mp.eye(n + 1)
            bracket.append(mp.norm(a * g1**-1 - I, 2) <= 2 * mp.e ** (-2 * s))
            bracket.append(mp.norm(a.T**-1 * g2**-1 - I, 2) <= 2 * mp.e ** (-2 * s))
    c["decay bracket on [2,12]"] = all(bracket)
    ids = []
    for n, i in ((2, 1), (3, 1), (3, 2), (4, 2)):
        j = n - 1 - i
        B1, B2 = bases_zero(i, n)
        R1, R2 = make_R1_R2(n)
        for _ in range(20):
            s = rng.uniform(0.2, 3)
            g1, g2 = make_g1_g2(s, n)
            d1, d2 = make_d1_d2(s, i, j)
            y1, y2 = _int_invertible(rng, i + 1), _int_invertible(rng, j + 1)
            ids.append(np.abs(canonical_class(g1 @ B1 @ y1).canon - canonical_class(R1 @ B1 @ d1 @ y1).canon).max() < 1e-9)
            ids.append(np.abs(canonical_class(g2 @ B2 @ y2).canon - canonical_class(R2 @ B2 @ d2 @ y2).canon).max() < 1e-9)
    c["class identity g1, g2"] = all(ids)
    ids = []
    for n, i in ((2, 1), (3, 1), (3, 2), (4, 2)):
        j = n - 1 - i
        B1, B2 = bases_infty(i, n)
        for _ in range(20):
            s = rng.uniform(0.1, 3)
            x = rng.normal(size=n - 1)
            (d1, d2), (u1, u2) = make_delta_upsilon(s, x, i, j)
            y1, y2 = rng.normal(size=(i + 1, i + 1)), rng.normal(size=(j + 1, j + 1))
            g = make_a(s, n) @ make_u(x, n)
            ids.append(np.abs(canonical_class(g @ B1 @ y1).canon - canonical_class(B1 @ d1 @ u1 @ y1).canon).max() < 1e-9)
            ids.append(np.abs(canonical_class(star(g) @ B2 @ y2).canon - canonical_class(B2 @ d2 @ u2 @ y2).canon).max() < 1e-9)
    c["class identity a(s)u(x)"] = all(ids)
    return record(1, "exact identities", c)


def criterion_2() -> bool:
    c = {}
    for T in (10, 20, 30):
        c[f"T={T}"] = enumerate_ball_direct(PHI, FRO, T).keys() == enumerate_ball_bfs(PHI, FRO, T, margin=4).keys()
    return record(2, "direct and BFS enumeration agree", c)


def criterion_3() -> bool:
    counts = {T: enumerate_ball(PHI, FRO, T).count for T in (50, 100, 200, 400)}
    r = {T: counts[2 * T] / counts[T] for T in (50, 100)}
    rep = growth_report(counts, 2, lambda T: vol_ball_mc(2, FRO, T))
    c = {f"ratio T={T}": 1.6 <= v <= 2.4 for T, v in r.items()}
    c["count/volume stable"] = rep["top3_variation"] <= 0.15
    detail = ", ".join(f"#Γ_{2 * T}/#Γ_{T}={v:.3f}" for T, v in r.items()) + f", top-3 variation {rep['top3_variation']:.3f}"
    return record(3, "growth law", c, detail)


def criterion_4() -> bool:
    spec = QuadratureSpec()
    c, parts = {}, []
    for n, kind in ((2, "frobenius"), (2, "max"), (3, "frobenius")):
        const = volume_constant(n, Norm(kind), spec).value
        v = vol_ball_mc(n, Norm(kind), 1000.0, spec) / 1000.0 ** (n - 1)
        c[f"n={n} {kind}"] = abs(v / const - 1) <= 0.05
        parts.append(f"n={n} {kind} {v / const:.4f}")
    u = volume_constant(3, FRO, spec).value
    h = [normalized_volume_constant(3, FRO, i, spec).value for i in (0, 1)]
    vals = [u, *h]
    c["three formulas agree"] = all(abs(a / b - 1) <= 0.05 for a in vals for b in vals)
    parts.append("formulas " + ", ".join(f"{v:.4f}" for v in vals))
    return record(4, "volume asymptotics", c, "; ".join(parts))


def criterion_5() -> bool:
    spec = QuadratureSpec()
    rng = np.random.default_rng(SEED)
    c, parts = {}, []
    for H, n in ((("H", 0, 1), 2), (("U", 2), 2), (("H", 1, 1), 3)):
        for label, k in (("id", np.eye(n + 1)), ("random k", embed_K(haar_sample_SO(n, rng)))):
            ratio = bT_limit_check(k, H, FRO, [1000.0], spec)["rows"][-1]["ratio"]
            c[f"{H[0]}{H[1:]} {label}"] = 0.9 <= ratio <= 1.1
            parts.append(f"{ratio:.3f}")
    return record(5, "b_T limit ratios", c, "ratios " + ", ".join(parts))


def criterion_6() -> bool:
    spec = QuadratureSpec(mc_samples=50_000)
    c = {}
    profs = {
        "w_P0 r=2 n=2": eval_w_P0(2, 2, np.eye(3), FRO, 64, spec),
        "w_P0 r=2 n=3": eval_w_P0(2, 3, np.eye(4), FRO, 16, spec),
        "w_infty r=2 n=3": eval_w_infty(2, 3, np.eye(4), FRO, 16, spec),
        "w_theta0": eval_w_theta0(0.7, FRO, 64, spec),
    }
    for name, p in profs.items():
        c[f"{name} constant"] = bool(np.all(np.abs(p.values - 1) <= 3 * p.std_errors + 1e-12))
        c[f"{name} normalized"] = abs(p.total - 1) <= 1e-6
    g0 = make_k_theta(0.4) @ make_a(0.6)
    norm = Norm("skewed", g0)
    p = eval_w_P0(2, 2, g0, norm, 64, spec)
    vals, errs = brute_force_profile(2, 2, g0, norm, 64, 10 * spec.mc_samples, seed=1)
    sigma = np.sqrt(p.std_errors**2 + errs**2)
    c["skewed vs 10x oracle"] = bool(np.all(np.abs(p.values - vals) <= 3 * sigma + 1e-9))
    c["skewed normalized"] = abs(p.total - 1) <= 1e-6
    return record(6, "density profiles", c)


def criterion_7() -> bool:
    rep = run_experiment(preset("sargent-shapira"))
    rows = rep["rows"]
    top = rows[-1]
    sd = [r["shape_discrepancy"] for r in rows]
    c = {
        "shape discrepancy decreasing": all(b < a for a, b in zip(sd, sd[1:])),
        "shape discrepancy < 0.15": top["shape_discrepancy"] < 0.15,
        "KS theta < 0.08": top["ks_theta"] < 0.08,
        ">= 3000 orbit points": top["count"] >= 3000,
    }
    detail = f"shape {', '.join(f'{v:.3f}' for v in sd)}; KS {top['ks_theta']:.3f}; points {top['count']}"
    return record(7, "orthogonal-lattice orbit equidistribution", c, detail)


def criterion_8() -> bool:
    cfg = preset("special-orbit")
    v = detect_special(cfg.start.first, 0.0, PHI)
    rep = run_experiment(cfg)
    top = rep["rows"][-1]
    c = {
        "special with m = 1": v.special and v.m == 1,
        "covers Γ_100": top["T"] == 100 and top["count"] == enumerate_ball(PHI, FRO, 100).count,
        "zero multi-section misses": all(r["multisection_failures"] == 0 for r in rep["rows"]),
        "KS theta < 0.08": top["ks_theta"] < 0.08,
    }
    return record(8, "special orbit", c, f"KS {top['ks_theta']:.3f}, {top['count']} points")


def criterion_9() -> bool:
    cfg = preset("nonspecial-control")
    law = classify_start(cfg.start, cfg.gamma, cfg.norm, QuadratureSpec(mc_samples=2000))
    rep = run_experiment(cfg)
    top = rep["rows"][-1]
    c = {
        "not special up to 1000": (not law.verdict.special) and law.verdict.n_max == 1000,
        "bins filled >= 0.5 at T=200": top["T"] == 200 and top["bins_filled"] >= 0.5,
    }
    return record(9, "non-special degenerate control", c, f"bins filled {top['bins_filled']:.2f}")


def criterion_10() -> bool:
    c = {}
    for name in ("sargent-shapira", "special-orbit", "nonspecial-control"):
        c[name] = report_bytes(run_experiment(preset(name))) == report_bytes(run_experiment(preset(name)))
    return record(10, "deterministic reports", c)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_acceptance(crit):
    assert crit()


if __name__ == "__main__":
    results = [f() for f in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
