"""Empirical orbit averages over norm balls, compared with the predicted laws.

Report schema (report.json)
---------------------------
``config``      echo of the experiment configuration
``law``         predicted case, n, r, θ0 and specialness verdict
``rows``        one object per rung (empty when no statistics are configured): T, count, ks_theta, shape_discrepancy,
                bins_filled, near_degenerate, test_function_gaps,
                multisection_failures (absent statistics are null)
``histograms``  per (T, bin) empirical and predicted shape masses
``trends``      shape_decreasing, gaps_shrink_fraction
``verdicts``    threshold name -> bool, recomputable from rows by ``evaluate``
``pass``        conjunction of the verdicts

curves.csv has one line per rung with the scalar columns of ``rows``;
histograms.csv has one line per (T, bin) with empirical and predicted mass.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, stats

from .enumeration import GammaSpec, Norm, enumerate_ball
from .lattices import OrthoPair, make_pair, ortho_lattice, shape_from_bases
from .limits import PredictedLaw, classify_start, multi_section_check, sample_predicted
from .quadrature import DensityProfile, QuadratureSpec

STAT_KINDS = ("ks_theta", "shape_bins", "test_functions", "multisection")


# ---------------------------------------------------------------- configuration


def start_from_json(d: dict, gamma: GammaSpec) -> OrthoPair:
    """``{"basis": [[col], ...]}`` or ``{"normal": [a, b, c]}`` (the lattice v^⊥ ∩ Z^3).

    A ``normal`` start lives in the coordinates of Γ's integer form and is
    moved to the standard form with the group's conjugator when there is one.
    """
    if "basis" in d:
        B = np.array(d["basis"], dtype=float).T
        partner = d.get("partner")
        return make_pair(B, None if partner is None else np.array(partner, dtype=float).T)
    if "normal" in d:
        B = ortho_lattice(d["normal"]).basis
        if gamma.kind == "conj-int-orth":
            B = np.linalg.inv(gamma.M) @ B
        return make_pair(B)
    raise ValueError("start needs 'basis' or 'normal'")


@dataclass
class ExperimentConfig:
    gamma: GammaSpec
    norm: Norm
    start: OrthoPair
    T_ladder: list[float]
    stats: list[dict] = field(default_factory=list)
    seed: int = 0
    out_dir: str | None = None
    thresholds: dict = field(default_factory=dict)
    name: str = "experiment"
    predicted_samples: int = 1_000_000
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    start_json: dict | None = None

    def __post_init__(self):
        T = [float(t) for t in self.T_ladder]
        if not T or any(b <= a for a, b in zip(T, T[1:])):
            raise ValueError("T_ladder must be nonempty and strictly increasing")
        self.T_ladder = T
        for s in self.stats:
            if s.get("kind") not in STAT_KINDS:
                raise ValueError(f"unknown statistic {s.get('kind')!r}")
            if s["kind"] == "shape_bins" and int(s.get("bins", 20)) < 10:
                raise ValueError("shape_bins needs at least 10 bins")
        if self.gamma.n != self.start.n:
            raise ValueError("start and group live in different dimensions")

    @property
    def n(self) -> int:
        return self.start.n

    @property
    def r(self) -> int:
        return self.start.r

    def stat(self, kind: str) -> dict | None:
        for s in self.stats:
            if s["kind"] == kind:
                return s
        return None

    def _start_basis(self) -> dict:
        p = self.start
        return {"basis": p.first.canon.T.tolist(), "partner": p.second.canon.T.tolist()}

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "gamma": self.gamma.to_json(),
            "norm": self.norm.to_json(),
            "start": self.start_json if self.start_json is not None else self._start_basis(),
            "T_ladder": self.T_ladder,
            "stats": self.stats,
            "seed": self.seed,
            "thresholds": self.thresholds,
            "predicted_samples": self.predicted_samples,
            "quadrature": self.quadrature.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict, out_dir: str | None = None) -> "ExperimentConfig":
        gamma = GammaSpec.from_json(d.get("gamma", "phi-sl2z"))
        start = start_from_json(d["start"], gamma)
        q = d.get("quadrature")
        return cls(
            gamma=gamma,
            norm=Norm.from_json(d.get("norm", "frobenius")),
            start=start,
            T_ladder=d["T_ladder"],
            stats=list(d.get("stats", [])),
            seed=int(d.get("seed", 0)),
            out_dir=out_dir or d.get("out_dir"),
            thresholds=dict(d.get("thresholds", {})),
            name=d.get("name", "experiment"),
            predicted_samples=int(d.get("predicted_samples", 1_000_000)),
            quadrature=QuadratureSpec() if q is None else QuadratureSpec.from_json(q),
            start_json=d["start"],
        )


# ---------------------------------------------------------------- orbits


@dataclass
class EmpiricalDistribution:
    """Orbit points at one rung: angle of the moved plane, fiber shape, q-Gram determinant."""

    T: float
    theta: np.ndarray
    shape_x: np.ndarray | None
    shape_y: np.ndarray | None
    qdet: np.ndarray
    source: np.ndarray
    mats: np.ndarray
    partial: bool = False

    @property
    def size(self) -> int:
        return len(self.source)


def _null_angles(B: np.ndarray) -> np.ndarray:
    """Vectorized angle of the direction in span(B) nearest the light cone (n = 2)."""
    Q, _ = np.linalg.qr(B)
    J = np.diag([1.0, 1.0, -1.0])
    G = np.swapaxes(Q, 1, 2) @ J[None] @ Q
    w, V = np.linalg.eigh(G)
    pick = np.argmin(np.abs(w), axis=1)
    v = np.einsum("nij,nj->ni", Q, V[np.arange(len(pick)), :, pick])
    v = np.where(v[:, 2:3] < 0, -v, v)
    a = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * np.pi)
    return np.where(a >= 2 * np.pi, 0.0, a)


def _qdets(B: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(B)
    n = B.shape[1] - 1
    J = np.diag([1.0] * n + [-1.0])
    return np.linalg.det(np.swapaxes(Q, 1, 2) @ J[None] @ Q)


def _moved_first(mats: np.ndarray, p: OrthoPair) -> np.ndarray:
    g = mats
    if p.dual:
        g = np.linalg.inv(mats).transpose(0, 2, 1)
    return g @ p.first.canon[None]


def _moved_second(mats: np.ndarray, p: OrthoPair) -> np.ndarray:
    g = mats if p.dual else np.linalg.inv(mats).transpose(0, 2, 1)
    return g @ p.second.canon[None]


def run_orbit(config: ExperimentConfig, cap: int = 5_000_000) -> list[EmpiricalDistribution]:
    """Enumerate Γ_T at the top rung once and restrict it down the ladder."""
    top = enumerate_ball(config.gamma, config.norm, config.T_ladder[-1])
    partial = top.count >= cap
    p = config.start
    out = []
    for T in config.T_ladder:
        ball = top.restrict(T, config.norm)
        mats = ball.mats
        N = len(mats)
        src = np.arange(N)
        if N == 0:
            empty = np.zeros(0)
            out.append(EmpiricalDistribution(T, empty, None, None, empty, src, mats, partial))
            continue
        B1 = _moved_first(mats, p)
        theta = _null_angles(B1) if p.n == 2 else np.full(N, np.nan)
        sx = sy = None
        if p.r == 2:
            sx, sy = shape_from_bases(B1)
        elif p.n + 1 - p.r == 2:
            sx, sy = shape_from_bases(_moved_second(mats, p))
        out.append(EmpiricalDistribution(T, theta, sx, sy, _qdets(B1), src, mats, partial))
    return out


# ---------------------------------------------------------------- statistics


def ks_theta(emp: EmpiricalDistribution, profile: DensityProfile) -> float:
    if emp.size == 0:
        raise ValueError("empty distribution")
    if np.isnan(emp.theta).any():
        raise ValueError("θ is only defined for n = 2")
    return float(stats.kstest(emp.theta, profile.cdf).statistic)


class ShapeBins:
    """Equal-area bins on {0 <= x <= 1/2, x² + y² >= 1} for the density (6/π) dx dy / y².

    The domain is cut into ``ny`` horizontal bands of equal mass, each split
    into ``nx`` columns of equal mass.
    """

    def __init__(self, bins: int = 20):
        if bins < 10:
            raise ValueError("need at least 10 bins")
        ny = int(round(math.sqrt(bins)))
        while bins % ny:
            ny -= 1
        self.ny, self.nx = ny, bins // ny
        self.size = bins
        self.y_edges = np.array([self._y_quantile(q / ny) for q in range(ny)] + [math.inf])
        self.x_edges = []
        for b in range(ny):
            y1, y2 = self.y_edges[b], self.y_edges[b + 1]
            tot = self._mass(0.5, y1, y2)
            cuts = [0.0]
            for q in range(1, self.nx):
                cuts.append(optimize.brentq(lambda X: self._mass(X, y1, y2) - tot * q / self.nx, 0.0, 0.5, xtol=1e-14))
            cuts.append(0.5)
            self.x_edges.append(np.array(cuts))

    @staticmethod
    def _below(y: float) -> float:
        """Mass of the part of the domain below height y."""
        y0 = math.sqrt(3) / 2
        if y <= y0:
            return 0.0
        if y >= 1:
            return 1.0 - 3.0 / (math.pi * y)
        x0 = math.sqrt(1 - y * y)
        return (6 / math.pi) * ((math.pi / 6 - math.asin(x0)) - (0.5 - x0) / y)

    def _y_quantile(self, q: float) -> float:
        if q <= 0:
            return math.sqrt(3) / 2
        return optimize.brentq(lambda y: self._below(y) - q, math.sqrt(3) / 2, 1e9, xtol=1e-14, rtol=1e-14)

    @staticmethod
    def _mass(X: float, y1: float, y2: float) -> float:
        """Mass of {0 <= x <= X, y1 <= y <= y2} inside the domain."""
        inv2 = 0.0 if math.isinf(y2) else 1.0 / y2

        def f(x):
            low = max(y1, math.sqrt(max(1 - x * x, 0.0)))
            return max(1.0 / low - inv2, 0.0)

        pts = [p for p in (math.sqrt(max(1 - y1 * y1, 0.0)), math.sqrt(max(1 - min(y2, 1.0) ** 2, 0.0))) if 0 < p < X]
        val, _ = integrate.quad(f, 0.0, X, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=200)
        return 6 / math.pi * val

    def index(self, x, y) -> np.ndarray:
        x = np.clip(np.abs(np.asarray(x, dtype=float)), 0.0, 0.5)
        y = np.asarray(y, dtype=float)
        band = np.clip(np.searchsorted(self.y_edges, y, side="right") - 1, 0, self.ny - 1)
        col = np.empty(x.shape, dtype=int)
        for b in range(self.ny):
            sel = band == b
            col[sel] = np.clip(np.searchsorted(self.x_edges[b], x[sel], side="right") - 1, 0, self.nx - 1)
        return band * self.nx + col

    def histogram(self, x, y) -> np.ndarray:
        h = np.bincount(self.index(x, y), minlength=self.size).astype(float)
        return h / max(h.sum(), 1.0)

    def cell_mass(self, b: int) -> float:
        band, col = divmod(b, self.nx)
        y1, y2 = self.y_edges[band], self.y_edges[band + 1]
        xe = self.x_edges[band]
        return self._mass(xe[col + 1], y1, y2) - self._mass(xe[col], y1, y2)


def shape_discrepancy(emp: EmpiricalDistribution, predicted: tuple[np.ndarray, np.ndarray], bins: ShapeBins | int = 20) -> float:
    """Total variation between binned empirical and predicted shape histograms."""
    if emp.shape_x is None:
        raise ValueError("no rank-2 fiber to take shapes of")
    bins = bins if isinstance(bins, ShapeBins) else ShapeBins(bins)
    if emp.size == 0:
        return 1.0
    he = bins.histogram(emp.shape_x, emp.shape_y)
    hp = bins.histogram(*predicted)
    return 0.5 * float(np.abs(he - hp).sum())


@dataclass(frozen=True)
class BumpFunction:
    """Lipschitz bump in (θ, x, log y); a None centre drops that factor."""

    theta: float | None
    theta_width: float
    x: float | None
    logy: float | None
    shape_width: float

    def __call__(self, theta, sx, sy) -> np.ndarray:
        val = 1.0
        if self.theta is not None:
            d = np.abs(np.mod(np.asarray(theta) - self.theta + np.pi, 2 * np.pi) - np.pi)
            val = val * np.clip(1 - d / self.theta_width, 0.0, 1.0)
        if self.x is not None:
            d = np.hypot(np.asarray(sx) - self.x, np.log(np.asarray(sy)) - self.logy)
            val = val * np.clip(1 - d / self.shape_width, 0.0, 1.0)
        return np.asarray(val, dtype=float)


def bump_family(count: int, seed: int, use_theta: bool = True, use_shape: bool = True) -> list[BumpFunction]:
    rng = np.random.default_rng([seed, 3])
    out = []
    for _ in range(count):
        out.append(
            BumpFunction(
                theta=float(rng.uniform(0, 2 * np.pi)) if use_theta else None,
                theta_width=float(rng.uniform(np.pi / 3, np.pi)),
                x=float(rng.uniform(0, 0.5)) if use_shape else None,
                logy=float(rng.uniform(math.log(math.sqrt(3) / 2), math.log(2.5))) if use_shape else None,
                shape_width=float(rng.uniform(0.3, 0.8)),
            )
        )
    return out


def test_function_gaps(emp: EmpiricalDistribution, predicted: dict, funcs: list) -> list[float]:
    """|empirical average − predicted-sample average| for each test function."""
    if emp.size == 0:
        return [math.nan for _ in funcs]
    gaps = []
    for f in funcs:
        fe = f(emp.theta, emp.shape_x, emp.shape_y)
        fp = f(predicted["theta"], predicted["shape_x"], predicted["shape_y"])
        gaps.append(abs(float(np.mean(fe)) - float(np.mean(fp))))
    return gaps


test_function_gaps.__test__ = False


def multisection_failures(emp: EmpiricalDistribution, law: PredictedLaw, start: OrthoPair) -> int:
    if law.case != "special":
        raise ValueError("multi-section check needs a special start")
    bad = 0
    for g in emp.mats:
        if not multi_section_check(g, start.first, law.packet, law.theta0).ok:
            bad += 1
    return bad


# ---------------------------------------------------------------- report


def evaluate(report: dict) -> dict:
    """Threshold verdicts computed from a report dict alone."""
    th = report["config"].get("thresholds", {})
    rows = report["rows"]
    out = {}
    if not rows:
        return out
    top = rows[-1]
    checks = {
        "ks_theta_max": lambda v: top["ks_theta"] is not None and top["ks_theta"] < v,
        "shape_discrepancy_max": lambda v: top["shape_discrepancy"] is not None and top["shape_discrepancy"] < v,
        "shape_decreasing": lambda v: (not v) or bool(report["trends"].get("shape_decreasing")),
        "min_points": lambda v: top["count"] >= v,
        "bins_filled_min": lambda v: top["bins_filled"] is not None and top["bins_filled"] >= v,
        "test_gap_max": lambda v: top["test_function_gaps"] is not None and max(top["test_function_gaps"]) < v,
        "multisection_failures_max": lambda v: all(r["multisection_failures"] is not None and r["multisection_failures"] <= v for r in rows),
        "gaps_shrink_min": lambda v: report["trends"].get("gaps_shrink_fraction") is not None and report["trends"]["gaps_shrink_fraction"] >= v,
    }
    for name, value in th.items():
        if name not in checks:
            raise ValueError(f"unknown threshold {name!r}")
        out[name] = bool(checks[name](value))
    return out


def _round(x):
    if x is None:
        return None
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return None if math.isnan(x) else float(f"{float(x):.12g}")
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def run_experiment(config: ExperimentConfig, law: PredictedLaw | None = None) -> dict:
    """Run the ladder, compute the configured statistics and return the report dict."""
    law = law or classify_start(config.start, config.gamma, config.norm, config.quadrature)
    dists = run_orbit(config)
    stats_cfg = {s["kind"]: s for s in config.stats}
    predicted = None
    need_pred = "shape_bins" in stats_cfg or "test_functions" in stats_cfg
    if need_pred:
        N = config.predicted_samples if law.case != "special" else min(config.predicted_samples, 200_000)
        predicted = sample_predicted(law, N, config.seed)
    bins = ShapeBins(int(stats_cfg["shape_bins"].get("bins", 20))) if "shape_bins" in stats_cfg else None
    funcs = None
    if "test_functions" in stats_cfg:
        s = stats_cfg["test_functions"]
        funcs = bump_family(int(s.get("count", 8)), int(s.get("seed", config.seed)), use_shape=predicted["shape_x"] is not None)
    rows, hist_rows = [], []
    pred_hist = None
    if bins is not None and predicted["shape_x"] is not None:
        pred_hist = bins.histogram(predicted["shape_x"], predicted["shape_y"])
    for emp in dists if config.stats else []:
        row = {
            "T": emp.T,
            "count": emp.size,
            "partial": emp.partial,
            "ks_theta": None,
            "shape_discrepancy": None,
            "bins_filled": None,
            "near_degenerate": float(np.mean(np.abs(emp.qdet) < 0.1)) if emp.size else None,
            "test_function_gaps": None,
            "multisection_failures": None,
        }
        if "ks_theta" in stats_cfg and emp.size:
            row["ks_theta"] = ks_theta(emp, law.profile)
        if pred_hist is not None and emp.shape_x is not None:
            he = bins.histogram(emp.shape_x, emp.shape_y) if emp.size else np.zeros(bins.size)
            row["shape_discrepancy"] = 0.5 * float(np.abs(he - pred_hist).sum()) if emp.size else 1.0
            row["bins_filled"] = float(np.mean(he > 0))
            for b in range(bins.size):
                hist_rows.append({"T": emp.T, "bin": b, "empirical": float(he[b]), "predicted": float(pred_hist[b])})
        if funcs is not None:
            row["test_function_gaps"] = test_function_gaps(emp, predicted, funcs)
        if "multisection" in stats_cfg:
            row["multisection_failures"] = multisection_failures(emp, law, config.start)
        rows.append({k: _round(v) for k, v in row.items()})
    trends = {}
    sd = [r["shape_discrepancy"] for r in rows]
    if all(v is not None for v in sd) and len(sd) > 1:
        trends["shape_decreasing"] = all(b < a for a, b in zip(sd, sd[1:]))
    g = [r["test_function_gaps"] for r in rows]
    if funcs is not None and len(g) > 1 and g[0] is not None:
        shrink = [top < bottom for top, bottom in zip(g[-1], g[0])]
        trends["gaps_shrink_fraction"] = _round(float(np.mean(shrink)))
    report = {
        "config": config.to_json(),
        "law": {
            "case": law.case,
            "n": law.n,
            "r": law.r,
            "theta0": _round(law.theta0),
            "dual": law.dual,
            "verdict": None if law.verdict is None else {"special": law.verdict.special, "m": law.verdict.m, "n_max": law.verdict.n_max},
        },
        "rows": rows,
        "histograms": [{k: _round(v) for k, v in h.items()} for h in hist_rows],
        "trends": trends,
    }
    report["verdicts"] = evaluate(report)
    report["pass"] = all(report["verdicts"].values())
    return report


def _csv(rows: list[dict], cols: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (";".join(repr(v) for v in r[c]) if isinstance(r.get(c), list) else r[c]) for c in cols])
    return buf.getvalue()


CURVE_COLS = ["T", "count", "ks_theta", "shape_discrepancy", "bins_filled", "near_degenerate", "multisection_failures", "test_function_gaps"]


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()


def emit(report: dict, out_dir) -> int:
    """Write report.json, curves.csv and histograms.csv; return the exit code (0 pass, 1 fail)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_bytes(report_bytes(report))
        (out / "curves.csv").write_text(_csv(report["rows"], CURVE_COLS))
        (out / "histograms.csv").write_text(_csv(report.get("histograms", []), ["T", "bin", "empirical", "predicted"]))
    except OSError as e:
        raise OSError(f"cannot write report to {out}: {e}") from e
    return 0 if report.get("pass", True) else 1


def load_report(out_dir) -> dict:
    path = Path(out_dir) / "report.json"
    with open(path) as fh:
        return json.load(fh)
