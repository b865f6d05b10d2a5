"""#Γ_T against T and the Monte Carlo volume of the norm ball."""

import argparse

from orbitlab.enumeration import GammaSpec, Norm, enumerate_ball, growth_report
from orbitlab.quadrature import vol_ball_mc


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma", default="phi-sl2z")
    ap.add_argument("--norm", default="frobenius")
    ap.add_argument("--ladder", type=float, nargs="+", default=[25, 50, 100, 200, 400, 800])
    a = ap.parse_args()
    gamma, norm = GammaSpec.from_json(a.gamma), Norm(a.norm)
    n = gamma.n
    top = enumerate_ball(gamma, norm, max(a.ladder))
    counts = {T: top.restrict(T, norm).count for T in a.ladder}
    rep = growth_report(counts, n, lambda T: vol_ball_mc(n, norm, T))
    print(f"{'T':>8} {'count':>8} {'count/T^(n-1)':>14} {'count/vol':>10} {'doubling':>9}")
    prev = None
    for row in rep["rows"]:
        dbl = "" if prev is None or row["T"] != 2 * prev["T"] else f"{row['count'] / prev['count']:.3f}"
        print(f"{row['T']:8g} {row['count']:8d} {row['per_T']:14.4f} {row['per_volume']:10.4f} {dbl:>9}")
        prev = row
    print(f"fitted exponent {rep['exponent']:.3f}, top-3 count/vol variation {rep['top3_variation']:.3f}")


if __name__ == "__main__":
    main()
