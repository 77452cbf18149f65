"""Linear-welfare instances without consistency: dominance and PoA >= n - 1."""

import argparse
from fractions import Fraction
from pathlib import Path

from monoculture.equilibrium import ExactEvaluator, price_of_anarchy
from monoculture.instances import gen_linear_poa
from monoculture.io import SWEEP_COLUMNS, csv_text


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--eps", default="9/100")
    ap.add_argument("--out", default="out/linear")
    args = ap.parse_args()

    eps = Fraction(args.eps)
    rows = []
    for n in args.n:
        desc = gen_linear_poa(n, eps)
        rep = price_of_anarchy(ExactEvaluator(desc.spec))
        print(f"n={n}: dominance {desc.checks['dominance'][0]}, SW*={rep.sw_star} "
              f"worst NE={rep.worst_ne_sw} PoA={float(rep.poa):.4f}")
        for k, (u, formula) in sorted(desc.checks["u_A"].items()):
            print(f"   k={k} firms on H: u(A) = {u} (closed form {formula})")
        rows.append({"instance_id": f"linear-{n}", "n": n, "m": desc.spec.m,
                     "sw_star": rep.sw_star, "worst_ne_sw": rep.worst_ne_sw, "poa": rep.poa,
                     "method": "exact"})

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "linear.csv").write_text(csv_text(SWEEP_COLUMNS, rows))


if __name__ == "__main__":
    main()
