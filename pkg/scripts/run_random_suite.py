"""Random small games: PoA on consistent suites and the delta bound on Hamming ones.

Every game is solved exactly.  Results go to ``random_suite.csv``.
"""

import argparse
from pathlib import Path

from monoculture.equilibrium import ExactEvaluator, price_of_anarchy, smoothness_check
from monoculture.instances import hamming_suite, random_sc_suite
from monoculture.io import SWEEP_COLUMNS, csv_text


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="out/random")
    args = ap.parse_args()

    rows = []
    worst = 1
    smooth_fail = 0
    for desc in random_sc_suite(args.count, seed=args.seed):
        ev = ExactEvaluator(desc.spec)
        rep = price_of_anarchy(ev, delta_star=0)
        worst = max(worst, rep.poa)
        smooth_fail += not smoothness_check(ev).passed
        rows.append(_row(desc, rep, 0))
    print(f"consistent suite: {args.count} games, worst PoA {float(worst):.4f}, "
          f"smoothness failures {smooth_fail}")

    violations = 0
    for desc in hamming_suite(args.count, seed=args.seed):
        delta = desc.checks["delta_star"]
        rep = price_of_anarchy(ExactEvaluator(desc.spec), delta_star=delta)
        violations += bool(rep.bound_violated)
        rows.append(_row(desc, rep, delta))
        print(f"{desc.name}: delta*={delta} bound={rep.bound} PoA={float(rep.poa):.4f}")
    print(f"hamming suite: bound violations {violations}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "random_suite.csv").write_text(csv_text(SWEEP_COLUMNS, rows))


def _row(desc, rep, delta):
    return {"instance_id": desc.name, "n": desc.spec.n, "m": desc.spec.m, "delta_star": delta,
            "sw_star": rep.sw_star, "worst_ne_sw": rep.worst_ne_sw, "poa": rep.poa,
            "bound": rep.bound, "method": "exact"}


if __name__ == "__main__":
    main()
