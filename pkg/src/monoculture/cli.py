"""Command-line runner.

Every command reads one JSON config (``--config``, or ``-`` for stdin; a
missing config means ``{}``), lets a few flags override it, writes JSON/CSV
results plus a ``manifest.json`` into the output directory, and exits with
0 when the checked claims hold, 1 when they do not, and 2 on bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .common import InvalidInput, MonocultureError, ResourceLimit, UnsupportedConfiguration, as_fraction
from .consistency import check_sc_exact, check_sc_statistical, measure_delta
from .engine import expected_utilities_exact, expected_utilities_mc, ic_audit
from .equilibrium import ExactEvaluator, MCEvaluator, find_pure_nash, price_of_anarchy, smoothness_check
from .game import Profile
from .instances import (
    gen_deviation_counterexample,
    gen_ic_counterexample,
    gen_linear_poa,
    gen_tight_poa,
    random_sc_suite,
)
from .io import (
    CI_Z,
    SWEEP_COLUMNS,
    UTILITY_COLUMNS,
    config_hash,
    csv_text,
    dumps,
    profile_from_json,
    spec_from_json,
    utility_rows,
)
from .technology import as_value_vector, technology_from_json

log = logging.getLogger("monoculture")

OUT_ENV = "MONOCULTURE_OUT"
GENERATORS = {
    "tight-poa": lambda p: gen_tight_poa(int(p["n"]), p.get("eta", Fraction(1, 20)), verify=None),
    "linear-poa": lambda p: gen_linear_poa(int(p["n"]), p.get("eps", Fraction(9, 100)), verify=False),
    "deviation-counterexample": lambda p: gen_deviation_counterexample(
        int(p.get("n", 2)), p.get("phi", Fraction(1, 2)), verify=False),
    "ic-uniform": lambda p: gen_ic_counterexample("uniform"),
    "ic-table": lambda p: gen_ic_counterexample("table"),
}


class Run:
    """Collects outputs and suite verdicts for one command invocation."""

    def __init__(self, command: str, config: dict, out: Path):
        self.command = command
        self.config = config
        self.out = out
        self.files: dict = {}
        self.suites: dict = {}

    def write(self, name: str, text: str):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def json(self, name: str, obj):
        self.write(name, dumps(obj))

    def suite(self, name: str, passed: bool):
        self.suites[name] = bool(passed)

    @property
    def passed(self) -> bool:
        return all(self.suites.values())

    def manifest(self, wall: float):
        return {
            "tool": "monoculture",
            "version": __version__,
            "command": self.command,
            "config_hash": config_hash(self.config),
            "seed": self.config.get("seed"),
            "wall_time_s": round(wall, 3),
            "suites": self.suites,
            "outputs": self.files,
        }


def _game(cfg):
    if "game" in cfg:
        return spec_from_json(cfg["game"]), None
    if "instance" in cfg:
        inst = cfg["instance"]
        gen = inst.get("generator")
        if gen not in GENERATORS:
            raise InvalidInput(f"unknown generator {gen!r}; known: {sorted(GENERATORS)}")
        desc = GENERATORS[gen](inst)
        return desc.spec, desc
    raise InvalidInput("config needs a 'game' or an 'instance'")


def _evaluator(cfg, spec):
    if cfg.get("method", "exact") == "exact":
        return ExactEvaluator(spec, int(cfg.get("budget", 10**8)))
    if cfg.get("seed") is None:
        raise InvalidInput("Monte Carlo runs need a seed")
    return MCEvaluator(spec, int(cfg.get("samples", 10**5)), int(cfg["seed"]),
                       int(cfg.get("workers", 1)), float(cfg.get("confidence", 0.95)))


def _delta_for(spec, cfg):
    if "delta_star" in cfg:
        return as_fraction(cfg["delta_star"])
    try:
        pts = (spec.values.orbit_representatives() if spec.values.permutation_invariant
               else spec.values.atoms(10**4))
        return measure_delta(list(spec.techs.values()), [x for _, x in pts]).delta_star
    except (ResourceLimit, UnsupportedConfiguration):
        return None


def cmd_check_sc(run: Run, cfg):
    tech = technology_from_json(cfg["technology"])
    x = as_value_vector(cfg["x"])
    if cfg.get("statistical") or not tech.exact:
        import numpy as np

        rep = check_sc_statistical(tech, x, int(cfg.get("samples", 10**6)),
                                   float(cfg.get("confidence", 0.99)),
                                   np.random.default_rng(int(cfg.get("seed", 0))))
    else:
        rep = check_sc_exact(tech, x, cfg.get("cap"))
    run.json("consistency.json", rep)
    run.suite("consistent", rep.consistent)


def cmd_measure_delta(run: Run, cfg):
    if "game" in cfg or "instance" in cfg:
        spec, _ = _game(cfg)
        techs = list(spec.techs.values())
        pts = (spec.values.orbit_representatives() if spec.values.permutation_invariant
               else spec.values.atoms())
        xs = [x for _, x in pts]
    else:
        techs = [technology_from_json(t) for t in cfg["technologies"]]
        xs = [as_value_vector(x) for x in cfg["x_support"]]
    rep = measure_delta(techs, xs)
    run.json("delta.json", rep)
    run.suite("measured", True)


def _sweep_row(name, spec, rep, delta, seed=None):
    low, high = rep.poa_interval if rep.poa_interval else (None, None)
    return {
        "instance_id": name, "n": spec.n, "m": spec.m, "delta_star": delta,
        "sw_star": rep.sw_star, "worst_ne_sw": rep.worst_ne_sw, "poa": rep.poa,
        "poa_low": low, "poa_high": high,
        "bound": None if delta is None else rep.bound, "method": rep.method,
        "seed": None if rep.method == "exact" else seed,
    }


def cmd_poa(run: Run, cfg):
    spec, desc = _game(cfg)
    ev = _evaluator(cfg, spec)
    delta = _delta_for(spec, cfg)
    eps = cfg.get("epsilon")
    rep = price_of_anarchy(ev, None if eps is None else as_fraction(eps), delta,
                           with_dominance=bool(cfg.get("dominance", False)))
    run.json("poa.json", rep)
    name = desc.name if desc else cfg.get("name", "game")
    run.write("poa.csv", csv_text(SWEEP_COLUMNS, [_sweep_row(name, spec, rep, delta, cfg.get("seed"))]))
    run.suite("pure_nash_found", bool(rep.pure_nash))
    run.suite("delta_bound", not rep.bound_violated)


def cmd_find_equilibria(run: Run, cfg):
    spec, _ = _game(cfg)
    ev = _evaluator(cfg, spec)
    eps = cfg.get("epsilon")
    found = find_pure_nash(ev, None if eps is None else as_fraction(eps))
    run.json("equilibria.json", {"method": ev.method, "profiles": found})
    run.suite("pure_nash_found", any(c.status == "ne" for c in found))


def cmd_simulate(run: Run, cfg):
    spec, desc = _game(cfg)
    if "profile" in cfg:
        profile = profile_from_json(cfg["profile"])
    elif desc is not None and desc.profiles:
        profile = next(iter(desc.profiles.values()))
    else:
        raise InvalidInput("simulate needs a 'profile'")
    if cfg.get("method", "exact") == "exact":
        utils = expected_utilities_exact(spec, profile, int(cfg.get("budget", 10**8)))
    else:
        if cfg.get("seed") is None:
            raise InvalidInput("Monte Carlo runs need a seed")
        utils = expected_utilities_mc(spec, profile, int(cfg.get("samples", 10**5)),
                                      int(cfg["seed"]), int(cfg.get("workers", 1)))
    run.json("utilities.json", utils)
    run.write("utilities.csv", csv_text(UTILITY_COLUMNS, utility_rows(utils)))
    run.suite("simulated", True)


def cmd_ic_audit(run: Run, cfg):
    spec, desc = _game(cfg)
    if "profile" in cfg:
        profile = profile_from_json(cfg["profile"])
    elif desc is not None and desc.profiles:
        profile = next(iter(desc.profiles.values()))
    else:
        raise InvalidInput("ic-audit needs a 'profile'")
    rep = ic_audit(spec, profile, bool(cfg.get("sample_aware", False)))
    run.json("ic.json", rep)
    run.suite("incentive_compatible", rep.ok)


def cmd_smoothness(run: Run, cfg):
    spec, _ = _game(cfg)
    rep = smoothness_check(ExactEvaluator(spec))
    run.json("smoothness.json", rep)
    run.suite("smooth", rep.passed)


def _int_range(v, default):
    if v is None:
        return list(default)
    if isinstance(v, int):
        return [v]
    if isinstance(v, str) and ".." in v:
        lo, hi = v.split("..")
        return list(range(int(lo), int(hi) + 1))
    if isinstance(v, str):
        return [int(t) for t in v.split(",")]
    return [int(t) for t in v]


def reproduce_tight(run: Run, cfg):
    ns = _int_range(cfg.get("n"), range(3, 10))
    eta = as_fraction(cfg.get("eta", Fraction(1, 100)))
    seed = int(cfg.get("seed", 0))
    samples = int(cfg.get("samples", 10**5))
    exact_max = int(cfg.get("exact_max_n", 3))
    rows, lines = [], []
    ok = True
    for n in ns:
        desc = gen_tight_poa(n, eta, "exact" if n <= exact_max else "mc", samples,
                             seed + n, int(cfg.get("workers", 1)))
        c = desc.checks
        poa = c["sw_ceiling"] / c["sw_equilibrium"] if desc.verified else None
        method = "exact" if n <= exact_max else "mc"
        low = high = None
        if method == "mc" and poa is not None:
            half = CI_Z * c["sw_equilibrium_stderr"]
            low = float(c["sw_ceiling"]) / (c["sw_equilibrium"] + half)
            high = float(c["sw_ceiling"]) / (c["sw_equilibrium"] - half)
        rows.append({"instance_id": f"tight-{n}", "n": n, "m": 2**n, "delta_star": 0,
                     "sw_star": c["sw_ceiling"], "worst_ne_sw": c["sw_equilibrium"],
                     "poa": poa, "poa_low": low, "poa_high": high, "bound": 2,
                     "method": method, "seed": seed + n if method == "mc" else None})
        ok &= desc.verified
        lines.append(f"n={n}: equilibrium {'verified' if desc.verified else 'NOT verified'} "
                     f"({method}); SW*={float(c['sw_ceiling']):.4f} "
                     f"SW(A^n)={float(c['sw_equilibrium']):.4f} "
                     f"PoA={'n/a' if poa is None else f'{float(poa):.4f}'}")
    poas = [r["poa"] for r in rows]
    mono = all(p is not None for p in poas) and all(b > a for a, b in zip(poas, poas[1:]))
    run.suite("equilibria_verified", ok)
    run.suite("poa_increasing", mono)
    run.write("sweep.csv", csv_text(SWEEP_COLUMNS, rows))
    run.json("tight_poa.json", {"eta": eta, "rows": rows})
    run.write("summary.txt", "\n".join(lines + [f"PoA increasing in n: {mono}"]) + "\n")


def reproduce_linear(run: Run, cfg):
    ns = _int_range(cfg.get("n"), range(3, 6))
    eps = as_fraction(cfg.get("eps", Fraction(9, 100)))
    rows, lines = [], []
    ok = True
    for n in ns:
        desc = gen_linear_poa(n, eps)
        rep = price_of_anarchy(ExactEvaluator(desc.spec))
        good = desc.verified and rep.poa is not None and rep.poa >= n - 1
        ok &= good
        rows.append(_sweep_row(f"linear-{n}", desc.spec, rep, None))
        lines.append(f"n={n}: A strictly dominant={desc.verified} SW*={rep.sw_star} "
                     f"worst NE SW={rep.worst_ne_sw} PoA={float(rep.poa):.4f} (>= {n - 1}: {good})")
    run.suite("linear_poa", ok)
    run.write("sweep.csv", csv_text(SWEEP_COLUMNS, rows))
    run.json("linear_poa.json", {"eps": eps, "rows": rows})
    run.write("summary.txt", "\n".join(lines) + "\n")


def reproduce_deviation(run: Run, cfg):
    n = int(cfg.get("n", 2))
    phis = [as_fraction(p) for p in cfg.get("phi", ["1/1000000", "1/2", "1"])]
    rows, lines = [], []
    ok = True
    for phi in phis:
        desc = gen_deviation_counterexample(n, phi)
        g = desc.checks["gap_given_last"]
        ok &= g is not None and g < 0
        rows.append({"phi": phi, "gap_given_last": g, "gap_aggregate": desc.checks["gap_aggregate"]})
        lines.append(f"phi={phi}: conditional gap with firm {n - 1} last = {float(g):.6g}")
    run.suite("negative_gap", ok)
    run.json("deviation.json", {"n": n, "rows": rows})
    run.write("deviation.csv", csv_text(("phi", "gap_given_last", "gap_aggregate"), rows))
    run.write("summary.txt", "\n".join(lines) + "\n")


def reproduce_smoothness(run: Run, cfg):
    suite = random_sc_suite(int(cfg.get("count", 20)), int(cfg.get("seed", 0)))
    rows = []
    for desc in suite:
        rep = smoothness_check(ExactEvaluator(desc.spec))
        rows.append({"instance_id": desc.name, "n": desc.spec.n, "m": desc.spec.m,
                     "pairs": rep.pairs, "worst_slack": rep.worst_slack, "passed": rep.passed})
    run.suite("smooth", all(r["passed"] for r in rows))
    run.json("smoothness.json", rows)
    run.write("smoothness.csv", csv_text(("instance_id", "n", "m", "pairs", "worst_slack", "passed"), rows))


def reproduce_ic(run: Run, cfg):
    preset = cfg.get("preset", "permutation-invariant")
    rows = []
    if preset == "permutation-invariant":
        suite = random_sc_suite(int(cfg.get("count", 5)), int(cfg.get("seed", 0)),
                                n_max=2, m_max=4, mechanism="unconstrained")
        for desc in suite:
            opts = [desc.spec.options(i)[0] for i in range(desc.spec.n)]
            rep = ic_audit(desc.spec, Profile(tuple(opts)))
            rows.append({"instance": desc.name, "violations": len(rep.violations),
                         "decision_points": rep.decision_points})
        run.suite("no_violations", all(r["violations"] == 0 for r in rows))
    elif preset == "counterexamples":
        for kind in ("uniform", "table"):
            desc = gen_ic_counterexample(kind)
            rep = ic_audit(desc.spec, desc.profiles["obedient"])
            rows.append({"instance": desc.name, "violations": len(rep.violations),
                         "decision_points": rep.decision_points, "report": rep})
        run.suite("violations_flagged", all(r["violations"] > 0 for r in rows))
    else:
        raise InvalidInput(f"unknown ic preset {preset!r}")
    run.json("ic.json", rows)


REPRODUCE = {
    "tight-poa": reproduce_tight,
    "linear-poa": reproduce_linear,
    "deviation-counterexample": reproduce_deviation,
    "smoothness": reproduce_smoothness,
    "ic": reproduce_ic,
}

COMMANDS = {
    "check-sc": cmd_check_sc,
    "measure-delta": cmd_measure_delta,
    "poa": cmd_poa,
    "find-equilibria": cmd_find_equilibria,
    "simulate": cmd_simulate,
    "ic-audit": cmd_ic_audit,
    "smoothness": cmd_smoothness,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monoculture", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["reproduce"]:
        sp = sub.add_parser(name)
        if name == "reproduce":
            sp.add_argument("which", choices=sorted(REPRODUCE))
            sp.add_argument("--n", help="firm counts, e.g. 3..9 or 3,4")
            sp.add_argument("--preset", help="ic preset: permutation-invariant | counterexamples")
        sp.add_argument("--config", help="JSON config file ('-' for stdin)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--exact", action="store_true", help="force exact evaluation")
        sp.add_argument("--epsilon")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text()
        cfg = json.loads(text)
        if not isinstance(cfg, dict):
            raise InvalidInput("config must be a JSON object")
    for key in ("seed", "samples", "workers", "epsilon"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if args.exact:
        cfg["method"] = "exact"
    elif args.samples is not None and "method" not in cfg:
        cfg["method"] = "mc"
    for key in ("n", "preset"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if cfg.get("workers", 1) < 1 or cfg.get("samples", 1) < 1:
        raise InvalidInput("workers and samples must be positive")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = Path(args.out or os.environ.get(OUT_ENV, "out"))
    start = time.perf_counter()
    try:
        cfg = load_config(args)
        name = args.command if args.command != "reproduce" else f"reproduce-{args.which}"
        run = Run(name, cfg, out)
        if args.command == "reproduce":
            REPRODUCE[args.which](run, cfg)
        else:
            COMMANDS[args.command](run, cfg)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (ResourceLimit, UnsupportedConfiguration, InvalidInput) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except MonocultureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    run.json("manifest.json", run.manifest(time.perf_counter() - start))
    for suite, ok in run.suites.items():
        print(f"{suite}: {'PASS' if ok else 'FAIL'}")
    print(f"outputs in {out}")
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
