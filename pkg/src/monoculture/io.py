"""JSON (de)serialization of games and results.

Exact numbers are written as ``"p/q"`` strings so that reading a file back
reproduces the same rationals.  Candidates and firms are 0-based.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from fractions import Fraction

import numpy as np

from .common import InvalidInput
from .game import AdviceSpace, GameSpec, Profile, SelectionPolicy, ValueDistribution
from .technology import technology_from_json


def jsonable(obj):
    """Recursively convert Fractions, tuples, numpy scalars and dataclass reports."""
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return jsonable(float(obj))
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, tuple) else "|".join(map(str, k)): jsonable(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, Profile):
        return list(obj.choices)
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(jsonable(obj), sort_keys=True).encode()).hexdigest()


def spec_to_json(spec: GameSpec) -> dict:
    adv = spec.advice
    return {
        "n": spec.n,
        "m": spec.m,
        "mechanism": spec.mechanism,
        "values": spec.values.to_json(),
        "advice": {
            "common": [t.to_json() for t in adv.common],
            "idiosyncratic": [[t.to_json() for t in h] for h in adv.idiosyncratic],
            "access": None if adv.access is None else [list(a) for a in adv.access],
        },
    }


def spec_from_json(obj) -> GameSpec:
    if not isinstance(obj, dict):
        raise InvalidInput("game spec must be a JSON object")
    try:
        adv = obj["advice"]
        advice = AdviceSpace(
            tuple(technology_from_json(t) for t in adv.get("common", ())),
            tuple(tuple(technology_from_json(t) for t in h) for h in adv.get("idiosyncratic", ())),
            None if adv.get("access") is None else tuple(tuple(a) for a in adv["access"]),
        )
        return GameSpec(int(obj["n"]), int(obj["m"]), ValueDistribution.from_json(obj["values"]),
                        advice, obj.get("mechanism", "obedient"))
    except KeyError as exc:
        raise InvalidInput(f"game spec missing field {exc}") from None
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise InvalidInput(f"malformed game spec: {exc}") from None


def profile_from_json(obj) -> Profile:
    if isinstance(obj, list):
        return Profile(tuple(obj))
    policies = obj.get("policies")
    return Profile(
        tuple(obj["choices"]),
        None if policies is None else tuple(SelectionPolicy.from_json(p) for p in policies),
    )


# statistical rows carry the seed and a normal 95% interval
CI_Z = 1.959963984540054
UTILITY_COLUMNS = ("profile", "firm", "utility", "stderr", "ci_low", "ci_high", "method", "seed")
SWEEP_COLUMNS = ("instance_id", "n", "m", "delta_star", "sw_star", "worst_ne_sw", "poa",
                 "poa_low", "poa_high", "bound", "method", "seed")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def utility_rows(utils) -> list[dict]:
    rows = []
    for i, u in enumerate(utils.utilities):
        se = None if utils.stderr is None else utils.stderr[i]
        rows.append({
            "profile": str(utils.profile),
            "firm": i,
            "utility": u,
            "stderr": se,
            "ci_low": None if se is None else u - CI_Z * se,
            "ci_high": None if se is None else u + CI_Z * se,
            "method": utils.method,
            "seed": utils.seed,
        })
    return rows
