"""Checks and the JSON run report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

__all__ = ["Check", "RunReport", "evaluate"]

COMPARATORS = ("abs_le", "rel_le", "le", "ge", "eq")


def _finite(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def evaluate(measured, expected, tolerance, comparator):
    """Pass flag from the numbers alone.

    ``abs_le``: |m - e| <= tol; ``rel_le``: |m - e| <= tol |e|;
    ``le``/``ge``: m <= e / m >= e; ``eq``: m == e.
    """
    if comparator not in COMPARATORS:
        raise ValueError(f"unknown comparator {comparator!r}")
    if comparator == "eq":
        return measured == expected
    if not (_finite(measured) and _finite(expected)):
        return False
    if comparator == "abs_le":
        return abs(measured - expected) <= tolerance
    if comparator == "rel_le":
        return abs(measured - expected) <= tolerance * abs(expected)
    if comparator == "le":
        return measured <= expected
    return measured >= expected


@dataclass
class Check:
    """One named measurement against its expectation."""

    name: str
    measured: object
    expected: object
    comparator: str = "abs_le"
    tolerance: float | None = None
    note: str = ""
    passed: bool = field(init=False)

    def __post_init__(self):
        if isinstance(self.measured, float) or hasattr(self.measured, "dtype"):
            self.measured = _py(self.measured)
        self.expected = _py(self.expected)
        self.passed = bool(evaluate(self.measured, self.expected, self.tolerance, self.comparator))

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        tol = "" if self.tolerance is None else f" tol={self.tolerance:.3g}"
        return (f"[{flag}] {self.name}: measured={self.measured!r} {self.comparator} "
                f"expected={self.expected!r}{tol}")


def _py(v):
    if hasattr(v, "item"):
        return v.item()
    return v


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return _py(v)


def _from_json(v):
    if v in ("nan", "inf", "-inf"):
        return float(v)
    return v


@dataclass
class RunReport:
    """Outcome of one scenario run."""

    scenario: str
    checks: list
    wall_clock: float
    version: str
    config: dict
    seed: int
    artifacts: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return _json_safe(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        checks = []
        for c in d["checks"]:
            chk = Check(c["name"], _from_json(c["measured"]), _from_json(c["expected"]),
                        c["comparator"], c["tolerance"], c.get("note", ""))
            checks.append(chk)
        return cls(d["scenario"], checks, d["wall_clock"], d["version"], d["config"], d["seed"],
                   d.get("artifacts", []))

    def recompute_flags(self):
        """Pass flags recomputed from (measured, expected, tolerance, comparator)."""
        return [bool(evaluate(c.measured, c.expected, c.tolerance, c.comparator)) for c in self.checks]
