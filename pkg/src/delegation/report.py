"""Structured pass/fail verdicts shared by every constraint checker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

DEFAULT_TOL = 1e-9


@dataclass
class FeasibilityReport:
    """Verdict of a constraint check.

    ``passed`` is always ``worst_violation <= tolerance``; ``witness`` names the
    lexicographically first profile attaining the worst violation.
    """

    name: str
    worst_violation: float
    tolerance: float = DEFAULT_TOL
    witness: dict[str, Any] | None = None
    details: dict[str, Any] = field(default_factory=dict)
    subreports: dict[str, FeasibilityReport] = field(default_factory=dict)
    advisory: bool = False

    @property
    def passed(self) -> bool:
        return self.worst_violation <= self.tolerance

    def __bool__(self) -> bool:
        return self.passed

    @classmethod
    def from_violations(
        cls,
        name: str,
        violations: np.ndarray,
        tol: float = DEFAULT_TOL,
        witness: Callable[[tuple[int, ...]], dict[str, Any]] | None = None,
        mask: np.ndarray | None = None,
        **details: Any,
    ) -> FeasibilityReport:
        """Reduce an array of signed violations (positive = violated).

        Entries outside ``mask`` are ignored. np.argmax returns the first
        maximiser in C order, which is the lexicographic witness.
        """
        v = np.asarray(violations, dtype=float)
        if mask is not None:
            v = np.where(mask, v, -np.inf)
        if v.size == 0 or np.all(v == -np.inf):
            return cls(name, 0.0, tol, None, dict(details))
        flat = int(np.argmax(v))
        idx = np.unravel_index(flat, v.shape)
        worst = float(v[idx])
        wit = None
        if worst > 0.0:
            wit = witness(tuple(int(i) for i in idx)) if witness else {"index": idx}
        return cls(name, worst if worst > 0.0 else 0.0, tol, wit, dict(details))

    @classmethod
    def combine(
        cls, name: str, subreports: dict[str, FeasibilityReport], tol: float = DEFAULT_TOL
    ) -> FeasibilityReport:
        """All-of conjunction; the witness comes from the worst failing part (first on ties)."""
        worst = max((r.worst_violation for r in subreports.values()), default=0.0)
        witness = None
        failing = [(key, r) for key, r in subreports.items() if not r.passed]
        if failing:
            key, r = max(failing, key=lambda kr: kr[1].worst_violation)
            witness = {"constraint": key, **(r.witness or {})}
        rep = cls(name, worst, tol, witness, subreports=dict(subreports))
        # a part may carry its own tolerance; the conjunction must respect it
        if not all(r.passed for r in subreports.values()) and rep.passed:
            rep.worst_violation = max(worst, math.nextafter(tol, math.inf))
        return rep

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_violation": _jsonable(self.worst_violation),
            "tolerance": self.tolerance,
            "advisory": self.advisory,
            "witness": _jsonable(self.witness),
            "details": _jsonable(self.details),
            "subreports": {k: r.to_dict() for k, r in self.subreports.items()},
        }

    def summary(self, indent: int = 0, max_children: int = 12) -> str:
        """Indented text; long lists of passing subreports are collapsed."""
        pad = " " * indent
        status = "PASS" if self.passed else "FAIL"
        if self.advisory:
            status += " (advisory)"
        line = f"{pad}{self.name}: {status} worst_violation={self.worst_violation:.3e}"
        if not self.passed and self.witness:
            line += f" witness={_jsonable(self.witness)}"
        lines = [line]
        children = list(self.subreports.values())
        shown = children if len(children) <= max_children else [r for r in children if not r.passed]
        for r in shown:
            lines.append(r.summary(indent + 2, max_children))
        if len(shown) < len(children):
            lines.append(f"{pad}  ... {len(children) - len(shown)} passing subreports not shown")
        return "\n".join(lines)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
