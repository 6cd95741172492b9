"""Finite-type direct mechanisms and their incentive/participation checkers.

Transfers are *outflows*: player i's ex-post payoff from outcome x with
transfer t_i is ``u_i(x, theta_i) - t_i``. The default outcome ``o`` carries
zero transfers, so ``u_i(o, theta_i)`` is the outside option.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Hashable, Sequence

import numpy as np

from .report import DEFAULT_TOL, FeasibilityReport

__all__ = [
    "FiniteTypeSpace",
    "UtilityModel",
    "DirectMechanism",
    "FeasibilityReport",
    "check_bic",
    "check_iir",
    "check_dsic",
    "check_epir",
    "check_budget_balance",
    "delegated_implementable",
    "write_mechanism_csv",
    "read_mechanism_csv",
    "read_utility_csv",
    "write_utility_csv",
]

PMF_TOL = 1e-12
CSV_FMT = "{:.12g}"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteTypeSpace:
    """Ordered delegate types, agent types and a joint pmf over pairs."""

    theta1: np.ndarray
    theta2: np.ndarray
    pmf: np.ndarray

    def __post_init__(self) -> None:
        t1 = _frozen(self.theta1)
        t2 = _frozen(self.theta2)
        pmf = _frozen(self.pmf)
        if pmf.shape != (t1.size, t2.size):
            raise ValueError(f"pmf shape {pmf.shape} != ({t1.size}, {t2.size})")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be non-negative")
        if abs(pmf.sum() - 1.0) > PMF_TOL:
            raise ValueError(f"pmf sums to {pmf.sum():.15g}, not 1")
        if np.any(pmf.sum(axis=1) <= 0) or np.any(pmf.sum(axis=0) <= 0):
            raise ValueError("both marginals must be strictly positive")
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def product(cls, theta1, p1, theta2, p2) -> FiniteTypeSpace:
        p1 = np.asarray(p1, dtype=float)
        p2 = np.asarray(p2, dtype=float)
        pmf = np.outer(p1 / p1.sum(), p2 / p2.sum())
        return cls(theta1, theta2, pmf / pmf.sum())

    @property
    def shape(self) -> tuple[int, int]:
        return self.pmf.shape

    @property
    def marginal1(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def marginal2(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    @property
    def cond2(self) -> np.ndarray:
        """p(theta2 | theta1), rows sum to one."""
        return self.pmf / self.marginal1[:, None]

    @property
    def cond1(self) -> np.ndarray:
        """p(theta1 | theta2), columns sum to one."""
        return self.pmf / self.marginal2[None, :]

    @property
    def support(self) -> np.ndarray:
        return self.pmf > 0


@dataclass(frozen=True, eq=False)
class UtilityModel:
    """Outcome utilities for both players.

    ``u1(label, theta1_array)`` and ``u2(label, theta2_array)`` must accept a
    numpy array of types. ``default`` is the no-agreement outcome o.
    """

    u1: Callable[[Hashable, np.ndarray], Any]
    u2: Callable[[Hashable, np.ndarray], Any]
    default: Hashable = "o"

    def table(self, player: int, labels: Sequence[Hashable], thetas: np.ndarray) -> np.ndarray:
        """Utilities as a (len(labels), len(thetas)) array."""
        fn = self.u1 if player == 1 else self.u2
        th = np.asarray(thetas, dtype=float)
        out = np.empty((len(labels), th.size))
        for k, lab in enumerate(labels):
            out[k] = np.broadcast_to(np.asarray(fn(lab, th), dtype=float), th.shape)
        return out

    def outside(self, player: int, thetas: np.ndarray) -> np.ndarray:
        return self.table(player, [self.default], thetas)[0]


@dataclass(frozen=True, eq=False)
class DirectMechanism:
    """Outcome labels and transfers over every type profile of a space."""

    space: FiniteTypeSpace
    utilities: UtilityModel
    labels: tuple
    outcome: np.ndarray  # (n1, n2) indices into labels
    t1: np.ndarray
    t2: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        shape = self.space.shape
        for name in ("outcome", "t1", "t2"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"{name} table must be total: shape {arr.shape} != {shape}")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "outcome", _frozen(self.outcome, int))
        object.__setattr__(self, "t1", _frozen(self.t1))
        object.__setattr__(self, "t2", _frozen(self.t2))

    @classmethod
    def from_labels(cls, space, utilities, label_table, t1, t2) -> DirectMechanism:
        """Build from a 2-D table of hashable outcome labels."""
        flat = [lab for row in label_table for lab in row]
        labels = list(dict.fromkeys(flat))
        index = {lab: k for k, lab in enumerate(labels)}
        n1, n2 = space.shape
        idx = np.array([index[lab] for lab in flat], dtype=int).reshape(n1, n2)
        return cls(space, utilities, tuple(labels), idx, t1, t2)

    def label(self, i: int, j: int) -> Hashable:
        return self.labels[self.outcome[i, j]]

    def label_table(self) -> list[list[Hashable]]:
        return [[self.labels[k] for k in row] for row in self.outcome]

    def values(self, player: int) -> np.ndarray:
        """u_player(label, theta) for every label, as (n_labels, n_types)."""
        key = f"v{player}"
        if key not in self._cache:
            th = self.space.theta1 if player == 1 else self.space.theta2
            self._cache[key] = self.utilities.table(player, self.labels, th)
        return self._cache[key]

    def ex_post(self, player: int) -> np.ndarray:
        """Truthful ex-post payoff of ``player`` at every profile."""
        v = self.values(player)
        n1, n2 = self.space.shape
        if player == 1:
            return v[self.outcome, np.arange(n1)[:, None]] - self.t1
        return v[self.outcome, np.arange(n2)[None, :]] - self.t2


def _interim_matrix(m: DirectMechanism, player: int) -> np.ndarray:
    """A[type, report]: interim payoff of ``type`` when reporting ``report``."""
    v = m.values(player)
    if player == 1:
        c = m.space.cond2  # (i, j)
        # payoff of true i reporting k at column j: v[Y[k, j], i] - t1[k, j]
        vy = v[m.outcome]  # (k, j, i)
        return np.einsum("ij,kji->ik", c, vy) - c @ m.t1.T
    c = m.space.cond1  # (i, j)
    vy = v[m.outcome]  # (i, k, j)
    return np.einsum("ij,ikj->jk", c, vy) - c.T @ m.t2


def check_bic(m: DirectMechanism, player: int, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    """Interim truth-telling against every misreport."""
    A = _interim_matrix(m, player)
    viol = A - np.diag(A)[:, None]
    types = m.space.theta1 if player == 1 else m.space.theta2
    return FeasibilityReport.from_violations(
        f"bic{player}",
        viol,
        tol,
        witness=lambda ix: {f"theta{player}": float(types[ix[0]]), "report": float(types[ix[1]])},
    )


def check_iir(m: DirectMechanism, player: int, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    A = _interim_matrix(m, player)
    types = m.space.theta1 if player == 1 else m.space.theta2
    viol = m.utilities.outside(player, types) - np.diag(A)
    return FeasibilityReport.from_violations(
        f"iir{player}", viol, tol, witness=lambda ix: {f"theta{player}": float(types[ix[0]])}
    )


def _agent_only(player: int) -> None:
    if player != 2:
        raise ValueError("dominant-strategy and ex-post checks apply to the agent (player 2)")


def check_dsic(m: DirectMechanism, player: int = 2, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    """Agent truth-telling profile by profile, for each delegate type.

    Only profiles (and misreports) inside the support of the joint pmf are
    constrained, as in the definition of implementation on supp mu.
    """
    _agent_only(player)
    v2 = m.values(2)
    n2 = m.space.shape[1]
    # G[i, j, k]: agent type j reporting k when the delegate is i
    G = v2[m.outcome] - m.t2[:, :, None]
    G = np.transpose(G, (0, 2, 1))
    truth = G[:, np.arange(n2), np.arange(n2)]  # (i, j)
    viol = G - truth[:, :, None]
    sup = m.space.support
    mask = sup[:, :, None] & sup[:, None, :]
    t1, t2 = m.space.theta1, m.space.theta2
    return FeasibilityReport.from_violations(
        "dsic2",
        viol,
        tol,
        witness=lambda ix: {
            "theta1": float(t1[ix[0]]),
            "theta2": float(t2[ix[1]]),
            "report": float(t2[ix[2]]),
        },
        mask=mask,
    )


def check_epir(m: DirectMechanism, player: int = 2, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    _agent_only(player)
    t1, t2 = m.space.theta1, m.space.theta2
    viol = m.utilities.outside(2, t2)[None, :] - m.ex_post(2)
    return FeasibilityReport.from_violations(
        "epir2",
        viol,
        tol,
        witness=lambda ix: {"theta1": float(t1[ix[0]]), "theta2": float(t2[ix[1]])},
        mask=m.space.support,
    )


def check_budget_balance(
    m: DirectMechanism, mode: str = "exact", tol: float = DEFAULT_TOL
) -> FeasibilityReport:
    """t1 + t2 == 0 (exact) or t1 + t2 >= 0 (weak: no outside subsidy).

    With outflow signs, a positive sum is money leaving the two players.
    """
    total = m.t1 + m.t2
    if mode == "exact":
        viol = np.abs(total)
    elif mode == "weak":
        viol = -total
    else:
        raise ValueError(f"mode must be 'exact' or 'weak', got {mode!r}")
    t1, t2 = m.space.theta1, m.space.theta2
    return FeasibilityReport.from_violations(
        f"budget_balance_{mode}",
        viol,
        tol,
        witness=lambda ix: {"theta1": float(t1[ix[0]]), "theta2": float(t2[ix[1]])},
    )


def delegated_implementable(m: DirectMechanism, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    """Centralised implementability plus agent DSIC and EPIR."""
    parts = {
        "bic1": check_bic(m, 1, tol),
        "iir1": check_iir(m, 1, tol),
        "bic2": check_bic(m, 2, tol),
        "iir2": check_iir(m, 2, tol),
        "dsic2": check_dsic(m, 2, tol),
        "epir2": check_epir(m, 2, tol),
    }
    return FeasibilityReport.combine("delegated_implementable", parts, tol)


# --- CSV interchange ----------------------------------------------------------


def _key(x: float) -> float:
    return float(CSV_FMT.format(x))


def write_mechanism_csv(m: DirectMechanism, path: str | Path) -> None:
    """Rows (theta1, theta2, pmf, outcome_label, t1, t2)."""
    f = CSV_FMT.format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta1", "theta2", "pmf", "outcome_label", "t1", "t2"])
        for i, a in enumerate(m.space.theta1):
            for j, b in enumerate(m.space.theta2):
                w.writerow([f(a), f(b), f(m.space.pmf[i, j]), m.label(i, j), f(m.t1[i, j]), f(m.t2[i, j])])


def read_mechanism_csv(path: str | Path, utilities: UtilityModel) -> DirectMechanism:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    need = {"theta1", "theta2", "pmf", "outcome_label", "t1", "t2"}
    if not rows or not need <= set(rows[0]):
        raise ValueError(f"{path}: expected columns {sorted(need)}")
    th1 = sorted({_key(float(r["theta1"])) for r in rows})
    th2 = sorted({_key(float(r["theta2"])) for r in rows})
    i_of = {v: k for k, v in enumerate(th1)}
    j_of = {v: k for k, v in enumerate(th2)}
    n1, n2 = len(th1), len(th2)
    pmf = np.full((n1, n2), np.nan)
    t1 = np.zeros((n1, n2))
    t2 = np.zeros((n1, n2))
    lab = [[None] * n2 for _ in range(n1)]
    for r in rows:
        i, j = i_of[_key(float(r["theta1"]))], j_of[_key(float(r["theta2"]))]
        pmf[i, j] = float(r["pmf"])
        lab[i][j] = r["outcome_label"]
        t1[i, j] = float(r["t1"])
        t2[i, j] = float(r["t2"])
    if np.any(np.isnan(pmf)):
        raise ValueError(f"{path}: mechanism table is not total over the type grid")
    pmf = pmf / pmf.sum()  # undo 12-digit rounding
    space = FiniteTypeSpace(th1, th2, pmf)
    return DirectMechanism.from_labels(space, utilities, lab, t1, t2)


def read_utility_csv(path: str | Path, default: Hashable = "o") -> UtilityModel:
    """Tabulated utilities: rows (player, theta, outcome_label, utility)."""
    table: dict[tuple[int, str, float], float] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            table[(int(r["player"]), r["outcome_label"], _key(float(r["theta"])))] = float(r["utility"])
    if not table:
        raise ValueError(f"{path}: no utility rows")

    def make(player: int):
        def u(label, thetas):
            try:
                return np.array([table[(player, str(label), _key(t))] for t in np.ravel(thetas)])
            except KeyError as exc:
                raise KeyError(f"{path}: no utility for player {player}, {exc.args[0][1:]}") from None

        return u

    return UtilityModel(make(1), make(2), str(default))


def write_utility_csv(m: DirectMechanism, path: str | Path) -> None:
    """Dump the utilities a mechanism needs (all labels plus the default)."""
    labels = list(dict.fromkeys([*m.labels, m.utilities.default]))
    f = CSV_FMT.format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["player", "theta", "outcome_label", "utility"])
        for player, th in ((1, m.space.theta1), (2, m.space.theta2)):
            tab = m.utilities.table(player, labels, th)
            for k, lab in enumerate(labels):
                for j, t in enumerate(th):
                    w.writerow([player, f(t), lab, f(tab[k, j])])
