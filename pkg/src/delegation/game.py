"""Two-stage delegation game: the delegate picks a menu, the agent picks a contract.

Opting out is always available to both players and yields the default
outcome with zero transfers. Choice indices use ``OPT_OUT = -1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from .mech import CSV_FMT, DirectMechanism, FiniteTypeSpace, UtilityModel
from .report import DEFAULT_TOL, FeasibilityReport

__all__ = [
    "OPT_OUT",
    "Outcome",
    "ContractualRights",
    "Equilibrium",
    "agent_best_response",
    "solve_pbe",
    "canonical_rights_from_scf",
    "canonical_preferences",
    "outcomes_match",
    "verify_by_delegation",
]

OPT_OUT = -1


@dataclass(frozen=True)
class Outcome:
    """A contract: an outcome label plus the two transfers (outflows)."""

    label: Hashable
    t1: float = 0.0
    t2: float = 0.0


@dataclass(frozen=True)
class ContractualRights:
    """A finite list of nonempty menus of outcomes."""

    menus: tuple[tuple[Outcome, ...], ...]

    def __post_init__(self) -> None:
        menus = tuple(tuple(menu) for menu in self.menus)
        if not menus:
            raise ValueError("rights need at least one menu")
        for k, menu in enumerate(menus):
            if not menu:
                raise ValueError(f"menu {k} is empty")
        object.__setattr__(self, "menus", menus)

    def __len__(self) -> int:
        return len(self.menus)

    def to_csv(self, path: str | Path) -> None:
        f = CSV_FMT.format
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["menu_id", "outcome_label", "t1", "t2"])
            for k, menu in enumerate(self.menus):
                for c in menu:
                    lab = f(c.label) if isinstance(c.label, float) else c.label
                    w.writerow([k, lab, f(c.t1), f(c.t2)])

    @classmethod
    def from_csv(cls, path: str | Path) -> ContractualRights:
        menus: dict[int, list[Outcome]] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                menus.setdefault(int(row["menu_id"]), []).append(
                    Outcome(row["outcome_label"], float(row["t1"]), float(row["t2"]))
                )
        return cls(tuple(tuple(menus[k]) for k in sorted(menus)))


def _pick(values: np.ndarray, preferred: int | None, tol: float) -> int:
    """Index of a maximiser of ``values`` whose last slot is the opt-out.

    Anything within ``tol`` of the maximum counts as a tie. Ties go to
    ``preferred`` when it is tied, else to the lowest index; the opt-out slot
    is last, so it only wins when it is strictly better than every contract.
    """
    best = values.max()
    if preferred is not None and preferred >= 0 and values[preferred] >= best - tol:
        return int(preferred)
    k = int(np.flatnonzero(values >= best - tol)[0])
    return OPT_OUT if k == values.size - 1 else k


def _menu_values(menu: Sequence[Outcome], player: int, thetas, utilities: UtilityModel) -> np.ndarray:
    """Payoffs of each contract (rows) plus the opt-out (last row) per type."""
    labels = [c.label for c in menu] + [utilities.default]
    tab = utilities.table(player, labels, thetas)
    tr = np.array([c.t1 if player == 1 else c.t2 for c in menu] + [0.0])
    return tab - tr[:, None]


def agent_best_response(
    menu: Sequence[Outcome],
    theta2: float,
    utilities: UtilityModel,
    tie_break: int | None = None,
    tol: float = DEFAULT_TOL,
) -> int:
    """Contract index the agent picks from ``menu``, or ``OPT_OUT``."""
    vals = _menu_values(menu, 2, np.array([float(theta2)]), utilities)[:, 0]
    return _pick(vals, tie_break, tol)


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Strategies of the backward-induction equilibrium and the induced table."""

    rights: ContractualRights
    space: FiniteTypeSpace
    delegate_choice: np.ndarray  # (n1,) menu index or OPT_OUT
    agent_choice: np.ndarray  # (n_menus, n2) contract index or OPT_OUT
    delegate_payoff: np.ndarray  # interim, (n1,)
    default: Hashable = "o"

    def outcome(self, i: int, j: int) -> Outcome:
        k = self.delegate_choice[i]
        if k == OPT_OUT:
            return Outcome(self.default)
        c = self.agent_choice[k, j]
        return Outcome(self.default) if c == OPT_OUT else self.rights.menus[k][c]

    def induced_outcome(self) -> list[list[Outcome]]:
        n1, n2 = self.space.shape
        return [[self.outcome(i, j) for j in range(n2)] for i in range(n1)]

    def to_mechanism(self, utilities: UtilityModel) -> DirectMechanism:
        table = self.induced_outcome()
        labels = [[c.label for c in row] for row in table]
        t1 = np.array([[c.t1 for c in row] for row in table])
        t2 = np.array([[c.t2 for c in row] for row in table])
        return DirectMechanism.from_labels(self.space, utilities, labels, t1, t2)


def solve_pbe(
    rights: ContractualRights,
    utilities: UtilityModel,
    space: FiniteTypeSpace,
    agent_prefer: np.ndarray | None = None,
    delegate_prefer: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
) -> Equilibrium:
    """Backward induction: agent responses menu by menu, then the delegate.

    Under private values the agent's response does not depend on beliefs, so
    this pair of maps is a PBE. ``agent_prefer[k, j]`` and
    ``delegate_prefer[i]`` name the choices favoured in ties (``None`` or a
    negative entry means lowest index).
    """
    n1, n2 = space.shape
    n_menus = len(rights)
    agent_choice = np.empty((n_menus, n2), dtype=int)
    # expected delegate payoff of each menu (last row: opting out)
    menu_payoff = np.empty((n_menus + 1, n1))
    cond = space.cond2
    for k, menu in enumerate(rights.menus):
        v2 = _menu_values(menu, 2, space.theta2, utilities)
        v1 = _menu_values(menu, 1, space.theta1, utilities)  # (len+1, n1)
        for j in range(n2):
            pref = None if agent_prefer is None else int(agent_prefer[k, j])
            agent_choice[k, j] = _pick(v2[:, j], pref, tol)
        rows = np.where(agent_choice[k] == OPT_OUT, len(menu), agent_choice[k])
        menu_payoff[k] = np.einsum("ij,ji->i", cond, v1[rows])
    menu_payoff[n_menus] = utilities.outside(1, space.theta1)
    delegate_choice = np.empty(n1, dtype=int)
    for i in range(n1):
        pref = None if delegate_prefer is None else int(delegate_prefer[i])
        delegate_choice[i] = _pick(menu_payoff[:, i], pref, tol)
    chosen = np.where(delegate_choice == OPT_OUT, n_menus, delegate_choice)
    return Equilibrium(
        rights,
        space,
        delegate_choice,
        agent_choice,
        menu_payoff[chosen, np.arange(n1)],
        utilities.default,
    )


def _row_contracts(m: DirectMechanism, i: int) -> tuple[list[Outcome], np.ndarray]:
    """Distinct outcomes of row i over supported columns, and each column's index."""
    contracts: list[Outcome] = []
    where: dict[Outcome, int] = {}
    col = np.full(m.space.shape[1], -1, dtype=int)
    for j in np.flatnonzero(m.space.support[i]):
        c = Outcome(m.label(i, j), float(m.t1[i, j]), float(m.t2[i, j]))
        if c not in where:
            where[c] = len(contracts)
            contracts.append(c)
        col[j] = where[c]
    return contracts, col


def canonical_rights_from_scf(m: DirectMechanism) -> ContractualRights:
    """One menu per delegate type: the distinct outcomes of its row on the support."""
    return ContractualRights(tuple(tuple(_row_contracts(m, i)[0]) for i in range(m.space.shape[0])))


def canonical_preferences(m: DirectMechanism) -> tuple[np.ndarray, np.ndarray]:
    """Tie-break targets that select the designated contract and menu.

    ``agent_prefer[k, j]`` is the contract of menu k assigned to agent type j
    (or -1 off the support); ``delegate_prefer[i] = i``.
    """
    n1 = m.space.shape[0]
    agent_prefer = np.stack([_row_contracts(m, i)[1] for i in range(n1)])
    return agent_prefer, np.arange(n1)


def outcomes_match(eq: Equilibrium, target: DirectMechanism, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    """Compare the induced outcome with ``target`` on positive-mass profiles.

    A label mismatch counts as an infinite violation; otherwise the violation
    is the larger transfer discrepancy.
    """
    n1, n2 = target.space.shape
    viol = np.zeros((n1, n2))
    induced = eq.induced_outcome()
    for i in range(n1):
        for j in range(n2):
            c = induced[i][j]
            if c.label != target.label(i, j):
                viol[i, j] = np.inf
            else:
                viol[i, j] = max(abs(c.t1 - target.t1[i, j]), abs(c.t2 - target.t2[i, j]))
    th1, th2 = target.space.theta1, target.space.theta2

    def witness(ix):
        i, j = ix
        c = induced[i][j]
        return {
            "theta1": float(th1[i]),
            "theta2": float(th2[j]),
            "induced": [c.label, c.t1, c.t2],
            "target": [target.label(i, j), float(target.t1[i, j]), float(target.t2[i, j])],
        }

    return FeasibilityReport.from_violations(
        "outcomes_match", viol, tol, witness=witness, mask=target.space.support
    )


def verify_by_delegation(m: DirectMechanism, tol: float = DEFAULT_TOL) -> tuple[Equilibrium, FeasibilityReport]:
    """Play the canonical rights of ``m`` and compare with ``m`` itself."""
    rights = canonical_rights_from_scf(m)
    agent_prefer, delegate_prefer = canonical_preferences(m)
    eq = solve_pbe(rights, m.utilities, m.space, agent_prefer, delegate_prefer, tol)
    return eq, outcomes_match(eq, m, tol)
