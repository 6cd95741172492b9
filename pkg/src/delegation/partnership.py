"""Dissolving a partnership through a delegate.

Partners own shares ``r1 + r2 = 1`` of an asset worth ``theta * v(q)`` to an
owner of share ``q``. Efficient dissolution hands the whole asset to the
higher type. The delegate commits to a takeover bid and an ask indexed by a
cutoff lambda; the agent sells at the bid or buys at the ask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dist import TypeDistribution, discretize
from .game import ContractualRights, Equilibrium, Outcome, solve_pbe
from .mech import FiniteTypeSpace, UtilityModel
from .report import DEFAULT_TOL, FeasibilityReport

__all__ = [
    "PartnershipEnv",
    "BidAskSchedule",
    "Recommendation",
    "proportional",
    "control_premium",
    "bid_ask",
    "dissolution_payoffs",
    "feasibility",
    "impossibility_scan",
    "whom_to_delegate",
    "bid_ask_game",
]

SHAPE_SLACK = 1e-9


def proportional(q):
    return np.asarray(q, dtype=float)


def control_premium(q):
    """v(q) = max(2q - 1, 0): a minority stake is worthless."""
    return np.maximum(2.0 * np.asarray(q, dtype=float) - 1.0, 0.0)


@dataclass(frozen=True, eq=False)
class PartnershipEnv:
    F: TypeDistribution
    r1: float
    value: Callable[[np.ndarray], np.ndarray] = proportional
    grid_size: int = 101
    gains_from_control: bool = False  # also require v(q) <= q

    def __post_init__(self) -> None:
        if not 0.0 <= self.r1 <= 1.0:
            raise ValueError("r1 must lie in [0, 1]")
        q = np.linspace(0.0, 1.0, 201)
        v = np.asarray(self.value(q), dtype=float)
        if abs(v[-1] - 1.0) > 1e-12:
            raise ValueError("ownership value must satisfy v(1) = 1")
        if abs(v[0]) > 1e-12:
            raise ValueError("ownership value must satisfy v(0) = 0")
        if np.any(np.diff(v) < -SHAPE_SLACK):
            raise ValueError("ownership value must be nondecreasing")
        if np.any(v[2:] - 2 * v[1:-1] + v[:-2] < -SHAPE_SLACK):
            raise ValueError("ownership value must be convex")
        if self.gains_from_control and np.any(v > q + SHAPE_SLACK):
            raise ValueError("gains from control need v(q) <= q")

    @property
    def r2(self) -> float:
        return 1.0 - self.r1

    def share(self, player: int) -> float:
        return self.r1 if player == 1 else self.r2

    def theta(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_size)


@dataclass(frozen=True, eq=False)
class BidAskSchedule:
    lam: np.ndarray
    bid: np.ndarray
    ask: np.ndarray


def bid_ask(env: PartnershipEnv, lam: np.ndarray | None = None) -> BidAskSchedule:
    """bid = lambda - I_F(lambda), ask = I_F(lambda)."""
    lam = env.theta() if lam is None else np.asarray(lam, dtype=float)
    ask = np.asarray(env.F.partial_cdf_integral(lam), dtype=float)
    return BidAskSchedule(lam, lam - ask, ask)


def dissolution_payoffs(env: PartnershipEnv, theta1, theta2):
    """(delegate, agent) payoffs of efficient dissolution with delegate type theta1."""
    I = np.asarray(env.F.partial_cdf_integral(theta1), dtype=float)
    agent = np.maximum(theta1, theta2) - I
    if np.ndim(agent) == 0:
        return float(I), float(agent)
    return np.broadcast_to(I, agent.shape), agent


def feasibility(env: PartnershipEnv, delegate: int, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    """Outside options of both partners within the delegation bounds.

    Delegate: theta v(r_delegate) <= I_F(theta). Agent: theta v(r_agent) <=
    theta - I_F(theta).
    """
    if delegate not in (1, 2):
        raise ValueError("delegate must be 1 or 2")
    agent = 3 - delegate
    th = env.theta()
    I = np.asarray(env.F.partial_cdf_integral(th), dtype=float)
    v_d = float(env.value(env.share(delegate)))
    v_a = float(env.value(env.share(agent)))
    parts = {
        "delegate": FeasibilityReport.from_violations(
            "delegate", th * v_d - I, tol, witness=lambda ix: {"theta": float(th[ix[0]])}
        ),
        "agent": FeasibilityReport.from_violations(
            "agent", th * v_a - (th - I), tol, witness=lambda ix: {"theta": float(th[ix[0]])}
        ),
    }
    rep = FeasibilityReport.combine(f"delegate={delegate}", parts, tol)
    rep.details.update(r1=env.r1, delegate=delegate)
    return rep


def impossibility_scan(
    F: TypeDistribution, r1_grid: np.ndarray | None = None, tol: float = DEFAULT_TOL, grid_size: int = 101
) -> FeasibilityReport:
    """Feasibility of the best (r1, delegate) pair with proportional ownership value.

    The report is for the claim "some ownership split and assignment is
    feasible": its worst violation is the smallest violation over the scan,
    so a failed report with a positive value certifies impossibility on the
    grid. ``details["violations"]`` lists (r1, delegate 1, delegate 2).
    """
    r1_grid = np.linspace(0.0, 1.0, 21) if r1_grid is None else np.asarray(r1_grid, dtype=float)
    table = np.empty((r1_grid.size, 2))
    for k, r1 in enumerate(r1_grid):
        env = PartnershipEnv(F, float(r1), proportional, grid_size)
        for d in (1, 2):
            table[k, d - 1] = feasibility(env, d, tol).worst_violation
    flat = int(np.argmin(table))
    k, d = np.unravel_index(flat, table.shape)
    rows = [[float(r), float(a), float(b)] for r, (a, b) in zip(r1_grid, table)]
    return FeasibilityReport(
        "impossibility_scan",
        float(table[k, d]),
        tol,
        {"r1": float(r1_grid[k]), "delegate": int(d) + 1},
        {
            "violations": rows,
            "min_violation_delegate1": float(table[:, 0].min()),
            "min_violation_delegate2": float(table[:, 1].min()),
        },
    )


@dataclass(frozen=True, eq=False)
class Recommendation:
    delegate: int | None
    feasible1: bool
    feasible2: bool
    implication_holds: bool  # feasible(1) implies feasible(2)
    advisory: bool  # premises mean >= 1/2 and r1 >= r2 not met
    reports: dict[str, FeasibilityReport] = field(default_factory=dict)


def whom_to_delegate(env: PartnershipEnv, tol: float = DEFAULT_TOL) -> Recommendation:
    """Feasible assignment, preferring player 2 as delegate."""
    rep1, rep2 = feasibility(env, 1, tol), feasibility(env, 2, tol)
    premises = env.F.mean >= 0.5 and env.r1 >= env.r2
    choice = 2 if rep2.passed else (1 if rep1.passed else None)
    return Recommendation(
        choice,
        rep1.passed,
        rep2.passed,
        (not rep1.passed) or rep2.passed,
        not premises,
        {"delegate=1": rep1, "delegate=2": rep2},
    )


def bid_ask_game(env: PartnershipEnv, delegate: int, tol: float = DEFAULT_TOL) -> tuple[Equilibrium, FeasibilityReport]:
    """Play the bid/ask menus, one per lambda on the grid, and compare with efficiency.

    In the game the delegate is player 1 whichever partner it is. Menu k holds
    "delegate keeps the asset and pays the bid" then "agent takes over and
    pays the ask"; the agent's ties go to the first, so the asset stays with
    the delegate when types are equal. Delegate ties go to lambda = own type.
    """
    agent = 3 - delegate
    F = env.F
    th, w = discretize(F, env.grid_size)
    space = FiniteTypeSpace.product(th, w, th, w)
    sched = bid_ask(env, th)
    v_d = float(env.value(env.share(delegate)))
    v_a = float(env.value(env.share(agent)))

    def u_del(x, t):
        return {"delegate_owns": t, "agent_owns": 0.0 * t, "o": v_d * t}[x]

    def u_agent(x, t):
        return {"delegate_owns": 0.0 * t, "agent_owns": t, "o": v_a * t}[x]

    menus = tuple(
        (Outcome("delegate_owns", float(b), -float(b)), Outcome("agent_owns", -float(a), float(a)))
        for b, a in zip(sched.bid, sched.ask)
    )
    rights = ContractualRights(menus)
    utilities = UtilityModel(u_del, u_agent, "o")
    eq = solve_pbe(rights, utilities, space, delegate_prefer=np.arange(th.size), tol=tol)
    m = eq.to_mechanism(utilities)
    Ud_target, Ua_target = dissolution_payoffs(env, th[:, None], th[None, :])
    Ud = m.ex_post(1)
    Ua = m.ex_post(2)
    owner = np.array([[lab == "delegate_owns" for lab in row] for row in m.label_table()])
    efficient = th[:, None] >= th[None, :]
    viol = np.maximum(np.abs(Ud - Ud_target), np.abs(Ua - Ua_target))
    viol = np.where(owner == efficient, viol, np.inf)
    report = FeasibilityReport.from_violations(
        "bid_ask_game",
        viol,
        tol,
        witness=lambda ix: {"theta_delegate": float(th[ix[0]]), "theta_agent": float(th[ix[1]])},
        delegate=delegate,
    )
    return eq, report
