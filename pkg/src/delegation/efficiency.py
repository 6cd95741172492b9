"""Efficient allocation through a delegate in symmetric quasilinear settings.

The delegate (player 1) offers the agent (player 2) the efficient allocation
with transfers that leave the delegate exactly ``S(theta1) - S(0)`` whatever
the agent's type (full insurance), making the agent the residual claimant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Hashable

import numpy as np
from scipy.optimize import linprog

from .dist import TypeDistribution, discretize
from .game import verify_by_delegation
from .mech import DirectMechanism, FiniteTypeSpace, UtilityModel, delegated_implementable
from .report import DEFAULT_TOL, FeasibilityReport

__all__ = [
    "QuasilinearEnv",
    "SurplusProfile",
    "Modularity",
    "rival_good_env",
    "public_good_env",
    "efficient_allocation",
    "surplus_profile",
    "modularity_check",
    "efficient_transfers",
    "outside_option_bounds",
    "feasibility_gate",
    "transfer_spread",
    "random_submodular_env",
    "random_supermodular_env",
]

DEFAULT_LABEL = "o"
MODULARITY_SLACK = 1e-10


def _zero(theta):
    return np.zeros_like(np.asarray(theta, dtype=float))


@dataclass(frozen=True, eq=False)
class QuasilinearEnv:
    """Finite allocations, per-player utilities, a common type law and outside options.

    ``u1(x, theta)`` and ``u2(x, theta)`` are vectorised over theta; outside
    options are functions of the own type.
    """

    labels: tuple[Hashable, ...]
    u1: Callable[[Hashable, np.ndarray], np.ndarray]
    u2: Callable[[Hashable, np.ndarray], np.ndarray]
    F: TypeDistribution
    outside1: Callable[[np.ndarray], np.ndarray] = _zero
    outside2: Callable[[np.ndarray], np.ndarray] = _zero
    grid_size: int = 51
    name: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise ValueError("allocation set is empty")
        if DEFAULT_LABEL in self.labels:
            raise ValueError(f"label {DEFAULT_LABEL!r} is reserved for the outside option")
        theta = np.linspace(0.0, 1.0, self.grid_size)
        for player, u in ((1, self.u1), (2, self.u2)):
            for x in self.labels:
                if np.any(np.diff(np.broadcast_to(u(x, theta), theta.shape)) < 0):
                    raise ValueError(f"u{player}({x!r}, theta) must be nondecreasing in theta")

    def utility_model(self) -> UtilityModel:
        """Utilities for the checkers; the reserved label carries the outside options."""

        def wrap(u, outside):
            def f(x, theta):
                return outside(theta) if x == DEFAULT_LABEL else u(x, theta)

            return f

        return UtilityModel(wrap(self.u1, self.outside1), wrap(self.u2, self.outside2), DEFAULT_LABEL)


def rival_good_env(F: TypeDistribution, value: Callable | None = None, **kw) -> QuasilinearEnv:
    """One indivisible good; owner i gets value(theta_i) (identity by default)."""
    v = value or (lambda t: np.asarray(t, dtype=float))

    def u1(x, t):
        return v(t) if x == "give_to_1" else _zero(t)

    def u2(x, t):
        return v(t) if x == "give_to_2" else _zero(t)

    return QuasilinearEnv(("give_to_1", "give_to_2"), u1, u2, F, name="rival_good", **kw)


def public_good_env(F: TypeDistribution, cost: float = 1.0, **kw) -> QuasilinearEnv:
    """Build at ``cost`` split equally, or not: surplus max(theta1 + theta2 - cost, 0)."""

    def u(x, t):
        t = np.asarray(t, dtype=float)
        return t - 0.5 * cost if x == "build" else np.zeros_like(t)

    return QuasilinearEnv(("not_build", "build"), u, u, F, name="public_good", **kw)


def efficient_allocation(env: QuasilinearEnv, theta1, theta2) -> Hashable:
    """Utility-sum maximiser; ties go to the lowest-index label."""
    t1 = np.array([float(theta1)])
    t2 = np.array([float(theta2)])
    total = [float(env.u1(x, t1)[0] + env.u2(x, t2)[0]) for x in env.labels]
    return env.labels[int(np.argmax(total))]


@dataclass(frozen=True, eq=False)
class SurplusProfile:
    env: QuasilinearEnv
    theta: np.ndarray
    weights: np.ndarray
    allocation: np.ndarray  # (n, n) label indices
    s: np.ndarray  # (n, n) ex-post surplus
    S: np.ndarray  # (n,) interim surplus of delegate types
    S_bar: float
    ties: int = 0  # profiles with more than one maximiser
    u1: np.ndarray = field(default=None, repr=False)  # (n, n) at the allocation
    u2: np.ndarray = field(default=None, repr=False)


def surplus_profile(env: QuasilinearEnv, n: int | None = None) -> SurplusProfile:
    """Efficient allocation and surplus tables on an n-node grid.

    S is the expectation under the discretised law used by the checkers, so
    delegate incentive constraints hold exactly on the grid.
    """
    theta, w = discretize(env.F, n or env.grid_size)
    U1 = np.stack([np.broadcast_to(env.u1(x, theta), theta.shape) for x in env.labels])  # (L, n)
    U2 = np.stack([np.broadcast_to(env.u2(x, theta), theta.shape) for x in env.labels])
    total = U1[:, :, None] + U2[:, None, :]  # (L, n1, n2)
    alloc = np.argmax(total, axis=0)
    s = np.take_along_axis(total, alloc[None], axis=0)[0]
    ties = int(np.sum(np.sum(total >= s[None] - 1e-12, axis=0) > 1))
    S = s @ w
    n1 = theta.size
    u1 = U1[alloc, np.arange(n1)[:, None]]
    u2 = U2[alloc, np.arange(n1)[None, :]]
    return SurplusProfile(env, theta, w, alloc, s, S, float(w @ S), ties, u1, u2)


class Modularity(str, Enum):
    RIVAL = "rival"
    NONRIVAL = "nonrival"
    NEITHER = "neither"


def modularity_check(profile: SurplusProfile, slack: float = MODULARITY_SLACK) -> tuple[Modularity, dict]:
    """Classify s by the signs of its adjacent 2x2 cross differences.

    Submodular (all <= slack) is rival; supermodular is non-rival. A modular
    surplus passes both tests and is reported as rival with ``modular=True``.
    """
    s = profile.s
    cross = s[1:, 1:] + s[:-1, :-1] - s[1:, :-1] - s[:-1, 1:]
    sub = bool(np.all(cross <= slack))
    sup = bool(np.all(cross >= -slack))
    info = {"max_cross": float(cross.max()), "min_cross": float(cross.min()), "modular": sub and sup}
    if sub:
        return Modularity.RIVAL, info
    if sup:
        return Modularity.NONRIVAL, info
    return Modularity.NEITHER, info


def efficient_transfers(profile: SurplusProfile) -> DirectMechanism:
    """t2 = u2 - s + S(theta1) - S(0) and t1 = -t2 (outflows)."""
    env = profile.env
    space = FiniteTypeSpace.product(profile.theta, profile.weights, profile.theta, profile.weights)
    t2 = profile.u2 - profile.s + (profile.S - profile.S[0])[:, None]
    return DirectMechanism(space, env.utility_model(), env.labels, profile.allocation, -t2, t2)


def outside_option_bounds(profile: SurplusProfile) -> tuple[np.ndarray, np.ndarray]:
    """Largest outside options compatible with delegation, per own type."""
    bound1 = profile.S - profile.S[0]
    bound2 = np.min(profile.s - profile.S[:, None] + profile.S[0], axis=0)
    return bound1, bound2


def feasibility_gate(env: QuasilinearEnv, tol: float = DEFAULT_TOL, n: int | None = None) -> FeasibilityReport:
    """Outside options within the bounds, then the full delegation checks.

    On a ``neither`` modularity verdict the report is advisory only.
    """
    prof = surplus_profile(env, n)
    theta = prof.theta
    out1 = np.broadcast_to(env.outside1(theta), theta.shape)
    out2 = np.broadcast_to(env.outside2(theta), theta.shape)
    bound1, _ = outside_option_bounds(prof)
    # agent slack profile by profile: outside2(theta2) - (s - S(theta1) + S(0))
    agent_viol = out2[None, :] - (prof.s - prof.S[:, None] + prof.S[0])
    parts = {
        "delegate_bound": FeasibilityReport.from_violations(
            "delegate_bound", out1 - bound1, tol, witness=lambda ix: {"theta1": float(theta[ix[0]])}
        ),
        "agent_bound": FeasibilityReport.from_violations(
            "agent_bound",
            agent_viol,
            tol,
            witness=lambda ix: {"theta1": float(theta[ix[0]]), "theta2": float(theta[ix[1]])},
            violation_matrix=agent_viol,
        ),
    }
    if all(r.passed for r in parts.values()):
        mech = efficient_transfers(prof)
        parts["delegated_implementable"] = delegated_implementable(mech, tol)
        parts["canonical_rights"] = verify_by_delegation(mech, tol)[1]
    report = FeasibilityReport.combine("efficiency_gate", parts, tol)
    verdict, info = modularity_check(prof)
    report.details.update(modularity=verdict.value, allocation_ties=prof.ties, **info)
    report.advisory = verdict is Modularity.NEITHER
    return report


def transfer_spread(profile: SurplusProfile, slack: float = 1e-12) -> dict[str, float]:
    """Range of each transfer over all tables satisfying the delegation constraints.

    Unknowns are t2 (with t1 = -t2). Constraints: agent DSIC and EPIR,
    delegate BIC and IIR, plus the two equality characterisations that hold
    on the continuum and that grid inequalities alone cannot express: the
    Groves form (t2 + u1 depends only on theta1) and interim payment
    equivalence for the delegate (interim payoff differences equal
    S(theta1) - S(0)). Per cell we minimise and maximise t2 with linprog and
    report the largest gap to the efficient transfers, alongside the gap left
    by the inequalities alone. ``slack`` relaxes the inequalities slightly so
    rounding cannot make the program infeasible.
    """
    n = profile.theta.size
    w = profile.weights
    env = profile.env
    th = profile.theta
    U1 = np.stack([np.broadcast_to(env.u1(x, th), th.shape) for x in env.labels])
    U2 = np.stack([np.broadcast_to(env.u2(x, th), th.shape) for x in env.labels])
    a = profile.allocation
    out1 = np.broadcast_to(env.outside1(th), th.shape)
    out2 = np.broadcast_to(env.outside2(th), th.shape)

    def var(i, j):
        return i * n + j

    A_ub, b_ub = [], []
    # agent DSIC: u2(a[i,k], j) - t[i,k] <= u2(a[i,j], j) - t[i,j]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if k == j:
                    continue
                row = np.zeros(n * n)
                row[var(i, j)] += 1.0
                row[var(i, k)] -= 1.0
                A_ub.append(row)
                b_ub.append(U2[a[i, j], j] - U2[a[i, k], j])
            # EPIR: u2(a[i,j], j) - t[i,j] >= out2[j]
            row = np.zeros(n * n)
            row[var(i, j)] = 1.0
            A_ub.append(row)
            b_ub.append(U2[a[i, j], j] - out2[j])
    # delegate payoff u1 - t1 = u1 + t2
    for i in range(n):
        truth = np.zeros(n * n)
        for j in range(n):
            truth[var(i, j)] = w[j]
        truth_const = float(w @ U1[a[i], i])
        for k in range(n):
            if k == i:
                continue
            row = np.zeros(n * n)
            for j in range(n):
                row[var(k, j)] += w[j]
            # sum_j w (u1(a[k,j], i) + t[k,j]) <= sum_j w (u1(a[i,j], i) + t[i,j])
            A_ub.append(row - truth)
            b_ub.append(truth_const - float(w @ U1[a[k], i]))
        # IIR: truth payoff >= out1[i]
        A_ub.append(-truth)
        b_ub.append(truth_const - out1[i])
    A_ub = np.array(A_ub)
    b_ub = np.array(b_ub) + slack

    A_eq, b_eq = [], []
    for i in range(n):
        for j in range(1, n):
            row = np.zeros(n * n)
            row[var(i, j)] = 1.0
            row[var(i, 0)] = -1.0
            A_eq.append(row)
            b_eq.append(U1[a[i, 0], i] - U1[a[i, j], i])
    for i in range(1, n):
        row = np.zeros(n * n)
        for j in range(n):
            row[var(i, j)] += w[j]
            row[var(0, j)] -= w[j]
        A_eq.append(row)
        b_eq.append(profile.S[i] - profile.S[0] - float(w @ U1[a[i], i]) + float(w @ U1[a[0], 0]))
    A_eq = np.array(A_eq)
    b_eq = np.array(b_eq)

    reference = (profile.u2 - profile.s + (profile.S - profile.S[0])[:, None]).ravel()

    def spread(with_equalities: bool) -> float:
        worst = 0.0
        for cell in range(n * n):
            c = np.zeros(n * n)
            for sign in (1.0, -1.0):
                c[cell] = sign
                res = linprog(
                    c,
                    A_ub=A_ub,
                    b_ub=b_ub,
                    A_eq=A_eq if with_equalities else None,
                    b_eq=b_eq if with_equalities else None,
                    bounds=(None, None),
                    method="highs",
                )
                if res.status == 3:
                    return float("inf")
                if res.status != 0:
                    raise RuntimeError(f"linear program failed: {res.message}")
                worst = max(worst, abs(res.x[cell] - reference[cell]))
        return worst

    return {"spread": float(spread(True)), "inequality_only_spread": float(spread(False))}


def random_submodular_env(F: TypeDistribution, rng: np.random.Generator, grid_size: int = 5) -> QuasilinearEnv:
    """Rival good with a random increasing value function, v(0) = 0."""
    knots = np.concatenate([[0.0], np.sort(rng.random(4)), [1.0]])
    vals = np.concatenate([[0.0], np.sort(rng.random(5))])
    return rival_good_env(F, value=lambda t: np.interp(t, knots, vals), grid_size=grid_size)


def random_supermodular_env(F: TypeDistribution, rng: np.random.Generator, grid_size: int = 5) -> QuasilinearEnv:
    """Public good with random increasing values and a cost in (0, 2)."""
    knots = np.concatenate([[0.0], np.sort(rng.random(4)), [1.0]])
    vals = np.concatenate([[0.0], np.sort(rng.random(5))])
    cost = float(rng.uniform(0.2, 1.8) * vals[-1])

    def v(t):
        return np.interp(t, knots, vals)

    def u(x, t):
        return v(t) - 0.5 * cost if x == "build" else _zero(t)

    return QuasilinearEnv(("not_build", "build"), u, u, F, grid_size=grid_size, name="random_public_good")

