"""Interval delegation of screening contracts in a procurement problem.

A principal with benefit ``b`` per unit of quality lets a delegate who knows
``b`` contract with a supplier of private cost type ``s``. Payoffs:
supplier ``t - s c(q)``, delegate ``b q - t``, principal ``b q - (1 + alpha) t``.
The principal restricts the delegate to the ``b``-optimal screening contracts
with ``b`` up to a cap ``b_hat``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .dist import BISECTION_STEPS, DENSITY_FLOOR, TypeDistribution, check_mhr, discretize, gauss_legendre
from .game import ContractualRights, Equilibrium, Outcome, solve_pbe
from .mech import DirectMechanism, FiniteTypeSpace, UtilityModel, check_dsic, check_epir
from .report import DEFAULT_TOL, FeasibilityReport

__all__ = [
    "CostFunction",
    "ProcurementEnv",
    "ScreeningContract",
    "DelegationInterval",
    "quadratic_cost",
    "power_cost",
    "agent_virtual_cost",
    "check_virtual_cost",
    "optimal_quality",
    "b_optimal_contract",
    "expected_quantity",
    "delegate_value",
    "expected_transfer",
    "pooling_integrand",
    "crossing_point",
    "cutoff_value",
    "optimal_cutoff",
    "frontier_rights",
    "procurement_utilities",
    "simulate_frontier",
    "contract_mechanism",
    "FrontierSimulation",
    "principal_value_direct",
]

# nodes per panel for the supplier-type expectations and rent integrals
S_NODES = 128
RENT_NODES = 16
B_NODES = 256
VALUE_TIE = 1e-10  # relative gap below which two cap values count as equal


@dataclass(frozen=True)
class CostFunction:
    """Quality cost ``c`` with derivative ``dc`` and inverse marginal ``dc_inv``."""

    name: str
    c: Callable[[np.ndarray], np.ndarray]
    dc: Callable[[np.ndarray], np.ndarray]
    dc_inv: Callable[[np.ndarray], np.ndarray]


def quadratic_cost(scale: float = 1.0) -> CostFunction:
    """c(q) = scale * q^2 / 2."""
    if scale <= 0:
        raise ValueError("cost scale must be positive")
    return CostFunction(
        f"quadratic({scale:g})",
        lambda q: 0.5 * scale * np.square(q),
        lambda q: scale * np.asarray(q, dtype=float),
        lambda y: np.asarray(y, dtype=float) / scale,
    )


def power_cost(p: float) -> CostFunction:
    """c(q) = q^p / p for p > 1."""
    if p <= 1:
        raise ValueError("power cost needs p > 1 for strict convexity")
    return CostFunction(
        f"power({p:g})",
        lambda q: np.power(q, p) / p,
        lambda q: np.power(q, p - 1.0),
        lambda y: np.power(y, 1.0 / (p - 1.0)),
    )


def check_virtual_cost(G: TypeDistribution, slack: float = 1e-9) -> FeasibilityReport:
    """s + G(s)/g(s) nondecreasing across adjacent grid nodes."""
    s = G.nodes()
    phi = agent_virtual_cost(G, s)
    viol = phi[:-1] - phi[1:] - slack
    return FeasibilityReport.from_violations(
        "virtual_cost_monotone", viol, 0.0, witness=lambda ix: {"s": float(s[ix[0]]), "s_next": float(s[ix[0] + 1])}
    )


@dataclass(frozen=True, eq=False)
class ProcurementEnv:
    F: TypeDistribution  # benefit b
    G: TypeDistribution  # supplier cost type s
    alpha: float = 1.0
    cost: CostFunction = field(default_factory=quadratic_cost)
    q_max: float = 1.0
    b_grid_size: int = 101
    s_grid_size: int = 201

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.q_max <= 0:
            raise ValueError("q_max must be positive")
        q = np.linspace(0.0, self.q_max, 257)
        c, dc = self.cost.c(q), self.cost.dc(q)
        if abs(c[0]) > 1e-12 or abs(dc[0]) > 1e-12:
            raise ValueError(f"cost {self.cost.name}: need c(0) = c'(0) = 0")
        if np.any(np.diff(c) <= 0) or np.any(np.diff(dc) <= 0):
            raise ValueError(f"cost {self.cost.name}: must be strictly increasing and convex on [0, q_max]")
        for name, rep in (("F", check_mhr(self.F)), ("G", check_virtual_cost(self.G))):
            if not rep.passed:
                raise ValueError(f"{name} fails {rep.name}: {rep.witness}")


@dataclass(frozen=True, eq=False)
class ScreeningContract:
    """Quality and transfer offered to each supplier type on an s-grid."""

    b: float
    s: np.ndarray
    q: np.ndarray
    t: np.ndarray
    cost_values: np.ndarray  # c(q) at each node
    kink: float  # supplier types below this get q_max

    @property
    def rent(self) -> np.ndarray:
        return self.t - self.s * self.cost_values


def agent_virtual_cost(G: TypeDistribution, s):
    """phi(s) = s + G(s)/g(s), with the limiting value 0 at s = 0."""
    sa = np.asarray(s, dtype=float)
    g = np.asarray(G.pdf(sa), dtype=float)
    ratio = np.divide(np.asarray(G.cdf(sa), dtype=float), g, out=np.zeros_like(sa), where=g > DENSITY_FLOOR)
    out = sa + ratio
    return float(out) if np.ndim(s) == 0 else out


def _kinks(env: ProcurementEnv, b) -> np.ndarray:
    """Supplier types where the unconstrained quality reaches q_max, per b."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    target = b / float(env.cost.dc(env.q_max))
    lo, hi = np.zeros_like(b), np.ones_like(b)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = agent_virtual_cost(env.G, mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    k = 0.5 * (lo + hi)
    k[b <= 0] = 0.0
    k[agent_virtual_cost(env.G, 1.0) <= target] = 1.0
    return k


def _kink(env: ProcurementEnv, b: float) -> float:
    return float(_kinks(env, b)[0])


def optimal_quality(env: ProcurementEnv, b: float, s) -> np.ndarray:
    """Pointwise maximiser of b q - phi(s) c(q) over [0, q_max]."""
    sa = np.atleast_1d(np.asarray(s, dtype=float))
    if b <= 0:
        return np.zeros_like(sa)
    phi = agent_virtual_cost(env.G, sa)
    top = float(env.cost.dc(env.q_max))
    q = np.full_like(sa, env.q_max)
    inner = b < phi * top  # unconstrained optimum below the cap
    q[inner] = np.clip(env.cost.dc_inv(b / phi[inner]), 0.0, env.q_max)
    return q


def _rent_integral(env: ProcurementEnv, b: float, s: np.ndarray, kink: float) -> tuple[np.ndarray, float]:
    """R(s) = integral of c(q*(b, r)) for r from s to 1 at sorted nodes s, and R(kink).

    Both come from one right-to-left accumulation over the same panels so the
    capped types see exactly the same continuation rent.
    """
    cq_max = float(env.cost.c(env.q_max))
    upper = np.unique(np.concatenate([s[s >= kink], [kink, 1.0]]))
    x0, w0 = gauss_legendre(RENT_NODES)
    a, h = upper[:-1], np.diff(upper)
    x = a[:, None] + h[:, None] * x0[None, :]
    pieces = (h[:, None] * w0[None, :] * env.cost.c(optimal_quality(env, b, x.ravel())).reshape(x.shape)).sum(axis=1)
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])  # R at each entry of upper
    R = np.interp(s, upper, tail)  # exact at nodes, which all belong to upper
    below = s < kink
    R[below] = cq_max * (kink - s[below]) + tail[0]
    return R, float(tail[0])


def b_optimal_contract(env: ProcurementEnv, b: float, s_grid: np.ndarray | None = None) -> ScreeningContract:
    """Optimal screening contract of a delegate with benefit b.

    Transfers follow the envelope formula t(s) = s c(q(s)) + R(s), which makes
    the top type's rent zero.
    """
    s = np.linspace(0.0, 1.0, env.s_grid_size) if s_grid is None else np.asarray(s_grid, dtype=float)
    kink = _kink(env, b)
    q = optimal_quality(env, b, s)
    cq = env.cost.c(q)
    if b <= 0:
        t = np.zeros_like(s)
    else:
        R, R_kink = _rent_integral(env, b, s, kink)
        t = s * cq + R
        # constant transfer on the capped region so that the contracts coincide
        t[s < kink] = float(env.cost.c(env.q_max)) * kink + R_kink
    return ScreeningContract(float(b), s, q, t, cq, kink)


def _moments(env: ProcurementEnv, b) -> tuple[np.ndarray, np.ndarray]:
    """(Q*(b), T*(b)) for an array of benefits.

    Below the kink quality is capped and both moments are closed form:
    E[q_max; s < k] = q_max G(k) and E[phi c(q_max); s < k] = c(q_max) k G(k).
    Above it, Gauss-Legendre on [k, 1].
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    k = _kinks(env, b)
    Gk = np.asarray(env.G.cdf(k), dtype=float)
    Q = env.q_max * Gk
    T = float(env.cost.c(env.q_max)) * k * Gk
    x0, w0 = gauss_legendre(S_NODES)
    s = k[:, None] + (1.0 - k)[:, None] * x0[None, :]
    w = (1.0 - k)[:, None] * w0[None, :] * env.G.pdf(s)
    phi = agent_virtual_cost(env.G, s)
    top = float(env.cost.dc(env.q_max))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(phi > 0, b[:, None] / phi, np.inf)
    q = np.where(ratio >= top, env.q_max, np.clip(env.cost.dc_inv(np.minimum(ratio, top)), 0.0, env.q_max))
    q[b <= 0] = 0.0
    Q = Q + np.sum(w * q, axis=1)
    T = T + np.sum(w * phi * env.cost.c(q), axis=1)
    return Q, T


def expected_quantity(env: ProcurementEnv, b):
    """Q*(b) = E_s[q*(b, s)]."""
    Q, _ = _moments(env, b)
    return float(Q[0]) if np.ndim(b) == 0 else Q


def expected_transfer(env: ProcurementEnv, b):
    """T*(b) = E_s[phi(s) c(q*)], the expected payment under the envelope formula."""
    _, T = _moments(env, b)
    return float(T[0]) if np.ndim(b) == 0 else T


def delegate_value(env: ProcurementEnv, b):
    """U*(b) = b Q*(b) - T*(b)."""
    Q, T = _moments(env, b)
    U = np.atleast_1d(np.asarray(b, dtype=float)) * Q - T
    return float(U[0]) if np.ndim(b) == 0 else U


def pooling_integrand(env: ProcurementEnv, b):
    """J(b) = -alpha b f(b) + (1 + alpha)(1 - F(b))."""
    ba = np.asarray(b, dtype=float)
    out = -env.alpha * ba * env.F.pdf(ba) + (1.0 + env.alpha) * (1.0 - env.F.cdf(ba))
    return float(out) if np.ndim(b) == 0 else out


def crossing_point(env: ProcurementEnv) -> float:
    """Zero of J by bisection; 1 when J stays non-negative (alpha = 0)."""
    if pooling_integrand(env, 1.0) >= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if pooling_integrand(env, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _tail_integral(env: ProcurementEnv, c: float) -> float:
    """Integral of J over [c, 1] in closed form through I_F."""
    F = env.F
    dI = F.partial_cdf_integral(1.0) - F.partial_cdf_integral(c)
    survival = (1.0 - c) - dI
    mean_part = 1.0 - c * F.cdf(c) - dI
    return (1.0 + env.alpha) * survival - env.alpha * mean_part


def _benefit_nodes(env: ProcurementEnv, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on [0, c] for integrands involving Q*.

    Q* behaves like a power of b near 0 for non-quadratic costs, so the first
    panel uses the graded substitution b = a u^3; a second panel starts at the
    saturation kink when it lies inside.
    """
    a = min(c, saturation_benefit(env))
    u, w = gauss_legendre(B_NODES)
    nodes, weights = [a * u**3], [3.0 * a * u**2 * w]
    if c > a:
        x, wx = gauss_legendre(B_NODES // 2)
        nodes.append(a + (c - a) * x)
        weights.append((c - a) * wx)
    return np.concatenate(nodes), np.concatenate(weights)


def saturation_benefit(env: ProcurementEnv) -> float:
    """Smallest b at which every supplier type gets q_max; Q* is kinked there."""
    return float(agent_virtual_cost(env.G, 1.0) * env.cost.dc(env.q_max))


def cutoff_value(env: ProcurementEnv, c: float) -> float:
    """V(c) = int_0^c J Q* + Q*(c) int_c^1 J: the principal's value of cap c."""
    if c <= 0:
        return 0.0
    b, w = _benefit_nodes(env, c)
    head = float(np.sum(w * pooling_integrand(env, b) * expected_quantity(env, b)))
    return head + expected_quantity(env, c) * _tail_integral(env, c)


@dataclass(frozen=True, eq=False)
class DelegationInterval:
    b_hat: float
    b_bar: float
    principal_value: float
    foc_residual: float  # int_{b_hat}^1 J, zero at an interior optimum
    b_grid: np.ndarray
    scan_values: np.ndarray
    contracts: tuple[ScreeningContract, ...]  # grid nodes below b_hat, then b_hat


def optimal_cutoff(env: ProcurementEnv, refine_tol: float = 1e-4, b_grid: np.ndarray | None = None) -> DelegationInterval:
    """Grid scan of V followed by golden-section refinement around the best node."""
    grid = np.linspace(0.0, 1.0, env.b_grid_size) if b_grid is None else np.asarray(b_grid, dtype=float)
    vals = np.array([cutoff_value(env, c) for c in grid])
    # V is flat wherever Q* has saturated at q_max; take the smallest optimal cap
    flat = VALUE_TIE * max(1.0, float(np.max(np.abs(vals))))
    k = int(np.flatnonzero(vals >= vals.max() - flat)[0])
    b_hat = float(grid[k])
    if 0 < k < grid.size - 1 and vals[k] > max(vals[k - 1], vals[k + 1]) + flat:
        res = minimize_scalar(
            lambda c: -cutoff_value(env, c),
            bracket=(grid[k - 1], grid[k], grid[k + 1]),
            method="golden",
            options={"xtol": refine_tol},
        )
        if -res.fun > vals[k] + flat:
            b_hat = float(res.x)
    b_sat = saturation_benefit(env)
    if b_sat < b_hat and cutoff_value(env, b_sat) >= cutoff_value(env, b_hat) - flat:
        b_hat = b_sat  # plateau of V starts where Q* saturates
    if not np.any(expected_quantity(env, grid) > 0):
        warnings.warn("expected quantity is identically zero; returning b_hat = 0", RuntimeWarning)
        b_hat = 0.0
    below = [float(x) for x in grid if x < b_hat - 1e-12]
    contracts = tuple(b_optimal_contract(env, x) for x in [*below, b_hat])
    return DelegationInterval(
        b_hat=b_hat,
        b_bar=crossing_point(env),
        principal_value=cutoff_value(env, b_hat),
        foc_residual=_tail_integral(env, b_hat),
        b_grid=grid,
        scan_values=vals,
        contracts=contracts,
    )


def procurement_utilities(env: ProcurementEnv) -> UtilityModel:
    """Outcome labels are qualities; the default is q = 0 with no payment.

    Delegate pays the transfer (t1 = t) and the supplier receives it (t2 = -t).
    """
    cost = env.cost.c

    def u1(q, b):
        return float(q) * b

    def u2(q, s):
        return -s * float(cost(float(q)))

    return UtilityModel(u1, u2, 0.0)


def _menu(contract: ScreeningContract) -> tuple[Outcome, ...]:
    seen: dict[Outcome, None] = {}
    for q, t in zip(contract.q, contract.t):
        seen.setdefault(Outcome(float(q), float(t), -float(t)))
    return tuple(seen)


def frontier_rights(env: ProcurementEnv, interval: DelegationInterval) -> ContractualRights:
    """One menu per b-optimal contract with b on the grid below b_hat, plus b_hat."""
    return ContractualRights(tuple(_menu(c) for c in interval.contracts))


def contract_mechanism(env: ProcurementEnv, contract: ScreeningContract, s_pmf: np.ndarray | None = None) -> DirectMechanism:
    """A single delegate type offering ``contract`` to every supplier type."""
    n = contract.s.size
    pmf = np.full(n, 1.0 / n) if s_pmf is None else np.asarray(s_pmf, dtype=float)
    space = FiniteTypeSpace([contract.b], contract.s, pmf[None, :] / pmf.sum())
    labels = [[float(q) for q in contract.q]]
    return DirectMechanism.from_labels(space, procurement_utilities(env), labels, contract.t[None, :], -contract.t[None, :])


@dataclass(frozen=True, eq=False)
class FrontierSimulation:
    equilibrium: Equilibrium
    expected_menu: np.ndarray  # menu each b-grid type should pick
    report: FeasibilityReport
    contract_reports: FeasibilityReport


def simulate_frontier(env: ProcurementEnv, interval: DelegationInterval, tol: float = DEFAULT_TOL) -> FrontierSimulation:
    """Play the frontier rights on the b-grid x s-grid and check separation/pooling.

    Types below b_hat are designated their own menu and the rest the b_hat
    menu. The separation report measures how much better than its designated
    menu each type can do (ties go to the designated menu), so near-ties from
    the s-grid discretization show up as small violations rather than as
    wrong picks. Every emitted contract must be agent-DSIC and EPIR.
    """
    b_nodes, b_pmf = discretize(env.F, env.b_grid_size)
    s_nodes, s_pmf = discretize(env.G, env.s_grid_size)
    space = FiniteTypeSpace.product(b_nodes, b_pmf, s_nodes, s_pmf)
    rights = frontier_rights(env, interval)
    n_menus = len(rights)
    menu_b = np.array([c.b for c in interval.contracts])
    expected = np.array(
        [int(np.flatnonzero(np.isclose(menu_b, b, rtol=0, atol=1e-12))[0]) if b < interval.b_hat else n_menus - 1 for b in b_nodes]
    )
    U = procurement_utilities(env)
    eq = solve_pbe(rights, U, space, delegate_prefer=expected, tol=tol)
    # payoff each delegate type gets from its designated menu, given agent responses
    designated = np.empty(b_nodes.size)
    for i, k in enumerate(expected):
        menu = rights.menus[k]
        picks = eq.agent_choice[k]
        q = np.array([menu[c].label if c >= 0 else 0.0 for c in picks], dtype=float)
        t = np.array([menu[c].t1 if c >= 0 else 0.0 for c in picks])
        designated[i] = float(space.cond2[i] @ (b_nodes[i] * q - t))
    shortfall = eq.delegate_payoff - designated
    report = FeasibilityReport.from_violations(
        "frontier_separation",
        shortfall,
        tol,
        witness=lambda ix: {
            "b": float(b_nodes[ix[0]]),
            "chosen_menu_b": float(menu_b[eq.delegate_choice[ix[0]]]) if eq.delegate_choice[ix[0]] >= 0 else "opt-out",
            "expected_menu_b": float(menu_b[expected[ix[0]]]),
        },
        b_hat=interval.b_hat,
        off_designated=int(np.sum(eq.delegate_choice != expected)),
    )
    parts = {}
    for c in interval.contracts:
        m = contract_mechanism(env, c, s_pmf)
        parts[f"b={c.b:.6g}"] = FeasibilityReport.combine(
            f"contract b={c.b:.6g}", {"dsic2": check_dsic(m, 2, tol), "epir2": check_epir(m, 2, tol)}, tol
        )
    contract_reports = FeasibilityReport.combine("frontier_contracts", parts, tol)
    return FrontierSimulation(eq, expected, report, contract_reports)


def principal_value_direct(env: ProcurementEnv, b_hat: float) -> float:
    """E_b[b Q(b) - (1 + alpha) T(b)] with Q, T frozen at b_hat above the cap."""
    head = 0.0
    if b_hat > 0:
        bs, w = _benefit_nodes(env, b_hat)
        Q, T = _moments(env, bs)
        head = float(np.sum(w * env.F.pdf(bs) * (bs * Q - (1 + env.alpha) * T)))
    tail = 0.0
    if b_hat < 1:
        Q, T = expected_quantity(env, b_hat), expected_transfer(env, b_hat)
        # E[b; b > b_hat] = 1 - b_hat F(b_hat) - (I(1) - I(b_hat))
        dI = env.F.partial_cdf_integral(1.0) - env.F.partial_cdf_integral(b_hat)
        mass = 1.0 - env.F.cdf(b_hat)
        tail = (1.0 - b_hat * env.F.cdf(b_hat) - dI) * Q - (1 + env.alpha) * T * mass
    return head + tail

