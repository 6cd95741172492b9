"""Selling through an intermediary who resells to a final consumer.

The intermediary's value is ``theta1 ~ G`` and the consumer's is
``theta2 ~ F``. The seller offers a menu of price agreements: resale price
``p`` with a discount ``d(p)`` on the wholesale price ``p``, optionally with a
buyback of unsold units at refund ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from .dist import BISECTION_STEPS, TypeDistribution, check_hazard_dominance, check_mhr, gauss_legendre, panel_nodes
from .report import DEFAULT_TOL, FeasibilityReport

__all__ = [
    "ResaleEnv",
    "Mode",
    "ResaleScheme",
    "LaissezFaire",
    "ResaleSimulation",
    "monopoly_price",
    "monopoly_profit",
    "laissez_faire",
    "scheme_with_buyback",
    "scheme_no_buyback",
    "equilibrium_price_map",
    "intermediary_profit",
    "simulate",
    "revenue_with_buyback",
    "revenue_no_buyback",
    "revenue_bounds",
]

DISCOUNT_NODES = 512
P_GRID = 1001
REVENUE_NODES = 2001


@dataclass(frozen=True, eq=False)
class ResaleEnv:
    G: TypeDistribution  # intermediary value theta1
    F: TypeDistribution  # consumer value theta2

    def __post_init__(self) -> None:
        for name, rep in (
            ("G", check_mhr(self.G)),
            ("F", check_mhr(self.F)),
            ("(F, G)", check_hazard_dominance(self.F, self.G)),
        ):
            if not rep.passed:
                raise ValueError(f"{name} fails {rep.name}: {rep.witness}")


class Mode(str, Enum):
    WITH_BUYBACK = "with_buyback"
    NO_BUYBACK = "no_buyback"


def _compose(env: ResaleEnv, x: np.ndarray) -> np.ndarray:
    """psi_G^{-1}(psi_F(x)); the dominance check guarantees the argument is in range."""
    return np.asarray(env.G.inverse_virtual_value(np.asarray(env.F.virtual_value(x), dtype=float), slack=1e-9))


@dataclass(frozen=True, eq=False)
class ResaleScheme:
    env: ResaleEnv
    mode: Mode
    p_floor: float  # lowest resale price on the menu
    refund: float | None  # buyback refund, None without buyback
    p_grid: np.ndarray
    discount_table: np.ndarray

    def discount(self, p):
        """d(p) for p in [p_floor, 1] by 512-node Gauss-Legendre."""
        pa = np.atleast_1d(np.asarray(p, dtype=float))
        if np.any(pa < self.p_floor - 1e-12) or np.any(pa > 1.0):
            raise ValueError(f"price outside the menu [{self.p_floor}, 1]")
        pa = np.maximum(pa, self.p_floor)
        F = self.env.F
        x0, w0 = gauss_legendre(DISCOUNT_NODES)
        h = pa - self.p_floor
        x = self.p_floor + h[:, None] * x0[None, :]
        integral = np.sum(h[:, None] * w0[None, :] * _compose(self.env, x) * F.pdf(x), axis=1)
        out = pa * F.cdf(pa) - integral
        if self.refund is not None:
            out -= self.refund * F.cdf(self.p_floor)
        return float(out[0]) if np.ndim(p) == 0 else out


def monopoly_price(env: ResaleEnv, theta1):
    """psi_F^{-1}(theta1): the intermediary's optimal resale price without a contract."""
    return env.F.inverse_virtual_value(theta1)


def monopoly_profit(env: ResaleEnv, theta1):
    p = np.asarray(monopoly_price(env, theta1))
    Fp = np.asarray(env.F.cdf(p))
    out = p * (1.0 - Fp) + np.asarray(theta1) * Fp
    return float(out) if np.ndim(theta1) == 0 else out


@dataclass(frozen=True)
class LaissezFaire:
    price: float
    revenue: float
    participation_cutoff: float  # intermediary types below this stay out
    profit_monotone: bool


def laissez_faire(env: ResaleEnv, n_grid: int = 10001) -> LaissezFaire:
    """Posted price to the intermediary against H = G o pi_m^{-1}.

    Grid scan over [pi_m(0), pi_m(1)] followed by a bounded refinement.
    """
    theta = np.linspace(0.0, 1.0, n_grid)
    prof = monopoly_profit(env, theta)
    monotone = bool(np.all(np.diff(prof) > 0))
    lo_p, hi_p = float(prof[0]), float(prof[-1])

    def inverse_profit(p):
        lo, hi = np.zeros_like(p), np.ones_like(p)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            below = monopoly_profit(env, mid) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def revenue(p):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return p * (1.0 - env.G.cdf(inverse_profit(p)))

    grid = np.linspace(lo_p, hi_p, n_grid)
    vals = revenue(grid)
    k = int(np.argmax(vals))
    best_p, best_v = float(grid[k]), float(vals[k])
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    res = minimize_scalar(lambda p: -float(revenue(p)[0]), bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    if -res.fun > best_v:
        best_p, best_v = float(res.x), float(-res.fun)
    cutoff = float(inverse_profit(np.array([best_p]))[0])
    return LaissezFaire(best_p, best_v, cutoff, monotone)


def _build(env: ResaleEnv, mode: Mode, p_floor: float, refund: float | None, n_grid: int) -> ResaleScheme:
    p_grid = np.linspace(p_floor, 1.0, n_grid)
    scheme = ResaleScheme(env, mode, p_floor, refund, p_grid, np.empty(0))
    table = _discount_table(scheme)
    return ResaleScheme(env, mode, p_floor, refund, p_grid, table)


def _discount_table(scheme: ResaleScheme) -> np.ndarray:
    """d on the p-grid by cumulating composite Gauss-Legendre panels."""
    env, p = scheme.env, scheme.p_grid
    x0, w0 = gauss_legendre(16)
    h = np.diff(p)
    x = p[:-1, None] + h[:, None] * x0[None, :]
    pieces = np.sum(h[:, None] * w0[None, :] * _compose(env, x) * env.F.pdf(x), axis=1)
    integral = np.concatenate([[0.0], np.cumsum(pieces)])
    out = p * env.F.cdf(p) - integral
    if scheme.refund is not None:
        out -= scheme.refund * env.F.cdf(scheme.p_floor)
    return out


def scheme_with_buyback(env: ResaleEnv, n_grid: int = P_GRID) -> ResaleScheme:
    """Floor price psi_F^{-1}(0) and refund psi_G^{-1}(0)."""
    p_floor = float(env.F.inverse_virtual_value(0.0))
    refund = float(env.G.inverse_virtual_value(0.0))
    return _build(env, Mode.WITH_BUYBACK, p_floor, refund, n_grid)


def scheme_no_buyback(env: ResaleEnv, n_grid: int = P_GRID) -> ResaleScheme:
    """Floor price psi_F^{-1}(psi_G(0)), no refund."""
    y = float(env.G.virtual_value(0.0))
    p_floor = 0.0 if y <= env.F.virtual_value(0.0) else float(env.F.inverse_virtual_value(y))
    return _build(env, Mode.NO_BUYBACK, p_floor, None, n_grid)


def equilibrium_price_map(env: ResaleEnv, scheme: ResaleScheme, theta1):
    """Resale price chosen by intermediary type theta1: psi_F^{-1}(psi_G(theta1)), floored."""
    y = np.atleast_1d(np.asarray(env.G.virtual_value(np.asarray(theta1, dtype=float)), dtype=float))
    out = np.maximum(_inverse_from_below(env.F, y), scheme.p_floor)
    return float(out[0]) if np.ndim(theta1) == 0 else out


def _returns(scheme: ResaleScheme, theta1: np.ndarray) -> np.ndarray:
    if scheme.refund is None:
        return np.zeros(np.shape(theta1), dtype=bool)
    return np.asarray(theta1) < scheme.refund


def intermediary_profit(scheme: ResaleScheme, theta1, p, returns=False):
    """(theta1 - p) F(p) + d(p); with a return the unsold unit earns the refund instead."""
    F = scheme.env.F
    p = np.asarray(p, dtype=float)
    keep = np.where(returns, scheme.refund if scheme.refund is not None else 0.0, theta1)
    return (keep - p) * F.cdf(p) + scheme.discount(p)


@dataclass(frozen=True, eq=False)
class ResaleSimulation:
    theta1: np.ndarray
    theta2: np.ndarray
    weights1: np.ndarray
    weights2: np.ndarray
    price: np.ndarray  # per theta1
    discount: np.ndarray
    returns: np.ndarray  # intermediary returns unsold units
    sale_probability: np.ndarray
    profit: np.ndarray  # intermediary interim payoff
    refund: float
    revenue: float

    def profile_tables(self) -> dict[str, np.ndarray]:
        """Per-profile holder of the good and transfers (outflows).

        holder: 2 consumer, 1 intermediary, 0 seller (returned).
        """
        p = self.price[:, None]
        buy = self.theta2[None, :] >= p
        holder = np.where(buy, 2, np.where(self.returns[:, None], 0, 1))
        t2 = np.where(buy, p, 0.0)
        refund = np.where(~buy & self.returns[:, None], self.refund, 0.0)
        t1 = (p - self.discount[:, None]) - t2 - refund
        return {"holder": holder, "t1": t1, "t2": t2}


def _midpoint_grid(d: TypeDistribution, n: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(0.0, 1.0, n + 1)
    mass = np.diff(np.asarray(d.cdf(edges), dtype=float))
    return 0.5 * (edges[:-1] + edges[1:]), mass / mass.sum()


def simulate(env: ResaleEnv, scheme: ResaleScheme, n: int = 2001) -> ResaleSimulation:
    """Play the scheme on an n x n midpoint grid of the product law.

    Each intermediary type takes its equilibrium price; the consumer buys iff
    theta2 >= p. Seller revenue per profile is t1 + t2.
    """
    th1, w1 = _midpoint_grid(env.G, n)
    th2, w2 = _midpoint_grid(env.F, n)
    price = np.asarray(equilibrium_price_map(env, scheme, th1))
    disc = np.asarray(scheme.discount(price))
    ret = _returns(scheme, th1)
    # consumer buys iff theta2 >= p, so the sale probability is the mass at or above p
    cum = np.concatenate([[0.0], np.cumsum(w2)])
    sale = 1.0 - cum[np.searchsorted(th2, price, side="left")]
    refund = scheme.refund or 0.0
    seller = price - disc - refund * ret * (1.0 - sale)
    profit = np.where(ret, (refund - price) * (1.0 - sale), (th1 - price) * (1.0 - sale)) + disc
    return ResaleSimulation(th1, th2, w1, w2, price, disc, ret, sale, profit, refund, float(np.sum(w1 * seller)))


def _inverse_from_below(F: TypeDistribution, y: np.ndarray) -> np.ndarray:
    """psi_F^{-1}(y), reading values below psi_F(0) as type 0."""
    y = np.asarray(y, dtype=float)
    x = np.zeros_like(y)
    inside = y > F.virtual_value(0.0)
    if np.any(inside):
        x[inside] = F.inverse_virtual_value(np.minimum(y[inside], 1.0), slack=1e-9)
    return x


def _expected_max(env: ResaleEnv, floor: np.ndarray) -> np.ndarray:
    """E_F[max(c, psi_F(theta2))] for each c in ``floor``.

    With x = psi_F^{-1}(c) this is c F(x) + x (1 - F(x)), since the integral of
    psi_F f over [x, 1] equals x (1 - F(x)).
    """
    x = _inverse_from_below(env.F, floor)
    Fx = np.asarray(env.F.cdf(x))
    return np.where(Fx > 0, floor * Fx, 0.0) + x * (1.0 - Fx)


def _revenue(env: ResaleEnv, with_floor: bool) -> float:
    G = env.G
    breaks = (float(G.inverse_virtual_value(0.0)),) if with_floor else ()
    t, w = panel_nodes(0.0, 1.0, REVENUE_NODES, (*G.breakpoints, *breaks))
    c = np.asarray(G.virtual_value(t), dtype=float)
    if with_floor:
        c = np.maximum(c, 0.0)
    return float(np.sum(w * G.pdf(t) * _expected_max(env, c)))


def revenue_with_buyback(env: ResaleEnv) -> float:
    """E[max(0, psi_G(theta1), psi_F(theta2))]."""
    return _revenue(env, True)


def revenue_no_buyback(env: ResaleEnv) -> float:
    """E[max(psi_G(theta1), psi_F(theta2))]."""
    return _revenue(env, False)


def revenue_bounds(env: ResaleEnv, tol: float = DEFAULT_TOL) -> FeasibilityReport:
    """pi_BB / 2 <= pi_N <= pi_BB."""
    bb, nb = revenue_with_buyback(env), revenue_no_buyback(env)
    viol = np.array([0.5 * bb - nb, nb - bb])
    return FeasibilityReport.from_violations(
        "revenue_bounds",
        viol,
        tol,
        witness=lambda ix: {"bound": ["half_buyback_le_no_buyback", "no_buyback_le_buyback"][ix[0]]},
        revenue_with_buyback=bb,
        revenue_no_buyback=nb,
        margin=float(min(nb - 0.5 * bb, bb - nb)),
    )
