"""Small reference mechanisms for a single good: auctions and posted prices.

Labels: ``"1"`` the delegate gets the good, ``"2"`` the agent does, ``"o"``
nobody trades. Transfers are payments to an outside seller.
"""

from __future__ import annotations

import numpy as np

from .mech import DirectMechanism, FiniteTypeSpace, UtilityModel

__all__ = [
    "unit_good_utilities",
    "uniform_space",
    "second_price",
    "first_price",
    "pay_your_report",
    "posted_price",
    "constant",
    "zero_mean_perturbation",
]


def unit_good_utilities() -> UtilityModel:
    def u1(label, t):
        t = np.asarray(t, dtype=float)
        return t if label == "1" else np.zeros_like(t)

    def u2(label, t):
        t = np.asarray(t, dtype=float)
        return t if label == "2" else np.zeros_like(t)

    return UtilityModel(u1, u2, "o")


def uniform_space(n: int = 3) -> FiniteTypeSpace:
    th = np.linspace(0.0, 1.0, n)
    w = np.full(n, 1.0 / n)
    return FiniteTypeSpace.product(th, w, th, w)


def _winner_table(space: FiniteTypeSpace) -> tuple[list[list[str]], np.ndarray]:
    a, b = space.theta1[:, None], space.theta2[None, :]
    delegate_wins = a >= b
    labels = [["1" if w else "2" for w in row] for row in delegate_wins]
    return labels, delegate_wins


def second_price(space: FiniteTypeSpace | None = None) -> DirectMechanism:
    """Higher type wins (delegate on ties) and pays the other's type."""
    space = space or uniform_space()
    labels, d = _winner_table(space)
    a, b = space.theta1[:, None], space.theta2[None, :]
    t1 = np.where(d, b, 0.0) + 0.0 * a
    t2 = np.where(d, 0.0, a) + 0.0 * b
    return DirectMechanism.from_labels(space, unit_good_utilities(), labels, t1, t2)


def first_price(space: FiniteTypeSpace | None = None) -> DirectMechanism:
    """Higher type wins and pays its own report: the agent gains by shading."""
    space = space or uniform_space()
    labels, d = _winner_table(space)
    a, b = space.theta1[:, None], space.theta2[None, :]
    t1 = np.where(d, a, 0.0) + 0.0 * b
    t2 = np.where(d, 0.0, b) + 0.0 * a
    return DirectMechanism.from_labels(space, unit_good_utilities(), labels, t1, t2)


def pay_your_report(space: FiniteTypeSpace | None = None) -> DirectMechanism:
    """No trade; each player receives its own report."""
    space = space or uniform_space()
    a, b = space.theta1[:, None], space.theta2[None, :]
    n1, n2 = space.shape
    return DirectMechanism.from_labels(
        space, unit_good_utilities(), [["o"] * n2 for _ in range(n1)], -a + 0.0 * b, -b + 0.0 * a
    )


def posted_price(prices, space: FiniteTypeSpace | None = None) -> DirectMechanism:
    """Delegate type i offers the agent the good at ``prices[i]``."""
    space = space or uniform_space()
    p = np.asarray(prices, dtype=float)[:, None]
    buys = space.theta2[None, :] >= p
    labels = [["2" if x else "o" for x in row] for row in buys]
    t2 = np.where(buys, p, 0.0)
    t1 = -t2
    return DirectMechanism.from_labels(space, unit_good_utilities(), labels, t1, t2)


def constant(space: FiniteTypeSpace | None = None, label: str = "o") -> DirectMechanism:
    space = space or uniform_space()
    n1, n2 = space.shape
    z = np.zeros(space.shape)
    return DirectMechanism.from_labels(space, unit_good_utilities(), [[label] * n2 for _ in range(n1)], z, z)


def zero_mean_perturbation(m: DirectMechanism, scale: float = 0.1) -> DirectMechanism:
    """Add ``scale * (theta1 - E[theta1 | theta2]) * theta2`` to the agent's payment.

    With independent types the addition has zero mean for every agent report,
    so interim incentives are unchanged, while ex-post incentives are not.
    """
    sp = m.space
    cond_mean = (sp.cond1 * sp.theta1[:, None]).sum(axis=0)
    h = scale * (sp.theta1[:, None] - cond_mean[None, :]) * sp.theta2[None, :]
    return DirectMechanism(sp, m.utilities, m.labels, m.outcome, m.t1, m.t2 + h)
