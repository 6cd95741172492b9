import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delegation import dist, resale as R


@pytest.fixture(scope="module")
def env():
    return R.ResaleEnv(dist.uniform(), dist.uniform())


@pytest.fixture(scope="module")
def bb(env):
    return R.scheme_with_buyback(env)


@pytest.fixture(scope="module")
def nb(env):
    return R.scheme_no_buyback(env)


def test_env_requires_dominance():
    with pytest.raises(ValueError):
        R.ResaleEnv(dist.power(2), dist.uniform())  # consumer law F = uniform, G = power(2)
    R.ResaleEnv(dist.uniform(), dist.power(2))


def test_monopoly_examples(env):
    assert R.monopoly_price(env, 0.0) == pytest.approx(0.5, abs=1e-9)
    assert R.monopoly_profit(env, 0.0) == pytest.approx(0.25, abs=1e-9)
    assert R.monopoly_price(env, 1.0) == pytest.approx(1.0, abs=1e-9)
    assert R.monopoly_profit(env, 1.0) == pytest.approx(1.0, abs=1e-9)
    assert R.monopoly_price(env, 0.5) == pytest.approx(0.75, abs=1e-9)
    assert R.monopoly_profit(env, 0.5) == pytest.approx(0.5625, abs=1e-9)
    th = np.linspace(0, 1, 101)
    assert np.all(np.diff(R.monopoly_profit(env, th)) > 0)


def test_laissez_faire_uniform(env):
    # pi_m(theta) = (1 + theta)^2 / 4, so H(p) = 2 sqrt(p) - 1 on [1/4, 1]
    p = np.linspace(0.25, 1.0, 100_001)
    rev = p * (2.0 - 2.0 * np.sqrt(p))
    lf = R.laissez_faire(env)
    assert lf.price == pytest.approx(p[np.argmax(rev)], abs=1e-5)
    assert lf.revenue == pytest.approx(rev.max(), abs=1e-6)
    assert lf.price == pytest.approx(4 / 9, abs=1e-6)
    assert lf.revenue == pytest.approx(8 / 27, abs=1e-9)
    assert lf.participation_cutoff == pytest.approx(1 / 3, abs=1e-6)
    assert lf.profit_monotone
    assert lf.revenue <= R.revenue_with_buyback(env)


def test_buyback_scheme_uniform(bb):
    assert bb.p_floor == pytest.approx(0.5, abs=1e-9)
    assert bb.refund == pytest.approx(0.5, abs=1e-9)
    p = bb.p_grid
    np.testing.assert_allclose(bb.discount_table, p**2 / 2 - 1 / 8, atol=1e-9)
    assert bb.discount(0.5) == pytest.approx(0.0, abs=1e-9)
    assert bb.discount(1.0) == pytest.approx(0.375, abs=1e-9)
    with pytest.raises(ValueError):
        bb.discount(0.2)


def test_no_buyback_scheme_uniform(nb):
    assert nb.p_floor == pytest.approx(0.0, abs=1e-12)
    assert nb.refund is None
    assert nb.discount(nb.p_floor) == pytest.approx(nb.p_floor * 0.0, abs=1e-12)
    # F = G makes the composition the identity: d(p) = p^2 - p^2/2
    np.testing.assert_allclose(nb.discount_table, nb.p_grid**2 / 2, atol=1e-9)
    assert R.intermediary_profit(nb, 0.0, R.equilibrium_price_map(nb.env, nb, 0.0)) == pytest.approx(0.0, abs=1e-12)


def test_price_map(env, bb):
    assert R.equilibrium_price_map(env, bb, 0.8) == pytest.approx(0.8, abs=1e-9)
    assert R.equilibrium_price_map(env, bb, 0.1) == pytest.approx(bb.p_floor, abs=1e-12)
    th = np.linspace(0, 1, 201)
    assert np.all(R.equilibrium_price_map(env, bb, th) <= R.monopoly_price(env, th) + 1e-9)


def test_marginal_refund_type_held_to_outside_option(bb):
    r = bb.refund
    assert R.intermediary_profit(bb, r, bb.p_floor) == pytest.approx(0.0, abs=1e-12)
    assert R.intermediary_profit(bb, r, bb.p_floor, returns=True) == pytest.approx(0.0, abs=1e-12)


def _brute_force_revenue(psi_g, psi_f, floor, n=2001):
    t = (np.arange(n) + 0.5) / n
    a = psi_g(t)[:, None]
    b = psi_f(t)[None, :]
    m = np.maximum(a, b)
    if floor:
        m = np.maximum(m, 0.0)
    return float(m.mean())


def test_revenue_formulas_uniform(env):
    psi = lambda t: 2 * t - 1  # noqa: E731
    assert R.revenue_with_buyback(env) == pytest.approx(5 / 12, abs=1e-9)
    assert R.revenue_no_buyback(env) == pytest.approx(1 / 3, abs=1e-9)
    assert R.revenue_with_buyback(env) == pytest.approx(_brute_force_revenue(psi, psi, True), abs=1e-6)
    assert R.revenue_no_buyback(env) == pytest.approx(_brute_force_revenue(psi, psi, False), abs=1e-6)
    rep = R.revenue_bounds(env)
    assert rep.passed
    assert rep.details["revenue_no_buyback"] - 0.5 * rep.details["revenue_with_buyback"] == pytest.approx(1 / 3 - 5 / 24)


def test_simulation_matches_formulas(env, bb, nb):
    s_bb = R.simulate(env, bb, 1001)
    s_nb = R.simulate(env, nb, 1001)
    assert s_bb.revenue == pytest.approx(5 / 12, abs=1e-3)
    assert s_nb.revenue == pytest.approx(1 / 3, abs=1e-3)


@pytest.mark.parametrize("name", ["bb", "nb"])
def test_scheme_invariants(name, request):
    s = request.getfixturevalue(name)
    d = s.discount_table
    assert np.all(np.diff(d) >= -1e-12)
    assert np.all(d >= -1e-12)
    assert np.all(d <= s.p_grid + 1e-12)
    sim = R.simulate(s.env, s, 401)
    assert np.all(sim.profit >= -1e-9)  # every intermediary type participates


def test_no_buyback_always_allocates(env, nb):
    sim = R.simulate(env, nb, 201)
    holder = sim.profile_tables()["holder"]
    assert np.all(holder != 0)


def test_profile_tables_reconcile_revenue(env, bb):
    sim = R.simulate(env, bb, 301)
    tabs = sim.profile_tables()
    per_profile = tabs["t1"] + tabs["t2"]
    assert float(sim.weights1 @ per_profile @ sim.weights2) == pytest.approx(sim.revenue, abs=1e-12)
    # consumer buys exactly when theta2 >= p
    buy = sim.theta2[None, :] >= sim.price[:, None]
    assert np.array_equal(tabs["holder"] == 2, buy)


def test_nonuniform_pair():
    env = R.ResaleEnv(dist.uniform(), dist.power(2))
    for scheme, formula in (
        (R.scheme_with_buyback(env), R.revenue_with_buyback(env)),
        (R.scheme_no_buyback(env), R.revenue_no_buyback(env)),
    ):
        assert R.simulate(env, scheme, 1001).revenue == pytest.approx(formula, abs=1e-3)
    psi_g = lambda t: 2 * t - 1  # noqa: E731
    psi_f = lambda t: np.sqrt(t) - (1 - t) / (2 * np.sqrt(t))  # quantile form, x = sqrt(t)  # noqa: E731
    assert R.revenue_with_buyback(env) == pytest.approx(_brute_force_revenue(psi_g, psi_f, True), abs=1e-5)
    assert R.revenue_no_buyback(env) == pytest.approx(_brute_force_revenue(psi_g, psi_f, False), abs=1e-5)


@given(k=st.floats(1.0, 4.0), lam=st.floats(0.1, 3.0))
def test_revenue_bounds_random_pairs(k, lam):
    F = dist.power(k, grid_resolution=401)
    G = dist.truncated_exponential(lam, grid_resolution=401)
    if not dist.check_hazard_dominance(F, G).passed:
        return
    rep = R.revenue_bounds(R.ResaleEnv(G, F))
    assert rep.passed
