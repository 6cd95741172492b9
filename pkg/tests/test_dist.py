import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delegation import dist

FAMILIES = [
    dist.uniform(),
    dist.power(2.0),
    dist.power(0.5),
    dist.truncated_exponential(1.5),
    dist.truncated_exponential(-1.0),
    dist.tabulated([0.0, 0.5, 1.0], [1.0, 1.5, 2.0]),
]


def test_cdf_examples():
    assert dist.uniform().cdf(0.3) == pytest.approx(0.3, abs=1e-12)
    assert dist.power(2).cdf(0.5) == pytest.approx(0.25, abs=1e-12)
    for d in FAMILIES:
        assert d.cdf(1.0) == pytest.approx(1.0, abs=1e-10)
        assert d.cdf(0.0) == pytest.approx(0.0, abs=1e-10)


def test_cdf_domain_error():
    with pytest.raises(ValueError):
        dist.uniform().cdf(1.5)
    with pytest.raises(ValueError):
        dist.uniform().cdf(-0.1)


def test_virtual_value_examples():
    u = dist.uniform()
    assert u.virtual_value(0.75) == pytest.approx(0.5, abs=1e-12)
    assert u.virtual_value(0.0) == pytest.approx(-1.0, abs=1e-12)
    for d in FAMILIES:
        assert d.virtual_value(1.0) == pytest.approx(1.0, abs=1e-10)


def test_inverse_virtual_value_examples():
    u = dist.uniform()
    assert u.inverse_virtual_value(0.0) == pytest.approx(0.5, abs=1e-9)
    assert u.inverse_virtual_value(1.0) == pytest.approx(1.0, abs=1e-9)
    assert u.inverse_virtual_value(-1.0) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        u.inverse_virtual_value(-1.5)
    with pytest.raises(ValueError):
        u.inverse_virtual_value(1.1)


def test_partial_cdf_integral_examples():
    u = dist.uniform()
    assert u.partial_cdf_integral(1.0) == pytest.approx(0.5, abs=1e-12)
    assert u.partial_cdf_integral(0.5) == pytest.approx(0.125, abs=1e-12)
    for d in FAMILIES:
        assert d.partial_cdf_integral(0.0) == pytest.approx(0.0, abs=1e-15)
        assert d.partial_cdf_integral(1.0) == pytest.approx(1.0 - d.mean, abs=1e-9)


def test_expectations():
    u = dist.uniform()
    assert u.mean == pytest.approx(0.5, abs=1e-12)
    assert u.expect(lambda x: x**2) == pytest.approx(1 / 3, abs=1e-12)
    for d in FAMILIES:
        assert d.expect(lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-10)
        assert d.expect(lambda x: 0.0 * x) == 0.0


def test_power_closed_forms():
    # independent: mean k/(k+1), I(x) = x^(k+1)/(k+1)
    for k in (0.5, 2.0, 3.0):
        d = dist.power(k)
        assert d.mean == pytest.approx(k / (k + 1), abs=1e-10)
        x = np.linspace(0, 1, 11)
        np.testing.assert_allclose(d.partial_cdf_integral(x), x ** (k + 1) / (k + 1), atol=1e-10)


def test_tabulated_renormalised():
    d = dist.tabulated([0.0, 1.0], [2.0, 2.0])  # integrates to 2 before renormalisation
    assert d.cdf(0.5) == pytest.approx(0.5, abs=1e-10)
    assert d.expect(lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-10)


def test_tabulated_csv_roundtrip(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,density\n0,1\n0.5,1.5\n1,2\n")
    d = dist.from_csv(p)
    ref = dist.tabulated([0.0, 0.5, 1.0], [1.0, 1.5, 2.0])
    x = np.linspace(0, 1, 21)
    np.testing.assert_allclose(d.cdf(x), ref.cdf(x), atol=1e-14)


def test_tabulated_rejects_bad_input():
    with pytest.raises(ValueError):
        dist.tabulated([0.0, 0.4, 0.3, 1.0], [1, 1, 1, 1])
    with pytest.raises(ValueError):
        dist.tabulated([0.0, 0.5, 1.0], [1.0, 0.0, 1.0])


def test_mhr_checks():
    assert dist.check_mhr(dist.uniform()).passed
    assert dist.check_mhr(dist.power(2)).passed
    x = np.linspace(0, 1, 41)
    bimodal = 0.05 + np.exp(-((x - 0.15) / 0.05) ** 2) + np.exp(-((x - 0.85) / 0.05) ** 2)
    rep = dist.check_mhr(dist.tabulated(x, bimodal))
    assert not rep.passed
    assert rep.witness is not None


def test_hazard_dominance_examples():
    u, p2 = dist.uniform(), dist.power(2)
    assert dist.check_hazard_dominance(u, u).passed
    assert dist.check_hazard_dominance(p2, u).passed
    assert not dist.check_hazard_dominance(u, p2).passed


def test_gauss_legendre_exact_for_polynomials():
    x, w = dist.gauss_legendre(8)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.sum(w * x**15) == pytest.approx(1 / 16, abs=1e-14)


def test_discretize_masses():
    th, w = dist.discretize(dist.uniform(), 5)
    np.testing.assert_allclose(th, np.linspace(0, 1, 5))
    np.testing.assert_allclose(w, [0.125, 0.25, 0.25, 0.25, 0.125], atol=1e-12)


@pytest.mark.parametrize("d", [f for f in FAMILIES if dist.check_mhr(f).passed])
def test_virtual_value_inverse_identity_and_monotone(d):
    # the image is unbounded below when the density vanishes at 0
    lo = max(float(d.virtual_value(0.0)), float(d.virtual_value(1e-3)))
    y = np.linspace(lo, 1.0, 201)
    assert np.max(np.abs(d.virtual_value(d.inverse_virtual_value(y)) - y)) <= 1e-8
    nodes = d.nodes()
    assert np.all(np.diff(d.virtual_value(nodes)) > 0)


@pytest.mark.parametrize("d", FAMILIES)
def test_partial_cdf_integral_convex_nondecreasing(d):
    x = np.linspace(0, 1, 401)
    I = d.partial_cdf_integral(x)
    assert np.all(np.diff(I) >= -1e-12)
    assert np.all(I[2:] - 2 * I[1:-1] + I[:-2] >= -1e-9)


@given(k=st.floats(0.3, 4.0), lam=st.floats(-3.0, 3.0))
def test_virtual_value_ordering_under_dominance(k, lam):
    F = dist.power(k, grid_resolution=201)
    G = dist.truncated_exponential(lam if abs(lam) > 1e-3 else 1e-3, grid_resolution=201)
    # MHR for both laws is the standing assumption wherever dominance is used
    if dist.check_mhr(F).passed and dist.check_mhr(G).passed and dist.check_hazard_dominance(F, G).passed:
        x = np.linspace(0, 1, 201)
        assert np.all(F.virtual_value(x) <= G.virtual_value(x) + 1e-9)


@given(a=st.floats(0.0, 1.0), b=st.floats(0.0, 1.0))
def test_cdf_monotone(a, b):
    d = dist.truncated_exponential(2.0)
    lo, hi = min(a, b), max(a, b)
    assert d.cdf(lo) <= d.cdf(hi) + 1e-15
