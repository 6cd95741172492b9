import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delegation import samples
from delegation.acceptance import random_mechanism
from delegation.mech import (
    DirectMechanism,
    FiniteTypeSpace,
    check_bic,
    check_budget_balance,
    check_dsic,
    check_epir,
    check_iir,
    delegated_implementable,
    read_mechanism_csv,
    read_utility_csv,
    write_mechanism_csv,
    write_utility_csv,
)

SIX = ("bic1", "iir1", "bic2", "iir2", "dsic2", "epir2")


def test_type_space_validation():
    with pytest.raises(ValueError):
        FiniteTypeSpace([0, 1], [0, 1], [[0.5, 0.5], [0.0, 0.1]])  # mass 1.1
    with pytest.raises(ValueError):
        FiniteTypeSpace([0, 1], [0, 1], [[0.5, 0.5], [0.0, 0.0]])  # empty row
    sp = samples.uniform_space(3)
    np.testing.assert_allclose(sp.cond2.sum(axis=1), 1.0)
    np.testing.assert_allclose(sp.cond1.sum(axis=0), 1.0)


def test_second_price_passes_all_six():
    rep = delegated_implementable(samples.second_price())
    assert rep.passed
    assert set(rep.subreports) == set(SIX)
    assert all(r.passed for r in rep.subreports.values())


def test_constant_and_default_mechanisms_pass():
    for label in ("o", "1"):
        assert delegated_implementable(samples.constant(label=label)).passed
    m = samples.constant()
    for player in (1, 2):
        assert check_iir(m, player).worst_violation == 0.0
    assert check_epir(m).worst_violation == 0.0


def test_pay_your_report_fails_bic_at_top_report():
    rep = check_bic(samples.pay_your_report(), 1)
    assert not rep.passed
    assert rep.witness["report"] == 1.0
    assert rep.worst_violation == pytest.approx(1.0)


def test_first_price_fails_with_dsic_witness():
    m = samples.first_price()
    dsic = check_dsic(m)
    assert not dsic.passed
    # high agent type shades its bid to 0.5 against the zero-type delegate
    assert dsic.witness == {"theta1": 0.0, "theta2": 1.0, "report": 0.5}
    rep = delegated_implementable(m)
    assert not rep.passed
    assert rep.witness["constraint"] == "dsic2"


def test_fee_above_willingness_to_pay_fails_iir():
    sp = samples.uniform_space(3)
    m = samples.second_price(sp)
    fee = DirectMechanism(sp, m.utilities, m.labels, m.outcome, m.t1 + 2.0, m.t2)
    rep = check_iir(fee, 1)
    assert not rep.passed
    assert rep.worst_violation == pytest.approx(2.0, abs=1e-12)  # zero type: interim payoff -2


def test_posted_price_rows_are_dsic():
    m = samples.posted_price([0.3, 0.5, 0.7])
    assert check_dsic(m).passed
    assert check_epir(m).passed


def test_agent_only_checks_reject_player_one():
    m = samples.second_price()
    with pytest.raises(ValueError):
        check_dsic(m, 1)
    with pytest.raises(ValueError):
        check_epir(m, 1)


def test_budget_balance_modes():
    sp = samples.uniform_space(3)
    m = samples.posted_price([0.3, 0.5, 0.7], sp)  # t1 = -t2
    assert check_budget_balance(m, "exact").passed
    auction = samples.second_price(sp)  # payments leave to an outside seller
    assert not check_budget_balance(auction, "exact").passed
    assert check_budget_balance(auction, "weak").passed
    zero = samples.constant(sp)
    assert check_budget_balance(zero, "exact").passed and check_budget_balance(zero, "weak").passed
    with pytest.raises(ValueError):
        check_budget_balance(zero, "strong")


def test_zero_mean_perturbation_is_bic_but_not_dsic():
    m = samples.zero_mean_perturbation(samples.second_price(samples.uniform_space(4)))
    rep = delegated_implementable(m)
    assert rep.subreports["bic2"].passed
    assert rep.subreports["iir2"].passed
    assert not rep.subreports["dsic2"].passed
    assert not rep.passed


def test_support_masking_for_correlated_pmf():
    # the agent never meets the delegate off the diagonal; an off-support
    # profile carrying a terrible outcome must not matter
    th = np.array([0.0, 1.0])
    pmf = np.diag([0.5, 0.5])
    sp = FiniteTypeSpace(th, th, pmf)
    m = samples.second_price(sp)
    t2 = m.t2.copy()
    t2[0, 1] = 50.0
    bad = DirectMechanism(sp, m.utilities, m.labels, m.outcome, m.t1, t2)
    assert check_epir(bad).passed
    assert check_dsic(bad).passed


def test_csv_roundtrip(tmp_path):
    m = samples.zero_mean_perturbation(samples.second_price(samples.uniform_space(4)))
    write_mechanism_csv(m, tmp_path / "m.csv")
    write_utility_csv(m, tmp_path / "u.csv")
    U = read_utility_csv(tmp_path / "u.csv")
    back = read_mechanism_csv(tmp_path / "m.csv", U)
    assert back.label_table() == m.label_table()
    np.testing.assert_allclose(back.t1, m.t1, atol=1e-11)
    np.testing.assert_allclose(back.t2, m.t2, atol=1e-11)
    np.testing.assert_allclose(back.space.pmf, m.space.pmf, atol=1e-11)
    for name in SIX:
        a = delegated_implementable(m).subreports[name]
        b = delegated_implementable(back).subreports[name]
        assert a.passed == b.passed


def test_random_mechanism_implications():
    rng = np.random.default_rng(7)
    seen = {"dsic": 0, "epir": 0}
    for _ in range(200):
        _, m = random_mechanism(rng)
        if check_dsic(m).passed:
            seen["dsic"] += 1
            assert check_bic(m, 2).passed
        if check_epir(m).passed:
            seen["epir"] += 1
            assert check_iir(m, 2).passed
    assert seen["dsic"] > 20 and seen["epir"] > 20


@given(seed=st.integers(0, 10_000), tols=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
def test_tolerance_monotone(seed, tols):
    lo, hi = sorted(tols)
    _, m = random_mechanism(np.random.default_rng(seed))
    if delegated_implementable(m, lo).passed:
        assert delegated_implementable(m, hi).passed


@given(seed=st.integers(0, 10_000))
def test_report_witness_attains_worst(seed):
    _, m = random_mechanism(np.random.default_rng(seed))
    rep = delegated_implementable(m)
    worst = max(r.worst_violation for r in rep.subreports.values())
    assert rep.worst_violation == worst
    if not rep.passed:
        assert rep.subreports[rep.witness["constraint"]].worst_violation == worst
