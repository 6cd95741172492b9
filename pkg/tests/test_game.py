import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delegation import samples
from delegation.acceptance import _random_rights, _random_utilities, random_mechanism
from delegation.game import (
    OPT_OUT,
    ContractualRights,
    Outcome,
    agent_best_response,
    canonical_rights_from_scf,
    outcomes_match,
    solve_pbe,
    verify_by_delegation,
)
from delegation.mech import FiniteTypeSpace, check_dsic, check_epir, delegated_implementable


def price_menu(*prices):
    return tuple(Outcome("2", -p, p) for p in prices)


def test_agent_best_response_examples():
    U = samples.unit_good_utilities()
    menu = price_menu(0.3, 0.5)
    assert agent_best_response(menu, 0.4, U) == 0
    assert agent_best_response(menu, 0.2, U) == OPT_OUT
    assert agent_best_response((Outcome("o"),), 0.7, U) == 0  # the contract equal to o wins the tie


def test_agent_tie_break_prefers_designated_contract():
    U = samples.unit_good_utilities()
    menu = (Outcome("o"), Outcome("2", -0.5, 0.5))
    assert agent_best_response(menu, 0.5, U) == 0
    assert agent_best_response(menu, 0.5, U, tie_break=1) == 1


def test_rights_validation():
    with pytest.raises(ValueError):
        ContractualRights(())
    with pytest.raises(ValueError):
        ContractualRights(((),))


def test_single_menu_delegate_takes_it_or_opts_out():
    sp = samples.uniform_space(3)
    U = samples.unit_good_utilities()
    eq = solve_pbe(ContractualRights((price_menu(0.5),)), U, sp)
    assert set(eq.delegate_choice.tolist()) <= {0, OPT_OUT}


def test_canonical_rights_examples():
    posted = samples.posted_price([0.5, 0.5, 0.5])
    rights = canonical_rights_from_scf(posted)
    assert len(rights) == 3
    # each menu holds the offer and the no-trade outcome at zero transfers
    for menu in rights.menus:
        assert {c.label for c in menu} <= {"2", "o"}
    const = canonical_rights_from_scf(samples.constant())
    assert len(set(const.menus)) == 1
    sp = canonical_rights_from_scf(samples.second_price())
    assert len(sp) == 3 and all(len(menu) <= 3 for menu in sp.menus)


def test_canonical_rights_reproduce_implementable_mechanisms():
    for m in (samples.second_price(), samples.constant(), samples.second_price(samples.uniform_space(5))):
        eq, rep = verify_by_delegation(m)
        assert rep.passed
        assert eq.delegate_choice.tolist() == list(range(m.space.shape[0]))


def test_bic_only_mechanism_is_not_reproduced():
    m = samples.zero_mean_perturbation(samples.second_price(samples.uniform_space(4)))
    _, rep = verify_by_delegation(m)
    assert not rep.passed
    assert rep.witness is not None


def test_outcomes_match_self():
    m = samples.second_price()
    eq = solve_pbe(canonical_rights_from_scf(m), m.utilities, m.space)
    assert outcomes_match(eq, eq.to_mechanism(m.utilities)).passed


def test_induced_outcome_is_composition_of_strategies():
    rng = np.random.default_rng(3)
    sp = FiniteTypeSpace.product(np.linspace(0, 1, 4), np.ones(4), np.linspace(0, 1, 5), np.ones(5))
    U = _random_utilities(rng)
    rights = _random_rights(rng)
    eq = solve_pbe(rights, U, sp)
    table = eq.induced_outcome()
    for i in range(4):
        k = eq.delegate_choice[i]
        for j in range(5):
            if k == OPT_OUT:
                assert table[i][j] == Outcome("o")
                continue
            c = eq.agent_choice[k, j]
            assert table[i][j] == (Outcome("o") if c == OPT_OUT else rights.menus[k][c])


def test_rights_csv_roundtrip(tmp_path):
    rights = canonical_rights_from_scf(samples.second_price())
    rights.to_csv(tmp_path / "r.csv")
    back = ContractualRights.from_csv(tmp_path / "r.csv")
    assert len(back) == len(rights)
    for a, b in zip(rights.menus, back.menus):
        assert [c.label for c in a] == [c.label for c in b]
        np.testing.assert_allclose([c.t2 for c in a], [c.t2 for c in b], atol=1e-12)


def test_round_trip_agrees_with_checker():
    rng = np.random.default_rng(11)
    verdicts = set()
    for _ in range(60):
        _, m = random_mechanism(rng)
        a = delegated_implementable(m).passed
        assert a == verify_by_delegation(m)[1].passed
        verdicts.add(a)
    assert verdicts == {True, False}


def _equilibrium_payoff_floors(eq, m, U):
    v1 = m.ex_post(1)
    interim = (v1 * m.space.cond2).sum(axis=1)
    out1 = U.outside(1, m.space.theta1)
    out2 = U.outside(2, m.space.theta2)
    return interim - out1, m.ex_post(2) - out2[None, :]


def test_random_rights_induce_dsic_epir_outcomes():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n1, n2 = (int(k) for k in rng.integers(2, 7, 2))
        sp = FiniteTypeSpace(np.sort(rng.random(n1)), np.sort(rng.random(n2)), rng.dirichlet(np.ones(n1 * n2)).reshape(n1, n2))
        U = _random_utilities(rng)
        eq = solve_pbe(_random_rights(rng), U, sp)
        m = eq.to_mechanism(U)
        assert check_dsic(m).passed
        assert check_epir(m).passed
        d_slack, a_slack = _equilibrium_payoff_floors(eq, m, U)
        assert np.all(d_slack >= -1e-9)
        assert np.all(a_slack >= -1e-9)


@given(seed=st.integers(0, 100_000))
def test_equilibrium_mechanism_is_delegation_implementable(seed):
    rng = np.random.default_rng(seed)
    sp = FiniteTypeSpace.product(np.linspace(0, 1, 3), rng.random(3) + 0.1, np.linspace(0, 1, 4), rng.random(4) + 0.1)
    U = _random_utilities(rng)
    m = solve_pbe(_random_rights(rng), U, sp).to_mechanism(U)
    assert delegated_implementable(m).passed
    assert verify_by_delegation(m)[1].passed
