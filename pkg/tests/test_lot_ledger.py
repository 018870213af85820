import numpy as np
import pytest
from hypothesis import given, strategies as st

from taxflow import lot_ledger as ll
from taxflow.fixtures import wash_sale_example

from strategies import integer_market

ALPHA = 0.25
FIG2_S = np.array([100.0, 103.0, 104.0, 105.0, 102.0])
FIG2_PHI = ll.DiscreteStrategy([9, 10, 14, 10, 10])

# Lot matrix of the five-date example derived by hand: the 4 shares bought at 104
# are sold at 105, the share bought at 103 is wash-sold at 102 and bought back.
FIG2_N = np.array([
    [9, 9, 9, 9, 9],
    [0, 1, 1, 1, 0],
    [0, 0, 4, 0, 0],
    [0, 0, 0, 0, 0],
    [0, 0, 0, 0, 1],
], dtype=float)


def test_five_date_lot_matrix():
    N = ll.wash_optimal_strategy(FIG2_PHI, FIG2_S)
    assert np.array_equal(N.n, FIG2_N)
    assert ll.validate(N, FIG2_PHI)


def test_five_date_taxes():
    N = ll.wash_optimal_strategy(FIG2_PHI, FIG2_S)
    assert np.array_equal(ll.tax_payments(N, FIG2_S, ALPHA), ALPHA * np.array([0, 0, 0, 4, 3.0]))


def test_five_date_book_profits():
    N = ll.wash_optimal_strategy(FIG2_PHI, FIG2_S)
    F = ll.book_profit_fn_discrete(N, FIG2_S, 4)
    assert F.segments == [(1.0, 0.0), (9.0, 2.0)]
    assert F.integral() == 18.0
    assert F(0.5) == 0.0 and F(1.0) == 0.0 and F(1.5) == 2.0 and F(10.0) == 2.0 and F(10.5) == 0.0


def test_five_date_ledger_lots():
    ledgers, taxes = ll.replay_ledger(FIG2_PHI, FIG2_S, ALPHA)
    final = ledgers[-1]
    assert [(lot.purchase_index, lot.size, lot.basis) for lot in final.lots] == [(0, 9.0, 100.0), (4, 1.0, 102.0)]
    assert np.array_equal(taxes, ALPHA * np.array([0, 0, 0, 4, 3.0]))
    assert final.to_csv().splitlines()[0] == "purchase_index,size,basis,book_profit"


def test_validate_reports_each_problem():
    phi = ll.DiscreteStrategy([2, 2])
    grows = ll.LotMatrix([[1, 2], [0, 0]])
    assert not ll.validate(grows, phi)
    wrong_sum = ll.LotMatrix([[2, 1], [0, 0]])
    res = ll.validate(wrong_sum, phi)
    assert not res and any("sum" in v for v in res.violations)
    negative = ll.LotMatrix([[2, 3], [0, -1]])
    assert not ll.validate(negative, phi)
    below = ll.LotMatrix([[2, 2], [1, 0]])
    assert not ll.validate(below, phi)


def test_tax_payments_rejects_invalid_matrix_when_checked():
    with pytest.raises(ValueError):
        ll.tax_payments(ll.LotMatrix([[1, 2], [0, 0]]), [1.0, 2.0], ALPHA, check=ll.DiscreteStrategy([1, 2]))


def test_enumeration_counts_small_case():
    # two shares, then one: keep 1 of lot 0 (nothing new) or sell both and buy one
    mats = list(ll.enumerate_lot_matrices(ll.DiscreteStrategy([2, 1])))
    assert sorted(m.n[:, 1].tolist() for m in mats) == [[0.0, 1.0], [1.0, 0.0]]


def test_enumeration_budget():
    with pytest.raises(ll.EnumerationBudgetExceeded):
        list(ll.enumerate_lot_matrices(ll.DiscreteStrategy([4, 4, 4, 4, 4]), budget=10))


def test_enumeration_requires_lattice_positions():
    with pytest.raises(ValueError):
        list(ll.enumerate_lot_matrices(ll.DiscreteStrategy([1.5, 1.0])))


@given(integer_market(max_steps=20))
def test_wash_optimal_matrix_is_admissible(market):
    S, pos = market
    phi = ll.DiscreteStrategy(pos)
    assert ll.validate(ll.wash_optimal_strategy(phi, S), phi)


@given(integer_market(max_steps=3))
def test_wash_optimal_matches_exhaustive_minimum(market):
    S, pos = market
    phi = ll.DiscreteStrategy(pos)
    N = ll.wash_optimal_strategy(phi, S)
    assert np.array_equal(ll.tax_payments(N, S, ALPHA), ll.brute_force_min_tax_all(phi, S, ALPHA))


@given(integer_market(max_steps=25), st.integers(0, 2**31))
def test_any_lot_choice_pays_at_least_as_much(market, seed):
    S, pos = market
    phi = ll.DiscreteStrategy(pos)
    other = ll.random_lot_matrix(phi, np.random.default_rng(seed))
    assert ll.validate(other, phi, atol=1e-9)
    best = ll.tax_payments(ll.wash_optimal_strategy(phi, S), S, ALPHA)
    assert np.all(best <= ll.tax_payments(other, S, ALPHA) + 1e-9)


@given(integer_market(max_steps=25))
def test_taxes_equal_gains_minus_book_profits(market):
    S, pos = market
    N = ll.wash_optimal_strategy(ll.DiscreteStrategy(pos), S)
    assert np.allclose(ll.tax_payments(N, S, ALPHA), ll.tax_via_book_profits(N, S, ALPHA), rtol=0, atol=1e-10)


@given(integer_market(max_steps=25))
def test_gains_identity_holds_for_arbitrary_lot_choices(market):
    S, pos = market
    phi = ll.DiscreteStrategy(pos)
    N = ll.random_lot_matrix(phi, np.random.default_rng(0))
    assert np.allclose(ll.tax_payments(N, S, ALPHA), ll.tax_via_book_profits(N, S, ALPHA), rtol=0, atol=1e-9)


@given(integer_market(max_steps=25))
def test_one_step_recursion_reproduces_book_profits(market):
    S, pos = market
    phi = ll.DiscreteStrategy(pos)
    N = ll.wash_optimal_strategy(phi, S)
    F = ll.book_profit_fn_discrete(N, S, 0)
    for t in range(1, phi.T + 1):
        F = ll.recursion_step(F, phi.increments[t], S[t] - S[t - 1])
        assert F.segments == ll.book_profit_fn_discrete(N, S, t).merged().segments


@given(integer_market(max_steps=25))
def test_wash_optimal_book_profits_are_nonnegative_and_sorted(market):
    S, pos = market
    N = ll.wash_optimal_strategy(ll.DiscreteStrategy(pos), S)
    for t in range(S.size):
        F = ll.book_profit_fn_discrete(N, S, t)
        assert np.all(F.profits >= 0) and F.is_nondecreasing()


@given(integer_market(max_steps=25))
def test_ledger_replay_matches_matrix(market):
    S, pos = market
    phi = ll.DiscreteStrategy(pos)
    N = ll.wash_optimal_strategy(phi, S)
    ledgers, taxes = ll.replay_ledger(phi, S, ALPHA)
    assert np.allclose(taxes, ll.tax_payments(N, S, ALPHA), rtol=0, atol=1e-10)
    for t, led in enumerate(ledgers):
        assert led.position == pos[t]
        bases = [lot.basis for lot in led.lots]
        assert bases == sorted(bases)
        assert led.book_profits().merged().segments == ll.book_profit_fn_discrete(N, S, t).merged().segments


def test_ledger_rejects_short_sale():
    with pytest.raises(ValueError):
        ll.ledger_step(ll.LotLedger(), 100.0, -1.0, ALPHA)


def test_fixture_discrete_view_matches():
    fx = wash_sale_example()
    assert np.array_equal(fx.discrete.phi, FIG2_PHI.phi)
