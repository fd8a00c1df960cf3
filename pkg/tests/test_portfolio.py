import numpy as np
import pytest
from hypothesis import given, strategies as st

from starrisk.bsde import solve_bsde
from starrisk.drivers import builtin_driver
from starrisk.errors import ParameterError, PreconditionError
from starrisk.lattice import build_lattice, constant_claim, identity_claim
from starrisk.portfolio import (
    Market,
    StrategyGrid,
    interchange_table,
    optimize_portfolio,
    simulate_wealth,
    verify_linear_decomposition,
    wealth_claim,
)

W = identity_claim()
MU = builtin_driver("scaled_abs_z", mu=0.5)
ZERO = builtin_driver("zero")


def test_zero_policy_keeps_initial_wealth():
    lat = build_lattice(1.0, 6)
    X = simulate_wealth(lat, Market(x0=1.5), 0.0)
    for layer in X:
        np.testing.assert_array_equal(layer, 1.5)


def test_all_up_wealth():
    lat = build_lattice(1.0, 4)
    X = simulate_wealth(lat, Market(0.1, 0.2, 0.7), 1.0)
    assert X[4, 4] == pytest.approx(0.7 + 0.1 + 0.4)


@given(st.floats(-2, 2), st.floats(-1, 1), st.integers(1, 60))
def test_expected_wealth(pi, b, N):
    lat = build_lattice(1.0, N)
    XT = wealth_claim(lat, Market(b, 0.3, 0.2), pi).values(lat)
    assert float(lat.binomial_weights(N) @ XT) == pytest.approx(0.2 + pi * b, abs=1e-10)


def test_wealth_matches_simulation_terminal_layer():
    lat = build_lattice(1.0, 9)
    m = Market(np.linspace(0.0, 0.2, 9), 0.25, 0.1)
    np.testing.assert_allclose(simulate_wealth(lat, m, -0.5).layer(9), wealth_claim(lat, m, -0.5).values(lat))


def test_zero_driver_enumeration():
    lat = build_lattice(1.0, 100)
    sol = optimize_portfolio(lat, ZERO, Market(), StrategyGrid((-1, 0, 1)))
    assert sol.value == pytest.approx(-0.1, abs=1e-15)
    assert sol.pi_star[0] == -1.0


def test_no_trading_is_rho_of_f():
    lat = build_lattice(1.0, 30)
    F = W.scaled(-1.0)
    sol = optimize_portfolio(lat, MU, Market(), StrategyGrid((0,)), F)
    assert sol.value == pytest.approx(solve_bsde(lat, MU, F).value, abs=1e-12)


def test_large_volatility_pushes_policy_to_zero():
    lat = build_lattice(1.0, 20)
    sol = optimize_portfolio(lat, MU, Market(0.1, 2.0), StrategyGrid((-1, 0, 1)))
    assert sol.pi_star[0] == 0.0
    table = {pi: v[0] for pi, v in sol.table}
    assert sol.value == min(table.values())


def test_ties_go_to_smallest_policy():
    lat = build_lattice(1.0, 10)
    sol = optimize_portfolio(lat, ZERO, Market(b=0.0), StrategyGrid((1, -1, 0)))
    assert sol.pi_star[0] == -1.0


@pytest.mark.parametrize(
    "driver, Pi, F",
    [
        (ZERO, (-1, 0, 1), constant_claim(0.0)),
        (MU, (0, 1), W),
        (MU, (-1, 0, 1), W),
        (builtin_driver("example3_restricted"), (-1, 0, 1), W.scaled(0.5)),
    ],
)
def test_linear_decomposition(driver, Pi, F):
    rep = verify_linear_decomposition(build_lattice(1.0, 50), driver, Market(), StrategyGrid(Pi), F)
    assert rep.passed, rep.worst


def test_decomposition_zero_driver_closed_form():
    lat = build_lattice(1.0, 20)
    rep = verify_linear_decomposition(lat, ZERO, Market(), StrategyGrid((-1, 0, 1)), W)
    # Y = E[F] + pi b T with pi = -1
    assert rep.Y[0] == pytest.approx(-0.1, abs=1e-14)


def test_decomposition_needs_y_independent():
    with pytest.raises(PreconditionError):
        verify_linear_decomposition(build_lattice(1.0, 10), builtin_driver("example1"), Market(),
                                    StrategyGrid((0, 1)), W)


@pytest.mark.parametrize("name, Pi", [("scaled_abs_z", (0, 1)), ("example1", (-1, 0, 1)), ("zero", (-1, 0, 1))])
def test_interchange_exact(name, Pi):
    rep = interchange_table(build_lattice(1.0, 30), builtin_driver(name), Market(), StrategyGrid(Pi), W)
    assert rep.exact
    assert rep.pi_then_gamma == pytest.approx(rep.value, abs=1e-12)


def test_minimizer_consistency():
    lat = build_lattice(1.0, 30)
    grid = StrategyGrid((-1, 0, 1))
    rep = interchange_table(lat, MU, Market(), grid, W)
    sol = optimize_portfolio(lat, MU, Market(), grid, W)
    assert rep.pi_star == sol.pi_star[0]


@pytest.mark.parametrize(
    "kwargs",
    [{"sigma": 0.0}, {"sigma": -1.0}, {"x0": float("inf")}, {"b": float("nan")}],
)
def test_bad_market(kwargs):
    with pytest.raises(ParameterError):
        Market(**kwargs)


def test_bad_grid_and_policy():
    with pytest.raises(ParameterError):
        StrategyGrid(())
    with pytest.raises(ParameterError):
        StrategyGrid((0, float("inf")))
    with pytest.raises(ParameterError):
        StrategyGrid((0, 1), policy_class="feedback")
    with pytest.raises(ParameterError):
        simulate_wealth(build_lattice(1.0, 3), Market(), 2.0, StrategyGrid((0, 1)))
    with pytest.raises(ParameterError):
        Market(b=[0.1, 0.2]).drift(3)
