import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starrisk.bsde import (
    RISK_MODES,
    dominance_sample,
    min_representation,
    solve_bsde,
    solve_terminal,
    verify_risk_properties,
)
from starrisk.drivers import ControlPath, builtin_driver, ph_envelope
from starrisk.errors import ParameterError, StepSizeError
from starrisk.lattice import build_lattice, call_claim, constant_claim, identity_claim

W = identity_claim()


@pytest.mark.parametrize("N", [1, 4, 37, 100])
def test_zero_driver_is_martingale(N):
    sol = solve_bsde(build_lattice(1.0, N), builtin_driver("zero"), W)
    assert sol.value == 0.0
    np.testing.assert_allclose(sol.Z.layer(0), [1.0])


@pytest.mark.parametrize("N", [4, 100, 257])
@pytest.mark.parametrize("mu", [0.0, 0.5, 2.0])
def test_mu_abs_z_closed_form(N, mu):
    lat = build_lattice(1.0, N)
    sol = solve_bsde(lat, builtin_driver("scaled_abs_z", mu=mu), W)
    for k in (0, N // 2, N):
        np.testing.assert_allclose(sol.Y.layer(k), lat.w_values(k) + mu * (1.0 - k * lat.delta), atol=1e-10)


@pytest.mark.parametrize("N, tol", [(200, 2e-3), (400, 1e-3)])
def test_ode_oracle(N, tol):
    sol = solve_bsde(build_lattice(1.0, N), builtin_driver("linear_y", a=-1.0), constant_claim(1.0))
    assert abs(sol.value - math.exp(-1.0)) <= tol


def test_ode_error_halves():
    errs = [abs(solve_bsde(build_lattice(1.0, N), builtin_driver("linear_y", a=-1.0), constant_claim(1.0)).value
                - math.exp(-1.0)) for N in (200, 400)]
    assert 1.6 <= errs[0] / errs[1] <= 2.4


def test_step_size_error_suggests_steps():
    with pytest.raises(StepSizeError) as exc:
        solve_bsde(build_lattice(1.0, 2), builtin_driver("linear_y", a=-5.0), W)
    assert exc.value.suggested_steps == 10


def test_y_independent_driver_has_no_step_condition():
    sol = solve_bsde(build_lattice(1.0, 1), builtin_driver("scaled_abs_z", mu=50.0), W)
    assert sol.value == pytest.approx(50.0)


def test_solve_terminal_checks_shape():
    with pytest.raises(ParameterError):
        solve_terminal(build_lattice(1.0, 3), builtin_driver("zero"), np.zeros(3))


@pytest.mark.parametrize("name", ["scaled_abs_z", "example1", "example2", "example3_restricted"])
def test_min_representation_attained(name):
    rep = min_representation(build_lattice(1.0, 60), builtin_driver(name), W)
    assert rep.max_gap <= 1e-9


def test_envelope_resolve_value_for_mu_abs_z():
    rep = min_representation(build_lattice(1.0, 100), builtin_driver("scaled_abs_z", mu=0.5), W)
    assert rep.envelope_solution.value == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("name, n", [("scaled_abs_z", 20), ("example2", 20), ("example1", 10)])
def test_random_controls_dominate(name, n):
    rep = dominance_sample(build_lattice(1.0, 40), builtin_driver(name), W, n_controls=n, seed=3)
    assert rep.all_dominate and rep.min_gap >= -1e-9


def test_constant_witness_control_has_zero_gap():
    lat = build_lattice(1.0, 30)
    d = builtin_driver("example1")
    primal = solve_bsde(lat, d, W)
    env = solve_bsde(lat, ph_envelope(d, primal.control_path()), W)
    assert env.Y.max_abs_diff(primal.Y) <= 1e-12


def test_dominance_is_seeded():
    lat = build_lattice(1.0, 20)
    d = builtin_driver("example1")
    a = dominance_sample(lat, d, W, n_controls=5, seed=11)
    b = dominance_sample(lat, d, W, n_controls=5, seed=11)
    assert a.gaps == b.gaps


@pytest.mark.parametrize(
    "name, params, mode, expected",
    [
        ("neg_part_y", {}, "cash_subadditive", "pass"),
        ("linear_y", {"a": 1.0}, "cash_subadditive", "fail"),
        ("scaled_abs_z", {"mu": 0.5}, "cash_additive", "pass"),
        ("example3_restricted", {}, "cash_additive", "pass"),
        ("example1", {}, "star_shaped", "pass"),
        ("example2", {}, "star_shaped", "pass"),
        ("scaled_abs_z", {"mu": 0.5}, "pos_hom", "pass"),
        ("scaled_abs_z", {"mu": 0.5}, "sublinear", "pass"),
        ("example1", {}, "time_consistency", "pass"),
        ("example2", {}, "time_consistency", "pass"),
        ("scaled_abs_z", {"mu": 0.5}, "regularity", "pass"),
        ("scaled_abs_z", {"mu": 0.5}, "positive_constancy", "pass"),
        ("linear_y", {"a": -1.0}, "positive_constancy", "precondition unmet"),
    ],
)
def test_risk_properties(name, params, mode, expected):
    lat = build_lattice(1.0, 40)
    rep = verify_risk_properties(lat, builtin_driver(name, params), [W, call_claim(0.0)], [mode])[mode]
    assert rep.status == expected, rep


def test_negative_cash_shift_is_precondition_unmet():
    rep = verify_risk_properties(build_lattice(1.0, 10), builtin_driver("neg_part_y"), [W], ["cash_subadditive"],
                                 cash=-0.5)
    assert rep["cash_subadditive"].status == "precondition unmet"


def test_unknown_mode():
    with pytest.raises(ParameterError):
        verify_risk_properties(build_lattice(1.0, 4), builtin_driver("zero"), [W], ["shiny"])
    assert "star_shaped" in RISK_MODES


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_comparison_principle(a, b):
    # larger terminal value, larger solution, node-wise
    lat = build_lattice(1.0, 20)
    d = builtin_driver("example1")
    lo, hi = sorted((a, b))
    x = lat.w_values(20)
    y_lo = solve_terminal(lat, d, lo + np.minimum(x, 0.0)).Y
    y_hi = solve_terminal(lat, d, hi + np.maximum(x, 0.0)).Y
    for u, v in zip(y_lo, y_hi):
        assert np.all(u <= v + 1e-12)


@given(st.floats(0.0, 1.0))
def test_star_shaped_transfer_property(lam):
    lat = build_lattice(1.0, 30)
    d = builtin_driver("example2")
    x = lat.w_values(30)
    r = lambda v: solve_terminal(lat, d, v).value  # noqa: E731
    assert r(lam * x) <= lam * r(x) + (1 - lam) * r(0 * x) + 1e-8


@given(st.floats(-1, 1), st.integers(2, 12))
def test_time_consistency_by_splicing(c, split):
    lat = build_lattice(1.0, 24)
    d = builtin_driver("example1")
    full = solve_terminal(lat, d, lat.w_values(24) + c)
    sub = build_lattice(split * lat.delta, split)
    head = solve_terminal(sub, d, np.asarray(full.Y.layer(split)))
    assert head.value == pytest.approx(full.value, abs=1e-12)


def test_z_is_the_slope_of_children():
    lat = build_lattice(1.0, 16)
    sol = solve_bsde(lat, builtin_driver("example2"), call_claim(0.0))
    for k in range(16):
        nxt = sol.Y.layer(k + 1)
        np.testing.assert_allclose(sol.Z.layer(k), (nxt[1:] - nxt[:-1]) / (2 * lat.sqrt_delta), atol=1e-12)


def test_control_path_round_trip():
    lat = build_lattice(1.0, 5)
    sol = solve_bsde(lat, builtin_driver("example1"), W)
    path = sol.control_path()
    assert isinstance(path, ControlPath)
    assert path.alpha_at(0, 0) == sol.value
