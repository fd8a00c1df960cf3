import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starrisk.bsde import solve_bsde
from starrisk.drivers import Driver, builtin_driver
from starrisk.errors import ParameterError, PreconditionError
from starrisk.lattice import build_lattice, constant_claim, identity_claim, table_claim
from starrisk.supersolution import (
    coincides_with_bsde,
    minimal_supersolution,
    supersolution_slack,
    verify_super_representation,
)

W = identity_claim()


def test_mu_abs_z_value():
    res = minimal_supersolution(build_lattice(1.0, 100), builtin_driver("scaled_abs_z", mu=0.5), W)
    assert res.feasible
    assert res.value == pytest.approx(0.5, abs=1e-8)


@pytest.mark.parametrize("name", ["scaled_abs_z", "l1", "example3_restricted"])
def test_coincides_with_bsde(name):
    assert coincides_with_bsde(build_lattice(1.0, 40), builtin_driver(name), W) <= 1e-8


@pytest.mark.parametrize("name", ["scaled_abs_z", "l1", "example3_restricted"])
def test_is_a_supersolution(name):
    lat = build_lattice(1.0, 30)
    d = builtin_driver(name)
    res = minimal_supersolution(lat, d, W)
    assert supersolution_slack(lat, d, res) >= -1e-9


def test_example3_unconstrained_regime_matches_quadratic():
    # |Z| stays at 1, below the first threshold 2, so the constraint never binds
    lat = build_lattice(1.0, 50)
    d = builtin_driver("example3", lambdas=[5.0, 2.0, 1.5, 1.2], thresholds=[2.0, 3.0, 3.5, 4.0])
    quad = builtin_driver("quadratic_z", lam=5.0)
    res = minimal_supersolution(lat, d, W)
    assert res.value == pytest.approx(solve_bsde(lat, quad, W).value, abs=1e-6)


@given(st.lists(st.floats(-3, 0), min_size=11, max_size=11))
def test_nonpositive_claim_dominates_expectation(vals):
    lat = build_lattice(1.0, 10)
    res = minimal_supersolution(lat, builtin_driver("scaled_abs_z", mu=0.5), table_claim(vals))
    assert res.value >= float(lat.binomial_weights(10) @ np.asarray(vals)) - 1e-9


def test_tight_constraint_stays_feasible():
    # Z = 0 is admissible, so a finite supersolution exists whatever the claim
    lat = build_lattice(1.0, 4)
    d = builtin_driver("example3", lambdas=[5.0], thresholds=[0.1])
    res = minimal_supersolution(lat, d, W.scaled(10.0))
    assert res.feasible
    assert res.value <= float(np.max(W.scaled(10.0).values(lat))) + 4 * lat.delta * 0.01 / 5.0


def test_empty_domain_is_infeasible():
    d = Driver(lambda s, n, y, z: np.full(np.shape(z), math.inf), math.inf, set(), "nowhere", z_radius=0.0)
    res = minimal_supersolution(build_lattice(1.0, 3), d, W, check_flags=False)
    assert not res.feasible
    assert math.isinf(res.value)


def test_flags_are_checked():
    d = Driver(lambda s, n, y, z: np.abs(z), 1.0, {"star_shaped"}, "unflagged")
    with pytest.raises(PreconditionError):
        minimal_supersolution(build_lattice(1.0, 4), d, W)
    minimal_supersolution(build_lattice(1.0, 4), d, W, check_flags=False)


def test_bad_grid_size():
    with pytest.raises(ParameterError):
        minimal_supersolution(build_lattice(1.0, 4), builtin_driver("zero"), W, z_points=1)


def test_refinement_warning_is_quiet_when_converged():
    res = minimal_supersolution(build_lattice(1.0, 20), builtin_driver("l1"), W, check_refinement=True)
    assert res.warnings == ()


@pytest.mark.parametrize("name", ["scaled_abs_z", "l1", "example3_restricted"])
def test_super_representation(name):
    rep = verify_super_representation(build_lattice(1.0, 30), builtin_driver(name), W, n_anchors=4)
    assert rep.passed, rep


def test_super_representation_witness_value():
    rep = verify_super_representation(build_lattice(1.0, 50), builtin_driver("scaled_abs_z", mu=0.5), W, n_anchors=2)
    assert rep.value == pytest.approx(0.5, abs=1e-8)
    assert rep.witness_gap <= 1e-8


def test_constant_claim_zero_driver():
    res = minimal_supersolution(build_lattice(1.0, 5), builtin_driver("zero"), constant_claim(2.0))
    for layer in res.Y:
        np.testing.assert_allclose(layer, 2.0, atol=1e-12)
