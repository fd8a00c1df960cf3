import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starrisk.drivers import (
    BUILTIN_DRIVERS,
    ControlPath,
    Driver,
    builtin_driver,
    check_driver_property,
    driver_from_spec,
    monotone_relaxation,
    ph_envelope,
    pointwise_min_driver,
    segment_driver,
)
from starrisk.errors import ParameterError

STAR_SHAPED = ["scaled_abs_z", "l1", "example1", "example2", "example3_restricted", "zero", "neg_part_y"]

finite = st.floats(-4, 4, allow_nan=False)


@pytest.mark.parametrize(
    "name, params, y, z, expected",
    [
        ("scaled_abs_z", {"mu": 0.5}, 0.0, 1.0, 0.5),
        ("scaled_abs_z", {"mu": 0.5}, 5.0, 1.0, 0.5),
        ("example3", {"lambdas": [5, 2, 1.5, 1.2], "thresholds": [1, 2, 2.5, 3]}, 0.0, 0.5, 0.05),
        ("example3", {"lambdas": [5, 2, 1.5, 1.2], "thresholds": [1, 2, 2.5, 3]}, 0.0, 3.5, math.inf),
        ("example1", {"gamma": 1.0, "delta": 1.0}, 1.0, 0.0, -math.exp(-1.0)),
        ("linear_y", {"a": -1.0}, 2.0, 7.0, -2.0),
        ("neg_part_y", {}, -2.0, 0.0, -0.0),
        ("neg_part_y", {}, 2.0, 0.0, -2.0),
        ("zero", {}, 3.0, -3.0, 0.0),
    ],
)
def test_driver_values(name, params, y, z, expected):
    assert builtin_driver(name, params)(y, z) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize(
    "name, flags, absent",
    [
        ("scaled_abs_z", {"convex", "pos_hom", "y_independent", "star_shaped"}, set()),
        ("example1", {"star_shaped"}, {"convex"}),
        ("example2", {"star_shaped"}, {"decreasing_y"}),
        ("example3", {"star_shaped", "y_independent", "lsc"}, set()),
    ],
)
def test_declared_flags(name, flags, absent):
    d = builtin_driver(name)
    assert flags <= d.flags
    assert not (absent & d.flags)


@pytest.mark.parametrize(
    "name, params",
    [
        ("nope", {}),
        ("example2", {"thresholds": [1.0, 0.5]}),
        ("example3", {"lambdas": [1.0, 2.0], "thresholds": [1.0, 2.0]}),
        ("scaled_abs_z", {"bogus": 1}),
    ],
)
def test_builtin_driver_errors(name, params):
    with pytest.raises(ParameterError):
        builtin_driver(name, params)


def test_driver_rejects_unknown_flag():
    with pytest.raises(ParameterError):
        Driver(lambda s, n, y, z: 0 * y, 1.0, {"shiny"})


def test_driver_from_spec():
    assert driver_from_spec({"name": "scaled_abs_z", "params": {"mu": 2.0}})(0.0, 1.0) == 2.0
    with pytest.raises(ParameterError):
        driver_from_spec({"params": {}})


@pytest.mark.parametrize("name", [n for n in BUILTIN_DRIVERS])
def test_normalized_flag_holds_on_grid(name):
    d = builtin_driver(name)
    if d.has("normalized_at_origin"):
        for step in range(5):
            assert d.evaluate(step, 0, 0.0, 0.0) == 0.0


@pytest.mark.parametrize("name", STAR_SHAPED)
def test_star_shaped_drivers_pass_check(name):
    rep = check_driver_property(builtin_driver(name), "star_shaped", grid=np.linspace(-2, 2, 9))
    assert rep.holds, rep


def test_example1_star_shaped_at_spec_lambdas():
    rep = check_driver_property(builtin_driver("example1"), "star_shaped", lambdas=[0.25, 0.5, 0.75])
    assert rep.holds


def test_pos_hom_check_is_exact_for_mu_abs_z():
    rep = check_driver_property(builtin_driver("scaled_abs_z", mu=0.5), "pos_hom")
    assert rep.holds and rep.worst_violation == 0.0


def test_convex_shifted_abs_is_star_shaped():
    # |y - 1| - 1 is convex with g(0) = 0, hence star-shaped: g(1) = -1 <= 0.5 g(2)
    d = Driver(lambda s, n, y, z: np.abs(y - 1.0) - 1.0, 1.0, (), "shifted_abs")
    assert check_driver_property(d, "star_shaped").holds


def test_concave_tent_is_not_star_shaped():
    d = Driver(lambda s, n, y, z: 1.0 - np.abs(y - 1.0), 1.0, (), "tent")
    rep = check_driver_property(d, "star_shaped", grid=([2.0], [0.0]), lambdas=[0.5])
    assert not rep.holds
    assert rep.witness["lambda"] == 0.5 and rep.witness["y"] == 2.0
    assert rep.worst_violation == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["scaled_abs_z", "l1", "example1", "example2", "linear_y"])
def test_declared_lipschitz_constant_holds(name):
    d = builtin_driver(name)
    assert check_driver_property(d, "lipschitz", grid=np.linspace(-3, 3, 13)).holds


def test_lipschitz_check_detects_violation():
    d = Driver(lambda s, n, y, z: 3.0 * z, 1.0)
    assert not check_driver_property(d, ("lipschitz", 1.0)).holds


def test_segment_driver_examples():
    d = builtin_driver("scaled_abs_z", mu=0.5)
    seg = segment_driver(d, 0.0, 2.0)
    assert seg(0.0, 1.0) == pytest.approx(0.5)
    assert seg(0.0, 2.0) == pytest.approx(d(0.0, 2.0))
    assert seg(0.5, 1.0) == math.inf
    assert seg(0.0, 3.0) == math.inf


@pytest.mark.parametrize("name", ["scaled_abs_z", "example1", "example2"])
def test_envelope_at_origin_anchor(name):
    d = builtin_driver(name)
    k = d.lipschitz_k
    env = ph_envelope(d, ControlPath.constant(3, 0.0, 0.0))
    ys = np.linspace(-2, 2, 7)
    Y, Z = np.meshgrid(ys, ys)
    # y-independent bases keep a y-independent envelope
    ynorm = 0.0 if d.has("y_independent") else np.abs(Y)
    np.testing.assert_allclose(env.evaluate(0, 0, Y, Z), k * (ynorm + np.abs(Z)) + d.evaluate(0, 0, 0.0, 0.0),
                               atol=1e-9)


@pytest.mark.parametrize("name", ["scaled_abs_z", "example1", "example2", "example3_restricted"])
@given(b=finite, m=finite)
def test_envelope_majorizes_and_touches(name, b, m):
    d = builtin_driver(name)
    env = ph_envelope(d, ControlPath.constant(2, b, m))
    ys = np.linspace(-3, 3, 7)
    Y, Z = np.meshgrid(ys, ys)
    ev = env.evaluate(0, 0, Y, Z)
    assert np.all(ev >= d.evaluate(0, 0, Y, Z) - 1e-9)
    assert float(env.evaluate(0, 0, b, m)) == pytest.approx(float(d.evaluate(0, 0, b, m)), abs=1e-9)
    assert check_driver_property(env, ("lipschitz", d.lipschitz_k), grid=np.linspace(-2, 2, 5), tol=1e-9).holds


def test_monotone_relaxation_examples():
    d = Driver(lambda s, n, y, z: np.abs(y), 1.0, {"convex"}, "abs_y")
    rel = monotone_relaxation(d)
    ys = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(rel.evaluate(0, 0, ys, 0.0), np.where(ys >= 0, 0.0, -ys), atol=1e-8)
    dec = builtin_driver("linear_y", a=-1.0)
    np.testing.assert_allclose(monotone_relaxation(dec).evaluate(0, 0, ys, 0.0), dec.evaluate(0, 0, ys, 0.0),
                               atol=1e-8)


def test_pointwise_min_family():
    big = builtin_driver("l1", k=1.0)
    small = builtin_driver("scaled_abs_z", mu=0.5)
    m = pointwise_min_driver([big, small])
    zs = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(m.evaluate(0, 0, 0.0, zs), 0.5 * np.abs(zs))
    assert pointwise_min_driver([small]).evaluate(0, 0, 1.0, 2.0) == small.evaluate(0, 0, 1.0, 2.0)
    assert check_driver_property(m, "star_shaped").holds
