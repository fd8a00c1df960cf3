import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starrisk.errors import EvaluationError, ParameterError
from starrisk.lattice import (
    AdaptedProcess,
    TerminalClaim,
    build_lattice,
    call_claim,
    constant_claim,
    evaluate_claim,
    identity_claim,
    table_claim,
)


@pytest.mark.parametrize(
    "T, N, step, node, expected",
    [
        (1.0, 4, 4, 4, 2.0),
        (1.0, 4, 2, 2, 1.0),
        (1.0, 1, 1, 1, 1.0),
        (1.0, 1, 1, 0, -1.0),
        (0.5, 200, 200, 200, 10.0),
    ],
)
def test_w_value_examples(T, N, step, node, expected):
    lat = build_lattice(T, N)
    assert lat.w_value(step, node) == pytest.approx(expected, abs=1e-12)


def test_layer_sizes_and_delta():
    lat = build_lattice(0.5, 200)
    assert lat.delta == pytest.approx(0.0025)
    assert lat.node_count(4) == 5
    assert len(lat.w_values(200)) == 201


@pytest.mark.parametrize(
    "claim, expected",
    [
        (identity_claim(), [-2 * math.sqrt(0.5), 0.0, 2 * math.sqrt(0.5)]),
        (constant_claim(1.0), [1.0, 1.0, 1.0]),
        (call_claim(0.0), [0.0, 0.0, 2 * math.sqrt(0.5)]),
        (table_claim([3.0, 2.0, 1.0]), [3.0, 2.0, 1.0]),
    ],
)
def test_terminal_values(claim, expected):
    np.testing.assert_allclose(claim.values(build_lattice(1.0, 2)), expected, atol=1e-12)


@pytest.mark.parametrize("T, N", [(0.0, 4), (-1.0, 4), (math.inf, 4), (1.0, 0), (1.0, -3), (1.0, 2.5)])
def test_bad_lattice_parameters(T, N):
    with pytest.raises(ParameterError):
        build_lattice(T, N)


def test_out_of_range_indices():
    lat = build_lattice(1.0, 3)
    with pytest.raises(ParameterError):
        lat.w_value(4, 0)
    with pytest.raises(ParameterError):
        lat.w_value(2, 3)


def test_table_claim_length_mismatch():
    with pytest.raises(ParameterError):
        table_claim([1.0, 2.0]).values(build_lattice(1.0, 3))


def test_nonfinite_payoff_reports_node():
    claim = TerminalClaim(lambda w: np.where(w > 0, np.inf, 0.0), "blowup")
    with pytest.raises(EvaluationError) as exc:
        claim.values(build_lattice(1.0, 2))
    assert exc.value.node == 2


def test_adapted_process_shape_and_readonly():
    proc = AdaptedProcess([np.zeros(1), np.ones(2)])
    assert proc.steps == 1
    with pytest.raises(ValueError):
        proc.layer(1)[0] = 5.0
    with pytest.raises(ParameterError):
        AdaptedProcess([np.zeros(2)])


def test_evaluate_claim_fills_terminal_layer_only():
    lat = build_lattice(1.0, 3)
    proc = evaluate_claim(lat, identity_claim())
    assert np.all(np.isnan(proc.layer(0)))
    np.testing.assert_array_equal(proc.layer(3), lat.w_values(3))


@given(st.integers(1, 300), st.floats(0.01, 10.0))
def test_binomial_weights_are_a_distribution(N, T):
    lat = build_lattice(T, N)
    w = lat.binomial_weights(N)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    # the walk is a martingale with quadratic variation T
    assert float(w @ lat.w_values(N)) == pytest.approx(0.0, abs=1e-9 * math.sqrt(T) * N)
    assert float(w @ lat.w_values(N) ** 2) == pytest.approx(T, rel=1e-9)


@given(st.integers(1, 60), st.data())
def test_recombination(N, data):
    lat = build_lattice(1.0, N)
    k = data.draw(st.integers(0, N - 1))
    j = data.draw(st.integers(0, k))
    sq = lat.sqrt_delta
    assert lat.w_value(k + 1, j + 1) == pytest.approx(lat.w_value(k, j) + sq, abs=1e-12)
    assert lat.w_value(k + 1, j) == pytest.approx(lat.w_value(k, j) - sq, abs=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_claim_arithmetic(a, c):
    lat = build_lattice(1.0, 5)
    X = identity_claim()
    lhs = (X.scaled(a).shifted(c) + X - X).values(lat)
    np.testing.assert_allclose(lhs, a * lat.w_values(5) + c, atol=1e-12)
