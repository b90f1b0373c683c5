import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from collision_chords.kepler_core import (
    NORTH_POLE, CartesianState, ConstraintError, PoleError, ProblemParams, SphereCotangentPoint,
    angular_momentum, f_factor, hamiltonian_unregularized, inverse_moser_map, kepler_energy, moser_map,
    point_on_level, q_gradient, q_hessian, q_value, random_states_on_level, regularized_hamiltonian,
)


def test_circular_orbit_values():
    s = CartesianState([1, 0, 0], [0, 1, 0])
    assert kepler_energy(s) == pytest.approx(-0.5)
    assert hamiltonian_unregularized(s, ProblemParams(-2.0)) == pytest.approx(0.5)


def test_resting_state():
    s = CartesianState([1, 0, 0], [0, 0, 0])
    assert hamiltonian_unregularized(s, ProblemParams(-2.0)) == pytest.approx(-1.0)


def test_restricted_three_body_potential():
    s = CartesianState([0, 0, 1], [0, 0, 0])
    h = hamiltonian_unregularized(s, ProblemParams(-2.0, mu=0.5))
    assert h == pytest.approx(-(0.5 + 0.5) / math.sqrt(1.25))


@pytest.mark.parametrize("xi, eta, expected", [
    ((1, 0, 0, 0), (0, 0.3, 0.4, 0.5), 0.0),
    ((0, 1, 0, 0), (0, 0, 1, 0), -1.0),
    ((0, 0, 1, 0), (0, 1, 0, 0), 1.0),
])
def test_angular_momentum(xi, eta, expected):
    assert angular_momentum(SphereCotangentPoint(xi, eta)) == pytest.approx(expected)


def test_q_at_pole():
    eta = np.array([0, 0.6, 0.0, 0.8])
    p = SphereCotangentPoint(NORTH_POLE, eta)
    assert f_factor(p.xi, p.eta, -2.0) == pytest.approx(1.0)
    assert regularized_hamiltonian(p, ProblemParams(-2.0)) == pytest.approx(0.5)
    assert regularized_hamiltonian(SphereCotangentPoint(NORTH_POLE, [0, 0, 0, 2]), ProblemParams(-2.0)) == \
        pytest.approx(2.0)


def test_constraint_violation_rejected():
    with pytest.raises(ConstraintError):
        SphereCotangentPoint([1, 0, 0, 0], [1, 0, 0, 0])


@pytest.mark.parametrize("c", [-2.0, -1.7, -3.0])
def test_level_maps_to_half(c, rng):
    params = ProblemParams(c)
    for s in random_states_on_level(rng, params, 50):
        assert hamiltonian_unregularized(s, params) == pytest.approx(c, abs=1e-12)
        assert regularized_hamiltonian(moser_map(s, params), params) == pytest.approx(0.5, abs=1e-9)


def test_round_trip(rng):
    params = ProblemParams(-2.0)
    for s in random_states_on_level(rng, params, 100):
        back = inverse_moser_map(moser_map(s, params), params)
        assert np.allclose(back.q, s.q, atol=1e-10) and np.allclose(back.p, s.p, atol=1e-10)


def test_infinite_momentum_goes_to_pole():
    params = ProblemParams(-2.0)
    dists = []
    for scale in (1e2, 1e4, 1e6):
        pt = moser_map(CartesianState([0.3, 0.1, 0.2], [scale, 0.5 * scale, 0.1]), params)
        dists.append(np.linalg.norm(pt.xi - NORTH_POLE))
    assert dists[0] > dists[1] > dists[2] and dists[2] < 1e-5


def test_pole_has_no_preimage():
    with pytest.raises(PoleError):
        inverse_moser_map(SphereCotangentPoint(NORTH_POLE, [0, 1, 0, 0]), ProblemParams(-2.0))


def test_mass_ratio_validation():
    with pytest.raises(ValueError):
        ProblemParams(-2.0, mu=1.5)
    with pytest.raises(ValueError):
        ProblemParams(-2.0, primary="moon")


unit = st.floats(-1, 1, allow_nan=False)


@given(st.tuples(unit, unit, unit, unit), st.tuples(unit, unit, unit, unit), st.floats(-3.0, -1.6))
def test_point_on_level_has_q_half(xi, e, c):
    xi, e = np.array(xi), np.array(e)
    if np.linalg.norm(xi) < 0.1 or np.linalg.norm(e - (e @ xi) * xi / (xi @ xi)) < 0.1:
        return
    try:
        pt = point_on_level(xi, e, c)
    except ValueError:
        return
    assert q_value(pt.as_array(), c) == pytest.approx(0.5, abs=1e-12)


def test_q_derivatives_match_finite_differences(rng):
    c = -2.0
    pt = point_on_level(rng.normal(size=4), rng.normal(size=4), c)
    z = pt.as_array()
    h = 1e-6
    fd = np.array([(q_value(z + h * e, c) - q_value(z - h * e, c)) / (2 * h) for e in np.eye(8)])
    assert np.allclose(q_gradient(z, c), fd, atol=1e-7)
    fd2 = np.array([(q_gradient(z + h * e, c) - q_gradient(z - h * e, c)) / (2 * h) for e in np.eye(8)])
    assert np.allclose(q_hessian(z, c), fd2, atol=1e-5)
