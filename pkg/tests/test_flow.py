import math

import numpy as np
import pytest

from collision_chords.chords import lift_page_point
from collision_chords.flow import (
    BindingError, HorizonExceeded, IntegratorConfig, field_array, field_jacobian, first_crossing, integrate,
)
from collision_chords.kepler_core import ProblemParams, point_on_level
from collision_chords.openbook import PAGE_ANGLE, first_return, random_page_points
from collision_chords.tables import read_table

PARAMS = ProblemParams(-2.0)


def test_zero_duration():
    x = lift_page_point((0.3, 0.2), -2.0)
    traj = integrate(x.point, PARAMS, duration=0.0)
    assert len(traj) == 1 and traj.times[0] == 0.0
    assert np.array_equal(traj.states[0], x.as_array())


def test_polar_collision_orbit_closes_after_one_period():
    x = lift_page_point((0.0, 0.0), -2.0)
    rec = first_return(x, PARAMS)
    traj = integrate(x.point, PARAMS, duration=rec.time)
    assert np.max(np.abs(traj.states[-1][:8] - x.as_array())) < 1e-7


def test_invariants_conserved(rng):
    x = random_page_points(rng, -2.0, 1)[0]
    traj = integrate(x.point, PARAMS, duration=20.0)
    assert traj.energy_drift() < 1e-10
    assert traj.constraint_drift() < 1e-12


def test_angular_momentum_conserved(rng):
    x = random_page_points(rng, -1.7, 1)[0]
    traj = integrate(x.point, ProblemParams(-1.7), duration=10.0)
    ls = traj.l_values()
    assert np.ptp(ls) < 1e-10


def test_reverse_flow_retraces(rng):
    x = random_page_points(rng, -2.0, 1)[0]
    fwd = integrate(x.point, PARAMS, duration=3.0)
    back = integrate(fwd.states[-1][:8], PARAMS, duration=3.0, reverse=True)
    assert np.max(np.abs(back.states[-1][:8] - x.as_array())) < 1e-9


def test_jacobian_matches_finite_differences(rng):
    z = point_on_level(rng.normal(size=4), rng.normal(size=4), -2.0).as_array()
    h = 1e-6
    fd = np.array([(field_array(z + h * e, -2.0) - field_array(z - h * e, -2.0)) / (2 * h) for e in np.eye(8)]).T
    assert np.allclose(field_jacobian(z, -2.0), fd, atol=1e-6)


def test_first_crossing_positive_time(rng):
    x = random_page_points(rng, -2.0, 1)[0]
    cr, _ = first_crossing(x.as_array(), PARAMS, PAGE_ANGLE)
    assert cr.t > 0


def test_planar_seed_raises_binding_error():
    planar = point_on_level([0.6, 0.8, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], -2.0)
    with pytest.raises(BindingError):
        first_crossing(planar.as_array(), PARAMS, PAGE_ANGLE)


def test_horizon(rng):
    x = random_page_points(rng, -2.0, 1)[0]
    with pytest.raises(HorizonExceeded):
        first_crossing(x.as_array(), PARAMS, PAGE_ANGLE, IntegratorConfig(max_time=0.05))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(tol_rel=0.0)
    with pytest.raises(ValueError):
        integrate(lift_page_point((0, 0), -2.0).point, PARAMS, duration=-1.0)


def test_trajectory_export_round_trip(tmp_path, rng):
    x = random_page_points(rng, -2.0, 1)[0]
    traj = integrate(x.point, PARAMS, duration=1.0)
    traj.export(tmp_path / "t.csv")
    header, rows = read_table(tmp_path / "t.csv")
    assert header[0] == "t" and len(rows) == len(traj)
    assert np.array_equal([float(r["t"]) for r in rows], traj.times)
    assert math.isclose(float(rows[-1]["eta3"]), traj.states[-1][7], rel_tol=0, abs_tol=0)
