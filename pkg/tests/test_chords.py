import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from collision_chords.chords import (
    CollisionDiskPoint, chord_search, closed_form_orbit, collision_disk_projection, collision_locus_lift,
    concentric_grid, export_chord_table, first_return_index, lift_page_point, mixed_chords, resonance_solve,
    rotation_number, signed_angle, subchord_orders,
)
from collision_chords.kepler_core import ProblemParams, regularized_hamiltonian
from collision_chords.tables import read_table


def test_lift_of_origin_is_polar_collision_orbit():
    p = collision_locus_lift((0.0, 0.0))
    assert np.array_equal(p.eta, [0, 0, 0, 1]) and np.array_equal(p.xi, [1, 0, 0, 0])


def test_boundary_lifts_to_planar_locus():
    for a in np.linspace(0, 2 * math.pi, 7):
        assert collision_locus_lift((math.cos(a), math.sin(a))).eta[3] == 0.0


def test_disc_bounds():
    with pytest.raises(ValueError):
        CollisionDiskPoint((0.9, 0.9))


@given(st.floats(0, 1), st.floats(0, 2 * math.pi), st.floats(-3, -1.6))
def test_lift_projection_inverse(r, a, c):
    u = (r * math.cos(a), r * math.sin(a))
    p = collision_locus_lift(u)
    assert np.allclose(collision_disk_projection(p).u, u, atol=1e-15)
    assert regularized_hamiltonian(p, ProblemParams(c)) == pytest.approx(0.5)


def test_resonance_inversion():
    r = resonance_solve(1, 8, "printed")
    assert r.c == pytest.approx(-2 ** (2 / 3)) and r.valid
    r = resonance_solve(1, 7, "printed")
    assert r.c == pytest.approx(-1.4522, abs=1e-4) and not r.valid
    assert resonance_solve(1, 8).c == pytest.approx(-2.0)
    assert resonance_solve(1, 7).valid
    with pytest.raises(ValueError):
        resonance_solve(2, 8)


def test_rotation_number():
    assert rotation_number(-2.0) == pytest.approx(1 / 8)
    assert rotation_number(-2 ** (2 / 3), "printed") == pytest.approx(1 / 8)


def test_concentric_grid():
    pts = concentric_grid(3, 5)
    assert len(pts) == 16 and pts[0] == (0.0, 0.0)
    assert math.hypot(*pts[-1]) == pytest.approx(1.0)


def test_signed_angle():
    assert signed_angle((1, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert signed_angle((0, 0), (0, 1)) == 0.0


def test_resonant_search_closed_form():
    res = chord_search(ProblemParams(-2.0), "closed_form", 8, (4, 8), with_action=False)
    by = res.by_start()
    assert by[(0.0, 0.0)][0].period == 1
    for u, recs in by.items():
        if u != (0.0, 0.0):
            # C is invariant, so every iterate is a chord; the orbit closes at 8
            assert [r.order for r in recs] == list(range(1, 9))
            assert {r.period for r in recs} == {8} and recs[0].minimal_order == 1
    assert not mixed_chords(res.records)


def test_printed_law_resonance():
    res = chord_search(ProblemParams(-2 ** (2 / 3)), "closed_form", 16, (3, 6), law="printed", with_action=False)
    assert {r.period for r in res.records if r.start.radius > 0} == {8}


def test_nonresonant_has_no_returns():
    res = chord_search(ProblemParams(-1.7), "closed_form", 8, (3, 6), with_action=False)
    assert all(r.period is None for r in res.records if r.start.radius > 0)
    assert len(res.records) == 8 * 19


def test_closed_form_and_numeric_actions_agree():
    params = ProblemParams(-2.0)
    grid = [(0.0, 0.0), (0.5, 0.0), (0.0, -0.7)]
    cf = chord_search(params, "closed_form", 8, grid)
    nu = chord_search(params, "numeric", 8, grid)
    assert not nu.skipped
    a = sorted((r.start.u, r.order, r.period) for r in cf.records)
    b = sorted((r.start.u, r.order, r.period) for r in nu.records)
    assert a == b
    for r1, r2 in zip(sorted(cf.records, key=lambda r: (r.start.u, r.order)),
                      sorted(nu.records, key=lambda r: (r.start.u, r.order))):
        assert r1.action == pytest.approx(r2.action, abs=1e-8)


def test_first_return_action_at_resonance():
    res = chord_search(ProblemParams(-2.0), "closed_form", 8, [(0.3, 0.4)])
    actions = [r.action for r in res.records]
    assert np.allclose(actions, -math.pi / 2 * np.arange(1, 9), atol=1e-7)
    assert res.records[0].angle_measured == pytest.approx(math.pi / 4)


@given(st.floats(0.05, 1), st.floats(0, 2 * math.pi), st.floats(-3, -1.55))
def test_closed_form_orbit_preserves_radius(r, a, c):
    x = lift_page_point((r * math.cos(a), r * math.sin(a)), c).as_array()
    orbit = closed_form_orbit(x[None], c, 5)
    radii = np.hypot(orbit[:, 0, 5], orbit[:, 0, 6])
    assert np.allclose(radii, r, atol=1e-13)


def test_subchords_sum_to_period():
    x = lift_page_point((0.3, 0.1), -2.0).as_array()
    orbit = closed_form_orbit(x[None], -2.0, 16)[:, 0, :]
    period = int(first_return_index(orbit[:, None, :], 1e-6)[0])
    orders = subchord_orders(orbit, period)
    assert period == 8 and orders == [1] * 8


def test_chord_table_round_trip(tmp_path):
    res = chord_search(ProblemParams(-2.0), "closed_form", 8, (2, 4), with_action=False)
    export_chord_table(tmp_path / "c.csv", res.records)
    header, rows = read_table(tmp_path / "c.csv")
    assert header[:3] == ["u1", "u2", "m"] and len(rows) == len(res.records)
    assert [float(r["u1"]) for r in rows] == [r.start.u[0] for r in res.records]
