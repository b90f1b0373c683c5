import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from collision_chords.liouville_toy import (
    RadialHamiltonian, action_estimate_constants, chord_set_equality, collar_action, collar_action_quadrature,
    export_toy_table, random_convex_profile, toy_chords,
)
from collision_chords.tables import read_table

QUAD = RadialHamiltonian.power_profile(beta=math.pi / 2, power=2.0)


def test_quadratic_profile_chords():
    chords = toy_chords(QUAD, r_max=3.0)
    assert chords[0].radius == 0.0 and chords[0].k == 0
    rest = chords[1:]
    assert [c.k for c in rest] == list(range(1, 7))
    assert np.allclose([c.radius for c in rest], [k / 2 for k in range(1, 7)], atol=1e-12)


def test_linear_slope_off_lattice_has_no_collar_chords():
    h = RadialHamiltonian.power_profile(b=0.3, alpha=1.0)
    assert [c.k for c in toy_chords(h, r_max=5.0)] == [0]


def test_constant_profile():
    chords = toy_chords(RadialHamiltonian.power_profile(b=0.7))
    assert len(chords) == 1 and chords[0].action == 0.7 and chords[0].family == (0.0, math.inf)


def test_actions():
    assert collar_action(QUAD, 1.0) == pytest.approx(-math.pi / 2)
    lin = RadialHamiltonian.power_profile(b=0.4, alpha=2.0)
    assert collar_action(lin, 3.7) == pytest.approx(0.4)
    assert collar_action(RadialHamiltonian.power_profile(b=-1.1), 2.0) == pytest.approx(-1.1)


def test_quadrature_matches_formula():
    for c in toy_chords(QUAD, r_max=2.5)[1:]:
        assert collar_action_quadrature(QUAD, c.radius) == pytest.approx(c.action, abs=1e-10)


def test_chop_example():
    rep = chord_set_equality(QUAD, 2.25)
    assert rep.equal
    assert [c.k for c in rep.full] == [0, 1, 2, 3, 4]
    assert np.allclose([c.action for c in rep.full], [0] + [-math.pi * k * k / 8 for k in range(1, 5)])


def test_chop_below_first_chord():
    rep = chord_set_equality(QUAD, 0.3)
    assert rep.equal and [c.k for c in rep.full] == [0]


def test_chopped_profile_is_c1():
    h = QUAD.chopped(2.0)
    assert h.h(2.0 + 1e-12) == pytest.approx(h.h(2.0)) and h.dh(3.0) == pytest.approx(QUAD.dh(2.0))


def test_exponent_validation():
    with pytest.raises(ValueError):
        RadialHamiltonian(((1.0, 0.5),))


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.3, 3.0))
def test_chop_equality_random(seed, radius):
    h = random_convex_profile(np.random.default_rng(seed))
    assert chord_set_equality(h, radius).equal


def test_action_estimate_constant_is_stable():
    consts = action_estimate_constants(QUAD, [1e-2, 1e-3, 1e-4])
    assert all(c > 0 for c in consts)
    assert consts[-1] == pytest.approx(consts[-2], rel=0.05)


def test_toy_table_round_trip(tmp_path):
    chords = toy_chords(QUAD, r_max=2.0)
    export_toy_table(tmp_path / "t.csv", chords)
    header, rows = read_table(tmp_path / "t.csv")
    assert header == ["r", "k", "action", "location"]
    assert [float(r["action"]) for r in rows] == [c.action for c in chords]
