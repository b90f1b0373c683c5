import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from collision_chords.flow import integrate
from collision_chords.indices import (
    INDEX_TABLE_HEADER, InsufficientDataError, SymplecticPath, definiteness_fit, export_index_table,
    finite_difference_monodromy, index_report, linear_system_path, linearize_along, mean_index,
    path_from_generator_blocks, random_symplectic, rotation_block, rs_index, standard_j, symplectic_defect,
)
from collision_chords.kepler_core import ProblemParams
from collision_chords.openbook import random_page_points
from collision_chords.tables import read_table


def rotation_loop(omega=2 * math.pi, t1=1.0):
    return path_from_generator_blocks([omega], t1=t1)


def test_rotation_loop_index():
    assert rs_index(rotation_loop()) == 2


def test_rotation_loop_mean_index_iterates():
    loop = rotation_loop()
    for k in (1, 2, 5, 20):
        assert mean_index(loop, k) == pytest.approx(2 * k, abs=1e-9)


def test_identity_path_has_zero_index():
    p = SymplecticPath(lambda t: np.eye(2), 0.0, 1.0, lambda t: np.zeros((2, 2)))
    assert rs_index(p) == 0


@pytest.mark.parametrize("omega, expected", [(0.5, 1), (1.3 * math.pi, 1), (2.6 * math.pi, 3), (-7.0, -3)])
def test_rotation_counts(omega, expected):
    assert rs_index(rotation_loop(omega)) == expected


def test_half_integer_values_in_lagrangian_mode():
    mu = rs_index(rotation_loop(1.3 * math.pi), mode="lagrangian")
    assert isinstance(mu, Fraction)
    assert index_report(rotation_loop(1.3 * math.pi), "lagrangian").mu_cz == mu - Fraction(1, 2)


def test_concatenation_of_rotations():
    a = rotation_loop(1.3 * math.pi)
    assert rs_index(a.concatenate(a)) == rs_index(rotation_loop(2.6 * math.pi))


def test_naturality_under_loops():
    path = rotation_loop(1.3 * math.pi)

    def loop(t):
        return rotation_block(6 * math.pi * t)

    def loop_gen(t):
        return 6 * math.pi * np.eye(2)

    shifted = path.reframe(loop, loop_gen)
    assert rs_index(shifted) - rs_index(path) == 6


def test_harmonic_oscillator_matches_rotation():
    a = standard_j(1) @ (2.0 * np.eye(2))
    path = linear_system_path(a, 3.0)
    assert np.allclose(path.matrix(0.0), np.eye(2), atol=1e-14)
    for t in (0.7, 1.9, 3.0):
        assert np.allclose(path.matrix(t), rotation_block(2.0 * t), atol=1e-8)


def test_mean_index_bounds_cz_on_random_paths(rng):
    for _ in range(15):
        n = int(rng.integers(1, 4))
        omegas = list(rng.uniform(0.3, 15.0, size=n))
        path = path_from_generator_blocks(omegas, conj=random_symplectic(rng, n))
        assert path.symplectic_drift() < 1e-9
        rep = index_report(path)
        assert abs(rep.delta - float(rep.mu_cz)) <= n + 1e-9


@given(st.lists(st.floats(0.2, 20.0), min_size=1, max_size=3))
def test_index_invariant_under_conjugation(omegas):
    omegas = [w for w in omegas if abs(w / (2 * math.pi) - round(w / (2 * math.pi))) > 1e-2]
    if not omegas:
        return
    rng = np.random.default_rng(len(omegas))
    plain = path_from_generator_blocks(omegas)
    conj = path_from_generator_blocks(omegas, conj=random_symplectic(rng, len(omegas)))
    assert rs_index(plain) == rs_index(conj)


def test_random_symplectic_is_symplectic(rng):
    assert symplectic_defect(random_symplectic(rng, 3)) < 1e-10


def test_linearized_kepler_flow_matches_finite_differences(rng):
    params = ProblemParams(-2.0)
    x = random_page_points(rng, -2.0, 1)[0]
    traj = integrate(x.point, params, duration=2.0)
    path = linearize_along(traj)
    assert path.symplectic_drift() < 1e-8
    assert np.max(np.abs(path.matrix(2.0) - finite_difference_monodromy(traj))) < 1e-4


def test_fit_on_exact_data():
    t = np.linspace(1, 50, 20)
    fit = definiteness_fit(t, 2 * t)
    assert fit.slope == pytest.approx(2.0) and fit.offset == pytest.approx(0.0, abs=1e-12)
    assert fit.certified
    assert any("certified: yes" in line for line in fit.report_lines())


def test_fit_on_flat_data():
    t = np.linspace(1, 50, 20)
    fit = definiteness_fit(t, [1 + (i % 2) for i in range(20)])
    assert abs(fit.slope) < 0.05 and not fit.certified


def test_fit_needs_enough_arcs():
    with pytest.raises(InsufficientDataError):
        definiteness_fit([1, 2, 3], [1, 2, 3])


def test_index_table_round_trip(tmp_path):
    reps = [index_report(rotation_loop(w)) for w in (0.5, 7.0)]
    export_index_table(tmp_path / "i.csv", reps)
    header, rows = read_table(tmp_path / "i.csv")
    assert header == INDEX_TABLE_HEADER
    assert [Fraction(r["mu_rs"]) for r in rows] == [r.mu_rs for r in reps]
