import numpy as np
import pytest
from hypothesis import given, strategies as st

from collision_chords.specseq import (
    ComplexError, FilteredComplex, Generator, SpectralSequence, WindowOverlapError, build_windows, check_page,
    e1_page, export_pages, gf2_rank, local_window_cohomology, random_filtered_complex, run_to_einfty,
)
from collision_chords.tables import read_table

TWO = "gen x 0 1.0\ngen y 1 0.0\nd x y\n"


def two_generator():
    return FilteredComplex.from_text(TWO)


def test_windows():
    assert build_windows([0, 1], [0.5, 0.5]) == [-0.25, 0.25, 0.75, 1.25]
    assert build_windows([0], [1]) == [-0.5, 0.5]
    with pytest.raises(WindowOverlapError) as err:
        build_windows([0, 0.4], [0.5, 0.5])
    assert err.value.pair == (0, 1)


def test_two_generator_e1():
    page = e1_page(two_generator(), build_windows([0, 1], [0.5, 0.5]))
    assert page.column(0) == {1: 1}
    assert page.column(2) == {0: 1}
    assert not any(page.column(1).values())


def test_two_generator_einfty_vanishes():
    run = run_to_einfty(two_generator(), build_windows([0, 1], [0.5, 0.5]))
    assert not any(run.e_infinity.dims.values())
    assert not any(run.cohomology.values()) and run.agrees


def test_zero_differential_degenerates():
    cx = FilteredComplex([Generator("a", 0, 0.0), Generator("b", 1, 0.05), Generator("c", 2, 1.0)])
    run = run_to_einfty(cx, build_windows([0, 1], [0.5, 0.5]))
    assert len(run.pages) == 1
    assert run.pages[0].column(0) == {0: 1, 1: 1} and run.pages[0].column(2) == {2: 1}


def test_pair_in_one_window_cancels():
    cx = FilteredComplex([Generator("a", 0, 0.1), Generator("b", 1, 0.0)], [("a", "b")])
    assert not any(e1_page(cx, build_windows([0], [0.5])).column(0).values())


def test_morse_disc_euler_characteristic():
    gens = [Generator("m1", 0, 3.0), Generator("m2", 0, 3.0), Generator("s1", 1, 2.0),
            Generator("s2", 1, 2.0), Generator("M", 2, 1.0)]
    d = [("m1", "s1"), ("m1", "s2"), ("m2", "s1"), ("m2", "s2"), ("s1", "M"), ("s2", "M")]
    cx = FilteredComplex(gens, d)
    windows = build_windows([2.0], [3.0])
    col = local_window_cohomology(cx, windows, 0)
    assert sum((-1) ** k * v for k, v in col.items()) == 1
    assert cx.cohomology() == {0: 1, 1: 0, 2: 0}


def test_empty_window_is_zero():
    cx = two_generator()
    windows = build_windows([0, 1, 5], [0.5, 0.5, 0.5])
    assert not any(local_window_cohomology(cx, windows, 2).values())
    with pytest.raises(IndexError):
        local_window_cohomology(cx, windows, 3)


def test_direct_sum_is_additive():
    a = two_generator()
    b = FilteredComplex([Generator("z", 2, 0.0)])
    windows = build_windows([0, 1], [0.5, 0.5])
    ea, eb = e1_page(a, windows), e1_page(b, windows)
    es = e1_page(a.direct_sum(b), windows)
    for key in set(ea.dims) | set(eb.dims) | set(es.dims):
        assert es.dims.get(key, 0) == ea.dims.get(key, 0) + eb.dims.get(key, 0)


def test_validation():
    with pytest.raises(ComplexError):
        FilteredComplex([Generator("a", 0, 0.0), Generator("b", 1, 1.0)], [("a", "b")])
    with pytest.raises(ComplexError):
        FilteredComplex([Generator("a", 0, 1.0), Generator("b", 2, 0.0)], [("a", "b")])
    with pytest.raises(ComplexError):
        FilteredComplex([Generator("a", 0, 2.0), Generator("b", 1, 1.0), Generator("c", 2, 0.0)],
                        [("a", "b"), ("b", "c")])


def test_text_round_trip(tmp_path):
    cx = two_generator()
    cx.write(tmp_path / "cx.txt")
    back = FilteredComplex.read(tmp_path / "cx.txt")
    assert back.to_text() == cx.to_text()


def test_gf2_rank():
    assert gf2_rank([0b011, 0b110, 0b101]) == 2
    assert gf2_rank([]) == 0


@given(st.integers(0, 2 ** 32 - 1))
def test_random_complexes_converge_to_cohomology(seed):
    rng = np.random.default_rng(seed)
    cx, windows = random_filtered_complex(rng, max_generators=20)
    run = run_to_einfty(cx, windows)
    assert run.agrees
    e1 = run.pages[0]
    assert all(v == 0 for (p, _), v in e1.dims.items() if p % 2)
    ss = SpectralSequence(cx, windows)
    for r in range(1, len(run.pages)):
        check_page(ss.page(r), ss.page(r + 1))


def test_pages_table_round_trip(tmp_path):
    run = run_to_einfty(two_generator(), build_windows([0, 1], [0.5, 0.5]))
    export_pages(tmp_path / "p.csv", run.pages)
    header, rows = read_table(tmp_path / "p.csv")
    assert header == ["r", "p", "q", "dim"]
    assert {(int(r["p"]), int(r["q"])) for r in rows if r["r"] == "1" and int(r["dim"])} == {(0, 1), (2, -2)}
