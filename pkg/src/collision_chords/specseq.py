"""Spectral sequence of a finite action-filtered cochain complex over Z/2.

The differential raises degree by one and strictly decreases action, so
``F_p = span{generators in columns <= p}`` is an increasing filtration by
subcomplexes.  Column ``p`` holds the generators with ``a_p < A <= a_{p+1}``; with
windows built around critical values, column ``2k`` is the window of ``A_k`` and
odd columns fall between windows.  ``E_1^p = H(F_p / F_{p-1})`` and ``d_r`` maps
column ``p`` to column ``p - r`` and degree ``q`` to ``q + 1``.

Vectors are Python ints used as bitsets over generator indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tables import write_table


class ComplexError(ValueError):
    pass


class WindowOverlapError(ValueError):
    def __init__(self, i: int, j: int, message: str):
        super().__init__(message)
        self.pair = (i, j)


# --- GF(2) linear algebra on bitsets ---

def _bits(v: int):
    while v:
        low = v & -v
        yield low.bit_length() - 1
        v ^= low


class _Echelon:
    """Row-echelon basis keyed by leading bit, optionally tracking a tag bitset per row."""

    def __init__(self):
        self.rows: dict[int, tuple[int, int]] = {}

    def reduce(self, v: int, tag: int = 0) -> tuple[int, int]:
        while v:
            lead = v.bit_length() - 1
            row = self.rows.get(lead)
            if row is None:
                break
            v ^= row[0]
            tag ^= row[1]
        return v, tag

    def add(self, v: int, tag: int = 0) -> bool:
        v, tag = self.reduce(v, tag)
        if not v:
            return False
        self.rows[v.bit_length() - 1] = (v, tag)
        return True

    def __len__(self):
        return len(self.rows)


def gf2_rank(vectors: Iterable[int]) -> int:
    ech = _Echelon()
    for v in vectors:
        ech.add(v)
    return len(ech)


def _kernel(domain: Sequence[int], apply) -> list[int]:
    """Basis of the kernel of ``apply`` on the span of the independent vectors ``domain``."""
    ech = _Echelon()
    out = []
    for x in domain:
        img, combo = ech.reduce(apply(x), x)
        if img == 0:
            out.append(combo)
        else:
            ech.rows[img.bit_length() - 1] = (img, combo)
    return out


# --- complexes ---

@dataclass(frozen=True)
class Generator:
    id: str
    degree: int
    action: float


@dataclass
class FilteredComplex:
    """Finite Z/2 complex: generators ``(id, degree, action)`` and differential pairs ``(from, to)``."""

    generators: list[Generator]
    differential: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.index = {g.id: i for i, g in enumerate(self.generators)}
        if len(self.index) != len(self.generators):
            raise ComplexError("generator ids must be unique")
        self.images = [0] * len(self.generators)
        for a, b in self.differential:
            if a not in self.index or b not in self.index:
                raise ComplexError(f"differential entry ({a}, {b}) names an unknown generator")
            i, j = self.index[a], self.index[b]
            ga, gb = self.generators[i], self.generators[j]
            if gb.degree != ga.degree + 1:
                raise ComplexError(f"d({a}) -> {b} does not raise degree by one")
            if not gb.action < ga.action:
                raise ComplexError(f"d({a}) -> {b} does not decrease action")
            self.images[i] ^= 1 << j
        for i in range(len(self.generators)):
            if self.d(self.images[i]):
                raise ComplexError(f"d^2 != 0 on {self.generators[i].id}")

    def __len__(self):
        return len(self.generators)

    def d(self, v: int) -> int:
        out = 0
        for i in _bits(v):
            out ^= self.images[i]
        return out

    @property
    def degrees(self) -> list[int]:
        return sorted({g.degree for g in self.generators})

    def degree_mask(self, k: int) -> int:
        return sum(1 << i for i, g in enumerate(self.generators) if g.degree == k)

    def cohomology(self) -> dict[int, int]:
        """``dim H^k = n_k - rank d_k - rank d_{k-1}`` by Gaussian elimination."""
        rank = {}
        for k in self.degrees:
            rank[k] = gf2_rank(self.images[i] for i in _bits(self.degree_mask(k)))
        out = {}
        for k in self.degrees:
            n_k = bin(self.degree_mask(k)).count("1")
            out[k] = n_k - rank[k] - rank.get(k - 1, 0)
        return out

    def restrict_actions(self, floor: float) -> "FilteredComplex":
        """Quotient complex spanned by generators with ``A >= floor``."""
        keep = {g.id for g in self.generators if g.action >= floor}
        return FilteredComplex([g for g in self.generators if g.id in keep],
                               [(a, b) for a, b in self.differential if a in keep and b in keep])

    def direct_sum(self, other: "FilteredComplex", prefixes=("a:", "b:")) -> "FilteredComplex":
        pa, pb = prefixes
        gens = [Generator(pa + g.id, g.degree, g.action) for g in self.generators]
        gens += [Generator(pb + g.id, g.degree, g.action) for g in other.generators]
        diff = [(pa + a, pa + b) for a, b in self.differential]
        diff += [(pb + a, pb + b) for a, b in other.differential]
        return FilteredComplex(gens, diff)

    # text records
    def to_text(self) -> str:
        lines = [f"gen {g.id} {g.degree} {g.action!r}" for g in self.generators]
        lines += [f"d {a} {b}" for a, b in self.differential]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FilteredComplex":
        gens, diff = [], []
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "gen" and len(parts) == 4:
                gens.append(Generator(parts[1], int(parts[2]), float(parts[3])))
            elif parts[0] == "d" and len(parts) == 3:
                diff.append((parts[1], parts[2]))
            else:
                raise ComplexError(f"line {n}: cannot parse {raw!r}")
        return cls(gens, diff)

    @classmethod
    def read(cls, path) -> "FilteredComplex":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def write(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")


def build_windows(actions: Sequence[float], half_widths: Sequence[float]) -> list[float]:
    """``a_{2k} = A_k - eps_k/2`` and ``a_{2k+1} = A_k + eps_k/2`` for sorted, disjoint windows."""
    if len(actions) != len(half_widths):
        raise ValueError("one half-width per action is required")
    order = sorted(range(len(actions)), key=lambda i: actions[i])
    out: list[float] = []
    for pos, i in enumerate(order):
        if half_widths[i] <= 0:
            raise ValueError("window widths must be positive")
        lo, hi = actions[i] - 0.5 * half_widths[i], actions[i] + 0.5 * half_widths[i]
        if out and lo <= out[-1]:
            j = order[pos - 1]
            raise WindowOverlapError(j, i, f"windows around A={actions[j]} and A={actions[i]} overlap")
        out += [lo, hi]
    return out


# --- pages ---

@dataclass
class SpectralPage:
    """``E_r^{p,q}`` keyed by ``(p, degree)``, with class representatives and ``d_r`` matrices.

    ``d_r`` sends ``(p, deg)`` to ``(p - r, deg + 1)``; matrices are lists of column
    bitsets over the target representatives.  The Serre bidegree is ``(p, deg - p)``.
    """

    r: int
    dims: dict[tuple[int, int], int]
    reps: dict[tuple[int, int], list[int]] = field(repr=False, default_factory=dict)
    differentials: dict[tuple[int, int], list[int]] = field(repr=False, default_factory=dict)

    def dim(self, p: int, deg: int) -> int:
        return self.dims.get((p, deg), 0)

    def column(self, p: int) -> dict[int, int]:
        return {deg: d for (q, deg), d in sorted(self.dims.items()) if q == p and d}

    def total_by_degree(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for (_, deg), d in self.dims.items():
            if d:
                out[deg] = out.get(deg, 0) + d
        return dict(sorted(out.items()))

    def euler_characteristic(self) -> int:
        return sum((-1) ** (deg % 2) * d for (_, deg), d in self.dims.items())

    def is_zero_differential(self) -> bool:
        return all(not any(cols) for cols in self.differentials.values())

    def rows(self):
        for (p, deg), d in sorted(self.dims.items()):
            yield [self.r, p, deg - p, d]


class SpectralSequence:
    """Constructive pages of the filtration by action columns."""

    def __init__(self, cx: FilteredComplex, windows: Sequence[float]):
        self.cx = cx
        self.windows = list(windows)
        if len(self.windows) < 2 or any(b <= a for a, b in zip(self.windows, self.windows[1:])):
            raise ValueError("window boundaries must be strictly increasing")
        self.n_columns = len(self.windows) - 1
        self.columns = [self.column_of(g.action) for g in cx.generators]
        self._le = [0] * self.n_columns
        for i, p in enumerate(self.columns):
            for q in range(p, self.n_columns):
                self._le[q] |= 1 << i
        self._deg = {k: cx.degree_mask(k) for k in cx.degrees}
        self._z_cache: dict[tuple[int, int, int], list[int]] = {}

    def column_of(self, action: float) -> int:
        a = self.windows
        if not a[0] < action <= a[-1]:
            raise ValueError(f"action {action} lies outside ({a[0]}, {a[-1]}]")
        for p in range(self.n_columns):
            if action <= a[p + 1]:
                return p
        raise AssertionError("unreachable")

    def filtration(self, p: int) -> int:
        if p < 0:
            return 0
        return self._le[min(p, self.n_columns - 1)]

    def cycles(self, r: int, p: int, deg: int) -> list[int]:
        """Basis of ``Z_r^p = {x in F_p : dx in F_{p-r}}`` in one degree."""
        key = (r, p, deg)
        if key not in self._z_cache:
            dom = self.filtration(p) & self._deg.get(deg, 0)
            outside = ~self.filtration(p - r)
            basis = [1 << i for i in _bits(dom)]
            self._z_cache[key] = _kernel(basis, lambda x: self.cx.d(x) & outside)
        return self._z_cache[key]

    def boundaries(self, r: int, p: int, deg: int) -> _Echelon:
        """Echelon basis of ``Z_{r-1}^{p-1} + d Z_{r-1}^{p+r-1}``."""
        ech = _Echelon()
        for v in self.cycles(r - 1, p - 1, deg):
            ech.add(v)
        for v in self.cycles(r - 1, p + r - 1, deg - 1):
            ech.add(self.cx.d(v))
        return ech

    def page(self, r: int) -> SpectralPage:
        if r < 1:
            raise ValueError("pages start at r = 1")
        dims, reps, quot = {}, {}, {}
        for p in range(self.n_columns):
            for deg in self.cx.degrees:
                den = self.boundaries(r, p, deg)
                ech = _Echelon()
                ech.rows = dict(den.rows)
                chosen = []
                for v in self.cycles(r, p, deg):
                    if ech.add(v, 1 << len(chosen)):
                        chosen.append(v)
                dims[(p, deg)] = len(chosen)
                reps[(p, deg)] = chosen
                quot[(p, deg)] = ech
        page = SpectralPage(r, dims, reps)
        for (p, deg), chosen in reps.items():
            target = (p - r, deg + 1)
            if not chosen or target not in quot:
                continue
            cols = []
            for v in chosen:
                rem, coords = quot[target].reduce(self.cx.d(v))
                if rem:
                    raise AssertionError("d_r image is not a class of the target page")
                cols.append(coords)
            page.differentials[(p, deg)] = cols
        return page

    def max_useful_r(self) -> int:
        return self.n_columns + 1


def _compose(first: list[int], second: list[int]) -> list[int]:
    out = []
    for col in first:
        acc = 0
        for i in _bits(col):
            acc ^= second[i]
        out.append(acc)
    return out


def check_page(page: SpectralPage, next_page: SpectralPage | None = None):
    """Assert ``d_r^2 = 0`` and, when given, ``H(E_r, d_r) = E_{r+1}`` dimensionwise."""
    r = page.r
    for (p, deg), cols in page.differentials.items():
        nxt = page.differentials.get((p - r, deg + 1))
        if nxt is not None and any(_compose(cols, nxt)):
            raise AssertionError(f"d_{r}^2 != 0 at ({p}, {deg})")
    if next_page is None:
        return
    for (p, deg), dim in page.dims.items():
        out_rank = gf2_rank(page.differentials.get((p, deg), []))
        in_rank = gf2_rank(page.differentials.get((p + r, deg - 1), []))
        h = dim - out_rank - in_rank
        if h != next_page.dim(p, deg):
            raise AssertionError(f"H(E_{r}) != E_{r + 1} at ({p}, {deg}): {h} vs {next_page.dim(p, deg)}")


def e1_page(cx: FilteredComplex, windows: Sequence[float]) -> SpectralPage:
    return SpectralSequence(cx, windows).page(1)


@dataclass
class SpectralRun:
    pages: list[SpectralPage]
    cohomology: dict[int, int]

    @property
    def e_infinity(self) -> SpectralPage:
        return self.pages[-1]

    @property
    def agrees(self) -> bool:
        einf = self.e_infinity.total_by_degree()
        degs = set(einf) | {k for k, v in self.cohomology.items() if v}
        return all(einf.get(k, 0) == self.cohomology.get(k, 0) for k in degs)


def _may_have_differential(page: SpectralPage, r_from: int) -> bool:
    live = [(p, deg) for (p, deg), d in page.dims.items() if d]
    for p, deg in live:
        for q, deg2 in live:
            if deg2 == deg + 1 and p - q >= r_from:
                return True
    return False


def run_to_einfty(cx: FilteredComplex, windows: Sequence[float], check: bool = True) -> SpectralRun:
    """Turn pages until no later differential can be nonzero; compare with direct cohomology.

    Termination: ``d_r`` vanishes once ``r`` exceeds the column spread of the
    nonzero entries, at the latest for ``r > number of columns``.
    """
    ss = SpectralSequence(cx, windows)
    pages = [ss.page(1)]
    while True:
        cur = pages[-1]
        if not _may_have_differential(cur, cur.r) or cur.r >= ss.max_useful_r():
            if check:
                check_page(cur)
            break
        nxt = ss.page(cur.r + 1)
        if check:
            check_page(cur, nxt)
        pages.append(nxt)
    run = SpectralRun(pages, cx.cohomology())
    if check and not run.agrees:
        raise AssertionError(f"E_inf {run.e_infinity.total_by_degree()} != H* {run.cohomology}")
    return run


def local_window_cohomology(cx: FilteredComplex, windows: Sequence[float], k: int) -> dict[int, int]:
    """Graded dimensions of the ``E_1`` column ``2k`` (the window around ``A_k``)."""
    n_windows = len(windows) // 2
    if not 0 <= k < n_windows:
        raise IndexError(f"window {k} does not exist (have {n_windows})")
    return e1_page(cx, windows).column(2 * k)


def support_consistent(column: dict[int, int], delta: float, n: int) -> bool:
    """All nonzero degrees lie in ``[delta - n, delta + n]``."""
    return all(delta - n - 1e-12 <= deg <= delta + n + 1e-12 for deg, d in column.items() if d)


# --- random complexes ---

def random_filtered_complex(rng: np.random.Generator, max_generators: int = 50,
                            max_windows: int = 6, degrees: tuple[int, int] = (0, 4),
                            density: float = 0.35) -> tuple[FilteredComplex, list[float]]:
    """A random complex with actions clustered inside disjoint windows.

    The differential is ``d = P D0 P^-1``-style: a random acyclic pairing plus
    change of basis within action order, so ``d^2 = 0`` holds and ``d`` decreases action.
    """
    n = int(rng.integers(1, max_generators + 1))
    k_win = int(rng.integers(1, max_windows + 1))
    centers = np.cumsum(rng.uniform(1.0, 3.0, size=k_win))
    widths = rng.uniform(0.2, 0.8, size=k_win)
    windows = build_windows(list(centers), list(widths))
    lo, hi = degrees
    win = rng.integers(0, k_win, size=n)
    actions = centers[win] + rng.uniform(-0.45, 0.45, size=n) * widths[win]
    degs = rng.integers(lo, hi + 1, size=n)
    # pair generators (x -> y) with deg y = deg x + 1 and A(y) < A(x); unpaired ones are cycles
    order = [int(i) for i in np.argsort(-actions)]
    used = set()
    pairs = []
    for i in order:
        if i in used or rng.random() > 0.6:
            continue
        cands = [j for j in order if j not in used and j != i and degs[j] == degs[i] + 1 and actions[j] < actions[i]]
        if cands:
            j = cands[int(rng.integers(0, len(cands)))]
            used |= {i, j}
            pairs.append((i, j))
    # base differential: d(x) = y for each pair; then conjugate by an upper-triangular
    # (in action order) change of basis, which keeps d^2 = 0 and action decrease
    n_idx = list(range(n))
    base = [0] * n
    for i, j in pairs:
        base[i] = 1 << j
    change = [1 << i for i in n_idx]
    for i in n_idx:
        for j in n_idx:
            if i != j and degs[i] == degs[j] and actions[j] < actions[i] and rng.random() < density:
                change[i] |= 1 << j
    # change is unitriangular w.r.t. decreasing action, so it is invertible
    inv = _invert(change, actions)
    images = []
    for i in n_idx:
        v = 0
        for a in _bits(change[i]):
            v ^= base[a]
        # d'(e_i) = C^{-1} d C e_i ; apply inverse on the image
        w = 0
        for b in _bits(v):
            w ^= inv[b]
        images.append(w)
    gens = [Generator(f"g{i}", int(degs[i]), float(actions[i])) for i in n_idx]
    diff = [(f"g{i}", f"g{j}") for i in n_idx for j in _bits(images[i])]
    return FilteredComplex(gens, diff), windows


def _invert(change: list[int], actions) -> list[int]:
    """Inverse of a unitriangular basis change (``e_i -> e_i + lower-action terms``)."""
    order = sorted(range(len(change)), key=lambda i: actions[i])
    inv = [0] * len(change)
    for i in order:
        v = 1 << i
        for j in _bits(change[i] & ~(1 << i)):
            v ^= inv[j]
        inv[i] = v
    return inv


PAGE_TABLE_HEADER = ["r", "p", "q", "dim"]


def export_pages(path, pages: Sequence[SpectralPage]) -> str:
    return write_table(path, PAGE_TABLE_HEADER, (row for pg in pages for row in pg.rows()))
