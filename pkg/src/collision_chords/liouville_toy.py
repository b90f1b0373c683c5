"""Radial Hamiltonians on the unit disc: a closed-form model of the collar formulas.

``W`` is the unit disc with ``lambda = (x dy - y dx)/2`` and ``omega = dx ^ dy``;
``L`` is the horizontal diameter and ``r = x^2 + y^2``.  For ``H = h(r)`` the
Hamiltonian vector field (``i_X omega = -dH``) rotates counterclockwise at angular
speed ``2 h'(r)``, so a time-one chord from ``L`` to ``L`` sits at every radius
with ``2 h'(r) = k pi``.  Its action is ``-r h'(r) + h(r)``.  The boundary
Legendrian is the two-point set ``L`` meets the circle in; this 1-dimensional
contact boundary is degenerate but keeps every formula explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .tables import write_table

CHORD_R_TOL = 1e-10


@dataclass(frozen=True)
class RadialHamiltonian:
    """``h(r) = sum c_i r^(e_i)`` (each ``e_i = 0`` or ``e_i >= 1``), optionally chopped.

    With ``chop = R`` the profile is continued linearly for ``r >= R`` with slope
    ``h'(R)``, so ``h`` and ``h'`` are continuous at ``R``.
    """

    terms: tuple = ((0.0, 0.0),)
    chop: float | None = None

    def __post_init__(self):
        terms = tuple((float(c), float(e)) for c, e in self.terms)
        for _, e in terms:
            if not (e == 0.0 or e >= 1.0):
                raise ValueError("exponents must be 0 or at least 1 so that h' is continuous at 0")
        object.__setattr__(self, "terms", terms)
        if self.chop is not None and self.chop <= 0:
            raise ValueError("chop radius must be positive")

    @classmethod
    def power_profile(cls, b: float = 0.0, alpha: float = 0.0, beta: float = 0.0,
                      power: float = 2.0) -> "RadialHamiltonian":
        """``b + alpha r + beta r^power``."""
        return cls(((b, 0.0), (alpha, 1.0), (beta, power)))

    def _h(self, r):
        return sum(c * r ** e if e else c for c, e in self.terms)

    def _dh(self, r):
        return sum(c * e * r ** (e - 1.0) for c, e in self.terms if e)

    def _d2h(self, r):
        return sum(c * e * (e - 1.0) * r ** (e - 2.0) for c, e in self.terms if e > 1.0)

    def h(self, r: float) -> float:
        if self.chop is not None and r > self.chop:
            return self._h(self.chop) + self.slope * (r - self.chop)
        return float(self._h(r))

    def dh(self, r: float) -> float:
        if self.chop is not None and r > self.chop:
            return self.slope
        return float(self._dh(r))

    def d2h(self, r: float) -> float:
        if self.chop is not None and r > self.chop:
            return 0.0
        return float(self._d2h(r))

    @property
    def slope(self) -> float:
        if self.chop is None:
            raise ValueError("slope is defined for chopped profiles only")
        return float(self._dh(self.chop))

    def chopped(self, radius: float) -> "RadialHamiltonian":
        return replace(self, chop=float(radius))

    def perturbed(self, delta: float, exponent: float = 1.0) -> "RadialHamiltonian":
        return RadialHamiltonian(self.terms + ((delta, exponent),), self.chop)

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c, e in self.terms if e)

    def linear_beyond(self) -> float | None:
        """Radius beyond which ``h`` is affine, if any."""
        if self.chop is not None:
            return self.chop
        if all(e <= 1.0 for c, e in self.terms if c != 0.0):
            return 0.0
        return None


@dataclass(frozen=True)
class ToyChord:
    radius: float
    k: int
    action: float
    location: str
    family: tuple | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple[float, int]:
        return (self.radius, self.k)


def collar_action(h: RadialHamiltonian, r: float) -> float:
    """``-r h'(r) + h(r)``."""
    return -r * h.dh(r) + h.h(r)


def collar_action_quadrature(h: RadialHamiltonian, r: float, rtol: float = 1e-13,
                             atol: float = 1e-14) -> float:
    """``-int x*lambda + int H dt`` along the numerically integrated time-one orbit from ``(sqrt r, 0)``."""
    def rhs(t, s):
        x, y = s[0], s[1]
        w = 2.0 * h.dh(x * x + y * y)
        xd, yd = -w * y, w * x
        density = -0.5 * (x * yd - y * xd) + h.h(x * x + y * y)
        return [xd, yd, density]

    sol = solve_ivp(rhs, (0.0, 1.0), [math.sqrt(r), 0.0, 0.0], method="DOP853", rtol=rtol, atol=atol)
    return float(sol.y[2, -1])


def _location(r: float) -> str:
    return "interior" if r < 1.0 else "collar"


def _chord_radii(h: RadialHamiltonian, r_max: float, samples: int) -> list[tuple[float, int]]:
    """All ``(r, k)`` with ``2 h'(r) = k pi``, ``k >= 1``, ``0 < r <= r_max``."""
    rs = np.linspace(0.0, r_max, samples)
    g = np.array([2.0 * h.dh(r) / math.pi for r in rs])
    out = []
    for i in range(len(rs) - 1):
        a, b = g[i], g[i + 1]
        lo, hi = min(a, b), max(a, b)
        for k in range(max(1, math.ceil(lo)), math.floor(hi) + 1):
            if a == b:
                continue
            fa, fb = a - k, b - k
            if fa == 0.0 and i > 0:
                continue  # counted as the right end of the previous cell
            if fb == 0.0:
                root = rs[i + 1]
            elif fa == 0.0:
                root = rs[i]
            else:
                root = brentq(lambda r: 2.0 * h.dh(r) / math.pi - k, rs[i], rs[i + 1],
                              xtol=1e-15, rtol=4 * np.finfo(float).eps)
            out.append((float(root), k))
    return sorted(set(out))


def _search_limit(h: RadialHamiltonian, floor: float) -> float:
    """A radius beyond which every chord has action below ``floor``."""
    lin = h.linear_beyond()
    if lin is not None:
        return max(lin, 1.0)
    r = 1.0
    while collar_action(h, r) >= floor or h.d2h(r) <= 0.0:
        r *= 2.0
        if r > 1e8:
            raise RuntimeError("action profile does not decrease below the floor")
    return r


def toy_chords(h: RadialHamiltonian, floor: float = -math.inf, r_max: float | None = None,
               samples_per_unit: int = 2000) -> list[ToyChord]:
    """Chords with action ``>= floor``: the origin plus every ``2 h'(r) = k pi``, ``k >= 1``.

    For affine tails with ``2 h' in pi Z`` the whole tail consists of chords; this
    is reported as one chord at the tail start with ``family = (start, inf)``.
    """
    chords = [ToyChord(0.0, 0, h.h(0.0), "interior")]
    if h.is_constant:
        chords[0] = ToyChord(0.0, 0, h.h(0.0), "interior", family=(0.0, math.inf))
        return [c for c in chords if c.action >= floor]
    if r_max is None:
        r_max = _search_limit(h, floor) if math.isfinite(floor) else 4.0
    samples = max(2001, int(samples_per_unit * r_max) + 1)
    for r, k in _chord_radii(h, r_max, samples):
        chords.append(ToyChord(r, k, collar_action(h, r), _location(r)))
    lin = h.linear_beyond()
    if lin is not None:
        k_tail = 2.0 * h.dh(lin + 1.0) / math.pi
        if k_tail >= 1.0 and abs(k_tail - round(k_tail)) < 1e-12:
            k = int(round(k_tail))
            chords = [c for c in chords if not (c.k == k and c.radius >= lin)]
            chords.append(ToyChord(lin, k, collar_action(h, lin), _location(lin), family=(lin, math.inf)))
    return [c for c in chords if c.action >= floor]


@dataclass
class ChordSetReport:
    radius: float
    floor: float
    full: list[ToyChord]
    chopped: list[ToyChord]
    only_full: list[tuple[float, int]]
    only_chopped: list[tuple[float, int]]

    @property
    def equal(self) -> bool:
        return not self.only_full and not self.only_chopped


def _match(a: Sequence[tuple[float, int]], b: Sequence[tuple[float, int]], tol: float):
    left = []
    rest = list(b)
    for r, k in a:
        hit = next((i for i, (r2, k2) in enumerate(rest) if k2 == k and abs(r2 - r) <= tol), None)
        if hit is None:
            left.append((r, k))
        else:
            rest.pop(hit)
    return left, rest


def chord_set_equality(hhat: RadialHamiltonian, radius: float, tol: float = CHORD_R_TOL) -> ChordSetReport:
    """Compare chords of ``hhat`` with action ``>= a = A(R)`` against all chords of the chop at ``R``."""
    floor = collar_action(hhat, radius)
    full = toy_chords(hhat, floor)
    chop = hhat.chopped(radius)
    chopped = toy_chords(chop, r_max=max(2.0 * radius, radius + 1.0))
    only_full, only_chopped = _match([c.key for c in full], [c.key for c in chopped], tol)
    return ChordSetReport(radius, floor, full, chopped, only_full, only_chopped)


def random_convex_profile(rng: np.random.Generator) -> RadialHamiltonian:
    """``b + alpha r + beta r^p`` with ``alpha >= 0``, ``beta > 0``, ``p in (1.2, 3)``."""
    return RadialHamiltonian.power_profile(b=float(rng.uniform(-1, 1)), alpha=float(rng.uniform(0, 2)),
                                           beta=float(rng.uniform(0.5, 3)), power=float(rng.uniform(1.2, 3.0)))


def action_estimate_constants(h: RadialHamiltonian, deltas: Sequence[float], exponent: float = 1.0,
                              r_max: float = 4.0) -> list[float]:
    """Ratios ``|dA| / (|dx|_C1 + |dH|_C0)`` for matched chords of ``h`` and ``h + delta r^e``.

    Chords are matched by turn count ``k``.  ``|dx|_C1`` is the C1 distance of the
    time-one orbits from ``(sqrt r, 0)``; ``|dH|_C0`` is taken over ``[0, r_max]``.
    """
    base = {c.k: c for c in toy_chords(h, r_max=r_max) if c.k >= 1}
    out = []
    for delta in deltas:
        hp = h.perturbed(delta, exponent)
        pert = {c.k: c for c in toy_chords(hp, r_max=r_max) if c.k >= 1}
        ratios = []
        for k in sorted(set(base) & set(pert)):
            r0, r1 = base[k].radius, pert[k].radius
            dx = abs(math.sqrt(r1) - math.sqrt(r0)) * (1.0 + k * math.pi)
            dh = abs(delta) * r_max ** exponent
            ratios.append(abs(pert[k].action - base[k].action) / (dx + dh))
        out.append(max(ratios) if ratios else 0.0)
    return out


TOY_TABLE_HEADER = ["r", "k", "action", "location"]


def export_toy_table(path, chords: Sequence[ToyChord]) -> str:
    return write_table(path, TOY_TABLE_HEADER, ([c.radius, c.k, c.action, c.location] for c in chords))
