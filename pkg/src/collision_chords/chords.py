"""Collision locus, chord search under iterates of the return map, and chord actions.

The collision locus ``C`` is the part of the pi/2-page lying in the cotangent
fibre over the north pole.  It is a disc: ``u = (eta1, eta2)`` lifts to
``(N; 0, u1, u2, sqrt(1 - |u|^2))``.  A point ``x`` of ``C`` is a chord of order
``m`` when ``tau^m(x)`` is back in ``C``, measured by the chordal distance of the
base point ``xi`` to ``N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import BindingError, HorizonExceeded, IntegratorConfig, StepFailure, Trajectory, field_array
from .kepler_core import NORTH_POLE, OPEN_BOOK_C_MAX, ProblemParams, SphereCotangentPoint, q_value
from .openbook import PagePoint, first_return, kepler_period
from .tables import write_table

CHORD_TOL = 1e-6
PLANAR_TOL = 1e-8


@dataclass(frozen=True)
class CollisionDiskPoint:
    u: tuple

    def __post_init__(self):
        u = tuple(float(v) for v in self.u)
        if len(u) != 2:
            raise ValueError("a collision disc point has two coordinates")
        if math.hypot(*u) > 1.0 + 1e-12:
            raise ValueError(f"|u| = {math.hypot(*u):.6g} exceeds 1")
        object.__setattr__(self, "u", u)

    @property
    def radius(self) -> float:
        return math.hypot(*self.u)


def collision_locus_lift(u) -> SphereCotangentPoint:
    """``u -> (N; 0, u1, u2, sqrt(1 - |u|^2))``; the lift has ``Q = 1/2`` for every ``c``."""
    u = CollisionDiskPoint(tuple(u)).u
    r = math.hypot(*u)
    # the boundary ring is the planar locus; rounding in |u| must not lift it off
    eta3 = 0.0 if r >= 1.0 - 1e-14 else math.sqrt((1.0 - r) * (1.0 + r))
    return SphereCotangentPoint(NORTH_POLE.copy(), np.array([0.0, u[0], u[1], eta3]))


def collision_disk_projection(point: SphereCotangentPoint) -> CollisionDiskPoint:
    return CollisionDiskPoint((float(point.eta[1]), float(point.eta[2])))


def lift_page_point(u, c: float) -> PagePoint:
    return PagePoint(collision_locus_lift(u), c)


def distance_to_locus(point) -> float:
    """Chordal distance of the base point to the north pole."""
    xi = point.xi if hasattr(point, "xi") else np.asarray(point)[:4]
    return float(np.linalg.norm(np.asarray(xi) - NORTH_POLE))


def concentric_grid(n_rings: int, n_angles: int) -> list[tuple[float, float]]:
    """Origin plus ``n_rings`` circles, uniform in radius squared; the last circle is ``|u| = 1``."""
    if n_rings < 1 or n_angles < 1:
        raise ValueError("grid needs at least one ring and one angle")
    pts = [(0.0, 0.0)]
    for i in range(1, n_rings + 1):
        r = math.sqrt(i / n_rings)
        for j in range(n_angles):
            a = 2.0 * math.pi * j / n_angles
            pts.append((r * math.cos(a), r * math.sin(a)))
    return pts


# --- resonance ---

@dataclass(frozen=True)
class Resonance:
    p: int
    q: int
    c: float
    valid: bool
    law: str


def resonance_solve(p: int, q: int, law: str = "kepler") -> Resonance:
    """Jacobi constant with ``T(c) = 2 pi p / q``; ``valid`` flags ``c < -3/2``.

    Kepler law: ``c = -(q/p)^(2/3) / 2``.  Printed law: ``c = -(q/(4p))^(2/3)``.
    """
    if p < 1 or q < 1 or math.gcd(p, q) != 1:
        raise ValueError("p and q must be coprime positive integers")
    if law == "kepler":
        c = -0.5 * (q / p) ** (2.0 / 3.0)
    elif law == "printed":
        c = -((q / (4.0 * p)) ** (2.0 / 3.0))
    else:
        raise ValueError(f"unknown period law {law!r}")
    return Resonance(p, q, c, c < OPEN_BOOK_C_MAX, law)


def rotation_number(c: float, law: str = "kepler") -> float:
    """``T(c) / 2 pi``: the rotation of ``C`` per return, in turns."""
    return kepler_period(c, law) / (2.0 * math.pi)


# --- actions ---

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def _action_density(w: np.ndarray, c: float, reverse: bool) -> float:
    z = w[:8]
    zdot = field_array(z, c)
    if reverse:
        zdot = -zdot
    return float(z[4:] @ zdot[:4]) + q_value(z, c)


def chord_action(traj: Trajectory, t_start: float | None = None, t_end: float | None = None) -> float:
    """``-int x*lambda + int Q dt`` along a flow segment, with ``lambda = -eta . dxi``.

    ``d lambda`` is the symplectic form and ``lambda`` vanishes on cotangent fibres,
    so no boundary primitives appear for chords of the collision fibre.
    """
    a0 = traj.times[0] if t_start is None else t_start
    b0 = traj.times[-1] if t_end is None else t_end
    total = 0.0
    for k in range(len(traj) - 1):
        a = max(traj.times[k], a0)
        b = min(traj.times[k + 1], b0)
        if b <= a:
            continue
        ts = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
        vals = [_action_density(np.asarray(traj.dense[k](t)), traj.params.c, traj.reverse) for t in ts]
        total += 0.5 * (b - a) * float(np.dot(_GL_WEIGHTS, vals))
    return total


def action_perturbation_constant(action_a: float, action_b: float, c1_distance: float,
                                 c0_hamiltonian: float) -> float:
    """Smallest ``C`` with ``|A - A~| <= C (|x - x~|_C1 + |H - H~|_C0)``."""
    return abs(action_a - action_b) / (c1_distance + c0_hamiltonian)


# --- search ---

@dataclass
class ChordRecord:
    start: CollisionDiskPoint
    order: int
    minimal_order: int
    period: int | None
    chord_class: str
    action: float
    endpoint: CollisionDiskPoint
    angle_measured: float

    @property
    def periodic(self) -> bool:
        return self.period is not None


@dataclass
class SearchResult:
    records: list[ChordRecord]
    skipped: list[tuple[int, tuple, str]] = field(default_factory=list)
    orbits: dict = field(default_factory=dict, repr=False)

    def by_start(self):
        out: dict[tuple, list[ChordRecord]] = {}
        for r in self.records:
            out.setdefault(r.start.u, []).append(r)
        return out


def signed_angle(u, v) -> float:
    """Angle from ``u`` to ``v`` in ``(-pi, pi]``; zero for the origin."""
    if math.hypot(*u) < 1e-14 or math.hypot(*v) < 1e-14:
        return 0.0
    return math.atan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1])


def closed_form_orbit(x0: np.ndarray, c: float, n_iter: int, law: str = "kepler") -> np.ndarray:
    """Iterates ``tau^0 .. tau^n_iter`` of the closed-form map for a batch of page points.

    ``x0`` has shape ``(k, 8)``; the result has shape ``(n_iter + 1, k, 8)``.  The
    rotation angle is evaluated once per point, since ``L`` is invariant.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    ell = x0[:, 2] * x0[:, 5] - x0[:, 1] * x0[:, 6]
    phi = np.array([kepler_period(c - l, law) for l in ell])
    cs, sn = np.cos(phi), np.sin(phi)
    out = np.empty((n_iter + 1,) + x0.shape)
    out[0] = x0
    x = x0.copy()
    for k in range(1, n_iter + 1):
        y = x.copy()
        for i, j in ((1, 2), (5, 6)):
            y[:, i] = cs * x[:, i] - sn * x[:, j]
            y[:, j] = sn * x[:, i] + cs * x[:, j]
        out[k] = y
        x = y
    return out


def first_return_index(orbit: np.ndarray, tol: float) -> np.ndarray:
    """Smallest ``k >= 1`` with ``|x_k - x_0| < tol`` per point, or 0 if none."""
    dist = np.linalg.norm(orbit[1:] - orbit[0][None], axis=2)
    hit = dist < tol
    idx = np.where(hit.any(axis=0), hit.argmax(axis=0) + 1, 0)
    return idx


def _numeric_orbit(u, params: ProblemParams, n_iter: int, cfg: IntegratorConfig):
    x = lift_page_point(u, params.c)
    states = [x.as_array()]
    segments = []
    for _ in range(n_iter):
        rec = first_return(x, params, cfg)
        x = rec.image
        states.append(x.as_array())
        segments.append((rec.trajectory, rec.time))
    return np.array(states), segments


def _segment_is_planar(segments, planar_tol: float) -> bool:
    for tr, _ in segments:
        if np.max(np.hypot(tr.states[:, 3], tr.states[:, 7])) > planar_tol:
            return False
    return True


def chord_search(params: ProblemParams, map_mode: str = "closed_form", max_order: int = 8,
                 grid=(8, 16), tol: float = CHORD_TOL, planar_tol: float = PLANAR_TOL,
                 law: str = "kepler", cfg: IntegratorConfig | None = None,
                 max_period: int | None = None, with_action: bool = True,
                 keep_orbits: bool = False) -> SearchResult:
    """Record every ``(u, m)`` with ``tau^m(lift(u))`` in the collision locus, ``m <= max_order``.

    ``grid`` is either ``(n_rings, n_angles)`` or an explicit list of disc points.
    Periodicity is decided by forward iteration up to ``max_period`` (default
    ``max_order``).  In closed-form mode, actions come from one flow integration per
    ring radius: the problem is symmetric under rotations about the ``q3`` axis, so
    the first-return action depends only on ``|u|`` and an order-``m`` action is
    ``m`` times that (each iterate is a chord).  Grid points whose orbits hit the
    binding guard or the time horizon are listed in ``skipped``.
    """
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    if map_mode not in ("closed_form", "numeric"):
        raise ValueError(f"unknown map mode {map_mode!r}")
    cfg = cfg or IntegratorConfig()
    max_period = max_order if max_period is None else max(max_period, max_order)
    points = concentric_grid(*grid) if isinstance(grid, tuple) else [tuple(p) for p in grid]
    result = SearchResult(records=[])
    action_cache: dict[float, float] = {}

    if map_mode == "closed_form":
        x0 = np.array([lift_page_point(u, params.c).as_array() for u in points])
        orbit = closed_form_orbit(x0, params.c, max_period, law)
        periods = first_return_index(orbit, tol)
        for idx, u in enumerate(points):
            o = orbit[:, idx, :]
            planar = abs(o[0, 7]) <= planar_tol and abs(o[0, 3]) <= planar_tol
            action1 = _first_return_action(u, params, cfg, action_cache) if with_action else math.nan
            _record_chords(result, idx, u, o, None, max_order, int(periods[idx]) or None, tol,
                           planar, action1, keep_orbits)
        return result

    for idx, u in enumerate(points):
        try:
            o, trajs = _numeric_orbit(u, params, max_period, cfg)
        except (BindingError, HorizonExceeded, StepFailure) as exc:
            result.skipped.append((idx, tuple(u), f"{type(exc).__name__}: {exc}"))
            continue
        period = int(first_return_index(o[:, None, :], tol)[0]) or None
        planar = _segment_is_planar(trajs[:max_order], planar_tol)
        _record_chords(result, idx, u, o, trajs if with_action else None, max_order, period,
                       tol, planar, math.nan, keep_orbits)
    return result


def _first_return_action(u, params, cfg, cache) -> float:
    key = round(math.hypot(*u), 15)
    if key not in cache:
        rec = first_return(lift_page_point(u, params.c), params, cfg)
        cache[key] = chord_action(rec.trajectory, 0.0, rec.time)
    return cache[key]


def _record_chords(result, idx, u, orbit, trajs, max_order, period, tol, planar, action1, keep):
    visits = [m for m in range(1, max_order + 1) if distance_to_locus(orbit[m]) < tol]
    if keep:
        result.orbits[idx] = orbit
    if not visits:
        return
    minimal = visits[0]
    start = CollisionDiskPoint(tuple(u))
    for m in visits:
        end = orbit[m]
        endpoint = CollisionDiskPoint((float(end[5]), float(end[6])))
        if trajs is not None:
            action = sum(chord_action(tr, 0.0, t) for tr, t in trajs[:m])
        else:
            action = m * action1
        result.records.append(ChordRecord(
            start=start, order=m, minimal_order=minimal, period=period,
            chord_class="planar" if planar else "spatial", action=action,
            endpoint=endpoint, angle_measured=signed_angle(start.u, endpoint.u)))


def subchord_orders(orbit: np.ndarray, period: int, tol: float = CHORD_TOL) -> list[int]:
    """Orders of the consecutive sub-chords of a periodic chord of the given period."""
    visits = [k for k in range(1, period + 1) if distance_to_locus(orbit[k]) < tol]
    orders, last = [], 0
    for k in visits:
        orders.append(k - last)
        last = k
    return orders


def mixed_chords(records: list[ChordRecord], planar_tol: float = PLANAR_TOL) -> list[ChordRecord]:
    """Chords with exactly one endpoint on the planar boundary ``|u| = 1``."""
    bad = []
    for r in records:
        a = collision_locus_lift(r.start.u).eta[3] <= planar_tol
        b = collision_locus_lift(r.endpoint.u).eta[3] <= planar_tol
        if a != b:
            bad.append(r)
    return bad


CHORD_TABLE_HEADER = ["u1", "u2", "m", "minimal_order", "period", "class", "action", "angle_measured"]


def chord_table_rows(records: list[ChordRecord]):
    for r in records:
        yield [r.start.u[0], r.start.u[1], r.order, r.minimal_order,
               "" if r.period is None else r.period, r.chord_class, r.action, r.angle_measured]


def export_chord_table(path, records: list[ChordRecord]) -> str:
    return write_table(path, CHORD_TABLE_HEADER, chord_table_rows(records))
