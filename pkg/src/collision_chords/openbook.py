"""Geodesic open book, the page ``P``, and the Poincaré return map.

Pages are the level sets of ``theta = arg(xi3 + i eta3)`` on ``{Q = 1/2}``; the
binding ``{xi3 = eta3 = 0}`` is the planar problem.  The return map is computed
numerically (flow to the next positive crossing of the pi/2-page) and in closed
form for the rotating Kepler problem, where it is a rotation of the (1, 2)-plane
by the Kepler period of energy ``c - L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import (
    BINDING_GUARD,
    BindingError,
    IntegratorConfig,
    Trajectory,
    angular_speed_array,
    first_crossing,
    page_angle_array,
)
from .kepler_core import (
    ProblemParams,
    SphereCotangentPoint,
    angular_momentum,
    point_on_level,
    project_constraints,
    q_value,
)
from .tables import write_table

PAGE_ANGLE = 0.5 * math.pi
PAGE_XI3_TOL = 1e-10
PAGE_ETA3_TOL = 1e-12
PAGE_Q_TOL = 1e-9
PERIOD_LAWS = ("kepler", "printed")


class PageMembershipError(ValueError):
    pass


@dataclass(frozen=True)
class PagePoint:
    """A point of ``P = {Q = 1/2, xi3 = 0, eta3 >= 0}`` for Jacobi constant ``c``."""

    point: SphereCotangentPoint
    c: float

    def __post_init__(self):
        xi, eta = self.point.xi, self.point.eta
        if abs(xi[3]) > PAGE_XI3_TOL:
            raise PageMembershipError(f"xi3 = {xi[3]:.3e} is not on the page")
        if eta[3] < -PAGE_ETA3_TOL:
            raise PageMembershipError(f"eta3 = {eta[3]:.3e} is negative")
        q = q_value(self.point.as_array(), self.c)
        if abs(q - 0.5) > PAGE_Q_TOL:
            raise PageMembershipError(f"Q - 1/2 = {q - 0.5:.3e}")

    @property
    def xi(self):
        return self.point.xi

    @property
    def eta(self):
        return self.point.eta

    def as_array(self):
        return self.point.as_array()

    @property
    def on_boundary(self) -> bool:
        return abs(self.point.eta[3]) <= BINDING_GUARD


def openbook_angle(point: SphereCotangentPoint, binding_guard: float = BINDING_GUARD) -> float:
    """``arg(xi3 + i eta3)`` in ``[0, 2 pi)``."""
    return page_angle_array(point.as_array(), False, binding_guard)


def polish_to_page(z: np.ndarray, c: float) -> PagePoint:
    """Snap a state near the pi/2-page onto ``{xi3 = 0, Q = 1/2}``.

    ``xi3`` is zeroed, the constraints re-imposed, and ``eta`` rescaled by Newton's
    method on ``s |eta| f(xi, s eta) = 1``.
    """
    xi = np.array(z[:4], dtype=float)
    eta = np.array(z[4:8], dtype=float)
    xi[3] = 0.0
    xi, eta = project_constraints(xi, eta)
    if eta[3] < 0.0 and eta[3] > -1e-9:
        eta[3] = 0.0
    norm = float(np.linalg.norm(eta))
    lam = float(xi[2] * eta[1] - xi[1] * eta[2])
    base = 1.0 + (1.0 - xi[0]) * (-c - 0.5)
    slope = (1.0 - xi[0]) * lam
    s = 1.0
    for _ in range(20):
        F = s * norm * (base + slope * s) - 1.0
        dF = norm * (base + 2.0 * slope * s)
        step = F / dF
        s -= step
        if abs(step) < 1e-16:
            break
    return PagePoint(SphereCotangentPoint(xi, s * eta), c)


def page_point(xi, eta, c: float) -> PagePoint:
    return PagePoint(SphereCotangentPoint(xi, eta), c)


def random_page_points(rng: np.random.Generator, c: float, n: int, eta3_min: float = 0.05,
                       require_closed_form: bool = True) -> list[PagePoint]:
    """Random interior page points with ``eta3 >= eta3_min * |eta|``."""
    out = []
    while len(out) < n:
        v = rng.normal(size=3)
        xi = np.array([v[0], v[1], v[2], 0.0])
        xi /= np.linalg.norm(xi)
        d = rng.normal(size=4)
        d -= (d @ xi) * xi
        d[3] = abs(d[3])
        d /= np.linalg.norm(d)
        if d[3] < eta3_min:
            continue
        try:
            pt = point_on_level(xi, d, c)
        except ValueError:
            continue
        if require_closed_form and c - angular_momentum(pt) >= 0.0:
            continue
        out.append(PagePoint(pt, c))
    return out


# --- numeric return map ---

@dataclass
class ReturnRecord:
    start: PagePoint
    image: PagePoint
    time: float
    min_speed: float
    trajectory: Trajectory


def first_return(x: PagePoint, params: ProblemParams, cfg: IntegratorConfig | None = None,
                 binding_guard: float = BINDING_GUARD) -> ReturnRecord:
    """Flow ``x`` to the next positively oriented crossing of the pi/2-page.

    Points of the binding (the boundary of ``P``) are handled through the
    transverse linearization, which defines the page angle there.
    """
    cfg = cfg or IntegratorConfig()
    z = x.as_array()
    on_binding = math.hypot(z[3], z[7]) < binding_guard
    crossing, traj = first_crossing(z, params, PAGE_ANGLE, cfg, transverse=on_binding,
                                    binding_guard=binding_guard)
    image = polish_to_page(crossing.state, params.c)
    profile = transversality_profile(traj, binding_guard)
    return ReturnRecord(x, image, crossing.t, profile.minimum, traj)


def return_map_numeric(x: PagePoint, params: ProblemParams,
                       cfg: IntegratorConfig | None = None) -> PagePoint:
    return first_return(x, params, cfg).image


# --- closed form ---

def kepler_period(K: float, law: str = "kepler") -> float:
    """Period of a Kepler ellipse of energy ``K < 0``.

    ``law="kepler"`` is ``2 pi (-2K)^(-3/2)``, the period of ``|p|^2/2 - 1/|q|``
    at energy ``K``; the regularized flow reproduces it.  ``law="printed"`` is
    ``pi / (2 (-K)^(3/2))``, smaller by a factor ``sqrt(2)``; it is kept so that
    statements made with that constant can be reproduced.
    """
    if K >= 0.0:
        raise ValueError(f"Kepler energy must be negative, got {K}")
    if law == "kepler":
        return 2.0 * math.pi / (-2.0 * K) ** 1.5
    if law == "printed":
        return math.pi / (2.0 * (-K) ** 1.5)
    raise ValueError(f"unknown period law {law!r}; expected one of {PERIOD_LAWS}")


def rotate(v, phi: float):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def return_angle(x: PagePoint, params: ProblemParams, law: str = "kepler") -> float:
    return kepler_period(params.c - angular_momentum(x.point), law)


def return_map_closed_form(x: PagePoint, params: ProblemParams, law: str = "kepler") -> PagePoint:
    """Rotate the (1, 2)-components of ``xi`` and ``eta`` by the period at ``K = c - L``."""
    if params.mu != 0.0:
        raise ValueError("the closed-form return map exists only for mu = 0")
    phi = return_angle(x, params, law)
    xi = x.xi.copy()
    eta = x.eta.copy()
    xi[1:3] = rotate(xi[1:3], phi)
    eta[1:3] = rotate(eta[1:3], phi)
    return PagePoint(SphereCotangentPoint(xi, eta), x.c)


# --- transversality ---

@dataclass(frozen=True)
class TransversalityProfile:
    speeds: np.ndarray
    minimum: float
    mean: float


def transversality_profile(traj: Trajectory, binding_guard: float = BINDING_GUARD) -> TransversalityProfile:
    """Open-book angular speed at every sample; a positive minimum certifies transversality."""
    speeds = []
    for w in traj.states:
        page_angle_array(w, traj.transverse, binding_guard)
        speeds.append(angular_speed_array(w, traj.params.c, traj.transverse, traj.reverse))
    speeds = np.array(speeds)
    return TransversalityProfile(speeds, float(speeds.min()), float(speeds.mean()))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def winding(traj: Trajectory, t_end: float | None = None) -> float:
    """``int d theta/dt dt`` over the trajectory, by Gauss-Legendre quadrature per step."""
    t_end = traj.times[-1] if t_end is None else t_end
    total = 0.0
    for k in range(len(traj) - 1):
        a, b = traj.times[k], min(traj.times[k + 1], t_end)
        if b <= a:
            break
        ts = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
        vals = [angular_speed_array(np.asarray(traj.dense[k](t)), traj.params.c,
                                    traj.transverse, traj.reverse) for t in ts]
        total += 0.5 * (b - a) * float(np.dot(_GL_WEIGHTS, vals))
    return total


def export_return_dataset(path, records: list[ReturnRecord]) -> str:
    header = ([f"in_xi{i}" for i in range(4)] + [f"in_eta{i}" for i in range(4)]
              + [f"out_xi{i}" for i in range(4)] + [f"out_eta{i}" for i in range(4)]
              + ["return_time", "min_dtheta_dt"])
    rows = ([*r.start.as_array(), *r.image.as_array(), r.time, r.min_speed] for r in records)
    return write_table(path, header, rows)


__all__ = [
    "BindingError",
    "PagePoint",
    "ReturnRecord",
    "TransversalityProfile",
    "export_return_dataset",
    "first_return",
    "kepler_period",
    "openbook_angle",
    "page_point",
    "polish_to_page",
    "random_page_points",
    "return_map_closed_form",
    "return_map_numeric",
    "transversality_profile",
    "winding",
]
