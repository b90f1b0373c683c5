"""Constrained Hamiltonian flow of the regularized Hamiltonian on ``T*S^3``.

The vector field is the ambient symplectic gradient of ``Q`` corrected by the
Hamiltonian vector fields of the two constraints (Dirac projection), so it is
tangent to ``{|xi| = 1, <xi, eta> = 0}`` and independent of how ``Q`` is extended
off the constraint set.  Integration uses scipy's DOP853 stepper; after every
accepted step the state is projected back onto the constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import DOP853

from .kepler_core import (
    ProblemParams,
    SphereCotangentPoint,
    _require_exact_mode,
    f_factor,
    project_array,
    q_gradient,
    q_hessian,
    q_value,
)
from .tables import write_table

BINDING_GUARD = 1e-6
ANGLE_TOL = 1e-10
TWO_PI = 2.0 * math.pi


class StepFailure(RuntimeError):
    """The adaptive controller could not take a step (step size underflow)."""


class BindingError(ValueError):
    """The state is within ``binding_guard`` of the binding ``{xi3 = eta3 = 0}``."""


class HorizonExceeded(RuntimeError):
    """No section crossing occurred before ``max_time``."""


# loosest setting that keeps |Q - 1/2| below 1e-8 over t = 1000
DEFAULT_TOL = 1e-11


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-2
    tol_rel: float = DEFAULT_TOL
    tol_abs: float = DEFAULT_TOL
    max_time: float = 100.0
    projection: bool = True
    max_step: float = np.inf

    def __post_init__(self):
        if not (self.tol_rel > 0 and self.tol_abs > 0):
            raise ValueError("integrator tolerances must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if not self.step > 0:
            raise ValueError("initial step must be positive")


# --- vector field ---

def _multipliers(z, grad):
    xi, eta = z[:4], z[4:]
    q_xi, q_eta = grad[:4], grad[4:]
    b = -float(xi @ q_eta)
    a = float(q_eta @ eta) - float(xi @ q_xi)
    return a, b


def field_array(z: np.ndarray, c: float) -> np.ndarray:
    """Constrained Hamiltonian vector field of ``Q`` at a flat 8-vector."""
    grad = q_gradient(z, c)
    a, b = _multipliers(z, grad)
    xi, eta = z[:4], z[4:]
    out = np.empty(8)
    out[:4] = -grad[4:] - b * xi
    out[4:] = grad[:4] + a * xi + b * eta
    return out


def field_jacobian(z: np.ndarray, c: float) -> np.ndarray:
    """Derivative of :func:`field_array` with respect to ``z`` (an 8x8 matrix)."""
    grad = q_gradient(z, c)
    hess = q_hessian(z, c)
    a, b = _multipliers(z, grad)
    xi, eta = z[:4], z[4:]
    q_xi, q_eta = grad[:4], grad[4:]
    h_xi, h_eta = hess[:4], hess[4:]
    eye4 = np.eye(4)
    dxi = np.hstack([eye4, np.zeros((4, 4))])
    deta = np.hstack([np.zeros((4, 4)), eye4])
    db = -(q_eta @ dxi) - xi @ h_eta
    da = eta @ h_eta + q_eta @ deta - q_xi @ dxi - xi @ h_xi
    jac = np.empty((8, 8))
    jac[:4] = -h_eta - b * dxi - np.outer(xi, db)
    jac[4:] = h_xi + np.outer(xi, da) + a * dxi + np.outer(eta, db) + b * deta
    return jac


def vector_field(point: SphereCotangentPoint, params: ProblemParams) -> np.ndarray:
    _require_exact_mode(params)
    return field_array(point.as_array(), params.c)


def transverse_coefficients(z: np.ndarray, c: float):
    """``(a, b, f^2)`` such that ``d/dt (xi3, eta3) = [[-b, -f^2], [a, b]] (xi3, eta3)``.

    The components with index 3 enter ``Q`` only through ``|eta|^2``, so this linear
    system holds exactly, and on the binding it is the transverse linearization.
    """
    grad = q_gradient(z, c)
    a, b = _multipliers(z, grad)
    f = f_factor(z[:4], z[4:], c)
    return a, b, f * f


def _augmented_field(w: np.ndarray, c: float) -> np.ndarray:
    """Field on ``(z, u, v)`` where ``(u, v)`` follows the transverse linear system."""
    z = w[:8]
    grad = q_gradient(z, c)
    a, b = _multipliers(z, grad)
    f = f_factor(z[:4], z[4:], c)
    xi, eta = z[:4], z[4:]
    out = np.empty(10)
    out[:4] = -grad[4:] - b * xi
    out[4:8] = grad[:4] + a * xi + b * eta
    u, v = w[8], w[9]
    out[8] = -f * f * v - b * u
    out[9] = a * u + b * v
    return out


# --- trajectories ---

@dataclass
class Trajectory:
    """Samples of the flow at accepted steps, with per-step dense output.

    ``times`` is strictly increasing.  For reversed trajectories the vector field
    is negated, not the time axis.  When ``transverse`` is set, each state carries
    two extra components (the transverse linearization used on the binding).
    """

    times: np.ndarray
    states: np.ndarray
    params: ProblemParams
    reverse: bool = False
    transverse: bool = False
    dense: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.times)

    @property
    def points(self) -> list[SphereCotangentPoint]:
        return [SphereCotangentPoint.from_array(s[:8], check=False) for s in self.states]

    def state_at(self, t: float) -> np.ndarray:
        """Dense-output state at time ``t`` (projected onto the constraints)."""
        if t <= self.times[0]:
            return self.states[0].copy()
        if t >= self.times[-1]:
            return self.states[-1].copy()
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        w = np.asarray(self.dense[k](t), dtype=float)
        w[:8] = project_array(w[:8])
        return w

    def q_values(self) -> np.ndarray:
        return np.array([q_value(s[:8], self.params.c) for s in self.states])

    def l_values(self) -> np.ndarray:
        s = self.states
        return s[:, 2] * s[:, 5] - s[:, 1] * s[:, 6]

    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.q_values() - 0.5)))

    def constraint_drift(self) -> float:
        xi, eta = self.states[:, :4], self.states[:, 4:8]
        return float(max(np.max(np.abs(np.einsum("ij,ij->i", xi, eta))),
                         np.max(np.abs(np.linalg.norm(xi, axis=1) - 1.0))))

    def table_rows(self):
        qs, ls = self.q_values(), self.l_values()
        for t, s, q, l in zip(self.times, self.states, qs, ls):
            yield [t, *s[:8], q, l]

    def export(self, path) -> str:
        header = ["t", "xi0", "xi1", "xi2", "xi3", "eta0", "eta1", "eta2", "eta3", "Q", "L"]
        return write_table(path, header, self.table_rows())


def _make_rhs(c: float, reverse: bool, transverse: bool):
    sign = -1.0 if reverse else 1.0
    base = _augmented_field if transverse else field_array
    return lambda t, w: sign * base(w, c)


def _project_state(w: np.ndarray) -> np.ndarray:
    out = w.copy()
    out[:8] = project_array(w[:8])
    return out


def iterate_steps(w0: np.ndarray, params: ProblemParams, cfg: IntegratorConfig,
                  t_end: float, reverse: bool = False, transverse: bool = False):
    """Yield ``(t, state, dense)`` for each accepted step from ``t = 0`` to ``t_end``."""
    _require_exact_mode(params)
    rhs = _make_rhs(params.c, reverse, transverse)
    first = min(cfg.step, t_end)
    solver = DOP853(rhs, 0.0, np.array(w0, dtype=float), t_end, rtol=cfg.tol_rel,
                    atol=cfg.tol_abs, first_step=first, max_step=cfg.max_step)
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise StepFailure(f"integration failed at t={solver.t:.6g}: {message}")
        dense = solver.dense_output()
        if cfg.projection:
            solver.y = _project_state(solver.y)
            solver.f = rhs(solver.t, solver.y)
        yield solver.t, solver.y.copy(), dense


def _initial_state(s, transverse: bool) -> np.ndarray:
    z = s.as_array() if isinstance(s, SphereCotangentPoint) else np.asarray(s, dtype=float)
    if transverse and z.size == 8:
        z = np.concatenate([z, [0.0, 1.0]])
    return z


def integrate(s, params: ProblemParams, cfg: IntegratorConfig | None = None,
              duration: float | None = None, reverse: bool = False,
              transverse: bool = False,
              stop: Callable[[Trajectory], bool] | None = None) -> Trajectory:
    """Integrate the regularized flow from ``s`` for ``duration`` (default ``cfg.max_time``).

    ``stop`` is called after each accepted step and may end the integration early.
    A zero duration returns the single sample ``(0, s)``.
    """
    cfg = cfg or IntegratorConfig()
    duration = cfg.max_time if duration is None else float(duration)
    if duration < 0:
        raise ValueError("duration must be non-negative; use reverse=True for the backward flow")
    w0 = _initial_state(s, transverse)
    traj = Trajectory(times=np.array([0.0]), states=w0[None, :].copy(), params=params,
                      reverse=reverse, transverse=w0.size == 10)
    if duration == 0.0:
        return traj
    times, states = [0.0], [w0.copy()]
    for t, w, dense in iterate_steps(w0, params, cfg, duration, reverse, traj.transverse):
        times.append(t)
        states.append(w)
        traj.dense.append(dense)
        if stop is not None:
            traj.times = np.array(times)
            traj.states = np.array(states)
            if stop(traj):
                break
    traj.times = np.array(times)
    traj.states = np.array(states)
    return traj


# --- open-book angle and section crossings ---

def _angle_components(w: np.ndarray, transverse: bool):
    if transverse:
        return w[8], w[9]
    return w[3], w[7]


def page_angle_array(w: np.ndarray, transverse: bool = False,
                     binding_guard: float = BINDING_GUARD) -> float:
    x, y = _angle_components(w, transverse)
    if math.hypot(x, y) < binding_guard:
        raise BindingError(f"|(xi3, eta3)| = {math.hypot(x, y):.3e} is below the binding guard")
    return math.atan2(y, x) % TWO_PI


def angular_speed_array(w: np.ndarray, c: float, transverse: bool = False,
                        reverse: bool = False) -> float:
    """``d theta/dt`` of the open-book angle along the (possibly reversed) flow."""
    a, b, f2 = transverse_coefficients(w[:8], c)
    x, y = _angle_components(w, transverse)
    r2 = x * x + y * y
    speed = (a * x * x + 2.0 * b * x * y + f2 * y * y) / r2
    return -speed if reverse else speed


def _wrap(angle: float) -> float:
    return (angle + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Crossing:
    t: float
    state: np.ndarray
    orientation: int  # +1 when the angle increases through the section

    @property
    def point(self) -> SphereCotangentPoint:
        return SphereCotangentPoint.from_array(self.state[:8], check=False)


def _refine(g: Callable[[float], float], t_lo: float, t_hi: float, g_lo: float, g_hi: float):
    """Bisection to shrink the bracket, then secant to polish."""
    for _ in range(6):
        t_mid = 0.5 * (t_lo + t_hi)
        g_mid = g(t_mid)
        if g_mid == 0.0:
            return t_mid
        if (g_mid > 0) == (g_hi > 0):
            t_hi, g_hi = t_mid, g_mid
        else:
            t_lo, g_lo = t_mid, g_mid
    t0, t1, g0, g1 = t_lo, t_hi, g_lo, g_hi
    for _ in range(60):
        if g1 == g0:
            break
        t2 = t1 - g1 * (t1 - t0) / (g1 - g0)
        if not (min(t_lo, t_hi) <= t2 <= max(t_lo, t_hi)):
            t2 = 0.5 * (t_lo + t_hi)
        g2 = g(t2)
        if (g2 > 0) == (g_hi > 0):
            t_hi, g_hi = t2, g2
        else:
            t_lo, g_lo = t2, g2
        t0, g0, t1, g1 = t1, g1, t2, g2
        if abs(g2) < 1e-13:
            return t2
    return t1 if abs(g1) <= abs(g0) else t0


def crossings_in_step(traj: Trajectory, k: int, theta0: float, positive_only: bool = True,
                      binding_guard: float = BINDING_GUARD) -> list[Crossing]:
    """Crossings of the page ``theta0`` inside the step ``[times[k], times[k+1]]``."""
    tr = traj.transverse
    w_lo, w_hi = traj.states[k], traj.states[k + 1]
    g_lo = _wrap(page_angle_array(w_lo, tr, binding_guard) - theta0)
    g_hi = _wrap(page_angle_array(w_hi, tr, binding_guard) - theta0)
    if abs(g_lo) > 0.5 * math.pi or abs(g_hi) > 0.5 * math.pi:
        return []
    if g_lo == 0.0 and k > 0:
        return []  # counted as the end of the previous step
    if not ((g_lo <= 0.0 < g_hi) or (g_lo >= 0.0 > g_hi) or (g_hi == 0.0 and g_lo != 0.0)):
        return []
    orientation = 1 if g_hi > g_lo else -1
    if positive_only and orientation < 0:
        return []
    dense = traj.dense[k]

    def g(t):
        return _wrap(page_angle_array(np.asarray(dense(t)), tr, binding_guard) - theta0)

    t_lo, t_hi = traj.times[k], traj.times[k + 1]
    if g_lo == 0.0:
        t_star = t_lo
    elif g_hi == 0.0:
        t_star = t_hi
    else:
        t_star = _refine(g, t_lo, t_hi, g_lo, g_hi)
    state = np.asarray(dense(t_star), dtype=float)
    state[:8] = project_array(state[:8])
    return [Crossing(float(t_star), state, orientation)]


def detect_section_crossing(traj: Trajectory, theta0: float, positive_only: bool = True,
                            binding_guard: float = BINDING_GUARD,
                            skip_initial: bool = True) -> list[Crossing]:
    """All crossings of the open-book page ``theta0`` along ``traj``.

    A crossing is reported where ``theta - theta0`` changes sign between consecutive
    samples; the crossing time is polished on the dense output.  With ``positive_only``
    only crossings where the angle increases are kept.  A trajectory that starts on
    the page does not report ``t = 0`` when ``skip_initial`` is set.
    """
    for w in traj.states:
        page_angle_array(w, traj.transverse, binding_guard)
    found = []
    for k in range(len(traj) - 1):
        for cr in crossings_in_step(traj, k, theta0, positive_only, binding_guard):
            if skip_initial and cr.t - traj.times[0] <= 1e-9:
                continue
            found.append(cr)
    return found


def first_crossing(s, params: ProblemParams, theta0: float, cfg: IntegratorConfig | None = None,
                   transverse: bool = False, binding_guard: float = BINDING_GUARD,
                   reverse: bool = False, min_time: float = 0.0):
    """Integrate until the first positively oriented crossing of the page ``theta0``.

    Returns ``(crossing, trajectory)``.
    """
    cfg = cfg or IntegratorConfig()
    hits: list[Crossing] = []

    def stop(traj: Trajectory) -> bool:
        k = len(traj) - 2
        for cr in crossings_in_step(traj, k, theta0, True, binding_guard):
            if cr.t > min_time and cr.t > 1e-9:
                hits.append(cr)
                return True
        return False

    traj = integrate(s, params, cfg, cfg.max_time, reverse=reverse, transverse=transverse,
                     stop=stop)
    if not hits:
        raise HorizonExceeded(f"no crossing of the page {theta0:.6g} before t={cfg.max_time}")
    return hits[0], traj
