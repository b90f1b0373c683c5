"""Coordinates and Hamiltonians for the rotating Kepler problem and its Moser regularization.

Conventions used throughout the package:

* Units: gravitational constant and total mass are 1.  In the rotating frame the
  primaries sit at ``q_E = (-mu, 0, 0)`` and ``q_M = (1 - mu, 0, 0)`` with masses
  ``1 - mu`` and ``mu``.
* Cartesian phase space carries ``omega = sum dp ^ dq`` so that Hamilton's equations
  take the usual form ``qdot = dH/dp``, ``pdot = -dH/dq``.
* ``T*S^3`` is embedded in ``R^4 + R^4`` as ``{|xi| = 1, <xi, eta> = 0}`` with
  ``omega = sum dxi ^ deta``.  With ``i_X omega = -dH`` this gives
  ``xidot = -dQ/deta`` and ``etadot = dQ/dxi``.
* The Moser map sends ``(q, p)`` to ``x = p`` (a point of ``R^3``, compactified by
  inverse stereographic projection from the north pole ``N = (1, 0, 0, 0)``) and
  ``y = q - q_primary`` (the cotangent fibre coordinate).  This is a symplectic
  map between the two conventions above, and it identifies ``L = q1 p2 - q2 p1``
  with ``xi2 eta1 - xi1 eta2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORTH_POLE = np.array([1.0, 0.0, 0.0, 0.0])
TOL_CONSTRAINT = 1e-9
COLLISION_TOL = 1e-14
OPEN_BOOK_C_MAX = -1.5


class CollisionError(ValueError):
    """Raised when a Cartesian position coincides with a primary."""


class PoleError(ValueError):
    """Raised when inverting the Moser map at the north pole (the collision fibre)."""


class ConstraintError(ValueError):
    """Raised when a point is too far from ``T*S^3`` to be projected silently."""


class UnsupportedModeError(NotImplementedError):
    """Raised for mass ratios without an exact regularized Hamiltonian."""


@dataclass(frozen=True)
class ProblemParams:
    """Jacobi constant, mass ratio and which primary's regularized component is studied."""

    c: float
    mu: float = 0.0
    primary: str = "earth"

    def __post_init__(self):
        if not 0.0 <= self.mu < 1.0:
            raise ValueError(f"mass ratio mu must lie in [0, 1), got {self.mu}")
        if self.primary not in ("earth", "moon"):
            raise ValueError(f"primary must be 'earth' or 'moon', got {self.primary!r}")
        if self.primary == "moon" and self.mu == 0.0:
            raise ValueError("the moon has zero mass when mu = 0; select the earth")

    @property
    def q_earth(self) -> np.ndarray:
        return np.array([-self.mu, 0.0, 0.0])

    @property
    def q_moon(self) -> np.ndarray:
        return np.array([1.0 - self.mu, 0.0, 0.0])

    @property
    def m_earth(self) -> float:
        return 1.0 - self.mu

    @property
    def m_moon(self) -> float:
        return self.mu

    @property
    def q_primary(self) -> np.ndarray:
        return self.q_earth if self.primary == "earth" else self.q_moon

    @property
    def open_book_valid(self) -> bool:
        """Whether the geodesic open book is known to support the flow (mu = 0, c < -3/2)."""
        return self.mu == 0.0 and self.c < OPEN_BOOK_C_MAX


@dataclass(frozen=True)
class CartesianState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(3))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))


@dataclass(frozen=True)
class SphereCotangentPoint:
    """A point ``(xi, eta)`` of ``T*S^3``.

    Construction checks the constraints at ``TOL_CONSTRAINT`` and then projects
    exactly onto them, so stored points satisfy them to rounding error.
    """

    xi: np.ndarray
    eta: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(4)
        eta = np.asarray(self.eta, dtype=float).reshape(4)
        if self.check:
            violation = constraint_violation(xi, eta)
            if violation > TOL_CONSTRAINT:
                raise ConstraintError(f"point is {violation:.3e} off T*S^3")
        xi, eta = project_constraints(xi, eta)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.xi, self.eta])

    @classmethod
    def from_array(cls, z, check: bool = True) -> "SphereCotangentPoint":
        z = np.asarray(z, dtype=float)
        return cls(z[:4], z[4:], check=check)


def constraint_violation(xi, eta) -> float:
    return max(abs(float(np.dot(xi, eta))), abs(float(np.linalg.norm(xi)) - 1.0))


def project_constraints(xi, eta):
    """Renormalize ``xi`` and remove the normal component of ``eta``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    xi = xi / np.linalg.norm(xi)
    eta = eta - np.dot(xi, eta) * xi
    return xi, eta


def project_array(z: np.ndarray) -> np.ndarray:
    xi, eta = project_constraints(z[:4], z[4:])
    return np.concatenate([xi, eta])


# --- unregularized problem ---

def kepler_energy(s: CartesianState) -> float:
    """``K = |p|^2 / 2 - 1/|q|`` for a unit mass at the origin."""
    r = float(np.linalg.norm(s.q))
    if r < COLLISION_TOL:
        raise CollisionError("q is at the primary")
    return 0.5 * float(s.p @ s.p) - 1.0 / r


def angular_momentum_cartesian(s: CartesianState) -> float:
    return float(s.q[0] * s.p[1] - s.q[1] * s.p[0])


def hamiltonian_unregularized(s: CartesianState, params: ProblemParams) -> float:
    """Jacobi Hamiltonian of the circular restricted three-body problem in the rotating frame.

    For ``mu = 0`` this is ``K + L`` with the earth at the origin.
    """
    potential = 0.0
    for qk, mk in ((params.q_earth, params.m_earth), (params.q_moon, params.m_moon)):
        if mk == 0.0:
            continue
        r = float(np.linalg.norm(s.q - qk))
        if r < COLLISION_TOL:
            raise CollisionError(f"q coincides with the primary at {qk}")
        potential -= mk / r
    return 0.5 * float(s.p @ s.p) + potential + angular_momentum_cartesian(s)


def cartesian_vector_field(s: CartesianState, params: ProblemParams):
    """``(qdot, pdot)`` of the unregularized Jacobi Hamiltonian."""
    q, p = s.q, s.p
    qdot = p + np.array([-q[1], q[0], 0.0])
    pdot = np.array([-p[1], p[0], 0.0])
    for qk, mk in ((params.q_earth, params.m_earth), (params.q_moon, params.m_moon)):
        if mk == 0.0:
            continue
        d = q - qk
        r = float(np.linalg.norm(d))
        if r < COLLISION_TOL:
            raise CollisionError(f"q coincides with the primary at {qk}")
        pdot = pdot - mk * d / r**3
    return qdot, pdot


# --- regularized problem ---

def angular_momentum(point: SphereCotangentPoint) -> float:
    xi, eta = point.xi, point.eta
    return float(xi[2] * eta[1] - xi[1] * eta[2])


def f_factor(xi, eta, c: float) -> float:
    """The factor ``f`` of the regularized rotating Kepler Hamiltonian; ``f(N, .) = 1``."""
    return 1.0 + (1.0 - xi[0]) * (-c - 0.5 + xi[2] * eta[1] - xi[1] * eta[2])


def _require_exact_mode(params: ProblemParams):
    if params.mu != 0.0:
        raise UnsupportedModeError(
            "the regularized Hamiltonian is only available in closed form for mu = 0; "
            "use the Cartesian flow composed with moser_map for mu > 0"
        )


def regularized_hamiltonian(point: SphereCotangentPoint, params: ProblemParams) -> float:
    """``Q = f^2 |eta|^2 / 2``; the energy level ``H = c`` becomes ``Q = 1/2``."""
    _require_exact_mode(params)
    f = f_factor(point.xi, point.eta, params.c)
    return 0.5 * f * f * float(point.eta @ point.eta)


def q_value(z: np.ndarray, c: float) -> float:
    """``Q`` on a flat 8-vector ``(xi, eta)``."""
    f = f_factor(z[:4], z[4:], c)
    eta = z[4:]
    return 0.5 * f * f * float(eta @ eta)


def _f_gradient(z, c):
    xi, eta = z[:4], z[4:]
    g = -c - 0.5 + xi[2] * eta[1] - xi[1] * eta[2]
    s = 1.0 - xi[0]
    grad_g = np.array([0.0, -eta[2], eta[1], 0.0, 0.0, xi[2], -xi[1], 0.0])
    grad_f = s * grad_g
    grad_f[0] = -g
    return 1.0 + s * g, grad_f, grad_g, s


def q_gradient(z: np.ndarray, c: float) -> np.ndarray:
    """Ambient gradient of ``Q`` in ``R^8``."""
    f, grad_f, _, _ = _f_gradient(z, c)
    eta = z[4:]
    n2 = float(eta @ eta)
    grad = f * n2 * grad_f
    grad[4:] += f * f * eta
    return grad


_HESS_G = np.zeros((8, 8))
_HESS_G[2, 5] = _HESS_G[5, 2] = 1.0
_HESS_G[1, 6] = _HESS_G[6, 1] = -1.0


def q_hessian(z: np.ndarray, c: float) -> np.ndarray:
    """Ambient Hessian of ``Q`` in ``R^8``."""
    f, w, grad_g, s = _f_gradient(z, c)
    eta_pad = np.zeros(8)
    eta_pad[4:] = z[4:]
    n2 = float(z[4:] @ z[4:])
    e0 = np.zeros(8)
    e0[0] = 1.0
    hess_f = -(np.outer(e0, grad_g) + np.outer(grad_g, e0)) + s * _HESS_G
    hess = n2 * (np.outer(w, w) + f * hess_f)
    hess += 2.0 * f * (np.outer(w, eta_pad) + np.outer(eta_pad, w))
    hess[4:, 4:] += f * f * np.eye(4)
    return hess


# --- Moser map ---

def moser_map(s: CartesianState, params: ProblemParams) -> SphereCotangentPoint:
    """Switch map followed by the cotangent lift of inverse stereographic projection."""
    x = s.p
    y = s.q - params.q_primary
    if float(np.linalg.norm(y)) < COLLISION_TOL:
        raise CollisionError("q is at the selected primary; the image lies in the collision fibre")
    x2 = float(x @ x)
    xy = float(x @ y)
    denom = x2 + 1.0
    xi = np.empty(4)
    xi[0] = (x2 - 1.0) / denom
    xi[1:] = 2.0 * x / denom
    eta = np.empty(4)
    eta[0] = xy
    eta[1:] = 0.5 * denom * y - xy * x
    return SphereCotangentPoint(xi, eta)


def inverse_moser_map(point: SphereCotangentPoint, params: ProblemParams) -> CartesianState:
    xi, eta = point.xi, point.eta
    s = 1.0 - xi[0]
    if s < 1e-15:
        raise PoleError("xi is the north pole: the point is a collision and has no Cartesian image")
    x = xi[1:] / s
    y = s * eta[1:] + eta[0] * xi[1:]
    return CartesianState(q=y + params.q_primary, p=x)


# --- sampling helpers ---

def state_on_level(q, direction, params: ProblemParams) -> CartesianState:
    """Scale the momentum direction so that ``H(q, p) = c``.

    Solves ``|p|^2/2 + |p| l + V(q) = c`` for the positive root, where ``l`` is the
    rotation term per unit momentum.
    """
    q = np.asarray(q, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    ell = q[0] * u[1] - q[1] * u[0]
    v = hamiltonian_unregularized(CartesianState(q, np.zeros(3)), params)
    disc = ell * ell + 2.0 * (params.c - v)
    if disc < 0.0:
        raise ValueError("no momentum reaches the energy level from this position and direction")
    speed = -ell + np.sqrt(disc)
    if speed <= 0.0:
        raise ValueError("the energy level is not reachable with positive speed along this direction")
    return CartesianState(q, speed * u)


def random_states_on_level(rng: np.random.Generator, params: ProblemParams, n: int,
                           r_range=(0.05, 0.45), planar: bool = False) -> list[CartesianState]:
    """Random states on ``{H = c}`` with ``|q - q_primary|`` drawn from ``r_range``."""
    out = []
    while len(out) < n:
        d = rng.normal(size=3)
        u = rng.normal(size=3)
        if planar:
            d[2] = u[2] = 0.0
        d /= np.linalg.norm(d)
        q = params.q_primary + rng.uniform(*r_range) * d
        try:
            out.append(state_on_level(q, u, params))
        except ValueError:
            continue
    return out


def point_on_level(xi, direction, c: float) -> SphereCotangentPoint:
    """Scale a covector direction at ``xi`` so that ``f |eta| = 1`` (hence ``Q = 1/2``).

    ``f |eta|`` is quadratic in the scale ``s`` of ``eta = s e``; the smallest positive
    root is taken.
    """
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    e = np.asarray(direction, dtype=float)
    e = e - (e @ xi) * xi
    e = e / np.linalg.norm(e)
    a = (1.0 - xi[0]) * (xi[2] * e[1] - xi[1] * e[2])
    b = 1.0 + (1.0 - xi[0]) * (-c - 0.5)
    roots = np.roots([a, b, -1.0]) if abs(a) > 1e-300 else np.array([1.0 / b])
    roots = np.real(roots[np.abs(np.imag(roots)) < 1e-12])
    roots = roots[roots > 0.0]
    if roots.size == 0:
        raise ValueError("no positive scale puts this direction on the level Q = 1/2")
    s = float(roots.min())
    return SphereCotangentPoint(xi, s * e)
