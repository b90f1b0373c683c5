"""Symplectic paths, Robbin-Salamon and Conley-Zehnder indices, mean index, definiteness fit.

Conventions: ``J0 = [[0, -I], [I, 0]]``, ``omega0(u, v) = <J0 u, v>``, and a path
solves ``M' = J0 S(t) M`` with ``S`` symmetric, so positive-definite ``S`` rotates
positively.  Crossing forms are ``v -> <v, S v>`` on the relevant kernel.  The
Robbin-Salamon index is half-integral and is kept as a doubled integer
internally; public values are ``Fraction``s and are never rounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar
from scipy.stats import linregress

from .flow import Trajectory, field_array, field_jacobian
from .tables import write_table

FRAME_ID = "quaternion-right"
SYMPLECTIC_DRIFT_TOL = 1e-6
CROSSING_TOL = 1e-8
KERNEL_TOL = 1e-5
DEGENERACY_TOL = 1e-7
MAX_JITTER_RETRIES = 3
SUBGRID = 33


class SymplecticDriftError(RuntimeError):
    pass


class NonRegularCrossingError(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


def standard_j(n: int) -> np.ndarray:
    z, i = np.zeros((n, n)), np.eye(n)
    return np.block([[z, -i], [i, z]])


def symplectic_inverse(m: np.ndarray) -> np.ndarray:
    j = standard_j(m.shape[0] // 2)
    return -j @ m.T @ j


def symplectic_defect(m: np.ndarray) -> float:
    j = standard_j(m.shape[0] // 2)
    return float(np.linalg.norm(m.T @ j @ m - j))


def rotation_block(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def block_path_matrix(blocks: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Assemble ``n`` 2x2 blocks acting on ``(q_j, p_j)`` into the ``(q, p)`` ordering."""
    m = np.zeros((2 * n, 2 * n))
    for j, b in enumerate(blocks):
        idx = [j, n + j]
        m[np.ix_(idx, idx)] = b
    return m


# --- paths ---

@dataclass
class SymplecticPath:
    """A path ``t -> M(t)`` of ``2n x 2n`` symplectic matrices on ``[t0, t1]``.

    ``matrix`` is evaluated on demand (dense output or closed form).  When
    ``generator`` is missing, ``S(t)`` comes from a central difference of ``M``.
    ``density`` is the number of scan samples per unit time used to locate crossings.
    """

    matrix: Callable[[float], np.ndarray]
    t0: float
    t1: float
    generator: Callable[[float], np.ndarray] | None = None
    frame: str = "standard"
    density: float = 200.0
    min_samples: int = 400

    def __post_init__(self):
        if not self.t1 >= self.t0:
            raise ValueError("path interval must satisfy t0 <= t1")

    @property
    def n(self) -> int:
        return self.matrix(self.t0).shape[0] // 2

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    def grid(self, offset: float = 0.0) -> np.ndarray:
        num = max(self.min_samples, int(math.ceil(self.density * self.length)) + 1)
        ts = np.linspace(self.t0, self.t1, num)
        if offset:
            h = ts[1] - ts[0] if num > 1 else 0.0
            ts[1:-1] += offset * h
        return ts

    def generator_at(self, t: float) -> np.ndarray:
        if self.generator is not None:
            s = np.asarray(self.generator(t), dtype=float)
        else:
            h = 1e-6 * max(1.0, abs(t))
            a, b = max(self.t0, t - h), min(self.t1, t + h)
            mdot = (self.matrix(b) - self.matrix(a)) / (b - a)
            s = -standard_j(self.n) @ mdot @ symplectic_inverse(self.matrix(t))
        return 0.5 * (s + s.T)

    def symplectic_drift(self, num: int = 64) -> float:
        return max(symplectic_defect(self.matrix(t)) for t in np.linspace(self.t0, self.t1, num))

    def check(self, tol: float = SYMPLECTIC_DRIFT_TOL, num: int = 64):
        """Raise unless ``M(t0) = I`` and the symplectic defect stays below ``tol``."""
        m0 = self.matrix(self.t0)
        if np.linalg.norm(m0 - np.eye(m0.shape[0])) > tol:
            raise ValueError("path must start at the identity")
        drift = self.symplectic_drift(num)
        if drift > tol:
            raise SymplecticDriftError(f"symplectic defect {drift:.3e} exceeds {tol:.1e}")
        return drift

    def restrict(self, a: float, b: float) -> "SymplecticPath":
        """The sub-path on ``[a, b]``, renormalized to start at the identity."""
        base_inv = symplectic_inverse(self.matrix(a))
        return SymplecticPath(lambda t: self.matrix(t) @ base_inv, a, b,
                              self.generator, self.frame, self.density, self.min_samples)

    def concatenate(self, other: "SymplecticPath") -> "SymplecticPath":
        """``self`` followed by ``other`` (which starts at the identity), as one path."""
        end = self.matrix(self.t1)
        shift = self.t1 - other.t0

        def mat(t):
            return self.matrix(t) if t <= self.t1 else other.matrix(t - shift) @ end

        def gen(t):
            return self.generator_at(t) if t <= self.t1 else other.generator_at(t - shift)

        return SymplecticPath(mat, self.t0, other.t1 + shift, gen, self.frame,
                              max(self.density, other.density), self.min_samples + other.min_samples)

    def iterate(self, k: int) -> "SymplecticPath":
        """``Phi^k(t) = Phi(t - jT) Phi(T)^j`` on ``[t0, t0 + kT]``."""
        if k < 1:
            raise ValueError("iterate count must be positive")
        period = self.length
        end = self.matrix(self.t1)
        powers = [np.linalg.matrix_power(end, j) for j in range(k + 1)]

        def split(t):
            j = min(int((t - self.t0) // period), k - 1) if period > 0 else 0
            return j, t - j * period

        def mat(t):
            j, s = split(t)
            return self.matrix(s) @ powers[j]

        def gen(t):
            return self.generator_at(split(t)[1])

        return SymplecticPath(mat, self.t0, self.t0 + k * period, gen, self.frame,
                              self.density, self.min_samples * k)

    def reframe(self, loop: Callable[[float], np.ndarray],
                loop_generator: Callable[[float], np.ndarray] | None = None,
                frame: str | None = None) -> "SymplecticPath":
        """Change of trivialization ``M'(t) = L(t) M(t)`` by a loop ``L`` with ``L(t0) = I``."""
        def gen(t):
            if loop_generator is None:
                return None
            lt = loop(t)
            return loop_generator(t) + symplectic_inverse(lt).T @ self.generator_at(t) @ symplectic_inverse(lt)

        return SymplecticPath(lambda t: loop(t) @ self.matrix(t), self.t0, self.t1,
                              gen if loop_generator is not None else None,
                              frame or f"{self.frame}+loop", self.density, self.min_samples)


def path_from_generator_blocks(omegas: Sequence[float], hyperbolic: Sequence[float] = (),
                               conj: np.ndarray | None = None, t1: float = 1.0) -> SymplecticPath:
    """``P exp(J0 D t) P^-1`` with rotation rates ``omegas`` and hyperbolic rates ``hyperbolic``.

    Every block is a 2x2 ``(q_j, p_j)`` pair; ``P`` is a symplectic conjugation.
    """
    n = len(omegas) + len(hyperbolic)
    d = np.zeros((2 * n, 2 * n))
    for j, w in enumerate(omegas):
        d[j, j] = d[n + j, n + j] = w
    for i, a in enumerate(hyperbolic):
        j = len(omegas) + i
        d[j, n + j] = d[n + j, j] = a
    p = np.eye(2 * n) if conj is None else np.asarray(conj, dtype=float)
    pinv = symplectic_inverse(p)
    jd = standard_j(n) @ d
    from scipy.linalg import expm

    gen_const = -standard_j(n) @ p @ jd @ pinv
    gen_const = 0.5 * (gen_const + gen_const.T)
    return SymplecticPath(lambda t: p @ expm(jd * t) @ pinv, 0.0, t1, lambda t: gen_const)


def random_symplectic(rng: np.random.Generator, n: int, scale: float = 0.5) -> np.ndarray:
    from scipy.linalg import expm

    s = rng.normal(scale=scale, size=(2 * n, 2 * n))
    return expm(standard_j(n) @ (s + s.T) / 2.0)


# --- crossings ---

@dataclass(frozen=True)
class CrossingInfo:
    t: float
    signature: int
    dim: int
    endpoint: bool


def _kernel_matrix(path: SymplecticPath, t: float, mode: str, l0, l1) -> np.ndarray:
    m = path.matrix(t)
    if mode == "graph":
        return m - np.eye(m.shape[0])
    return l1.T @ standard_j(path.n) @ m @ l0


def _sigma_min(path, t, mode, l0, l1) -> float:
    return float(np.linalg.svd(_kernel_matrix(path, t, mode, l0, l1), compute_uv=False)[-1])


def _crossing_form(path, t, mode, l0, l1) -> tuple[np.ndarray, int]:
    k = _kernel_matrix(path, t, mode, l0, l1)
    scale = max(1.0, float(np.linalg.norm(path.matrix(t), 2)))
    _, sv, vh = np.linalg.svd(k)
    basis = vh[sv < KERNEL_TOL * scale].T
    if basis.shape[1] == 0:
        return np.zeros((0, 0)), 0
    if mode == "lagrangian":
        basis = path.matrix(t) @ l0 @ basis
    s = path.generator_at(t)
    gamma = basis.T @ s @ basis
    return 0.5 * (gamma + gamma.T), basis.shape[1]


def _signature(form: np.ndarray, allow_degenerate: bool) -> tuple[int, bool]:
    if form.size == 0:
        return 0, False
    ev = np.linalg.eigvalsh(form)
    thresh = DEGENERACY_TOL * max(1.0, float(np.max(np.abs(ev))))
    degenerate = bool(np.any(np.abs(ev) <= thresh))
    if degenerate and not allow_degenerate:
        return 0, True
    return int(np.sum(ev > thresh) - np.sum(ev < -thresh)), degenerate


def _regular_signature(path, t, mode, l0, l1, seed: int) -> tuple[int, int]:
    form, dim = _crossing_form(path, t, mode, l0, l1)
    sig, degenerate = _signature(form, allow_degenerate=False)
    rng = np.random.default_rng(seed)
    tries = 0
    while degenerate and tries < MAX_JITTER_RETRIES:
        tries += 1
        tj = t + rng.uniform(-1.0, 1.0) * 1e-9 * max(1.0, abs(t))
        form, dim = _crossing_form(path, tj, mode, l0, l1)
        sig, degenerate = _signature(form, allow_degenerate=False)
    if degenerate:
        raise NonRegularCrossingError(f"degenerate crossing form at t={t:.12g} after {tries} retries")
    return sig, dim


def _lagrangians(n: int, mode: str, lagrangians):
    if mode == "graph":
        return None, None
    if mode != "lagrangian":
        raise ValueError(f"unknown index mode {mode!r}")
    if lagrangians is None:
        vert = np.vstack([np.zeros((n, n)), np.eye(n)])
        return vert, vert
    l0, l1 = (np.asarray(x, dtype=float) for x in lagrangians)
    return l0, l1


def find_crossings(path: SymplecticPath, mode: str = "graph", lagrangians=None,
                   offset: float = 0.0) -> list[CrossingInfo]:
    """Crossings of ``graph(M) with the diagonal`` or of ``M L0 with L1``.

    Interior crossings are strict local minima of the smallest singular value of
    the kernel matrix on the scan grid (resampled finer around each dip), polished by golden-section search (the
    minimum is a V-shaped kink) and
    accepted when that value is below ``CROSSING_TOL`` (relative to ``|M|``).
    """
    l0, l1 = _lagrangians(path.n, mode, lagrangians)
    ts = path.grid(offset)
    sig = np.array([_sigma_min(path, t, mode, l0, l1) for t in ts])
    out: list[CrossingInfo] = []
    scale0 = max(1.0, float(np.linalg.norm(path.matrix(ts[0]), 2)))
    scale1 = max(1.0, float(np.linalg.norm(path.matrix(ts[-1]), 2)))
    start_hit = sig[0] < KERNEL_TOL * scale0
    end_hit = sig[-1] < KERNEL_TOL * scale1 and len(ts) > 1
    if start_hit:
        form, dim = _crossing_form(path, ts[0], mode, l0, l1)
        out.append(CrossingInfo(ts[0], _signature(form, True)[0], dim, True))
    h = ts[1] - ts[0] if len(ts) > 1 else 0.0
    sigma = lambda t: _sigma_min(path, t, mode, l0, l1)
    found: list[float] = []
    for i in range(1, len(ts) - 1):
        if not (sig[i] < sig[i - 1] and sig[i] <= sig[i + 1]):
            continue
        # a sub-grid separates crossings closer than one scan cell
        sub = np.linspace(ts[i - 1], ts[i + 1], SUBGRID)
        ssub = np.array([sigma(t) for t in sub])
        for j in range(1, SUBGRID - 1):
            if not (ssub[j] < ssub[j - 1] and ssub[j] <= ssub[j + 1]):
                continue
            res = minimize_scalar(sigma, bracket=(sub[j - 1], sub[j], sub[j + 1]), method="golden",
                                  options={"xtol": 1e-15})
            t_star = float(res.x)
            if not sub[j - 1] <= t_star <= sub[j + 1]:
                continue
            scale = max(1.0, float(np.linalg.norm(path.matrix(t_star), 2)))
            if res.fun > CROSSING_TOL * scale:
                continue
            if (start_hit and t_star - ts[0] < 0.5 * h) or (end_hit and ts[-1] - t_star < 0.5 * h):
                continue
            if any(abs(t - t_star) < 1e-9 * max(1.0, abs(t_star)) for t in found):
                continue
            found.append(t_star)
    for k, t_star in enumerate(sorted(found)):
        sign, dim = _regular_signature(path, t_star, mode, l0, l1, seed=k)
        out.append(CrossingInfo(t_star, sign, dim, False))
    if end_hit:
        form, dim = _crossing_form(path, ts[-1], mode, l0, l1)
        out.append(CrossingInfo(ts[-1], _signature(form, True)[0], dim, True))
    return out


def doubled_rs_from_crossings(crossings: Sequence[CrossingInfo]) -> int:
    return sum(c.signature if c.endpoint else 2 * c.signature for c in crossings)


def rs_index(path: SymplecticPath, mode: str = "graph", lagrangians=None) -> Fraction:
    """Robbin-Salamon index by crossing forms, endpoints half-weighted.

    ``mode="graph"`` uses ``graph(M)`` against the diagonal; ``mode="lagrangian"``
    uses ``M(t) L0`` against ``L1`` (both the vertical ``span(p)`` by default).
    """
    return Fraction(doubled_rs_from_crossings(find_crossings(path, mode, lagrangians)), 2)


def cz_from_rs(mu_rs: Fraction, n: int, mode: str) -> Fraction:
    """Graph mode: the Conley-Zehnder index is the graph index itself.  Lagrangian mode: ``mu_RS - n/2``."""
    return mu_rs if mode == "graph" else mu_rs - Fraction(n, 2)


# --- mean index ---

def rotation_angle(m: np.ndarray, tol: float = 1e-7) -> float:
    """Angle of the Salamon-Zehnder rotation function ``rho(M)``, in ``(-pi, pi]``.

    ``rho = (-1)^(m0/2) prod lambda^(m+(lambda))`` over unit-circle eigenvalues
    ``lambda != +-1`` with Krein-positive multiplicity ``m+``; ``m0`` counts the
    real negative eigenvalues.
    """
    n2 = m.shape[0]
    j = standard_j(n2 // 2)
    w, v = np.linalg.eig(m)
    angle = 0.0
    neg = int(np.sum((np.abs(w.imag) <= tol) & (w.real < 0)))
    angle += 0.5 * math.pi * neg
    done = np.zeros(len(w), dtype=bool)
    for i, lam in enumerate(w):
        if done[i] or abs(lam.imag) <= tol or abs(abs(lam) - 1.0) > 1e-6:
            continue
        cluster = np.where((np.abs(w - lam) < 1e-6) & ~done)[0]
        done[cluster] = True
        vec = v[:, cluster]
        krein = 1j * vec.conj().T @ j.T @ vec
        ev = np.linalg.eigvalsh(0.5 * (krein + krein.conj().T))
        angle += int(np.sum(ev > 0)) * float(np.angle(lam))
    return math.atan2(math.sin(angle), math.cos(angle))


def mean_index(path: SymplecticPath, k: int = 1) -> float:
    """Continuous lift of ``arg rho(M(t))`` over the path (or its ``k``-th iterate), over ``pi``."""
    target = path if k == 1 else path.iterate(k)
    angles = np.array([rotation_angle(target.matrix(t)) for t in target.grid()])
    lifted = np.unwrap(angles)
    return float((lifted[-1] - lifted[0]) / math.pi)


def lifted_mean_index(path: SymplecticPath, ends) -> list[float]:
    """Mean index of every prefix ``[t0, T]`` for ``T`` in ``ends``, from one lifted profile."""
    ends = np.asarray(ends, dtype=float)
    ts = np.union1d(path.grid(), ends)
    lifted = np.unwrap([rotation_angle(path.matrix(t)) for t in ts])
    return [float((lifted[np.searchsorted(ts, e)] - lifted[0]) / math.pi) for e in ends]


@dataclass(frozen=True)
class IndexReport:
    mu_rs: Fraction
    mu_cz: Fraction
    delta: float
    n: int
    mode: str
    frame: str
    length: float

    @property
    def mu_rs_doubled(self) -> int:
        return int(2 * self.mu_rs)

    @property
    def window(self) -> tuple[float, float]:
        """Support window ``[delta - n, delta + n]``."""
        return self.delta - self.n, self.delta + self.n


def index_report(path: SymplecticPath, mode: str = "graph", lagrangians=None) -> IndexReport:
    mu = rs_index(path, mode, lagrangians)
    return IndexReport(mu, cz_from_rs(mu, path.n, mode), mean_index(path), path.n, mode,
                       path.frame, path.length)


# --- linearized flow ---

_QUAT = (
    np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float),
    np.array([[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=float),
    np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, -1, 0, 0], [1, 0, 0, 0]], dtype=float),
)


def sphere_frame(xi: np.ndarray) -> np.ndarray:
    """Rows ``xi*i, xi*j, xi*k`` (quaternion products): an orthonormal frame of ``T_xi S^3``."""
    return np.array([e @ xi for e in _QUAT])


def frame_matrix(z: np.ndarray) -> np.ndarray:
    """Columns ``A_k = (e_k, -<e_k, eta> xi)`` and ``B_k = (0, e_k)``; ``omega(A_j, B_k) = delta_jk``."""
    xi, eta = z[:4], z[4:8]
    e = sphere_frame(xi)
    cols = [np.concatenate([ek, -(ek @ eta) * xi]) for ek in e]
    cols += [np.concatenate([np.zeros(4), ek]) for ek in e]
    return np.array(cols).T


def coordinate_matrix(z: np.ndarray) -> np.ndarray:
    """Frame coordinates ``a_k = <d xi, e_k>``, ``b_k = <d eta, e_k>`` of a tangent vector."""
    e = sphere_frame(z[:4])
    out = np.zeros((6, 8))
    out[:3, :4] = e
    out[3:, 4:] = e
    return out


def variational_solution(rhs, jac, z0: np.ndarray, t1: float, rtol: float, atol: float):
    """Dense solution of ``z' = F(z)``, ``Phi' = DF(z) Phi``, ``Phi(0) = I``."""
    dim = z0.size

    def aug(t, y):
        z = y[:dim]
        phi = y[dim:].reshape(dim, dim)
        return np.concatenate([rhs(z), (jac(z) @ phi).ravel()])

    y0 = np.concatenate([z0, np.eye(dim).ravel()])
    sol = solve_ivp(aug, (0.0, t1), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"variational integration failed: {sol.message}")
    return sol


def linear_system_path(a: np.ndarray, t1: float, rtol: float = 1e-12, atol: float = 1e-12) -> SymplecticPath:
    """Fundamental solution of ``x' = A x`` by numerical integration, in the standard frame."""
    a = np.asarray(a, dtype=float)
    dim = a.shape[0]
    sol = variational_solution(lambda z: a @ z, lambda z: a, np.zeros(dim), t1, rtol, atol)
    s = -standard_j(dim // 2) @ a
    return SymplecticPath(lambda t: sol.sol(t)[dim:].reshape(dim, dim), 0.0, t1,
                          lambda t: 0.5 * (s + s.T))


def linearize_along(traj: Trajectory, rtol: float = 1e-11, atol: float = 1e-12,
                    drift_tol: float = SYMPLECTIC_DRIFT_TOL, density: float = 60.0,
                    max_refinements: int = 2) -> SymplecticPath:
    """Linearized flow along ``traj`` in the global quaternion frame of ``T(T*S^3)``.

    ``M(t) = C(z(t)) Phi(t) F(z0)`` with ``F`` the frame columns and ``C`` the
    frame coordinates.  The variational equation is integrated together with the
    orbit; if the symplectic defect exceeds ``drift_tol`` the tolerances are
    tightened up to ``max_refinements`` times before raising.
    """
    z0 = np.asarray(traj.states[0][:8], dtype=float)
    t1 = float(traj.times[-1])
    c = traj.params.c
    sign = -1.0 if traj.reverse else 1.0
    rhs = lambda z: sign * field_array(z, c)
    jac = lambda z: sign * field_jacobian(z, c)
    f0 = frame_matrix(z0)
    for attempt in range(max_refinements + 1):
        sol = variational_solution(rhs, jac, z0, t1, rtol, atol)

        def mat(t, sol=sol):
            y = sol.sol(t)
            return coordinate_matrix(y[:8]) @ y[8:].reshape(8, 8) @ f0

        def gen(t, sol=sol):
            y = sol.sol(t)
            z, phi = y[:8], y[8:].reshape(8, 8)
            zdot = rhs(z)
            mdot = (coordinate_matrix(zdot) @ phi + coordinate_matrix(z) @ jac(z) @ phi) @ f0
            m = coordinate_matrix(z) @ phi @ f0
            return -standard_j(3) @ mdot @ symplectic_inverse(m)

        path = SymplecticPath(mat, 0.0, t1, gen, FRAME_ID, density)
        drift = path.symplectic_drift(max(16, int(4 * t1)))
        if drift <= drift_tol:
            return path
        rtol, atol = rtol / 100.0, atol / 100.0
    raise SymplecticDriftError(f"symplectic defect {drift:.3e} after {max_refinements} refinements")


def finite_difference_monodromy(traj: Trajectory, h: float = 1e-5, rtol: float = 1e-12,
                                atol: float = 1e-13) -> np.ndarray:
    """Central differences of the nonlinear flow along the frame columns, in frame coordinates."""
    z0 = np.asarray(traj.states[0][:8], dtype=float)
    t1 = float(traj.times[-1])
    c = traj.params.c
    sign = -1.0 if traj.reverse else 1.0
    f0 = frame_matrix(z0)

    def flow(z):
        sol = solve_ivp(lambda t, y: sign * field_array(y, c), (0.0, t1), z, method="DOP853",
                        rtol=rtol, atol=atol)
        return sol.y[:, -1]

    z1 = flow(z0)
    cols = [(flow(z0 + h * f0[:, k]) - flow(z0 - h * f0[:, k])) / (2 * h) for k in range(6)]
    return coordinate_matrix(z1) @ np.array(cols).T


# --- definiteness fit ---

@dataclass(frozen=True)
class DefinitenessFit:
    slope: float
    intercept: float
    offset: float
    stderr: float
    residuals: np.ndarray = field(repr=False)
    certified: bool = False

    def report_lines(self) -> list[str]:
        return [
            f"slope c = {self.slope:.6g} (stderr {self.stderr:.3g})",
            f"lower-envelope offset d = {self.offset:.6g}",
            f"least-squares intercept = {self.intercept:.6g}",
            f"max |residual| = {float(np.max(np.abs(self.residuals))):.6g}",
            f"definiteness certified: {'yes' if self.certified else 'no'}",
        ]


def definiteness_fit(lengths, indices, min_arcs: int = 10) -> DefinitenessFit:
    """Fit ``|mu| >= c T + d``: least-squares slope, then ``d`` shifted to the lower envelope.

    Definiteness is certified when ``c - 2 stderr > 0``.
    """
    t = np.asarray(lengths, dtype=float)
    mu = np.abs(np.asarray([float(x) for x in indices]))
    if t.size < min_arcs:
        raise InsufficientDataError(f"need at least {min_arcs} arcs, got {t.size}")
    if np.ptp(t) <= 0:
        raise InsufficientDataError("arc lengths have no spread")
    fit = linregress(t, mu)
    slope, stderr = float(fit.slope), float(fit.stderr)
    if not np.isfinite(stderr):
        stderr = 0.0
    residuals = mu - (slope * t + float(fit.intercept))
    offset = float(np.min(mu - slope * t))
    return DefinitenessFit(slope, float(fit.intercept), offset, stderr, residuals,
                           certified=slope - 2.0 * stderr > 0.0)


def prefix_indices(crossings: Sequence[CrossingInfo], lengths, n: int, mode: str, t0: float = 0.0):
    """Robbin-Salamon indices of the prefix arcs ``[t0, t0 + T]`` from one crossing list.

    Prefix ends are assumed off the crossing set; arcs ending at a crossing need their own scan.
    """
    out = []
    for length in lengths:
        end = t0 + length
        doubled = 0
        for c in crossings:
            if c.t > end:
                break
            doubled += c.signature if (c.endpoint and c.t == t0) else 2 * c.signature
        mu = Fraction(doubled, 2)
        out.append((length, mu, cz_from_rs(mu, n, mode)))
    return out


INDEX_TABLE_HEADER = ["T", "mu_rs", "mu_cz", "delta", "frame_id"]


def index_table_rows(reports: Sequence[IndexReport]):
    for r in reports:
        yield [r.length, str(r.mu_rs), str(r.mu_cz), r.delta, r.frame]


def export_index_table(path, reports: Sequence[IndexReport]) -> str:
    return write_table(path, INDEX_TABLE_HEADER, index_table_rows(reports))
