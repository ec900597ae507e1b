"""Closed characteristics on compact strictly convex hypersurfaces.

A body is described by a positively 2-homogeneous defining function H with
the hypersurface Sigma = H^{-1}(1); the characteristic flow is

    dy/dt = J nu(y),    nu(y) = H'(y) / (H'(y) . y),

so that nu(y) . y = 1 along Sigma (for 2-homogeneous H this is H'/2 on
Sigma).  Ellipsoids get exact periods, trajectories and linearized flows;
general smooth bodies are handled by adaptive integration, Newton shooting
for periodic orbits, and variational-equation monodromies that feed the
index machinery.

Coordinates are split, z = (x_1..x_n, y_1..y_n), matching core.standard_J.
"""

from __future__ import annotations

import dataclasses
import warnings
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .core import EIGEN_TOL, standard_J, symplectic_defect
from .paths import CallableSegment, SampledSegment, SymplecticPath

__all__ = [
    "Ellipsoid",
    "SmoothBody",
    "ClosedOrbit",
    "ResonanceWarning",
    "surface_point",
    "normal_field",
    "integrate_flow",
    "ellipsoid_characteristics",
    "monodromy",
    "find_periodic_orbits",
    "classify",
    "orbit_flags",
]

ODE_RTOL = 1e-11
ODE_ATOL = 1e-12


class ResonanceWarning(UserWarning):
    """Radii ratio suspiciously close to a small rational."""


class Ellipsoid:
    """E_n(r) = { z : 1/2 sum (x_i^2 + y_i^2) / r_i^2 = 1 }.

    The flow is linear: plane i rotates at angular speed
    sigma_i = 1/(2 r_i^2), so the i-th closed characteristic is the circle
    of radius sqrt(2) r_i in plane i with period tau_i = 4 pi r_i^2.
    """

    kind = "ellipsoid"

    def __init__(self, radii):
        r = np.asarray(radii, dtype=float)
        if r.ndim != 1 or r.size == 0 or np.any(r <= 0):
            raise ValueError("radii must be a nonempty positive vector")
        self.r = r
        self.n = r.size
        self.sigma = 1.0 / (2.0 * r ** 2)
        self._D = np.concatenate([1.0 / r ** 2, 1.0 / r ** 2])
        for i in range(self.n):
            for j in range(i + 1, self.n):
                ratio = (r[i] / r[j]) ** 2
                close = Fraction(ratio).limit_denominator(50)
                if abs(ratio - float(close)) < 1e-9:
                    warnings.warn(
                        f"r_{i}^2/r_{j}^2 is within 1e-9 of {close}: "
                        "resonant spectra ahead", ResonanceWarning)

    def value(self, z):
        return 0.5 * float(np.dot(self._D * z, z))

    def grad(self, z):
        return self._D * z

    def hess(self, z):
        return np.diag(self._D)

    def periods(self):
        return 4.0 * np.pi * self.r ** 2

    def orbit_start(self, k):
        """Starting point of the k-th planar circular orbit."""
        z = np.zeros(2 * self.n)
        z[k] = np.sqrt(2.0) * self.r[k]
        return z

    def orbit_point(self, k, t):
        """Exact k-th orbit at time t (vectorized over t)."""
        t = np.asarray(t, dtype=float)
        rho = np.sqrt(2.0) * self.r[k]
        out = np.zeros(t.shape + (2 * self.n,))
        out[..., k] = rho * np.cos(self.sigma[k] * t)
        out[..., self.n + k] = rho * np.sin(self.sigma[k] * t)
        return out

    def monodromy_path(self, k):
        """Exact linearized flow along the k-th orbit as a symplectic path.

        Off-plane j rotates by R(sigma_j t); the orbit plane itself carries
        the shear R(sigma_k t) [[1, 0], [-2 sigma_k t, 1]] produced by the
        0-homogeneity of the normalized normal field.
        """
        n, sig = self.n, self.sigma
        tau = float(self.periods()[k])

        def frame(t):
            t = np.asarray(t, dtype=float)
            M = np.zeros(t.shape + (2 * n, 2 * n))
            for j in range(n):
                a = sig[j] * t
                c, s = np.cos(a), np.sin(a)
                block = np.empty(t.shape + (2, 2))
                block[..., 0, 0] = c
                block[..., 0, 1] = -s
                block[..., 1, 0] = s
                block[..., 1, 1] = c
                if j == k:
                    shear = np.zeros_like(block)
                    shear[..., 0, 0] = 1.0
                    shear[..., 1, 0] = -2.0 * sig[j] * t
                    shear[..., 1, 1] = 1.0
                    block = block @ shear
                M[..., np.ix_([j, n + j], [j, n + j])[0],
                  np.ix_([j, n + j], [j, n + j])[1]] = block
            return M

        return SymplecticPath([CallableSegment(frame, tau, n)])


class SmoothBody:
    """Strictly convex body from a positively 2-homogeneous H with oracles.

    ``value``, ``grad`` and ``hess`` evaluate H and its derivatives at any
    nonzero point.  Convexity is spot-checked on a handful of directions.
    """

    kind = "smooth"

    def __init__(self, n: int, value: Callable, grad: Callable,
                 hess: Callable, label: str = "smooth", check: bool = True):
        self.n = int(n)
        self.value = value
        self.grad = grad
        self.hess = hess
        self.label = label
        if check:
            rng = np.random.default_rng(7)
            for _ in range(8):
                z = rng.standard_normal(2 * self.n)
                z /= np.linalg.norm(z)
                ev = np.linalg.eigvalsh(np.asarray(hess(z)))
                if ev[0] <= 0:
                    raise ValueError(
                        "defining function fails the convexity spot check")
                v = float(value(z))
                g = np.asarray(grad(z))
                if abs(float(np.dot(g, z)) - 2.0 * v) > 1e-8 * max(1.0, v):
                    raise ValueError(
                        "defining function is not 2-homogeneous "
                        "(Euler identity violated)")


def quartic_perturbed(radii, eps, weights=None):
    """Ellipsoid defining function E plus eps * Q / E with quartic Q.

    Q(z) = sum w_i z_i^4 (all coordinates); Q/E is 2-homogeneous, so the
    perturbed H stays 2-homogeneous, and for small eps the body remains
    strictly convex.
    """
    base = Ellipsoid(radii)
    dim = 2 * base.n
    w = np.ones(dim) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (dim,):
        raise ValueError(f"weights must have shape ({dim},)")

    def q_val(z):
        return float(np.dot(w, z ** 4))

    def q_grad(z):
        return 4.0 * w * z ** 3

    def q_hess(z):
        return np.diag(12.0 * w * z ** 2)

    def value(z):
        return base.value(z) + eps * q_val(z) / base.value(z)

    def grad(z):
        E, g_E = base.value(z), base.grad(z)
        Q, g_Q = q_val(z), q_grad(z)
        return g_E + eps * (g_Q / E - Q * g_E / E ** 2)

    def hess(z):
        E, g_E, h_E = base.value(z), base.grad(z), base.hess(z)
        Q, g_Q, h_Q = q_val(z), q_grad(z), q_hess(z)
        cross = np.outer(g_Q, g_E) + np.outer(g_E, g_Q)
        return (h_E + eps * (h_Q / E - cross / E ** 2 - Q * h_E / E ** 2
                             + 2.0 * Q * np.outer(g_E, g_E) / E ** 3))

    return SmoothBody(base.n, value, grad, hess,
                      label=f"quartic_perturbed(eps={eps})")


def surface_point(body, direction):
    """Radial projection of a direction onto Sigma = H^{-1}(1)."""
    d = np.asarray(direction, dtype=float)
    v = float(body.value(d))
    if v <= 0:
        raise ValueError("direction with nonpositive H")
    return d / np.sqrt(v)


def normal_field(body, y):
    """Normal nu(y) = H'(y)/(H'(y) . y), normalized so nu(y) . y = 1."""
    g = np.asarray(body.grad(y))
    return g / float(np.dot(g, y))


def _normal_jacobian(body, y):
    """Derivative of the normalized normal field at y."""
    g = np.asarray(body.grad(y))
    Hs = np.asarray(body.hess(y))
    s = float(np.dot(g, y))
    return Hs / s - np.outer(g, Hs @ y + g) / s ** 2


def integrate_flow(body, y0, t_end, t_eval=None, with_variation=False,
                   rtol=ODE_RTOL, atol=ODE_ATOL):
    """Characteristic flow dy/dt = J nu(y), optionally with the linearized
    flow dM/dt = J Dnu(y) M attached.

    Returns the solve_ivp result; when ``with_variation`` the state is
    (y, vec M).  Raises on integrator failure or visible energy drift.
    """
    y0 = np.asarray(y0, dtype=float)
    dim = y0.size
    J = standard_J(dim // 2)

    if with_variation:
        def rhs(_, state):
            y, M = state[:dim], state[dim:].reshape(dim, dim)
            dM = J @ _normal_jacobian(body, y) @ M
            return np.concatenate([J @ normal_field(body, y), dM.ravel()])
        state0 = np.concatenate([y0, np.eye(dim).ravel()])
    else:
        def rhs(_, state):
            return J @ normal_field(body, state)
        state0 = y0

    sol = solve_ivp(rhs, (0.0, t_end), state0, method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    drift = max(abs(float(body.value(sol.y[:dim, j])) - 1.0)
                for j in range(sol.y.shape[1]))
    if drift > 1e-8:
        raise RuntimeError(f"energy drift {drift:.2e} exceeds tolerance")
    return sol


@dataclasses.dataclass
class ClosedOrbit:
    """A closed characteristic (tau, y) with its linearized data."""

    body: object
    period: float
    y0: np.ndarray
    monodromy_path: Optional[SymplecticPath] = None
    prime: bool = True
    multiplicity: int = 1

    @property
    def n(self):
        return self.y0.size // 2

    def trajectory(self, samples=256):
        ts = np.linspace(0.0, self.period, samples, endpoint=False)
        if isinstance(self.body, Ellipsoid):
            k = int(np.argmax(np.abs(self.y0[:self.body.n])))
            return ts, self.body.orbit_point(k, ts)
        sol = integrate_flow(self.body, self.y0, self.period, t_eval=ts)
        return ts, sol.y[:2 * self.n].T

    @property
    def monodromy(self):
        if self.monodromy_path is None:
            raise ValueError("monodromy path not attached")
        return self.monodromy_path.endpoint

    def floquet(self):
        return np.linalg.eigvals(self.monodromy)


def ellipsoid_characteristics(E: Ellipsoid):
    """The n planar circular orbits of an ellipsoid, shortest first."""
    orbits = []
    for k in np.argsort(E.periods()):
        orbits.append(ClosedOrbit(
            body=E, period=float(E.periods()[k]), y0=E.orbit_start(int(k)),
            monodromy_path=E.monodromy_path(int(k))))
    return orbits


def symplectify(M):
    """Nearest-symplectic correction by Newton steps on M^T J M = J."""
    M = np.asarray(M, dtype=float)
    J = standard_J(M.shape[0] // 2)
    for _ in range(3):
        E = M.T @ J @ M - J
        if np.max(np.abs(E)) < 1e-14:
            break
        M = M @ (np.eye(M.shape[0]) + 0.5 * (J @ E))
    return M


def monodromy(body, y0, period, samples=160):
    """Linearized-flow path along one closed orbit, symplectically sampled.

    For ellipsoids prefer Ellipsoid.monodromy_path (exact).  The sampled
    matrices are projected back onto the symplectic group before building
    the interpolating path.
    """
    ts = np.linspace(0.0, period, samples)
    sol = integrate_flow(body, y0, period, t_eval=ts, with_variation=True)
    dim = 2 * (np.asarray(y0).size // 2)
    mats = np.moveaxis(sol.y[dim:].reshape(dim, dim, -1), -1, 0)
    mats = np.array([symplectify(M) for M in mats])
    mats[0] = np.eye(dim)
    worst = max(symplectic_defect(M) for M in mats)
    if worst > 1e-9:
        raise RuntimeError(f"monodromy drift {worst:.2e} not repairable")
    return SymplecticPath([SampledSegment(ts, mats)])


# -- periodic orbit search ------------------------------------------------


def _return_candidates(body, y0, t_max, dt=0.05):
    """Times where the trajectory re-approaches its start (local minima of
    the distance), candidate periods for the shooting stage."""
    ts = np.arange(dt, t_max, dt)
    sol = integrate_flow(body, y0, t_max, t_eval=ts)
    d = np.linalg.norm(sol.y.T - y0, axis=1)
    scale = np.linalg.norm(y0)
    out = []
    for i in range(1, len(ts) - 1):
        if d[i] < d[i - 1] and d[i] <= d[i + 1] and d[i] < 0.35 * scale:
            out.append(float(ts[i]))
    return out


def _shoot(body, y0, tau, tol=1e-10, max_iter=40):
    """Newton refinement of (y0, tau) for the period map.

    Residual: (y(tau) - y0, H(y0) - 1); the Jacobian uses the variational
    solution.  The time-translation null direction makes the square system
    rank-deficient, so it is solved by least squares.
    """
    dim = y0.size
    J = standard_J(dim // 2)
    y, tau = np.array(y0, dtype=float), float(tau)
    for _ in range(max_iter):
        if tau <= 0:
            return None
        try:
            sol = integrate_flow(body, y, tau, t_eval=[tau],
                                 with_variation=True)
        except RuntimeError:
            return None
        y_end = sol.y[:dim, -1]
        M_end = sol.y[dim:, -1].reshape(dim, dim)
        res = np.concatenate([y_end - y, [float(body.value(y)) - 1.0]])
        if np.linalg.norm(res) < tol:
            return y, tau
        A = np.zeros((dim + 1, dim + 1))
        A[:dim, :dim] = M_end - np.eye(dim)
        A[:dim, dim] = J @ normal_field(body, y_end)
        A[dim, :dim] = body.grad(y)
        step, *_ = np.linalg.lstsq(A, -res, rcond=None)
        limit = 0.5 * max(1.0, np.linalg.norm(y))
        if np.linalg.norm(step) > limit:
            step *= limit / np.linalg.norm(step)
        # keep the iterate exactly on the surface: the normalized field is
        # stiff off it, and the projection costs one scalar evaluation
        y, tau = surface_point(body, y + step[:dim]), tau + step[dim]
    return None


def _hausdorff(A, B):
    """Symmetric Hausdorff distance between two point clouds."""
    d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def _trace_spacing(A):
    """Largest gap between consecutive trace samples (cyclic)."""
    step = np.linalg.norm(np.roll(A, -1, axis=0) - A, axis=1)
    return float(step.max())


def _same_trace(A, B, diameter):
    """Whether two sampled closed curves describe the same point set.

    Two samplings of one curve differ by at most half the coarser sampling
    step in Hausdorff distance, so the threshold must sit above the
    sampling resolution, not just above the geometric tolerance.
    """
    thr = max(1e-5 * diameter, 0.75 * max(_trace_spacing(A),
                                          _trace_spacing(B)))
    return _hausdorff(A, B) < thr


def _orbit_trace(body, y0, tau, samples=96):
    ts = np.linspace(0.0, tau, samples, endpoint=False)
    sol = integrate_flow(body, y0, tau, t_eval=ts)
    return sol.y.T


def find_periodic_orbits(body, seeds=None, t_max=None, n_seeds=12, seed=0,
                         build_monodromy=True):
    """Periodic orbits of the characteristic flow by multiple shooting.

    Seeds default to random surface points; candidate periods come from
    trajectory self-approach.  Results are deduplicated by the Hausdorff
    distance between traces (resolution-aware: the threshold sits above
    the trace sampling step) and iterates of shorter orbits are labeled
    non-prime.  Orbits related by a symmetry of the body trace different
    point sets and are deliberately kept as distinct entries.  Failed
    seeds are collected in the returned diagnostics list.
    """
    rng = np.random.default_rng(seed)
    if seeds is None:
        seeds = [surface_point(body, rng.standard_normal(2 * body.n))
                 for _ in range(n_seeds)]
    if t_max is None:
        # crude period scale: the ellipsoid with comparable extent
        scale = max(np.linalg.norm(s) for s in seeds)
        t_max = 4.0 * np.pi * scale ** 2 * 1.5

    diameter = 2.0 * max(np.linalg.norm(s) for s in seeds)
    found, diagnostics = [], []
    for y0 in seeds:
        for tau0 in _return_candidates(body, y0, t_max):
            hit = _shoot(body, y0, tau0)
            if hit is None:
                diagnostics.append(("no convergence", y0, tau0))
                continue
            y_star, tau = hit
            # minimal-period reduction: prefer the prime traversal
            mult = 1
            for k in range(6, 1, -1):
                if tau / k < 1e-3:
                    continue
                sub = _shoot(body, y_star, tau / k)
                if sub is not None and abs(sub[1] * k - tau) < 1e-6 * tau:
                    y_star, tau, mult = sub[0], sub[1], 1
                    break
            trace = _orbit_trace(body, y_star, tau)
            dup = False
            for other in found:
                if (abs(other.period - tau) < 1e-4 * max(tau, other.period)
                        and _same_trace(trace, other._trace, diameter)):
                    dup = True
                    break
            if dup:
                continue
            orbit = ClosedOrbit(body=body, period=tau, y0=y_star,
                                prime=True, multiplicity=mult)
            orbit._trace = trace
            if build_monodromy:
                orbit.monodromy_path = monodromy(body, y_star, tau)
            found.append(orbit)
    # iterate labeling across distinct entries: longer orbit tracing the
    # same point set as a shorter one is the shorter orbit's iterate
    found.sort(key=lambda o: o.period)
    for i, o in enumerate(found):
        for p in found[:i]:
            ratio = o.period / p.period
            if (abs(ratio - round(ratio)) < 1e-4 and round(ratio) > 1
                    and _same_trace(o._trace, p._trace, diameter)):
                o.prime = False
                o.multiplicity = int(round(ratio))
                break
    return found, diagnostics


def orbit_indices(orbit: ClosedOrbit, m_max=12, tol=5e-6):
    """Index table of one closed orbit for m = 1..m_max.

    i1/nu1 come from the crossing-count engine on the monodromy path; the
    rest of the table is the closed-form iteration of the endpoint's
    block decomposition.  Rows are
    (m, i(y,m), nu(y,m), i(y^m), nu(y^m)) with the m-th traversal values
    i(y^m) = i(y,m) - n and nu(y^m) = nu(y,m).

    ``tol`` is the unit-circle classification tolerance passed down to the
    block decomposition.  The default absorbs the square-root amplification
    that a time-stepped monodromy inflicts on its structural double
    eigenvalue at 1 (drift <= 1e-9 splits it by up to ~3e-5); multipliers
    genuinely closer to the circle than that are beyond what an integrated
    monodromy can resolve.
    """
    from .normal_form import decompose, iteration_index, iteration_nullity
    from .paths import index_nullity

    path = orbit.monodromy_path
    if path is None:
        raise ValueError("orbit has no monodromy path")
    first = index_nullity(path)
    dec = decompose(path.endpoint, tol=tol)
    n = path.n
    rows = []
    for m in range(1, m_max + 1):
        im = iteration_index(dec, first.index, m)
        num = iteration_nullity(dec, first.nullity, m)
        rows.append((m, im, num, im - n, num))
    return rows


# -- classification ---------------------------------------------------------


def orbit_flags(multipliers, tol=EIGEN_TOL):
    """Floquet-multiplier classification flags.

    nondegenerate: eigenvalue 1 has algebraic multiplicity exactly 2;
    elliptic: all multipliers on the unit circle; hyperbolic: double
    multiplier 1 and everything else off the circle.  ``borderline`` is
    set when a multiplier sits in the unresolvable ring between the
    on-circle and off-circle bands.
    """
    lam = np.asarray(multipliers)
    radial = np.abs(np.abs(lam) - 1.0)
    on_circle = radial <= 100.0 * tol
    borderline = bool(np.any((radial > 100.0 * tol) & (radial < 1e-3)))
    mult_one = int(np.sum(np.abs(lam - 1.0) < 1e-4))
    if mult_one < 2:
        raise ValueError(
            "closed-orbit monodromy must carry the double multiplier 1")
    return {
        "nondegenerate": mult_one == 2,
        "elliptic": bool(np.all(on_circle)),
        "hyperbolic": mult_one == 2 and bool(
            np.all(on_circle[np.abs(lam - 1.0) < 1e-4]))
        and int(np.sum(on_circle)) == 2,
        "borderline": borderline,
    }


def classify(orbit: ClosedOrbit, tol=EIGEN_TOL):
    return orbit_flags(orbit.floquet(), tol=tol)
