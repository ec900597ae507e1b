"""Homotopy normal-form data of symplectic matrices and index iteration.

Every symplectic matrix is connected, inside its homotopy component (same
unit-circle spectrum and same eigenvalue nullities), to a direct diamond
product of basic 2x2 and 4x4 blocks:

* at eigenvalue +1: shear blocks [[1,1],[0,1]] / identity planes /
  shear blocks [[1,-1],[0,1]], counted by ``p_minus, p_zero, p_plus``;
* at eigenvalue -1: the analogous counts ``q_minus, q_zero, q_plus``;
* elliptic planes R(theta) with theta in (0,pi)u(pi,2pi), Krein-positive
  eigenvector at e^{i theta};
* 4x4 spectral-flow-active ("nontrivial") and inactive ("trivial")
  twisted planes built on a double eigenvalue pair e^{+-i theta};
* a residue with no unit-circle spectrum (``hyperbolic_dim`` dimensions).

The classifying invariants are computed from eigen-chain structure and the
Krein form q(u,v) = conj(u)^T (-iJ) v:

* counts at +-1 come from the signature of w -> <J(M -+ I)w, w> on
  ker^2/ker (this form descends to the quotient);
* elliptic orientation comes from the Krein signature on the eigenspace;
* twisted-plane triviality comes from the chain coefficient q(v, w) with
  (M - omega)w = v, which sits at phase +-pi/2 after multiplication by
  omega: positive imaginary part means spectral-flow-active.

All counts feed closed-form iteration: index/nullity of the m-th iterate
of any path from its first-iterate values plus the endpoint data, and the
mean index per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import EIGEN_TOL, require_symplectic, standard_J

__all__ = [
    "Decomposition",
    "DecompositionError",
    "decompose",
    "iteration_index",
    "iteration_nullity",
    "mean_index",
    "parity_consistent",
    "splitting_numbers",
    "floor_int",
    "ceil_int",
    "varphi",
]

_SNAP = 1e-9


def _snap(a):
    r = round(a)
    if abs(a - r) <= _SNAP * max(1.0, abs(a)):
        return float(r)
    return float(a)


def floor_int(a):
    """Largest integer <= a, robust to float drift near integers."""
    return int(math.floor(_snap(a)))


def ceil_int(a):
    """Smallest integer >= a, robust to float drift near integers."""
    return int(math.ceil(_snap(a)))


def varphi(a):
    """0 for (nearly) integral a, else 1."""
    return ceil_int(a) - floor_int(a)


class DecompositionError(ValueError):
    """The matrix resists classification at the working tolerances."""


@dataclass(frozen=True)
class Decomposition:
    """Block counts and angles classifying a homotopy component."""

    n: int
    p_minus: int = 0
    p_zero: int = 0
    p_plus: int = 0
    q_minus: int = 0
    q_zero: int = 0
    q_plus: int = 0
    rot_angles: tuple = field(default_factory=tuple)
    n2_nontrivial_angles: tuple = field(default_factory=tuple)
    n2_trivial_angles: tuple = field(default_factory=tuple)
    hyperbolic_dim: int = 0

    @property
    def r(self):
        return len(self.rot_angles)

    @property
    def r_star(self):
        return len(self.n2_nontrivial_angles)

    @property
    def r_zero(self):
        return len(self.n2_trivial_angles)

    @property
    def nu_one(self):
        """Nullity at omega=1 implied by the block counts."""
        return self.p_minus + 2 * self.p_zero + self.p_plus

    @property
    def nu_minus_one(self):
        return self.q_minus + 2 * self.q_zero + self.q_plus

    @property
    def elliptic_height(self):
        """e(M): total dimension of unit-circle blocks, 2n minus hyperbolic."""
        return 2 * self.n - self.hyperbolic_dim

    def as_dict(self):
        return {
            "n": self.n,
            "p_minus": self.p_minus,
            "p_zero": self.p_zero,
            "p_plus": self.p_plus,
            "q_minus": self.q_minus,
            "q_zero": self.q_zero,
            "q_plus": self.q_plus,
            "rot_angles": list(self.rot_angles),
            "n2_nontrivial_angles": list(self.n2_nontrivial_angles),
            "n2_trivial_angles": list(self.n2_trivial_angles),
            "hyperbolic_dim": self.hyperbolic_dim,
        }


def _kernel_basis(A, rtol):
    """Orthonormal basis (columns) of the numerical kernel of A.

    The threshold is anchored at scale 1, not at the largest singular
    value: the matrices classified here are differences of bounded
    symplectic blocks, so an all-but-zero A has a full kernel rather
    than an empty one.
    """
    _, s, vh = np.linalg.svd(A)
    scale = max(float(s[0]) if s.size else 0.0, 1.0)
    k = int(np.sum(s < rtol * scale))
    if k == 0:
        return np.zeros((A.shape[1], 0), dtype=A.dtype)
    return vh[len(s) - k:].conj().T


def _chain_pairs(M, w0, rtol, algebraic=None, band=1e-4, theta=None):
    """Length-2 Jordan chain tops at eigenvalue w0: columns orthogonal to
    ker(M - w0) inside ker((M - w0)^2).

    All rank decisions happen inside the cluster's invariant subspace
    (ordered Schur deflation).  Working on the full matrix is unsound
    here: a large nilpotent amplitude in one block skews the singular
    spectrum of M - w0 across clusters, shrinking another cluster's
    smallest nonzero singular value below any fixed threshold, while the
    deflated block sees only the cluster's own structure.

    ``algebraic`` pins the invariant-subspace dimension; ``band`` is the
    unit-circle radial band and ``theta`` the cluster angle (used to keep
    the conjugate partner of a near-one rotation out of the selection).
    """
    w0c = complex(w0)
    r_ang = 5e-5 if theta is None else min(5e-5, max(theta, 1e-6))

    def _in_cluster(lam):
        return bool(abs(abs(lam) - 1.0) <= band
                    and abs(np.angle(lam * np.conjugate(w0c))) < r_ang)

    try:
        T, Z, sdim = scipy.linalg.schur(
            np.asarray(M, dtype=complex), output="complex", sort=_in_cluster)
    except scipy.linalg.LinAlgError as err:
        raise DecompositionError(f"Schur deflation failed: {err}")
    if algebraic is not None and sdim != algebraic:
        raise DecompositionError(
            f"invariant subspace at eigenvalue {w0c:.6g} has dimension "
            f"{sdim}, expected {algebraic}")
    if sdim == 0:
        empty = np.zeros((M.shape[0], 0), dtype=complex)
        return empty, empty
    T11 = T[:sdim, :sdim]
    Z1 = Z[:, :sdim]
    A = T11 - w0c * np.eye(sdim)
    scale = max(float(np.linalg.norm(A, 2)), 1.0)
    if np.linalg.norm(A @ A, 2) > 1e-8 * scale * scale:
        raise DecompositionError(
            f"Jordan chain longer than 2 at eigenvalue {w0c:.6g}")
    K_sub = _kernel_basis(A, rtol)
    nu = K_sub.shape[1]
    if 2 * nu < sdim:
        raise DecompositionError(
            f"kernel chain ranks are inconsistent (geometric {nu}, "
            f"algebraic {sdim})")
    # chain tops: the orthogonal complement of the kernel inside the block
    P = np.eye(sdim, dtype=complex) - K_sub @ K_sub.conj().T
    u, s, _ = np.linalg.svd(P)
    chains_sub = u[:, :sdim - nu]
    if s[:sdim - nu].size and np.min(s[:sdim - nu]) < 0.5:
        raise DecompositionError(
            "chain extraction lost directions at the expected rank")
    return Z1 @ K_sub, Z1 @ chains_sub


def _form_signature(G, rtol=1e-6):
    """(positive, negative, null) counts of a Hermitian matrix.

    The zero threshold is anchored at scale 1 (the forms this classifies
    are built from orthonormal columns and O(1) operators), so an
    all-but-zero form still reads as null rather than rescaling itself
    into a definite one.
    """
    if G.shape[0] == 0:
        return 0, 0, 0
    ev = np.linalg.eigvalsh(G)
    scale = max(float(np.max(np.abs(ev))), 1.0)
    pos = int(np.sum(ev > rtol * scale))
    neg = int(np.sum(ev < -rtol * scale))
    return pos, neg, len(ev) - pos - neg


def decompose(M, tol=EIGEN_TOL):
    """Classify a symplectic matrix by its basic-block content.

    Raises DecompositionError when eigenvalues sit too close to the
    classification boundaries (unit-circle band edges, angle collisions)
    or when the chain structure is not made of blocks of size <= 2 in a
    way the invariants can certify.
    """
    M = np.asarray(M, dtype=float)
    require_symplectic(M, what="decompose() input")
    dim = M.shape[0]
    n = dim // 2
    J = standard_J(n)
    # Kernel decisions happen at unit-eigenvalue clusters whose nonzero
    # singular values are bounded below by the inter-cluster angle gap
    # (guarded at 1e-4 below), so a loose threshold is safe and rides out
    # the O(sqrt(eps)) eigenvalue splitting of defective unit pairs.
    rtol = 1e-6
    vals = np.linalg.eigvals(M)
    radial = np.abs(np.abs(vals) - 1.0)
    # Defective unit pairs (twisted planes) come back from eig() split by
    # O(sqrt(eps)), so the on-circle band must sit well above that scale.
    band = max(20.0 * tol, 2e-6)
    if np.any((radial > band) & (radial < 10.0 * band)):
        raise DecompositionError(
            "eigenvalue too close to the unit-circle classification band")
    unit = radial <= band
    angs = np.angle(vals[unit])

    # angle clusters among unit eigenvalues (fold to [0, pi])
    folded = np.abs(angs)
    order = np.argsort(folded)
    groups = []  # (theta_c, count) with theta_c in [0, pi]
    for idx in order:
        th = folded[idx]
        if groups and abs(th - groups[-1][0]) < 1e-6:
            groups[-1][1] += 1
        else:
            groups.append([th, 1])
    for k in range(len(groups) - 1):
        gap = groups[k + 1][0] - groups[k][0]
        if gap < 1e-4:
            raise DecompositionError(
                f"unit eigenvalue angles too close to separate ({gap:.2e})")

    counts = dict(p_minus=0, p_zero=0, p_plus=0,
                  q_minus=0, q_zero=0, q_plus=0)
    rot_angles = []
    n2_nontrivial = []
    n2_trivial = []
    used_dim = 0

    for theta_c, mult in groups:
        at_one = theta_c < 1e-6
        at_minus_one = abs(theta_c - np.pi) < 1e-6
        if at_one or at_minus_one:
            lam = 1.0 if at_one else -1.0
            K, chains = _chain_pairs(M, lam, rtol, algebraic=mult,
                                      band=band)
            nu = K.shape[1]
            n_chain = chains.shape[1]
            # quadratic form <J(M - lam)w, w> on ker^2/ker
            B = J @ (M - lam * np.eye(dim))
            Bs = 0.5 * (B + B.T)
            G = chains.conj().T @ Bs @ chains
            pos, neg, null = _form_signature(np.real(G))
            if null:
                raise DecompositionError(
                    "degenerate chain form at eigenvalue +-1")
            if pos + neg != n_chain or (nu - n_chain) % 2 or nu < n_chain:
                raise DecompositionError(
                    "chain structure at +-1 does not match block counts")
            half = (nu - n_chain) // 2
            if at_one:
                counts["p_minus"] += pos
                counts["p_plus"] += neg
                counts["p_zero"] += half
            else:
                counts["q_minus"] += pos
                counts["q_plus"] += neg
                counts["q_zero"] += half
            used_dim += 2 * (pos + neg + half)
        else:
            if mult % 2:
                raise DecompositionError(
                    f"odd multiplicity at non-real angle {theta_c:.6f}")
            w0 = np.exp(1j * theta_c)
            K, chains = _chain_pairs(M.astype(complex), w0, rtol,
                                     algebraic=mult // 2, band=band,
                                     theta=theta_c)
            n_chain = chains.shape[1]
            # Krein form on the eigenspace: signs orient the elliptic
            # planes, nulls are chain bottoms
            G = K.conj().T @ (-1j * J) @ K
            # Genuine plane-rotation Krein values are O(1); defective-pair
            # noise stays orders of magnitude below 1e-4.
            pos, neg, null = _form_signature(G, rtol=1e-4)
            if null != n_chain:
                raise DecompositionError(
                    "Krein nulls do not match chain count at "
                    f"angle {theta_c:.6f}")
            rot_angles.extend([theta_c] * pos)
            rot_angles.extend([2.0 * np.pi - theta_c] * neg)
            A = M - w0 * np.eye(dim)
            for j in range(n_chain):
                w = chains[:, j]
                v = A @ w
                coeff = np.vdot(v, (-1j * J) @ w) * w0
                if abs(coeff.imag) <= 1e-6 * np.linalg.norm(v):
                    raise DecompositionError(
                        "ambiguous twisted-plane invariant at angle "
                        f"{theta_c:.6f}")
                if coeff.imag > 0:
                    n2_nontrivial.append(theta_c)
                else:
                    n2_trivial.append(theta_c)
            used_dim += 2 * (pos + neg) + 4 * n_chain

    hyper = dim - used_dim
    if hyper < int(np.sum(~unit)):
        raise DecompositionError("unit-block dimensions exceed total")
    return Decomposition(
        n=n,
        rot_angles=tuple(sorted(rot_angles)),
        n2_nontrivial_angles=tuple(sorted(n2_nontrivial)),
        n2_trivial_angles=tuple(sorted(n2_trivial)),
        hyperbolic_dim=hyper,
        **counts,
    )


# ---------------------------------------------------------------------------
# iteration formulas
# ---------------------------------------------------------------------------

def iteration_index(dec, i1, m):
    """Index of the m-th iterate from first-iterate index i1."""
    if m < 1:
        raise ValueError("iteration count must be >= 1")
    even = (1 + (-1) ** m) // 2
    total = m * (i1 + dec.p_minus + dec.p_zero - dec.r)
    total += 2 * sum(ceil_int(m * th / (2 * np.pi)) for th in dec.rot_angles)
    total -= dec.r + dec.p_minus + dec.p_zero
    total -= even * (dec.q_zero + dec.q_plus)
    total += 2 * (sum(varphi(m * a / (2 * np.pi))
                      for a in dec.n2_nontrivial_angles) - dec.r_star)
    return int(total)


def iteration_nullity(dec, nu1, m):
    """Nullity of the m-th iterate from first-iterate nullity nu1."""
    if m < 1:
        raise ValueError("iteration count must be >= 1")
    even = (1 + (-1) ** m) // 2
    total = nu1 + even * (dec.q_minus + 2 * dec.q_zero + dec.q_plus)
    total += 2 * (dec.r + dec.r_star + dec.r_zero)
    total -= 2 * (sum(varphi(m * th / (2 * np.pi)) for th in dec.rot_angles)
                  + sum(varphi(m * a / (2 * np.pi))
                        for a in dec.n2_nontrivial_angles)
                  + sum(varphi(m * b / (2 * np.pi))
                        for b in dec.n2_trivial_angles))
    return int(total)


def mean_index(dec, i1):
    """Mean index per iteration (the linear growth rate of the index)."""
    return (i1 + dec.p_minus + dec.p_zero - dec.r
            + sum(th / np.pi for th in dec.rot_angles))


def parity_consistent(dec, i1):
    """Check the parity constraint on the first-iterate index.

    With no hyperbolic part, the index parity is pinned by the block
    counts; with a hyperbolic part any integer is possible.
    """
    if dec.hyperbolic_dim > 0:
        return True
    pinned = (dec.p_minus + dec.p_zero + dec.q_minus + dec.q_zero
              + dec.q_plus + dec.r) % 2
    return i1 % 2 == pinned


# ---------------------------------------------------------------------------
# splitting numbers
# ---------------------------------------------------------------------------

def splitting_numbers(M, omega, tol=EIGEN_TOL):
    """(S^+, S^-) of a symplectic matrix at a unit-circle point.

    Table-driven from the block content: off the spectrum both vanish;
    at +1 both equal p_minus + p_zero; at -1 both equal q_minus + q_zero;
    at e^{i theta_c} the positively oriented elliptic planes add to S^-,
    the negatively oriented ones to S^+, and spectral-flow-active twisted
    planes add to both.  Conjugation swaps the two numbers.
    """
    dec = M if isinstance(M, Decomposition) else decompose(M, tol=tol)
    omega = complex(omega)
    if abs(abs(omega) - 1.0) > 1e-9:
        raise ValueError("omega must lie on the unit circle")
    ang = float(np.angle(omega))
    if abs(ang) < 1e-6:
        s = dec.p_minus + dec.p_zero
        return (s, s)
    if abs(abs(ang) - np.pi) < 1e-6:
        # mirror of the +1 rule under M -> -M: the parameter sign of an
        # N1(-1, a) block flips relative to its N1(1, a) image, so the
        # buckets swap compared with the eigenvalue-one case
        s = dec.q_zero + dec.q_plus
        return (s, s)
    theta_c = abs(ang)
    plus = sum(1 for th in dec.rot_angles
               if abs((2.0 * np.pi - th) - theta_c) < 1e-6)
    minus = sum(1 for th in dec.rot_angles if abs(th - theta_c) < 1e-6)
    both = sum(1 for a in dec.n2_nontrivial_angles if abs(a - theta_c) < 1e-6)
    s_plus, s_minus = plus + both, minus + both
    if ang < 0:
        s_plus, s_minus = s_minus, s_plus
    return (s_plus, s_minus)
