"""Symplectic linear algebra primitives.

Conventions used throughout the package:

* Coordinates are split as ``z = (x_1..x_n, y_1..y_n)``, so the standard
  symplectic structure is ``J = [[0, -I_n], [I_n, 0]]``.
* A real ``2n x 2n`` matrix ``M`` is symplectic when ``M^T J M = J``.
* The diamond product interleaves two symplectic matrices block-wise in
  these split coordinates (direct sum of the underlying symplectic planes),
  not as a plain ``scipy.linalg.block_diag``.
* ``D(omega, M) = (-1)^(n-1) * conj(omega)^n * det(M - omega*I)`` is real for
  ``|omega| = 1``; its zero set is the degenerate surface used by the index
  engine, and its sign tells the two sides apart.
"""

from __future__ import annotations

import numpy as np

# Shared numerical policy (see README): symplectic identities are enforced at
# 1e-9, eigenvalues are matched to the unit circle / to each other at 1e-7,
# and rank decisions use 1e-8 scaled by the matrix norm.
SYMPLECTIC_TOL = 1e-9
EIGEN_TOL = 1e-7
RANK_TOL = 1e-8


def standard_J(n):
    """Standard symplectic form on R^{2n} in (x, y)-split coordinates."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


def symplectic_defect(M):
    """Max-norm of M^T J M - J; zero exactly when M is symplectic."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0] // 2
    J = standard_J(n)
    return float(np.max(np.abs(M.T @ J @ M - J)))


def is_symplectic(M, tol=SYMPLECTIC_TOL):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        return False
    scale = max(1.0, float(np.linalg.norm(M, ord=np.inf)) ** 2)
    return symplectic_defect(M) <= tol * scale


def require_symplectic(M, tol=SYMPLECTIC_TOL, what="matrix"):
    M = np.asarray(M, dtype=float)
    if not is_symplectic(M, tol):
        raise ValueError(
            f"{what} is not symplectic within tolerance {tol:g} "
            f"(defect {symplectic_defect(M):.3e})"
        )
    return M


def diamond(*mats):
    """Diamond product of symplectic matrices in split coordinates.

    For M_k = [[A_k, B_k], [C_k, D_k]] (n_k x n_k blocks) the result is
    [[A_1 + A_2, B_1 + B_2], [C_1 + C_2, D_1 + D_2]] where "+" is the direct
    sum of the sub-blocks.  Associative; the result is symplectic whenever
    all factors are.
    """
    mats = [np.asarray(M, dtype=float) for M in mats]
    if not mats:
        raise ValueError("diamond() needs at least one factor")
    for M in mats:
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise ValueError("diamond factors must be square of even size")
    ns = [M.shape[0] // 2 for M in mats]
    n = sum(ns)
    out = np.zeros((2 * n, 2 * n))
    ofs = 0
    for M, nk in zip(mats, ns):
        sl = slice(ofs, ofs + nk)
        sl2 = slice(n + ofs, n + ofs + nk)
        out[sl, sl] = M[:nk, :nk]
        out[sl, sl2] = M[:nk, nk:]
        out[sl2, sl] = M[nk:, :nk]
        out[sl2, sl2] = M[nk:, nk:]
        ofs += nk
    return out


def diamond_power(M, k):
    """k-fold diamond product of M with itself."""
    if k < 1:
        raise ValueError("diamond power needs k >= 1")
    return diamond(*([M] * k))


# ---------------------------------------------------------------------------
# basic normal form constructors (2x2 and 4x4 building blocks)
# ---------------------------------------------------------------------------

def rot(theta):
    """Plane rotation R(theta) = [[cos, -sin], [sin, cos]]."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def n1(lam, b):
    """Shear block N1(lam, b) = [[lam, b], [0, lam]] with lam = +-1."""
    if lam not in (1, -1, 1.0, -1.0):
        raise ValueError("N1 blocks require lam = +-1")
    return np.array([[float(lam), float(b)], [0.0, float(lam)]])


def hyperbolic(lam):
    """Diagonal block diag(lam, 1/lam), |lam| > 1 (or < 1), real lam != 0."""
    lam = float(lam)
    if lam == 0.0:
        raise ValueError("hyperbolic block needs lam != 0")
    return np.diag([lam, 1.0 / lam])


def n2(theta, S):
    """4x4 spiral block [[R(theta), R(theta) S], [0, R(theta)]], S symmetric.

    Parametrizing the off-diagonal part as R*S with S = S^T makes the block
    symplectic by construction.  With b = R(theta) S one has
    (b_12 - b_21) sin(theta) = -sin(theta)^2 * trace(S), so trace(S) > 0
    gives the eigenvalue-splitting kind of block and trace(S) < 0 the
    non-splitting kind (see normal_form.n2_is_splitting for the detector).
    """
    S = np.asarray(S, dtype=float)
    if S.shape != (2, 2) or abs(S[0, 1] - S[1, 0]) > 1e-12:
        raise ValueError("n2 needs a symmetric 2x2 parameter matrix")
    if abs(np.trace(S)) < 1e-12:
        raise ValueError("n2 parameter must have nonzero trace (b12 != b21)")
    if abs(np.sin(theta)) < 1e-12:
        raise ValueError("n2 angle must avoid multiples of pi")
    R = rot(theta)
    M = np.zeros((4, 4))
    M[:2, :2] = R
    M[:2, 2:] = R @ S
    M[2:, 2:] = R
    return M


def random_symplectic(n, rng, scale=0.7):
    """Random symplectic matrix exp(J S), S symmetric; used for conjugations."""
    from scipy.linalg import expm

    A = rng.normal(size=(2 * n, 2 * n)) * scale / np.sqrt(2 * n)
    S = (A + A.T) / 2.0
    return expm(standard_J(n) @ S)


# ---------------------------------------------------------------------------
# spectral helpers
# ---------------------------------------------------------------------------

def unit_spectrum(M, tol=EIGEN_TOL):
    """Eigenvalues of M lying on the unit circle.

    Returns (values, angles) with angles in [0, 2*pi), sorted by angle;
    algebraic multiplicity is reflected by repetition.
    """
    M = np.asarray(M, dtype=float)
    vals = np.linalg.eigvals(M)
    on_circle = np.abs(np.abs(vals) - 1.0) <= tol
    unit = vals[on_circle]
    ang = np.mod(np.angle(unit), 2.0 * np.pi)
    order = np.argsort(ang)
    return unit[order], ang[order]


def total_unit_multiplicity(M, tol=EIGEN_TOL):
    """Total algebraic multiplicity of unit-circle eigenvalues (always even)."""
    vals, _ = unit_spectrum(M, tol)
    return int(len(vals))


def nullity_omega(M, omega, tol=None):
    """dim_C ker(M - omega*I) for omega on the unit circle (0..2n)."""
    M = np.asarray(M, dtype=float)
    dim = M.shape[0]
    A = M.astype(complex) - complex(omega) * np.eye(dim)
    s = np.linalg.svd(A, compute_uv=False)
    if tol is None:
        tol = RANK_TOL * max(1.0, float(np.linalg.norm(M)))
    return int(np.sum(s <= tol))


def d_omega(M, omega, n=None):
    """The real determinant function whose zero set is the degenerate surface.

    D(omega, M) = (-1)^(n-1) * conj(omega)^n * det(M - omega I).  For real
    symplectic M and |omega| = 1 the value is real; the imaginary residue is
    checked and discarded.  Vectorized over a leading batch axis of M.
    """
    M = np.asarray(M)
    dim = M.shape[-1]
    if n is None:
        n = dim // 2
    ident = np.eye(dim)
    det = np.linalg.det(M - complex(omega) * ident)
    val = (-1.0) ** (n - 1) * np.conjugate(complex(omega)) ** n * det
    scale = np.maximum(np.abs(val), 1.0)
    if np.any(np.abs(np.imag(val)) > 1e-8 * scale):
        raise ArithmeticError("determinant function unexpectedly non-real")
    return np.real(val)


def krein_sign(v, J=None, tol=1e-10):
    """Krein sign of a unit-circle eigenvector: sign of Im(v* J v).

    Returns +1 or -1; raises if the form is numerically degenerate (which
    happens exactly for eigenvectors of non-semisimple unit eigenvalues,
    where the sign is not defined).
    """
    v = np.asarray(v, dtype=complex)
    if J is None:
        J = standard_J(len(v) // 2)
    q = np.imag(np.vdot(v, J @ v))
    if abs(q) <= tol * float(np.vdot(v, v).real):
        raise ArithmeticError("Krein form numerically degenerate on eigenvector")
    return 1 if q > 0 else -1
