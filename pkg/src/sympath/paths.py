"""Symplectic paths and the crossing-count index engine.

A path is a concatenation of segments, each an analytically evaluable map
``[0, dur] -> Sp(2n)`` starting at the identity (first segment) or at the
previous segment's endpoint.  The engine computes the index/nullity pair of
a path at a point ``omega`` on the unit circle by literally counting signed
crossings of the catenated path (reference path first, then the input path)
with the zero set of the real determinant function ``core.d_omega``:

* the whole catenation is first rotated on the right by a small negative
  rotation with a *different* speed in every symplectic plane (see
  ``_stagger_rotation``).  A uniform ``exp(-delta*J)`` push would keep the
  two angles of a coupled double eigenvalue glued together, so a path whose
  spectrum is defective along a whole segment would meet the zero surface
  in collisions whose resolution oscillates with delta; distinct plane
  speeds split such pairs transversally.  The push moves every degenerate
  interior point off the zero surface and lands the endpoint on the
  distinguished non-degenerate perturbation used for degenerate endpoints;
* simple crossings are signed by the co-orientation rule: the positive side
  at a crossing point ``M0`` is the sign of ``d_omega(M0 exp(t J))`` for
  small ``t > 0``;
* every crossing (simple or clustered) is also evaluated by the Krein-signed
  branch potential: half the sum over unit eigenvalues near ``omega`` of
  ``krein_sign * sign(arg(lambda / omega))``, whose jump across an event is
  the event's contribution.  The two routes are asserted against each other
  at simple crossings.
* the whole count is recomputed at ``delta/2`` and must agree.

The construction is normalized so that the one-turn plane rotation path has
index 1 at omega=1 and the constant path has index -n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, logm

from .core import EIGEN_TOL, RANK_TOL, d_omega, nullity_omega, standard_J

__all__ = [
    "ExpSegment",
    "CallableSegment",
    "SampledSegment",
    "SymplecticPath",
    "IndexPair",
    "IndexUncertainError",
    "xi_reference",
    "index_nullity",
    "iterate_path",
    "diamond_paths",
    "index_pair_sequence",
    "mean_index_numeric",
]


class IndexUncertainError(RuntimeError):
    """Raised when a crossing cluster cannot be resolved at any tolerance.

    Carries the ambiguous parameter interval in global path time; never
    silently guesses.
    """

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


# ---------------------------------------------------------------------------
# segments
# ---------------------------------------------------------------------------

class _Segment:
    """Base: a map [0, duration] -> Sp(2n), vectorized over time arrays."""

    duration: float
    n: int

    def evaluate(self, t):
        raise NotImplementedError

    @property
    def start(self):
        return self.evaluate(np.array([0.0]))[0]

    @property
    def end(self):
        return self.evaluate(np.array([self.duration]))[0]


class ExpSegment(_Segment):
    """t -> expm(t * J A) @ B with A symmetric, B the start matrix."""

    def __init__(self, A, duration, start=None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise ValueError("generator must be square of even size")
        if np.max(np.abs(A - A.T)) > 1e-10 * max(1.0, np.max(np.abs(A))):
            raise ValueError("exp-segment generator must be symmetric")
        self.n = A.shape[0] // 2
        self.A = A
        self.X = standard_J(self.n) @ A
        self.duration = float(duration)
        self._start = np.eye(2 * self.n) if start is None else np.asarray(start, float)
        # Diagonalize the sp-generator once if it is well conditioned; the
        # nilpotent/defective case falls back to a dense expm per query.
        self._eig = None
        try:
            w, V = np.linalg.eig(self.X)
            if np.linalg.cond(V) < 1e7:
                self._eig = (w, V, np.linalg.inv(V))
        except np.linalg.LinAlgError:
            pass

    def _expx(self, t):
        t = np.asarray(t, dtype=float)
        if self._eig is not None:
            w, V, Vi = self._eig
            phases = np.exp(t[:, None] * w[None, :])
            out = np.einsum("ij,tj,jk->tik", V, phases, Vi)
            return np.ascontiguousarray(out.real)
        return np.stack([expm(ti * self.X) for ti in t])

    def evaluate(self, t):
        return self._expx(np.asarray(t, float)) @ self._start


class CallableSegment(_Segment):
    """Segment backed by an arbitrary vectorized callable (internal use)."""

    def __init__(self, fn, duration, n):
        self.fn = fn
        self.duration = float(duration)
        self.n = int(n)

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        out = self.fn(t)
        out = np.asarray(out, dtype=float)
        if out.shape != (len(t), 2 * self.n, 2 * self.n):
            raise ValueError("segment callable returned a wrong shape")
        return out


class SampledSegment(_Segment):
    """Piecewise segment through sampled matrices (JSON interchange).

    Between samples the path is interpolated along the group,
    ``M(t) = M_i expm(u * logm(M_i^{-1} M_{i+1}))``, which stays symplectic
    to the accuracy of the matrix logarithm.
    """

    def __init__(self, times, matrices):
        times = np.asarray(times, dtype=float)
        mats = np.asarray(matrices, dtype=float)
        if times.ndim != 1 or len(times) < 2 or mats.shape[0] != len(times):
            raise ValueError("sampled segment needs >= 2 samples")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        self.times = times - times[0]
        self.duration = float(self.times[-1])
        self.mats = mats
        self.n = mats.shape[-1] // 2
        self._logs = [None] * (len(times) - 1)

    def _log(self, i):
        if self._logs[i] is None:
            step = np.linalg.solve(self.mats[i], self.mats[i + 1])
            L = logm(step)
            if np.max(np.abs(L.imag)) > 1e-8:
                raise ValueError("sampled segment has a non-real local logarithm")
            self._logs[i] = L.real
        return self._logs[i]

    def evaluate(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0,
                      len(self.times) - 2)
        out = np.empty((len(t), 2 * self.n, 2 * self.n))
        for k, (ti, i) in enumerate(zip(t, idx)):
            h = self.times[i + 1] - self.times[i]
            u = (ti - self.times[i]) / h
            out[k] = self.mats[i] @ expm(u * self._log(i)) if 0 < u < 1 else (
                self.mats[i] if u <= 0 else self.mats[i + 1])
        return out


class _ComposedSegment(_Segment):
    """seg(t) @ C -- used to build path iterates."""

    def __init__(self, seg, C):
        self.seg = seg
        self.C = np.asarray(C, dtype=float)
        self.duration = seg.duration
        self.n = seg.n

    def evaluate(self, t):
        return self.seg.evaluate(t) @ self.C


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

@dataclass
class IndexPair:
    """Index/nullity of a path at a unit-circle point."""

    index: int
    nullity: int
    omega: complex
    degenerate: bool

    def astuple(self):
        return (self.index, self.nullity)


class SymplecticPath:
    """Concatenation of segments with a common dimension.

    ``evaluate`` uses global time in [0, tau].  The path is expected to start
    at the identity; construction helpers enforce continuity across segments.
    """

    def __init__(self, segments):
        if not segments:
            raise ValueError("a path needs at least one segment")
        n = segments[0].n
        if any(s.n != n for s in segments):
            raise ValueError("segments have inconsistent dimensions")
        self.n = n
        self.segments = list(segments)
        self.breaks = np.concatenate([[0.0], np.cumsum([s.duration for s in segments])])
        self.tau = float(self.breaks[-1])

    @classmethod
    def from_generator(cls, A, duration=1.0):
        """Single-segment path exp(t J A), the basic building block."""
        return cls([ExpSegment(A, duration)])

    @classmethod
    def from_segments(cls, segments, continuity_tol=1e-7):
        path = cls(segments)
        prev = None
        for seg in segments:
            if prev is not None:
                gap = np.max(np.abs(seg.start - prev))
                scale = max(1.0, float(np.max(np.abs(prev))))
                if gap > continuity_tol * scale:
                    raise ValueError(f"segments are discontinuous (gap {gap:.2e})")
            prev = seg.end
        return path

    def evaluate(self, t):
        """Path values at global times t (vectorized)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t).astype(float)
        out = np.empty((len(t), 2 * self.n, 2 * self.n))
        idx = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0,
                      len(self.segments) - 1)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if np.any(mask):
                tloc = np.clip(t[mask] - self.breaks[i], 0.0, seg.duration)
                out[mask] = seg.evaluate(tloc)
        return out[0] if scalar else out

    @property
    def endpoint(self):
        return self.segments[-1].end

    def iterate(self, m):
        """m-th iterate: traversal j is the path right-multiplied by end^j."""
        if m < 1:
            raise ValueError("iteration count must be >= 1")
        if m == 1:
            return self
        end = self.endpoint
        segs = list(self.segments)
        C = np.eye(2 * self.n)
        for _ in range(m - 1):
            C = end @ C
            segs.extend(_ComposedSegment(s, C) for s in self.segments)
        return SymplecticPath(segs)


def iterate_path(path, m):
    """Module-level alias for SymplecticPath.iterate."""
    return path.iterate(m)


def diamond_paths(*paths):
    """Pointwise symplectic direct sum of paths with a common duration."""
    if not paths:
        raise ValueError("need at least one path")
    tau = paths[0].tau
    if any(abs(p.tau - tau) > 1e-12 * max(1.0, tau) for p in paths):
        raise ValueError("diamond factors must share their duration")
    if len(paths) == 1:
        return paths[0]
    n = sum(p.n for p in paths)

    def fn(t):
        stacks = [p.evaluate(t) for p in paths]
        out = np.zeros((len(t), 2 * n, 2 * n))
        off = 0
        for p, st in zip(paths, stacks):
            k = p.n
            rows = np.r_[off:off + k, n + off:n + off + k]
            out[np.ix_(np.arange(len(t)), rows, rows)] = (
                st[np.ix_(np.arange(len(t)),
                          np.r_[0:k, k:2 * k], np.r_[0:k, k:2 * k])])
            off += k
        return out

    return SymplecticPath([CallableSegment(fn, tau, n)])


def xi_reference(n, stagger=True):
    """Reference path from diag(2,1/2)-type blocks to the identity.

    Each symplectic plane carries ``diag(a_j(s), 1/a_j(s))`` with ``a_j``
    decreasing from 2 to 1.  With ``stagger=True`` the planes approach 1 at
    slightly different rates (same endpoints, homotopic through positive
    diagonal matrices), so each plane's arrival is an isolated simple event
    for the crossing counter instead of one n-fold degenerate event.
    """
    if stagger:
        powers = np.array([1.0 + (j + 1) / (n + 1.5) for j in range(n)])
    else:
        powers = np.ones(n)

    def fn(t):
        s = np.asarray(t, dtype=float)
        a = 1.0 + (1.0 - s[:, None]) ** powers[None, :]
        out = np.zeros((len(s), 2 * n, 2 * n))
        cols = np.arange(n)
        out[:, cols, cols] = a
        out[:, n + cols, n + cols] = 1.0 / a
        return out

    return CallableSegment(fn, 1.0, n)


# ---------------------------------------------------------------------------
# crossing counting
# ---------------------------------------------------------------------------

def _unit_angle_data(M, omega, radial_band=1e-5):
    """Unit eigenvalues of M away from -omega: list of (angle offset, krein).

    Defective unit pairs (twisted-plane interiors) carry a vanishing Krein
    form; they are kept with sign 0 because their +- contributions cancel
    as long as the pair does not straddle omega, which the window logic in
    _potential_jump verifies.  Raises ArithmeticError when an eigenvalue
    sits on the unit-circle band edge or at omega itself, so the caller
    can move its probe.
    """
    dim = M.shape[0]
    J = standard_J(dim // 2)
    vals, vecs = np.linalg.eig(M)
    radial = np.abs(np.abs(vals) - 1.0)
    angs = np.angle(vals * np.conjugate(omega))
    data = []
    for k in range(dim):
        if radial[k] > 5.0 * radial_band:
            continue
        v = vecs[:, k]
        q = np.imag(np.vdot(v, J @ v))
        if abs(q) <= 1e-6:
            # Krein-null: either a real pair / complex quartet escaping the
            # circle radially, or one of a defective unit pair whose +-
            # contributions cancel.  Neither carries branch flow, so keep
            # it (weight 0) only to let the window logic see unit pairs.
            if radial[k] > 0.2 * radial_band:
                continue
            mu = angs[k]
            if abs(mu) <= 2.6 and abs(mu) > 1e-9:
                data.append((mu, 0.0))
            continue
        if radial[k] > 0.2 * radial_band:
            raise ArithmeticError("eigenvalue sits on the unit-circle band edge")
        mu = angs[k]
        if abs(mu) > 2.6:
            continue
        if abs(mu) < 1e-9:
            raise ArithmeticError("eigenvalue still at omega at the probe point")
        data.append((mu, 1.0 if q > 0 else -1.0))
    return data


_WINDOWS = tuple(0.5 * np.pi / (1.37 ** k) for k in range(7))


def _check_null_pairs(data, W):
    """Krein-null branches inside the window must pair up on one side."""
    for side in (1.0, -1.0):
        nulls = [mu for mu, k in data if k == 0.0 and abs(mu) < W
                 and np.sign(mu) == side]
        if len(nulls) % 2:
            return False
    return True


def _potential_jump(Ma, Mb, omega, radial_band):
    """Branch-potential difference Phi(b) - Phi(a) across one event.

    The potential at a probe is half the Krein-signed count of unit
    eigenvalue angles inside a window around omega.  The window size is
    chosen so that no eigenvalue at either probe sits near its boundary,
    which makes the inside/outside classification consistent across the
    event; bystander branches then cancel and only branches that actually
    cross omega contribute.
    """
    da = _unit_angle_data(Ma, omega, radial_band)
    db = _unit_angle_data(Mb, omega, radial_band)
    for W in _WINDOWS:
        near = [mu for mu, _ in da + db if 0.82 * W < abs(mu) < 1.22 * W]
        if near:
            continue
        if not (_check_null_pairs(da, W) and _check_null_pairs(db, W)):
            continue
        phi_a = 0.5 * sum(k * np.sign(mu) for mu, k in da if abs(mu) < W)
        phi_b = 0.5 * sum(k * np.sign(mu) for mu, k in db if abs(mu) < W)
        return phi_b - phi_a
    raise ArithmeticError("no admissible angular window at this probe pair")


def _co_orientation(M0, omega, eta, J):
    """Sign of d_omega just off M0 in the positive rotation direction.

    Returns +-1, or None when the reference zero is not simple at scale eta
    (degenerate surface point), in which case the branch potential decides.
    """
    h1 = d_omega(M0 @ expm(eta * J), omega)
    h2 = d_omega(M0 @ expm(0.5 * eta * J), omega)
    hm = d_omega(M0 @ expm(-0.5 * eta * J), omega)
    if h1 == 0.0 or h2 == 0.0 or hm == 0.0:
        return None
    if np.sign(h1) != np.sign(h2) or np.sign(h2) == np.sign(hm):
        return None
    return int(np.sign(h1))


# Per-plane speed offsets for the counting rotation.  All speeds positive
# (so the normalization of the constant path is unchanged) and pairwise
# incommensurate, so that eigenvalue pairs glued by a Jordan coupling are
# split transversally instead of being translated rigidly along the circle.
_STAGGER_STEP = 0.3819660112501051


def _plane_speeds(n):
    return 1.0 + _STAGGER_STEP * np.arange(n)


def _stagger_rotation(n, delta):
    """Block rotation exp(-delta*K), K rotating plane j at speed 1+j*step."""
    ang = delta * _plane_speeds(n)
    c, s = np.diag(np.cos(ang)), np.diag(np.sin(ang))
    return np.block([[c, s], [-s, c]])


class _CountingProblem:
    """One rotated catenation, counted at a fixed delta."""

    def __init__(self, path, omega, delta, base_samples):
        self.n = path.n
        self.omega = complex(omega)
        self.delta = float(delta)
        self.J = standard_J(self.n)
        self.rot = _stagger_rotation(self.n, self.delta)
        segs = [xi_reference(self.n)] + list(path.segments)
        self.segments = segs
        self.breaks = np.concatenate([[0.0], np.cumsum([s.duration for s in segs])])
        self.total = float(self.breaks[-1])
        self.base_samples = int(base_samples)
        # Candidates closer together than a small fraction of the rotation
        # amplitude cannot be told apart by the branch probes, so they are
        # clustered; probes must in turn stay clear of a cluster's interior.
        self.merge_tol = max(1e-9 * max(1.0, self.total), 0.02 * self.delta)

    def matrix(self, s):
        """Rotated catenation value(s) at global parameter(s) s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((len(s), 2 * self.n, 2 * self.n))
        idx = np.clip(np.searchsorted(self.breaks, s, side="right") - 1, 0,
                      len(self.segments) - 1)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if np.any(mask):
                tloc = np.clip(s[mask] - self.breaks[i], 0.0, seg.duration)
                out[mask] = seg.evaluate(tloc)
        return out @ self.rot

    def g(self, s):
        return d_omega(self.matrix(s), self.omega, self.n)

    # -- zero localisation ---------------------------------------------------

    def _segment_grid(self, i):
        """Sample grid for one segment: uniform body plus geometric ends.

        Right after (and right before) every junction the rotated catenation
        crosses the degenerate surface at parameter distances of order
        delta/speed, one event per active block, separated by ratios rather
        than differences.  Geometric refinement toward both segment ends
        resolves such clusters for any rotation amplitude down to 1e-10.
        """
        a, b = self.breaks[i], self.breaks[i + 1]
        m = self.base_samples
        body = np.linspace(a, b, m + 1)
        ends = np.geomspace(1e-10, 1.0, 61)
        grid = np.concatenate([body, a + (b - a) * ends, b - (b - a) * ends])
        return np.unique(grid)

    def _bisect(self, a, b, ga, gb):
        for _ in range(80):
            m = 0.5 * (a + b)
            if b - a < 1e-12 * max(1.0, self.total):
                return m
            gm = self.g(m)[0]
            if gm == 0.0:
                return m
            if np.sign(gm) == np.sign(ga):
                a, ga = m, gm
            else:
                b, gb = m, gm
        return 0.5 * (a + b)

    def _refine_dip(self, a, b, depth=0):
        """Find every zero of g inside one cell, crossings and touches alike.

        A cell flagged by the caller may hide an arbitrary zero cluster: an
        odd number of crossings looks like one sign flip, an even number
        like no flip at all, and even-order touches of the degenerate
        surface (every vertex passage of an elliptic block) never flip the
        sign of g.  The cell is subdivided; sign-flip subcells and dip-like
        same-sign subcells (|g| small relative to a local reference) are both
        zoomed recursively, so crossings found at one level never stop the
        hunt.  At the bottom, flips are bisected and touches emitted at the
        |g| minimum; a spurious touch candidate is harmless because the
        branch-potential jump across it is then zero.
        """
        s = np.linspace(a, b, 17)
        g = self.g(s)
        zeros = []
        sgn = np.sign(g)
        absg = np.abs(g)
        local = float(np.max(absg))
        bottom = depth >= 9 or (b - a) < 1e-10 * max(1.0, self.total)
        runs = []
        for k in range(16):
            if sgn[k] == 0.0:
                zeros.append(s[k])
                continue
            is_flip = sgn[k] != sgn[k + 1] and sgn[k + 1] != 0.0
            is_dip = min(absg[k], absg[k + 1]) < 0.05 * max(local, 1e-300)
            if not (is_flip or is_dip):
                continue
            if bottom:
                if is_flip:
                    zeros.append(self._bisect(s[k], s[k + 1], g[k], g[k + 1]))
                else:
                    zeros.append(s[k] if absg[k] < absg[k + 1] else s[k + 1])
            elif runs and k == runs[-1][-1] + 1:
                runs[-1][-1] = k
            else:
                runs.append([k, k])
        for lo, hi in runs:
            zeros.extend(self._refine_dip(
                s[max(0, lo - 1)], s[min(16, hi + 2)], depth + 1))
        return zeros

    def locate_events(self):
        events = []
        for i in range(len(self.segments)):
            s = self._segment_grid(i)
            g = self.g(s)
            sgn = np.sign(g)
            absg = np.abs(g)
            for k in range(len(s) - 1):
                if sgn[k] == 0.0:
                    events.append(s[k])
                elif sgn[k] != sgn[k + 1]:
                    # a flip cell holds an odd number of crossings, not
                    # necessarily one; the recursive scan finds them all
                    events.extend(self._refine_dip(s[k], s[k + 1]))
                else:
                    # same-sign cell: look for hidden dips relative to the
                    # neighbourhood (an even-order touch has a quadratic
                    # profile, so a mid-cell touch still leaves a visible dip
                    # at this threshold; an even number of crossings leaves
                    # a sign-reversed interval).  Cells adjacent to a
                    # crossing also qualify; a re-found zero collapses into
                    # the real one at the merge step, while a cluster's
                    # second pair hiding next to the first is only ever
                    # found this way.  The reference max is taken over a
                    # window wider than any crossing cluster, because inside
                    # a cluster |g| is uniformly tiny and a narrow reference
                    # would see no dip.
                    lo = max(0, k - 8)
                    hi = min(len(s) - 1, k + 9)
                    local = np.max(absg[lo:hi + 1])
                    if min(absg[k], absg[k + 1]) < 0.05 * max(local, 1e-300):
                        events.extend(self._refine_dip(s[k], s[k + 1]))
        if sgn[-1] == 0.0:
            events.append(s[-1])
        events = sorted(events)
        merged = []
        # The potential jump across a merged window is the sum of the
        # individual jumps, so clustering is exact -- even when it unites
        # genuinely distinct events.  The width is therefore chosen
        # generously, at half the rotation amplitude: the zoom tends to
        # emit several candidate shards across the flat bottom of an
        # even-order touch, and probing those shards one by one tiles the
        # bottom with gaps that can swallow the actual flow.  One merged
        # event is probed from outside the whole cluster instead.
        wide = max(self.merge_tol, 0.5 * self.delta)
        for e in events:
            if merged and e - merged[-1][-1] < wide:
                merged[-1].append(e)
            else:
                merged.append([e])
        self._event_halfwidth = {}
        centers = []
        for c in merged:
            mid = 0.5 * (c[0] + c[-1])
            centers.append(mid)
            self._event_halfwidth[mid] = 0.5 * (c[-1] - c[0])
        return centers

    # -- event contributions ---------------------------------------------------

    def _station_jump(self, sa, sb):
        """Branch-potential jump across one probe pair, or raise."""
        ga, gb = self.g(np.array([sa, sb]))
        if ga == 0.0 or gb == 0.0:
            raise ArithmeticError("probe landed on the degenerate surface")
        Ma, Mb = self.matrix(np.array([sa, sb]))
        contrib = _potential_jump(Ma, Mb, self.omega, 1e-5)
        k = int(round(contrib))
        if abs(contrib - k) > 1e-6:
            raise ArithmeticError(
                f"non-integral branch potential jump {contrib!r}")
        return k, ga, gb

    def _flow_center(self, a, b, ga, gb):
        """Best estimate of the flow carrier inside one probe window: the
        bisected sign flip when there is one, else the |g| minimum.  The
        zoom candidate itself can sit well off the true zero (it is only
        the argmin of a coarse cell), so validation probes are centred
        here instead."""
        if np.sign(ga) != np.sign(gb):
            return self._bisect(a, b, ga, gb)
        for _ in range(4):
            s = np.linspace(a, b, 33)
            absg = np.abs(self.g(s))
            k = int(np.argmin(absg))
            a, b = s[max(0, k - 1)], s[min(32, k + 1)]
        return 0.5 * (a + b)

    def _flowless(self, a, b, lo, hi, edge):
        """Whether g is bounded away from zero on [a, b] outside (lo, hi).

        `edge` is |g| at the inner-window boundary; a single zero inside
        (lo, hi) makes |g| grow away from it, so a dive below a fraction
        of the edge value on the outer stretches betrays a second zero."""
        chunks = []
        if lo - a > 1e-13:
            chunks.append(np.linspace(a, lo, 13))
        if b - hi > 1e-13:
            chunks.append(np.linspace(hi, b, 13))
        if not chunks:
            return True
        absg = np.abs(self.g(np.concatenate(chunks)))
        return bool(np.min(absg) > 0.25 * edge)

    def _event_contribution(self, s0, m_left, m_right):
        """Flow through omega between the two probe stations of one event.

        The stations are shared with the neighbouring events, so the
        per-event windows tile the path with no unobserved strip: flow
        sitting far off a zoom candidate (a shallow touch smears
        candidates across its whole flat bottom) still lands in exactly
        one window.  The full-width jump is therefore the authoritative
        value.  It is cross-examined twice:

        * the parity invariant -- det(M - omega I) changes sign across
          the window iff an odd number of branches passed through omega;
        * validation probes at shrinking widths centred on the flow
          carrier itself.  An eigenvalue pair colliding at omega moves at
          square-root speed, so wide stations can find its branches
          outside every admissible window and silently report no flow,
          while pulled-in probes see them; the narrow reading overrides
          the wide one only when the rest of the window verifiably
          carries no other zero of g.
        """
        half = getattr(self, "_event_halfwidth", {}).get(s0, 0.0)
        sa, sb = m_left, m_right
        k_full = None
        last_err = None
        for _ in range(4):
            try:
                k_full, ga, gb = self._station_jump(sa, sb)
                break
            except ArithmeticError as err:
                last_err = err
                # a station sitting on a zero or a band edge is nudged
                # inward; the abandoned strip is re-checked for flow below
                if s0 - sa >= sb - s0:
                    sa = sa + 0.12 * (s0 - sa)
                else:
                    sb = sb - 0.12 * (sb - s0)
        if k_full is None:
            raise IndexUncertainError(
                f"no usable probe stations at s={s0:.6f}: {last_err}",
                interval=(m_left, m_right))
        if sa != m_left and not self._flowless(m_left, sa, sa, sa, abs(ga)):
            raise IndexUncertainError(
                f"flow may hide behind a moved probe station at s={s0:.6f}",
                interval=(m_left, sa))
        if sb != m_right and not self._flowless(sb, m_right, sb, sb, abs(gb)):
            raise IndexUncertainError(
                f"flow may hide behind a moved probe station at s={s0:.6f}",
                interval=(sb, m_right))

        parity_full = (np.sign(ga) != np.sign(gb)) == (k_full % 2 != 0)

        # validation cascade around the flow carrier
        floor = max(1e-11, 3.0 * self.merge_tol, 2.0 * half)
        base = 0.0
        subs = []
        hidden = False
        s_c = None
        if min(s0 - sa, sb - s0) > floor:
            s_c = self._flow_center(sa, sb, ga, gb)
            base = min(s_c - sa, sb - s_c)
            for f in (0.35, 0.08, 0.015):
                w = f * base
                if w < floor:
                    break
                try:
                    k_s, gsa, gsb = self._station_jump(s_c - w, s_c + w)
                except ArithmeticError:
                    continue
                if (np.sign(gsa) != np.sign(gsb)) != (k_s % 2 != 0):
                    continue  # blind validation probe, discard
                if not self._flowless(sa, sb, s_c - w, s_c + w,
                                      min(abs(gsa), abs(gsb))):
                    hidden = True
                    break
                subs.append(k_s)

        if parity_full and all(k == k_full for k in subs):
            k = k_full
        elif (not hidden and len(subs) >= 2 and subs[-1] == subs[-2]
              and (np.sign(ga) != np.sign(gb)) == (subs[-1] % 2 != 0)):
            # the stations were blind to a collision at omega; the two
            # narrowest sighted probes agree and the window carries no
            # other zero, so their reading stands for the whole window
            k = subs[-1]
        else:
            raise IndexUncertainError(
                f"unresolvable crossing cluster at s={s0:.6f}: "
                f"station flow {k_full}, validation {subs}"
                + (", hidden zeros" if hidden else ""),
                interval=(sa, sb))

        # Co-orientation cross-check, but only for certified simple
        # crossings: one sign flip, unit potential jump, simple zero.
        # Wider probes may legitimately absorb an unlisted neighbouring
        # touch, in which case the local sign rule does not apply.
        if np.sign(ga) != np.sign(gb) and abs(k) == 1 and s_c is not None:
            M0 = self.matrix(np.array([s_c]))[0]
            if nullity_omega(M0, self.omega) == 1:
                sigma = _co_orientation(
                    M0, self.omega, self.delta / 16.0, self.J)
                if sigma is not None:
                    direct = sigma * (np.sign(gb) - np.sign(ga)) / 2.0
                    if int(round(direct)) != k:
                        raise IndexUncertainError(
                            f"crossing sign disagreement at s={s0:.6f}: "
                            f"co-orientation {direct:+.0f} "
                            f"vs branch flow {k:+d}",
                            interval=(sa, sb))
        return k

    def count(self):
        # entry guard: rotating the start matrix must not cross the surface
        u = np.linspace(0.0, 1.0, 9)
        start = self.matrix(np.array([0.0]))[0] @ _stagger_rotation(
            self.n, -self.delta)
        tail = np.stack(
            [start @ _stagger_rotation(self.n, ui * self.delta) for ui in u])
        gtail = d_omega(tail, self.omega, self.n)
        if np.min(np.abs(gtail)) == 0.0 or np.any(np.sign(gtail) != np.sign(gtail[0])):
            raise IndexUncertainError("entry tail touches the degenerate surface")

        events = self.locate_events()
        # Probe stations: adjacent events share the midpoint between them
        # (the same float), so their windows tile the crowded stretches
        # with no gap; across an empty stretch wider than twice the cap
        # the probes stay near their events, which is safe because the
        # grid scan certified g nonzero there.
        cap = 2e-4 * max(1.0, self.total)
        mids = []
        for j in range(len(events) - 1):
            d = events[j + 1] - events[j]
            mids.append(events[j] + 0.5 * d if d <= 2.0 * cap else None)
        total = 0
        for j, s0 in enumerate(events):
            if j == 0:
                m_left = s0 - min(0.5 * s0, cap)
            else:
                m_left = mids[j - 1] if mids[j - 1] is not None else s0 - cap
            if j + 1 == len(events):
                m_right = s0 + min(0.5 * (self.total - s0), cap)
            else:
                m_right = mids[j] if mids[j] is not None else s0 + cap
            total += self._event_contribution(s0, m_left, m_right)
        return total


def _pick_delta(path, omega):
    """Rotation amplitude: safely below the angular gap from the endpoint
    spectrum to omega (excluding eigenvalues at omega itself)."""
    vals = np.linalg.eigvals(path.endpoint)
    unit = vals[np.abs(np.abs(vals) - 1.0) < 1e-6]
    gaps = []
    for lam in unit:
        mu = abs(np.angle(lam * np.conjugate(complex(omega))))
        if mu > 1e-7:
            gaps.append(mu)
    base = 1e-4
    if gaps:
        # the fastest plane rotates at speed max(_plane_speeds)
        base = min(base, min(gaps) / (8.0 * float(_plane_speeds(path.n)[-1])))
    return max(base, 1e-8)


def index_nullity(path, omega=1.0, delta=None, base_samples=96):
    """Maslov-type index and nullity of a symplectic path at omega.

    The index is the signed crossing count described in the module
    docstring; the nullity is computed independently from the endpoint.
    Degenerate endpoints are handled by the built-in endpoint rotation,
    which realizes the minimizing non-degenerate perturbation.
    """
    omega = complex(omega)
    if abs(abs(omega) - 1.0) > 1e-12:
        raise ValueError("omega must lie on the unit circle")
    if delta is None:
        delta = _pick_delta(path, omega)
    nu = nullity_omega(path.endpoint, omega)

    def count_at(d, samples):
        # Geometric coincidences (events sharing a grid cell, probes
        # touching a band edge) depend on the rotation amplitude, so a
        # failed count is retried at slightly perturbed amplitudes before
        # giving up.  Each accepted count must survive doubling the sample
        # grid: crossing clusters shrink with the rotation amplitude, so a
        # sampling miss -- unlike a genuine amplitude sensitivity -- gets
        # worse at smaller d and must be caught per amplitude.
        last = None
        for f in (1.0, 0.81, 0.69, 1.24):
            try:
                c1 = _CountingProblem(path, omega, d * f, samples).count()
                c2 = _CountingProblem(path, omega, d * f, 2 * samples).count()
            except IndexUncertainError as err:
                last = err
                continue
            if c1 == c2:
                return c1
            last = IndexUncertainError(
                f"crossing count changed under grid refinement: {c1} vs {c2}")
        raise last

    counts = [count_at(delta, base_samples), count_at(delta / 2.0, base_samples)]
    if counts[0] != counts[1]:
        third = count_at(delta / 4.0, base_samples * 2)
        if third != counts[1]:
            raise IndexUncertainError(
                f"crossing count unstable under rotation refinement: {counts + [third]}")
        counts[0] = third
    return IndexPair(index=int(counts[0]), nullity=int(nu), omega=omega,
                     degenerate=nu > 0)


def index_pair_sequence(path, m_max, omega=1.0, **kw):
    """(index, nullity) for the first m_max iterates of the path."""
    out = []
    for m in range(1, m_max + 1):
        out.append(index_nullity(path.iterate(m), omega, **kw))
    return out


def mean_index_numeric(path, m_max=64, return_sequence=False):
    """Numerical mean index from the iterate sequence at omega=1.

    The index of the m-th iterate deviates from m times the mean index by
    at most n (staircase bound), so the single-point ratio estimate
    ``index(m_max)/m_max`` carries a guaranteed error bound of n/m_max.
    The least-squares slope over all iterates is usually sharper but its
    worst-case bound is weaker, so it is returned only while it stays
    inside the ratio estimate's certificate; either way the result is
    within the reported half-width 2n/m_max of the true mean index.
    """
    seq = [index_nullity(path.iterate(m)).index for m in range(1, m_max + 1)]
    m = np.arange(1, m_max + 1, dtype=float)
    mbar = m.mean()
    slope = float(np.dot(m - mbar, np.asarray(seq, float)) / np.dot(m - mbar, m - mbar))
    ratio = seq[-1] / float(m_max)
    if abs(slope - ratio) > path.n / m_max:
        slope = ratio
    half_width = 2.0 * path.n / m_max
    if return_sequence:
        return slope, half_width, seq
    return slope, half_width
