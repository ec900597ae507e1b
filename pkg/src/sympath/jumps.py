"""Common-index-jump search and multiplicity estimators.

For a family of closed orbits with positive mean indices, the common
index jump theorem guarantees infinitely many tuples ``(T, m_1, ..., m_q)``
at which the iterated indices of all orbits align into a common window
around ``2T``:

* ``index(2m_j) >= 2T - e_j/2``                       (even lower bound)
* ``index(2m_j) + nullity(2m_j) <= 2T + e_j/2 - 1``   (even upper bound)
* ``index(2m_j + 1) == 2T + index(1)``                (odd above)
* ``index(2m_j - 1) + nullity(2m_j - 1)
      == 2T - (index(1) + 2 S^+(1) - nullity(1))``    (odd below)

where ``e_j`` is the total algebraic multiplicity of unit-circle
eigenvalues of the j-th monodromy.  This module searches for such tuples
by exhaustion over T with candidate m_j drawn from a window around the
mean-index ray ``T / mean_index_j``, and re-verifies certificates from
the closed-form iteration formulas alone.

The tuple search only ever reports "not found below the bound" on
failure: the theorem guarantees existence, not a location.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

from .normal_form import (
    Decomposition,
    iteration_index,
    iteration_nullity,
    mean_index,
    splitting_numbers,
)

CHECK_NAMES = ("even_lower", "even_upper", "odd_above", "odd_below")


@dataclasses.dataclass(frozen=True)
class JumpOrbit:
    """Closed-form iteration data for one orbit, the search's only input."""

    decomposition: Decomposition
    i1: int
    nu1: int

    def __post_init__(self):
        if self.nu1 != self.decomposition.nu_one:
            raise ValueError(
                f"nullity {self.nu1} does not match the decomposition's "
                f"eigenvalue-one structure ({self.decomposition.nu_one})")

    @property
    def mean(self) -> float:
        return mean_index(self.decomposition, self.i1)

    @property
    def elliptic_height(self) -> int:
        return self.decomposition.elliptic_height

    @property
    def s_plus_one(self) -> int:
        return splitting_numbers(self.decomposition, 1.0)[0]

    def index(self, m: int) -> int:
        return iteration_index(self.decomposition, self.i1, m)

    def nullity(self, m: int) -> int:
        return iteration_nullity(self.decomposition, self.nu1, m)


@dataclasses.dataclass(frozen=True)
class JumpCertificate:
    """A verified common-index-jump tuple (or a 'not found' marker).

    ``checks`` holds one mapping per orbit with the four condition
    booleans; a certificate is only constructed with all of them true
    unless ``found`` is False.
    """

    T: int
    m: tuple
    checks: tuple
    search_bound: int
    found: bool = True

    def as_dict(self) -> dict:
        return {
            "T": self.T,
            "m": list(self.m),
            "checks": [dict(c) for c in self.checks],
            "search_bound": self.search_bound,
            "found": self.found,
        }


def _as_orbit(entry) -> JumpOrbit:
    if isinstance(entry, JumpOrbit):
        return entry
    dec, i1, nu1 = entry
    return JumpOrbit(dec, int(i1), int(nu1))


def evaluate_conditions(orbit: JumpOrbit, T: int, m: int) -> dict:
    """The four alignment conditions for one orbit at a candidate (T, m)."""
    e = orbit.elliptic_height
    i_even = orbit.index(2 * m)
    nu_even = orbit.nullity(2 * m)
    lhs_odd_below = orbit.index(2 * m - 1) + orbit.nullity(2 * m - 1)
    return {
        "even_lower": i_even >= 2 * T - e / 2.0,
        "even_upper": i_even + nu_even <= 2 * T + e / 2.0 - 1.0,
        "odd_above": orbit.index(2 * m + 1) == 2 * T + orbit.i1,
        "odd_below": lhs_odd_below
        == 2 * T - (orbit.i1 + 2 * orbit.s_plus_one - orbit.nu1),
    }


def _candidates(T: int, mean: float, halfwidth: int):
    center = int(round(T / mean))
    lo = max(1, center - halfwidth)
    return range(lo, center + halfwidth + 1)


def find_common_jump(orbits: Sequence, bound: int) -> JumpCertificate:
    """Smallest verified common-index-jump tuple with T <= bound.

    ``orbits`` entries are JumpOrbit instances or (decomposition, i1, nu1)
    tuples.  The candidate window around T/mean starts at +-2 and widens
    to +-8 before the search concedes; a widened hit restarts from T=1 so
    the reported T is minimal for the wide window too.
    """
    orbs = [_as_orbit(o) for o in orbits]
    if not orbs:
        raise ValueError("need at least one orbit")
    if bound < 1:
        raise ValueError("bound must be a positive integer")
    means = [o.mean for o in orbs]
    if min(means) <= 0.0:
        raise ValueError("every orbit must have positive mean index")

    for halfwidth in (2, 8):
        for T in range(1, bound + 1):
            picked = []
            all_checks = []
            for orbit, mu in zip(orbs, means):
                hit = None
                for m in _candidates(T, mu, halfwidth):
                    checks = evaluate_conditions(orbit, T, m)
                    if all(checks.values()):
                        hit = (m, checks)
                        break
                if hit is None:
                    break
                picked.append(hit[0])
                all_checks.append(hit[1])
            else:
                return JumpCertificate(
                    T=T, m=tuple(picked), checks=tuple(all_checks),
                    search_bound=bound)
    return JumpCertificate(T=0, m=(), checks=(), search_bound=bound,
                           found=False)


def verify_certificate(cert: JumpCertificate, orbits: Sequence) -> bool:
    """Re-verify a certificate from the iteration formulas alone."""
    if not cert.found:
        return False
    orbs = [_as_orbit(o) for o in orbits]
    if len(orbs) != len(cert.m):
        return False
    for orbit, m in zip(orbs, cert.m):
        if m < 1 or not all(evaluate_conditions(orbit, cert.T, m).values()):
            return False
    return True


def rho_n(orbits: Sequence, n: int) -> int:
    """Multiplicity estimator: min over orbits of
    floor((i1 + 2 S^+ - nu1 + n) / 2).

    Entries are (i1, S_plus, nu1) triples or JumpOrbit instances.  An
    empty orbit list corresponds to the unbounded branch of the
    definition and is surfaced as an error.
    """
    vals = []
    for entry in orbits:
        if isinstance(entry, JumpOrbit):
            i1, sp, nu1 = entry.i1, entry.s_plus_one, entry.nu1
        else:
            i1, sp, nu1 = entry
        vals.append(math.floor((i1 + 2 * sp - nu1 + n) / 2.0))
    if not vals:
        raise ValueError("empty orbit list: the estimator is unbounded")
    return min(vals)


def check_index_sum_estimate(table: Sequence, i1: int, e: int) -> bool:
    """Iterated index-sum growth estimate.

    ``table[m-1] = (index(m), nullity(m))`` for m = 1..m_max.  Checks,
    for every m with m+1 tabulated, both

        index(m) + nullity(m) <= index(m+1) - index(1) + e/2 - 1

    and the weaker consequence ``<= index(m+1) - 1`` (valid in the convex
    setting where index(1) >= n >= e/2).
    """
    ok = True
    for m in range(1, len(table)):
        i_m, nu_m = table[m - 1]
        i_next = table[m][0]
        ok = ok and (i_m + nu_m <= i_next - i1 + e / 2.0 - 1.0)
        ok = ok and (i_m + nu_m <= i_next - 1)
    return bool(ok)
