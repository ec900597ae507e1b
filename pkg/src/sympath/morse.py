"""Morse-type counting harness over closed-orbit index tables.

The variational setup assigns each non-degenerate iterate ``y^m`` of a
closed characteristic one potential homology generator, sitting in degree
``q = i(y^m)`` and surviving the S^1-quotient exactly when the
orientation character

    beta(y^m) = (-1)^(i(y^m) - i(y))

equals one.  Summing survivors per degree gives the Morse numbers M_q;
the equivariant homology of the ambient space contributes one unit in
every even non-negative degree (the Betti series b_q).  The classical
two-sided comparison then demands

    M_q >= b_q   and   sum_{j<=q} (-1)^(q-j) (M_j - b_j) >= 0

for every degree q below the truncation-safe cutoff.  On weakly
non-resonant ellipsoids the series is observed to be perfect: M_q = b_q
at every even q and zero at odd q.

Degenerate iterates are out of scope: their critical groups need local
homology computations, not a single generator, so the series constructor
refuses them loudly instead of guessing.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, Sequence

from .bodies import ClosedOrbit, classify, orbit_indices
from .jumps import rho_n
from .normal_form import decompose, splitting_numbers


@dataclasses.dataclass
class MorseSeries:
    """Morse numbers M_q and ambient Betti numbers b_q up to q_max.

    ``cutoff_safe_q`` is the largest degree guaranteed free of truncation
    artifacts: one below the smallest index among the first iterates that
    the tabulation omitted.
    """

    q_max: int
    M: Dict[int, int]
    b: Dict[int, int]
    cutoff_safe_q: int
    provisional: bool = False

    def __post_init__(self):
        for q, mq in self.M.items():
            if q < 0 and mq != 0:
                raise ValueError("Morse numbers live in degrees >= 0")
        for q in range(0, self.q_max + 1):
            want = 1 if q % 2 == 0 else 0
            if self.b.get(q, 0) != want:
                raise ValueError(f"Betti series wrong at q={q}")


def betti(q: int) -> int:
    """Ambient equivariant Betti number: 1 in even non-negative degrees."""
    return 1 if q >= 0 and q % 2 == 0 else 0


class DegenerateIterateError(ValueError):
    """An iterate inside the counting range has extra nullity."""


def morse_series(orbits: Sequence[ClosedOrbit], q_max: int,
                 m_max: int = 2000) -> MorseSeries:
    """Assemble the Morse numbers of an orbit family up to degree q_max.

    Every orbit is iterated until its traversal index leaves the counting
    window; each non-degenerate iterate with ``i(y^m) <= q_max``
    contributes one generator in degree ``i(y^m)`` iff its orientation
    character is +1.  A degenerate iterate (nullity above the structural
    unit) inside the window raises :class:`DegenerateIterateError` naming
    the orbit and the iterate.
    """
    M = {q: 0 for q in range(0, q_max + 1)}
    first_omitted = []
    for j, orbit in enumerate(orbits):
        table = orbit_indices(orbit, m_max=m_max)
        i_prime = table[0][3]
        omitted = None
        for m, _, _, i_m, nu_m in table:
            if i_m > q_max:
                omitted = i_m
                break
            if nu_m != 1:
                raise DegenerateIterateError(
                    f"orbit {j} (period {orbit.period:.6f}) iterate m={m} "
                    f"is degenerate (nullity {nu_m}); its critical group "
                    "is not a single generator")
            if i_m < 0:
                raise ValueError(
                    f"orbit {j} iterate m={m} has negative index {i_m}; "
                    "not a convex-body orbit family")
            if (i_m - i_prime) % 2 == 0:  # orientation character +1
                M[i_m] += 1
        if omitted is None:
            raise ValueError(
                f"orbit {j}: index table exhausted below q_max={q_max}; "
                f"raise m_max (last index {table[-1][3]})")
        first_omitted.append(omitted)
    cutoff = min(first_omitted) - 1 if first_omitted else q_max
    b = {q: betti(q) for q in range(0, q_max + 1)}
    return MorseSeries(q_max=q_max, M=M, b=b,
                       cutoff_safe_q=min(cutoff, q_max))


def check_morse_inequalities(series: MorseSeries) -> dict:
    """Two-sided Morse comparison up to the truncation-safe cutoff.

    Returns a report with per-degree margins for the direct inequality
    ``M_q >= b_q`` and the alternating partial sums, plus the
    perfect-series observation (equality at even degrees).  Violations
    are collected, never raised.
    """
    rows = []
    violations = []
    alternating = 0
    perfect = True
    for q in range(0, series.cutoff_safe_q + 1):
        mq = series.M.get(q, 0)
        bq = series.b.get(q, betti(q))
        # S_q = sum_{j<=q} (-1)^(q-j)(M_j - b_j) satisfies the recursion
        # S_q = (M_q - b_q) - S_{q-1}
        alternating = (mq - bq) - alternating
        direct = mq - bq
        rows.append({"q": q, "M": mq, "b": bq,
                     "direct_margin": direct,
                     "alternating_margin": alternating})
        if direct < 0:
            violations.append(("direct", q, direct))
        if alternating < 0:
            violations.append(("alternating", q, alternating))
        if mq != bq:
            perfect = False
    return {
        "cutoff_safe_q": series.cutoff_safe_q,
        "rows": rows,
        "violations": violations,
        "passed": not violations,
        "perfect": perfect,
        "provisional": series.provisional,
    }


def multiplicity_report(orbits: Sequence[ClosedOrbit], n: int) -> dict:
    """Desk-scale check of the two multiplicity thresholds.

    Counts geometrically distinct primes and non-hyperbolic members among
    them, compares against ``[(n+1)/2] + 1`` (total) and ``[n/2] + 1``
    (non-hyperbolic), and attaches the index-based estimator rho_n.
    """
    primes = [o for o in orbits if o.prime]
    non_hyperbolic = 0
    triples = []
    for o in primes:
        flags = classify(o)
        if not flags["hyperbolic"]:
            non_hyperbolic += 1
        m, i1, nu1, _, _ = orbit_indices(o, m_max=1)[0]
        dec = decompose(o.monodromy_path.endpoint, tol=5e-6)
        sp, _ = splitting_numbers(dec, 1.0)
        triples.append((i1, sp, nu1))
    total_threshold = math.floor((n + 1) / 2) + 1
    nonhyp_threshold = math.floor(n / 2) + 1
    report = {
        "n": n,
        "distinct": len(primes),
        "non_hyperbolic": non_hyperbolic,
        "total_threshold": total_threshold,
        "non_hyperbolic_threshold": nonhyp_threshold,
        "total_pass": len(primes) >= total_threshold,
        "non_hyperbolic_pass": non_hyperbolic >= nonhyp_threshold,
        "rho_n": rho_n(triples, n) if triples else None,
    }
    report["passed"] = report["total_pass"] and report["non_hyperbolic_pass"]
    return report
