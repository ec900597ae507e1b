"""Index theory for symplectic paths and closed characteristics.

Numerical engine for Maslov-type indices of paths in Sp(2n), iteration
formulas driven by symplectic normal forms, common index jump intervals,
and closed characteristics on compact convex energy hypersurfaces.
"""

from .core import (
    diamond,
    diamond_power,
    hyperbolic,
    is_symplectic,
    n1,
    n2,
    random_symplectic,
    rot,
    standard_J,
    symplectic_defect,
)
from .normal_form import (
    Decomposition,
    DecompositionError,
    decompose,
    iteration_index,
    iteration_nullity,
    mean_index,
    parity_consistent,
    splitting_numbers,
)
from .paths import (
    CallableSegment,
    ExpSegment,
    IndexPair,
    IndexUncertainError,
    SampledSegment,
    SymplecticPath,
    diamond_paths,
    index_nullity,
    index_pair_sequence,
    iterate_path,
    mean_index_numeric,
)

__version__ = "0.1.0"
