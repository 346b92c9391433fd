"""Piecewise operator calculus and Witten-deformation Morse inequalities on
periodic cell complexes."""
from .groups import (
    FolnerBox,
    GroupModel,
    TileFunction,
    WindowError,
    finitely_supported_vanishing_check,
    folner_average,
    geq_mod_ideal,
    word_distance,
)
from .complex import (
    BaseComplex,
    CochainSpace,
    CoverComplex,
    build_base,
    circle,
    coboundary,
    dirac,
    from_file,
    laplacian,
    parse_complex,
    torus,
)
from .operators import (
    DecayFit,
    WindowedOperator,
    compose,
    decay_fit,
    gershgorin_norm,
    piecewise_trace,
    rho1,
    rho2,
    rho2_pairing,
    trace_commutator_defect,
)
from .morse import (
    CellFunction,
    FileMorse,
    InvariantZigzag,
    Quasiperiodic,
    count_critical,
    make_morse,
    witten_weights,
)
from .calculus import Cutoff, Heat, chebyshev_fit, heat_trace_per_tile, poly_calculus
from .betti import (
    BettiReport,
    finite_cover_betti,
    floquet_betti,
    heat_betti,
    invariance_check,
    morse_inequality_eval,
)

__all__ = [
    "FolnerBox",
    "GroupModel",
    "TileFunction",
    "WindowError",
    "finitely_supported_vanishing_check",
    "folner_average",
    "geq_mod_ideal",
    "word_distance",
    "BaseComplex",
    "CochainSpace",
    "CoverComplex",
    "build_base",
    "circle",
    "coboundary",
    "dirac",
    "from_file",
    "laplacian",
    "parse_complex",
    "torus",
    "DecayFit",
    "WindowedOperator",
    "compose",
    "decay_fit",
    "gershgorin_norm",
    "piecewise_trace",
    "rho1",
    "rho2",
    "rho2_pairing",
    "trace_commutator_defect",
    "CellFunction",
    "FileMorse",
    "InvariantZigzag",
    "Quasiperiodic",
    "count_critical",
    "make_morse",
    "witten_weights",
    "Cutoff",
    "Heat",
    "chebyshev_fit",
    "heat_trace_per_tile",
    "poly_calculus",
    "BettiReport",
    "finite_cover_betti",
    "floquet_betti",
    "heat_betti",
    "invariance_check",
    "morse_inequality_eval",
]

__version__ = "0.1.0"
