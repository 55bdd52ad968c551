"""Spheroidal wave functions and acoustic scattering by prolate spheroids, oblate spheroids and disks."""
from .coords import Geometry, Kind, SpheroidalPoint, from_cartesian, to_cartesian
from .errors import (
    AccuracyError,
    ConvergenceError,
    DomainError,
    ResonanceError,
    SpheroscatError,
    TruncationError,
)
from .fields import (
    Hard,
    ModeProvider,
    PlaneWave,
    PointSource,
    Robin,
    ScatteringProblem,
    Soft,
    TruncationPolicy,
    Which,
    boundary_residual,
    eval_field,
    eval_field_xi_derivative,
    expand_plane_wave,
    expand_point_source,
    incident_exact,
    solve_scattering,
)
from .specfun import ModeCoefficients, angle_s1, norm_nmn, radial, radial_at_disk, solve_mode

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "ConvergenceError",
    "DomainError",
    "Geometry",
    "Hard",
    "Kind",
    "ModeCoefficients",
    "ModeProvider",
    "PlaneWave",
    "PointSource",
    "ResonanceError",
    "Robin",
    "ScatteringProblem",
    "Soft",
    "SpheroidalPoint",
    "SpheroscatError",
    "TruncationError",
    "TruncationPolicy",
    "Which",
    "angle_s1",
    "boundary_residual",
    "eval_field",
    "eval_field_xi_derivative",
    "expand_plane_wave",
    "expand_point_source",
    "from_cartesian",
    "incident_exact",
    "norm_nmn",
    "radial",
    "radial_at_disk",
    "solve_mode",
    "solve_scattering",
    "to_cartesian",
]
