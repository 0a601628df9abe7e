"""Stability analysis of modified-gradient systems x' = P(t) grad f(x).

Find and classify equilibria of the scalar field f, certify the stability
hypotheses numerically (including the smallest-eigenvalue integral
condition on P(t)), extract sublevel-component basin estimates, and verify
them by simulation.
"""

from .basin import (
    BasinVerification,
    GridComponent,
    HypothesesReport,
    check_hypotheses,
    extract_component,
    suggest_cut_level,
    verify_basin,
)
from .equilibria import (
    Classification,
    CriticalPoint,
    IsolationKind,
    IsolationVerdict,
    find_critical_points,
    isolation_probe,
)
from .errors import (
    EvalDomainError,
    NumericFailure,
    OutsideDomainError,
    ParseError,
)
from .expr import Expression, parse
from .field import (
    Box,
    ExpressionField,
    H0Report,
    MatrixPath,
    ProceduralField,
    ScalarField,
    System,
    validate_h0,
)
from .gallery import GALLERY_IDS, GalleryEntry, PiecewiseCubic
from .gallery import build as build_gallery
from .gallery import example_2_1, example_2_2, example_3_1
from .linalg import eigen_all, eigen_smallest, integrate_adaptive
from .ode import LyapunovTrace, SimOptions, Status, Trajectory, lyapunov_trace, simulate
from .stability import (
    CertifyOptions,
    Conclusion,
    EcKind,
    EcVerdict,
    StabilityReport,
    certify,
    ec_check,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ScalarField",
    "ExpressionField",
    "ProceduralField",
    "MatrixPath",
    "System",
    "H0Report",
    "validate_h0",
    "Expression",
    "parse",
    "eigen_all",
    "eigen_smallest",
    "integrate_adaptive",
    "SimOptions",
    "Status",
    "Trajectory",
    "LyapunovTrace",
    "simulate",
    "lyapunov_trace",
    "Classification",
    "CriticalPoint",
    "IsolationKind",
    "IsolationVerdict",
    "find_critical_points",
    "isolation_probe",
    "EcKind",
    "EcVerdict",
    "Conclusion",
    "StabilityReport",
    "CertifyOptions",
    "ec_check",
    "certify",
    "GridComponent",
    "HypothesesReport",
    "BasinVerification",
    "extract_component",
    "check_hypotheses",
    "verify_basin",
    "suggest_cut_level",
    "GalleryEntry",
    "PiecewiseCubic",
    "GALLERY_IDS",
    "build_gallery",
    "example_2_1",
    "example_2_2",
    "example_3_1",
    "ParseError",
    "EvalDomainError",
    "OutsideDomainError",
    "NumericFailure",
]
