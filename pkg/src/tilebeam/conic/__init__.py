from .blocks import (
    ConeDims,
    embed_hermitian,
    extract_hermitian,
    hermitian_from_params,
    hermitian_param_coeffs,
    hermitian_params,
    n_hermitian_params,
    sdim,
    svec,
    unsvec,
)
from .program import ConicProgram, ConicSolution, ProgramBuilder, presolve
from .solver import solve
from .kkt import KktReport, check_kkt
from .sdpa import export_standard_text, import_standard_text

__all__ = [
    "ConeDims", "ConicProgram", "ConicSolution", "ProgramBuilder",
    "KktReport", "check_kkt", "embed_hermitian", "extract_hermitian",
    "export_standard_text", "hermitian_from_params", "hermitian_param_coeffs",
    "hermitian_params", "import_standard_text", "n_hermitian_params",
    "presolve", "sdim", "solve", "svec", "unsvec",
]
