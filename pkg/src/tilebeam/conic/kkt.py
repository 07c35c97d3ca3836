"""Independent KKT verification, decoupled from the solver internals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .program import ConicProgram, ConicSolution


@dataclass
class KktReport:
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    complementarity: float
    min_eig_x: float            # most negative eigenvalue over primal blocks
    min_eig_z: float
    min_nonneg_x: float
    min_nonneg_z: float
    tol: float

    @property
    def ok(self) -> bool:
        if self.status != "optimal":
            return self.status in ("infeasible", "unbounded")
        return (self.primal_residual <= self.tol
                and self.dual_residual <= self.tol
                and self.gap <= self.tol
                and self.complementarity <= 10.0 * self.tol
                and self.min_eig_x >= -self.tol
                and self.min_eig_z >= -self.tol
                and self.min_nonneg_x >= -self.tol
                and self.min_nonneg_z >= -self.tol)


def check_kkt(program: ConicProgram, solution: ConicSolution,
              tol: float = 1e-7) -> KktReport:
    """Recompute all optimality residuals from the raw program data."""
    if solution.status in ("infeasible", "unbounded"):
        return _check_certificate(program, solution, tol)

    bn, cn = program.data_norms()
    ax = program.apply_a(solution.x_psd, solution.x_nonneg, solution.x_free)
    pres = float(np.linalg.norm(ax - program.b)) / (1.0 + bn)

    at_mats, at_nn, at_fr = program.apply_at(solution.y)
    terms = []
    comp = 0.0
    min_eig_x, min_eig_z = 0.0, 0.0
    x_scale = 1.0
    for xm, zm, am, cm in zip(solution.x_psd, solution.z_psd, at_mats,
                              program.c_psd):
        terms.append((am + zm - cm).ravel())
        comp += abs(float(np.tensordot(xm, zm)))
        nrm = float(np.linalg.norm(xm))
        x_scale = max(x_scale, nrm)
        if len(xm):
            min_eig_x = min(min_eig_x,
                            float(np.linalg.eigvalsh(xm)[0]) / max(1.0, nrm))
            min_eig_z = min(min_eig_z, float(np.linalg.eigvalsh(zm)[0])
                            / max(1.0, float(np.linalg.norm(zm))))
    terms.append(at_nn + solution.z_nonneg - program.c_nonneg)
    terms.append(at_fr + solution.z_free - program.c_free)
    dres = float(np.linalg.norm(np.concatenate(terms))) / (1.0 + cn)

    if program.dims.nonneg:
        comp += abs(float(solution.x_nonneg @ solution.z_nonneg))
        min_nn_x = float(solution.x_nonneg.min()) / max(1.0, x_scale)
        min_nn_z = float(solution.z_nonneg.min()) \
            / max(1.0, float(np.abs(solution.z_nonneg).max()))
    else:
        min_nn_x = min_nn_z = 0.0

    pobj = program.objective_value(solution.x_psd, solution.x_nonneg,
                                   solution.x_free)
    dobj = float(program.b @ solution.y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    comp_rel = comp / (1.0 + abs(pobj) + abs(dobj))

    return KktReport(status=solution.status, primal_residual=pres,
                     dual_residual=dres, gap=gap, complementarity=comp_rel,
                     min_eig_x=min_eig_x, min_eig_z=min_eig_z,
                     min_nonneg_x=min_nn_x, min_nonneg_z=min_nn_z, tol=tol)


def _check_certificate(program, solution, tol) -> KktReport:
    bn, cn = program.data_norms()
    if solution.status == "infeasible":
        by = float(program.b @ solution.y)
        at_mats, at_nn, at_fr = program.apply_at(solution.y)
        norm = np.sqrt(sum(float(np.sum(m * m)) for m in at_mats)
                       + float(at_nn @ at_nn) + float(at_fr @ at_fr))
        ok = by > 0.0 and norm * max(bn, 1e-12) <= 100.0 * tol * by
        return KktReport(status="infeasible", primal_residual=norm,
                         dual_residual=0.0, gap=0.0, complementarity=0.0,
                         min_eig_x=0.0, min_eig_z=0.0,
                         min_nonneg_x=0.0 if ok else -np.inf,
                         min_nonneg_z=0.0, tol=tol)
    ax = program.apply_a(solution.x_psd, solution.x_nonneg, solution.x_free)
    cx = program.objective_value(solution.x_psd, solution.x_nonneg,
                                 solution.x_free)
    norm = float(np.linalg.norm(ax))
    ok = cx < 0.0 and norm * max(cn, 1e-12) <= 100.0 * tol * (-cx)
    return KktReport(status="unbounded", primal_residual=norm,
                     dual_residual=0.0, gap=0.0, complementarity=0.0,
                     min_eig_x=0.0, min_eig_z=0.0,
                     min_nonneg_x=0.0 if ok else -np.inf,
                     min_nonneg_z=0.0, tol=tol)
