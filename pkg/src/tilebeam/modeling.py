"""Small modeling layer over the conic solver.

Decision variables are real scalars and complex Hermitian matrices.
A model collects linear scalar constraints and linear matrix
inequalities and compiles to a standard-form ConicProgram with the
decision variables on the dual side: each scalar (or Hermitian
parameter) becomes one equality row, each scalar constraint becomes a
nonnegative (or free) cone component, and each matrix inequality an
embedded real-symmetric PSD block.  The solver's dual vector therefore
carries the decision values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic.blocks import (
    ConeDims,
    embed_hermitian,
    embedded_param_basis_svec,
    hermitian_from_params,
    hermitian_param_coeffs,
    hermitian_params,
    n_hermitian_params,
    svec,
)
from .conic.program import ConicSolution, ProgramBuilder


@dataclass(frozen=True)
class ScalarVar:
    name: str


@dataclass(frozen=True)
class MatVar:
    name: str
    dim: int


class LinExpr:
    """const + sum coeff * scalar + sum Re tr(Q @ MatVar)."""

    __slots__ = ("scalars", "mats", "const")

    def __init__(self, scalars=None, mats=None, const=0.0):
        self.scalars = dict(scalars or {})
        self.mats = dict(mats or {})
        self.const = float(const)

    def add_scalar(self, var: ScalarVar, coeff: float):
        self.scalars[var] = self.scalars.get(var, 0.0) + coeff
        return self

    def add_mat(self, var: MatVar, q: np.ndarray):
        cur = self.mats.get(var)
        self.mats[var] = q if cur is None else cur + q
        return self

    def value(self, assignment: dict) -> float:
        out = self.const
        for v, c in self.scalars.items():
            out += c * assignment[v.name]
        for v, q in self.mats.items():
            out += float(np.trace(q @ assignment[v.name]).real)
        return out


class MatExpr:
    """Hermitian-valued affine expression:
    const + sum coeff * MatVar + sum scalar * Q."""

    __slots__ = ("dim", "mats", "scalars", "const")

    def __init__(self, dim: int, mats=None, scalars=None, const=None):
        self.dim = dim
        self.mats = dict(mats or {})
        self.scalars = dict(scalars or {})
        self.const = (np.zeros((dim, dim), dtype=complex)
                      if const is None else np.asarray(const, dtype=complex))

    def add_mat(self, var: MatVar, coeff: float):
        if var.dim != self.dim:
            raise ValueError("dimension mismatch")
        self.mats[var] = self.mats.get(var, 0.0) + coeff
        return self

    def add_scalar(self, var: ScalarVar, q: np.ndarray):
        cur = self.scalars.get(var)
        self.scalars[var] = (np.asarray(q, dtype=complex) if cur is None
                             else cur + q)
        return self

    def value(self, assignment: dict) -> np.ndarray:
        out = self.const.copy()
        for v, c in self.mats.items():
            out = out + c * assignment[v.name]
        for v, q in self.scalars.items():
            out = out + assignment[v.name] * q
        return out


@dataclass
class Constraint:
    expr: object          # LinExpr or MatExpr
    sense: str            # ">=" (nonneg / PSD) or "==" (scalar only)
    label: str = ""

    def satisfied(self, assignment: dict, tol: float = 1e-9) -> bool:
        if isinstance(self.expr, MatExpr):
            m = self.expr.value(assignment)
            w = np.linalg.eigvalsh(m)
            return bool(w[0] >= -tol * max(1.0, abs(w[-1])))
        v = self.expr.value(assignment)
        if self.sense == "==":
            return bool(abs(v) <= tol)
        return bool(v >= -tol)


@dataclass
class ModelSolution:
    status: str            # optimal | infeasible | unbounded | max_iters
    values: dict = field(default_factory=dict)
    objective: float = np.nan
    conic: ConicSolution = None


class ConeModel:
    """Scalar/matrix variables, constraints, and a linear objective."""

    def __init__(self):
        self.scalar_vars: list[ScalarVar] = []
        self.mat_vars: list[MatVar] = []
        self._names = set()
        self.constraints: list[Constraint] = []
        self.objective = LinExpr()

    def scalar(self, name: str) -> ScalarVar:
        v = ScalarVar(name)
        self._register(name)
        self.scalar_vars.append(v)
        return v

    def hermitian(self, name: str, dim: int) -> MatVar:
        v = MatVar(name, dim)
        self._register(name)
        self.mat_vars.append(v)
        return v

    def _register(self, name):
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        self._names.add(name)

    def add(self, constraints):
        if isinstance(constraints, Constraint):
            constraints = [constraints]
        self.constraints.extend(constraints)
        return constraints

    def minimize(self, expr: LinExpr):
        self.objective = expr

    # -- compilation -------------------------------------------------------

    def var_offsets(self):
        offsets = {}
        pos = 0
        for v in self.scalar_vars:
            offsets[v.name] = (pos, 1)
            pos += 1
        for v in self.mat_vars:
            n = n_hermitian_params(v.dim)
            offsets[v.name] = (pos, n)
            pos += n
        return offsets, pos

    def compile(self):
        """Build the ConicProgram whose dual vector holds the variables."""
        offsets, m = self.var_offsets()
        psd_dims = []
        n_nonneg = n_free = 0
        for con in self.constraints:
            if isinstance(con.expr, MatExpr):
                if con.sense != ">=":
                    raise ValueError("matrix constraints must be '>='")
                psd_dims.append(2 * con.expr.dim)
            elif con.sense == ">=":
                n_nonneg += 1
            else:
                n_free += 1

        builder = ProgramBuilder(
            ConeDims(psd=tuple(psd_dims), nonneg=n_nonneg, free=n_free),
            n_rows=m)

        blk = nn = fr = 0
        for con in self.constraints:
            if isinstance(con.expr, MatExpr):
                e = con.expr
                builder.add_c_psd(blk, embed_hermitian(e.const))
                for v, coeff in e.mats.items():
                    base, _ = offsets[v.name]
                    basis = embedded_param_basis_svec(v.dim)
                    for p in range(basis.shape[0]):
                        builder.add_psd_svec_row(base + p, blk,
                                                 -coeff * basis[p])
                for v, q in e.scalars.items():
                    base, _ = offsets[v.name]
                    builder.add_psd_svec_row(base, blk,
                                             -svec(embed_hermitian(q)))
                blk += 1
            else:
                e = con.expr
                if con.sense == ">=":
                    idx, add = nn, builder.add_nonneg_entry
                    builder.set_c_nonneg(idx, e.const)
                    nn += 1
                else:
                    idx, add = fr, builder.add_free_entry
                    builder.set_c_free(idx, e.const)
                    fr += 1
                for v, c in e.scalars.items():
                    base, _ = offsets[v.name]
                    add(base, idx, -c)
                for v, q in e.mats.items():
                    base, _ = offsets[v.name]
                    coeffs = hermitian_param_coeffs(q)
                    for p, c in enumerate(coeffs):
                        if c != 0.0:
                            add(base + p, idx, -c)

        # rhs: maximize b'y = -(linear objective)
        for v, c in self.objective.scalars.items():
            base, _ = offsets[v.name]
            builder.set_b(base, builder.b[base] - c)
        for v, q in self.objective.mats.items():
            base, _ = offsets[v.name]
            coeffs = hermitian_param_coeffs(q)
            for p, c in enumerate(coeffs):
                builder.set_b(base + p, builder.b[base + p] - c)

        return builder.build(), offsets

    def decode(self, y: np.ndarray, offsets) -> dict:
        values = {}
        for v in self.scalar_vars:
            base, _ = offsets[v.name]
            values[v.name] = float(y[base])
        for v in self.mat_vars:
            base, n = offsets[v.name]
            values[v.name] = hermitian_from_params(y[base:base + n], v.dim)
        return values

    def solve(self, tol: float = 1e-7, max_iters: int = 100,
              program=None, offsets=None) -> ModelSolution:
        from .conic.solver import solve as conic_solve

        if program is None:
            program, offsets = self.compile()
        sol = conic_solve(program, tol=tol, max_iters=max_iters)
        status = {"optimal": "optimal", "unbounded": "infeasible",
                  "infeasible": "unbounded", "max_iters": "max_iters"}[sol.status]
        if status in ("infeasible", "unbounded"):
            return ModelSolution(status=status, conic=sol)
        values = self.decode(sol.y, offsets)
        return ModelSolution(status=status, values=values,
                             objective=self.objective.value(values), conic=sol)
