"""Standard-form cone program container.

The stored problem is

    minimize    <C, X>
    subject to  <A_i, X> = b_i,  i = 1..m
                X in  (PSD blocks)  x  (nonnegative orthant)  x  (free),

whose dual is  max b'y  s.t.  sum_i y_i A_i + S = C  with S in the same
cone (zero on the free part).  Models built elsewhere in the package
put their decision scalars on the dual side, so a ConicSolution carries
both the primal blocks and the dual vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .blocks import ConeDims, sdim, svec, unsvec, SQRT2


class ProgramBuilder:
    """Incremental triplet-based construction of a ConicProgram.

    PSD coefficient entries follow the symmetric convention: an entry
    (i, j, v) with i != j sets both A[i, j] and A[j, i] to v.
    Duplicate entries are summed.
    """

    def __init__(self, dims: ConeDims, n_rows: int):
        self.dims = dims
        self.n_rows = n_rows
        self._a_psd = [([], [], []) for _ in dims.psd]   # rows, svec cols, vals
        self._a_nonneg = ([], [], [])
        self._a_free = ([], [], [])
        self._c_psd = [np.zeros((d, d)) for d in dims.psd]
        self._c_nonneg = np.zeros(dims.nonneg)
        self._c_free = np.zeros(dims.free)
        self.b = np.zeros(n_rows)

    @staticmethod
    def _svec_index(d: int, i: int, j: int) -> int:
        # index of (i, j), i <= j, in np.triu_indices(d) order
        return i * d - i * (i - 1) // 2 + (j - i)

    def _psd_triplet(self, blk, row, i, j, val):
        d = self.dims.psd[blk]
        if not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"index ({i},{j}) out of range for block dim {d}")
        if i > j:
            i, j = j, i
        rows, cols, vals = self._a_psd[blk]
        rows.append(row)
        cols.append(self._svec_index(d, i, j))
        vals.append(val * (SQRT2 if i != j else 1.0))

    def add_psd_entry(self, row: int, blk: int, i: int, j: int, val: float):
        self._check_row(row)
        self._psd_triplet(blk, row, i, j, val)

    def add_psd_svec_row(self, row: int, blk: int, svec_vals: np.ndarray):
        """Add a whole coefficient matrix for one row, in svec form."""
        self._check_row(row)
        rows, cols, vals = self._a_psd[blk]
        nz = np.nonzero(svec_vals)[0]
        rows.extend([row] * len(nz))
        cols.extend(nz.tolist())
        vals.extend(svec_vals[nz].tolist())

    def add_nonneg_entry(self, row: int, idx: int, val: float):
        self._check_row(row)
        if not 0 <= idx < self.dims.nonneg:
            raise ValueError(f"nonneg index {idx} out of range")
        self._a_nonneg[0].append(row)
        self._a_nonneg[1].append(idx)
        self._a_nonneg[2].append(val)

    def add_free_entry(self, row: int, idx: int, val: float):
        self._check_row(row)
        if not 0 <= idx < self.dims.free:
            raise ValueError(f"free index {idx} out of range")
        self._a_free[0].append(row)
        self._a_free[1].append(idx)
        self._a_free[2].append(val)

    def set_c_psd_entry(self, blk: int, i: int, j: int, val: float):
        self._c_psd[blk][i, j] = val
        self._c_psd[blk][j, i] = val

    def add_c_psd(self, blk: int, mat: np.ndarray):
        m = np.asarray(mat, dtype=float)
        self._c_psd[blk] += 0.5 * (m + m.T)

    def set_c_nonneg(self, idx: int, val: float):
        self._c_nonneg[idx] = val

    def set_c_free(self, idx: int, val: float):
        self._c_free[idx] = val

    def set_b(self, row: int, val: float):
        self._check_row(row)
        self.b[row] = val

    def _check_row(self, row):
        if not 0 <= row < self.n_rows:
            raise ValueError(f"row {row} out of range (m={self.n_rows})")

    def build(self) -> "ConicProgram":
        a_psd = []
        for blk, (rows, cols, vals) in enumerate(self._a_psd):
            d = self.dims.psd[blk]
            mat = sp.coo_matrix((vals, (rows, cols)),
                                shape=(self.n_rows, sdim(d))).tocsr()
            mat.sum_duplicates()
            a_psd.append(mat)
        a_nonneg = sp.coo_matrix(
            (self._a_nonneg[2], (self._a_nonneg[0], self._a_nonneg[1])),
            shape=(self.n_rows, self.dims.nonneg)).tocsr()
        a_nonneg.sum_duplicates()
        a_free = sp.coo_matrix(
            (self._a_free[2], (self._a_free[0], self._a_free[1])),
            shape=(self.n_rows, self.dims.free)).tocsr()
        a_free.sum_duplicates()
        return ConicProgram(dims=self.dims, a_psd=a_psd, a_nonneg=a_nonneg,
                            a_free=a_free, c_psd=self._c_psd,
                            c_nonneg=self._c_nonneg, c_free=self._c_free,
                            b=self.b.copy())


@dataclass
class ConicProgram:
    dims: ConeDims
    a_psd: list            # per PSD block: csr (m, sdim(d)) in svec scaling
    a_nonneg: sp.csr_matrix
    a_free: sp.csr_matrix
    c_psd: list            # per PSD block: dense symmetric (d, d)
    c_nonneg: np.ndarray
    c_free: np.ndarray
    b: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.b)

    def with_b(self, b: np.ndarray) -> "ConicProgram":
        if len(b) != self.n_rows:
            raise ValueError("rhs length mismatch")
        return replace(self, b=np.asarray(b, dtype=float).copy())

    # -- linear operators ------------------------------------------------

    def apply_a(self, x_psd: list, x_nonneg: np.ndarray,
                x_free: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_rows)
        for a, x in zip(self.a_psd, x_psd):
            out += a @ svec(x)
        if self.dims.nonneg:
            out += self.a_nonneg @ x_nonneg
        if self.dims.free:
            out += self.a_free @ x_free
        return out

    def apply_at(self, y: np.ndarray):
        """Adjoint: returns (list of symmetric mats, nonneg vec, free vec)."""
        mats = [unsvec(a.T @ y, d) for a, d in zip(self.a_psd, self.dims.psd)]
        return (mats, self.a_nonneg.T @ y, self.a_free.T @ y)

    def objective_value(self, x_psd: list, x_nonneg: np.ndarray,
                        x_free: np.ndarray) -> float:
        val = sum(float(np.tensordot(c, x)) for c, x in zip(self.c_psd, x_psd))
        if self.dims.nonneg:
            val += float(self.c_nonneg @ x_nonneg)
        if self.dims.free:
            val += float(self.c_free @ x_free)
        return val

    def data_norms(self):
        cn = np.sqrt(sum(float(np.sum(c * c)) for c in self.c_psd)
                     + float(self.c_nonneg @ self.c_nonneg)
                     + float(self.c_free @ self.c_free))
        bn = float(np.linalg.norm(self.b))
        return bn, cn

    # -- canonical comparison ---------------------------------------------

    def _canonical(self):
        parts = [tuple(self.dims.psd), self.dims.nonneg, self.dims.free,
                 self.b.tobytes()]
        for a in self.a_psd + [self.a_nonneg, self.a_free]:
            a = a.tocsr()
            a.sum_duplicates()
            a.sort_indices()
            a.eliminate_zeros()
            parts.extend([a.indptr.tobytes(), a.indices.tobytes(),
                          a.data.tobytes()])
        for c in self.c_psd:
            parts.append(c.tobytes())
        parts.extend([self.c_nonneg.tobytes(), self.c_free.tobytes()])
        return tuple(parts)

    def structurally_equal(self, other: "ConicProgram") -> bool:
        return self._canonical() == other._canonical()


@dataclass
class ConicSolution:
    status: str                    # optimal | infeasible | unbounded | max_iters
    x_psd: list = field(default_factory=list)
    x_nonneg: np.ndarray = None
    x_free: np.ndarray = None
    z_psd: list = field(default_factory=list)
    z_nonneg: np.ndarray = None
    z_free: np.ndarray = None
    y: np.ndarray = None
    objective: float = np.nan      # primal <C, X>
    dual_objective: float = np.nan
    iterations: int = 0
    residuals: dict = field(default_factory=dict)  # primal, dual, gap
    certificate: Optional[dict] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class PresolveReport:
    dropped_zero_rows: list
    dropped_duplicate_rows: list
    infeasible_row: Optional[int] = None


def presolve(program: ConicProgram, tol: float = 0.0):
    """Remove zero rows and exact duplicate rows.

    Returns (reduced_program, kept_row_indices, report).  A zero row
    with nonzero rhs, or duplicate rows with different rhs, certify
    infeasibility (report.infeasible_row is set and the program is
    returned unchanged).
    """
    m = program.n_rows
    stacked = sp.hstack([a for a in program.a_psd]
                        + [program.a_nonneg, program.a_free], format="csr")
    stacked.sum_duplicates()
    stacked.sort_indices()
    stacked.eliminate_zeros()

    zero_rows, dup_rows = [], []
    seen = {}
    keep = []
    for i in range(m):
        sl = slice(stacked.indptr[i], stacked.indptr[i + 1])
        key = (stacked.indices[sl].tobytes(), stacked.data[sl].tobytes())
        if stacked.indptr[i] == stacked.indptr[i + 1]:
            if abs(program.b[i]) > tol:
                return program, list(range(m)), PresolveReport([], [], i)
            zero_rows.append(i)
            continue
        if key in seen:
            j = seen[key]
            if program.b[i] != program.b[j]:
                return program, list(range(m)), PresolveReport([], [], i)
            dup_rows.append(i)
            continue
        seen[key] = i
        keep.append(i)

    if not zero_rows and not dup_rows:
        return program, list(range(m)), PresolveReport([], [])

    keep_arr = np.array(keep, dtype=int)
    reduced = ConicProgram(
        dims=program.dims,
        a_psd=[a[keep_arr] for a in program.a_psd],
        a_nonneg=program.a_nonneg[keep_arr],
        a_free=program.a_free[keep_arr],
        c_psd=program.c_psd, c_nonneg=program.c_nonneg, c_free=program.c_free,
        b=program.b[keep_arr],
    )
    return reduced, keep, PresolveReport(zero_rows, dup_rows)
