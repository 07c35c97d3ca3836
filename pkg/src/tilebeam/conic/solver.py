"""Primal-dual interior-point solver for block cone programs.

Implements a homogeneous self-dual embedding with Nesterov-Todd
scaling and a Mehrotra predictor-corrector step, for problems

    min <C, X>  s.t.  <A_i, X> = b_i,  X in PSD blocks x R+^n x R^f.

Free variables are split internally into differences of nonnegatives.
Ruiz equilibration is applied before iterating and undone on return;
all reported residuals refer to the original data.  Each Newton step
reduces to one factorization of the Schur matrix M = A (G (x) G) A',
assembled per cone block; a dense Cholesky is used for small problems
and a sparse LU with low-rank (Woodbury) handling of dense columns for
large ones.  The method is deterministic: no randomized steps, fixed
orderings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blocks import sdim, _triu, SQRT2
from .program import ConicProgram, ConicSolution, presolve as _presolve

DENSE_SCHUR_LIMIT = 800          # switch to the sparse Schur path above this m
DENSE_COL_FRACTION = 0.1         # LP column density treated as a dense column
STEP_FRACTION = 0.99
RUIZ_ITERS = 10


# ---------------------------------------------------------------------------
# batched svec helpers


def _batch_svec(mats: np.ndarray) -> np.ndarray:
    d = mats.shape[-1]
    r, c = _triu(d)
    v = mats[..., r, c].copy()
    v[..., r != c] *= SQRT2
    return v


def _batch_unsvec(vecs: np.ndarray, d: int) -> np.ndarray:
    r, c = _triu(d)
    w = vecs.copy()
    w[..., r != c] /= SQRT2
    out = np.zeros(vecs.shape[:-1] + (d, d))
    out[..., r, c] = w
    out[..., c, r] = w
    return out


def _sym_diag(vals: np.ndarray) -> np.ndarray:
    """Batched diagonal matrices from (g, d) eigenvalue arrays."""
    g, d = vals.shape
    out = np.zeros((g, d, d))
    out[:, np.arange(d), np.arange(d)] = vals
    return out


# ---------------------------------------------------------------------------
# internal problem, after free-split and equilibration


class _Internal:
    def __init__(self, program: ConicProgram):
        self.program = program
        dims = program.dims
        self.psd_dims = list(dims.psd)
        self.n_lp = dims.nonneg + 2 * dims.free
        self.svec_offsets = np.cumsum([0] + [sdim(d) for d in self.psd_dims])
        self.n_psd = int(self.svec_offsets[-1])
        self.n = self.n_psd + self.n_lp
        self.m = program.n_rows

        blocks = [a for a in program.a_psd]
        lp_parts = [program.a_nonneg, program.a_free, -program.a_free]
        self.a = sp.hstack(blocks + lp_parts, format="csr") if self.n else None
        self.a.sort_indices()

        c_parts = [np.concatenate([_batch_svec(c[None])[0] for c in program.c_psd])
                   if self.psd_dims else np.zeros(0),
                   program.c_nonneg, program.c_free, -program.c_free]
        self.c = np.concatenate(c_parts)
        self.b = program.b.astype(float).copy()

        # equilibration state
        self.row_scale = np.ones(self.m)
        self.col_scale = np.ones(self.n)
        self.sigma_b = 1.0
        self.sigma_c = 1.0

        # cone bookkeeping: group PSD blocks by dimension
        self.groups = {}
        for idx, d in enumerate(self.psd_dims):
            self.groups.setdefault(d, []).append(idx)
        self.group_cols = {}
        for d, idxs in self.groups.items():
            cols = np.concatenate([
                np.arange(self.svec_offsets[i], self.svec_offsets[i + 1])
                for i in idxs])
            self.group_cols[d] = cols
        self.lp_cols = np.arange(self.n_psd, self.n)
        self.nu = sum(self.psd_dims) + self.n_lp

    # block scalar column scaling: one factor per PSD block
    def equilibrate(self):
        a = self.a.copy()
        for _ in range(RUIZ_ITERS):
            aa = abs(a)
            row_max = np.maximum(aa.max(axis=1).toarray().ravel(), 1e-12)
            col_max = np.maximum(aa.max(axis=0).toarray().ravel(), 1e-12)
            # one scalar per PSD block, applied to the whole block
            cs = np.ones(self.n)
            for i, d in enumerate(self.psd_dims):
                rng = slice(self.svec_offsets[i], self.svec_offsets[i + 1])
                cs[rng] = 1.0 / np.sqrt(col_max[rng].max())
            cs[self.n_psd:] = 1.0 / np.sqrt(col_max[self.n_psd:])
            rs = 1.0 / np.sqrt(row_max)
            a = sp.csr_matrix(a.multiply(rs[:, None]).multiply(cs[None, :]))
            self.row_scale *= rs
            self.col_scale *= cs
            if (np.abs(np.log(rs)).max() < 0.05
                    and np.abs(np.log(cs)).max() < 0.05):
                break
        self.a = a
        self.a.sort_indices()
        self.c = self.c * self.col_scale
        self.b = self.b * self.row_scale
        self.sigma_c = max(1.0, float(np.max(np.abs(self.c), initial=0.0)))
        self.sigma_b = max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
        self.c /= self.sigma_c
        self.b /= self.sigma_b

    # -- flat vector <-> per-group matrices -------------------------------

    def gather_mats(self, v: np.ndarray, d: int) -> np.ndarray:
        cols = self.group_cols[d]
        g = len(self.groups[d])
        return _batch_unsvec(v[cols].reshape(g, sdim(d)), d)

    def scatter_mats(self, out: np.ndarray, mats: np.ndarray, d: int):
        cols = self.group_cols[d]
        out[cols] = _batch_svec(mats).ravel()

    def lp_part(self, v: np.ndarray) -> np.ndarray:
        return v[self.n_psd:]


# ---------------------------------------------------------------------------
# Schur complement backends


class _DenseSchur:
    def __init__(self, internal: _Internal):
        self.it = internal
        a = internal.a
        self.blocks = []
        for i, d in enumerate(internal.psd_dims):
            cols = np.arange(internal.svec_offsets[i], internal.svec_offsets[i + 1])
            sub = a[:, cols].tocsc().tocoo()
            rows = np.unique(sub.row)
            local = np.zeros((len(rows), sdim(d)))
            rmap = {r: k for k, r in enumerate(rows)}
            for r, cc, v in zip(sub.row, sub.col, sub.data):
                local[rmap[r], cc] += v
            self.blocks.append((d, rows, local))
        self.a_lp = a[:, internal.lp_cols].tocsr()

    def factor(self, g_mats: dict, w2_lp: np.ndarray):
        m = self.it.m
        M = np.zeros((m, m))
        for (d, rows, local), i in zip(self.blocks, range(len(self.blocks))):
            if len(rows) == 0:
                continue
            G = g_mats[i]
            mats = _batch_unsvec(local, d)
            t = G @ mats @ G
            tv = _batch_svec(t)
            M[np.ix_(rows, rows)] += local @ tv.T
        if self.it.n_lp:
            M += (self.a_lp.multiply(w2_lp[None, :]) @ self.a_lp.T).toarray()
        base = max(1.0, float(np.abs(M.diagonal()).max()))
        for reg in (0.0, 1e-12, 1e-9, 1e-6):
            try:
                self._chol = sla.cho_factor(
                    M + (reg * base) * np.eye(m) if reg else M, lower=True)
                self._M = M
                return
            except np.linalg.LinAlgError:
                continue
        raise np.linalg.LinAlgError("Schur factorization failed")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        q = sla.cho_solve(self._chol, rhs)
        # one round of iterative refinement
        r = rhs - self._M @ q
        q += sla.cho_solve(self._chol, r)
        return q


class _SparseSchur:
    """Sparse LU of the Schur matrix, dense LP columns via Woodbury."""

    def __init__(self, internal: _Internal):
        self.it = internal
        a = internal.a
        m = internal.m
        acsc = a.tocsc()

        self.blocks = []
        entry_rows, entry_cols = [], []
        for i, d in enumerate(internal.psd_dims):
            cols = np.arange(internal.svec_offsets[i], internal.svec_offsets[i + 1])
            sub = acsc[:, cols].tocoo()
            rows = np.unique(sub.row)
            local = np.zeros((len(rows), sdim(d)))
            rmap = {r: k for k, r in enumerate(rows)}
            for r, cc, v in zip(sub.row, sub.col, sub.data):
                local[rmap[r], cc] += v
            self.blocks.append((d, rows, local))
            rr = np.repeat(rows, len(rows))
            cc = np.tile(rows, len(rows))
            entry_rows.append(rr)
            entry_cols.append(cc)

        # LP columns: sparse ones enter the pattern, dense ones go to Woodbury
        lp = acsc[:, internal.lp_cols].tocsc()
        dense_limit = max(64, int(DENSE_COL_FRACTION * m))
        self.lp_sparse_cols, self.lp_dense_cols = [], []
        for j in range(lp.shape[1]):
            sl = slice(lp.indptr[j], lp.indptr[j + 1])
            rows_j = lp.indices[sl]
            vals_j = lp.data[sl]
            if len(rows_j) > dense_limit:
                self.lp_dense_cols.append((j, rows_j, vals_j))
            else:
                self.lp_sparse_cols.append((j, rows_j, vals_j))
                entry_rows.append(np.repeat(rows_j, len(rows_j)))
                entry_cols.append(np.tile(rows_j, len(rows_j)))

        entry_rows.append(np.arange(m))   # diagonal regularization slots
        entry_cols.append(np.arange(m))
        all_rows = np.concatenate(entry_rows)
        all_cols = np.concatenate(entry_cols)
        keys = all_rows.astype(np.int64) * m + all_cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.slot_of_entry = inverse
        self.pattern_rows = (uniq // m).astype(np.int32)
        self.pattern_cols = (uniq % m).astype(np.int32)
        self.n_slots = len(uniq)

        u_cols = []
        for (_, rows_j, vals_j) in self.lp_dense_cols:
            col = np.zeros(m)
            col[rows_j] = vals_j
            u_cols.append(col)
        self.u = np.array(u_cols).T if u_cols else np.zeros((m, 0))

    def factor(self, g_mats: dict, w2_lp: np.ndarray):
        it = self.it
        m = it.m
        vals = []
        for (d, rows, local), i in zip(self.blocks, range(len(self.blocks))):
            if len(rows) == 0:
                vals.append(np.zeros(0))
                continue
            G = g_mats[i]
            mats = _batch_unsvec(local, d)
            t = G @ mats @ G
            tv = _batch_svec(t)
            vals.append((local @ tv.T).ravel())
        for (j, rows_j, vals_j) in self.lp_sparse_cols:
            outer = w2_lp[j] * np.outer(vals_j, vals_j)
            vals.append(outer.ravel())
        diag_scale = 1.0  # refined against the exact M afterwards
        vals.append(np.full(m, 1e-11 * diag_scale))
        flat = np.concatenate(vals)
        data = np.bincount(self.slot_of_entry, weights=flat,
                           minlength=self.n_slots)
        M_sp = sp.csc_matrix((data, (self.pattern_rows, self.pattern_cols)),
                             shape=(m, m))
        self._lu = spla.splu(M_sp, permc_spec="MMD_AT_PLUS_A",
                             options={"SymmetricMode": True})
        self._M_sp = M_sp
        self._w2_dense = np.array([w2_lp[j] for (j, _, _) in self.lp_dense_cols])
        if self.u.shape[1]:
            su = self._lu.solve(self.u)
            cap = np.diag(1.0 / self._w2_dense) + self.u.T @ su
            self._cap = sla.lu_factor(cap)
            self._su = su

    def _apply_full(self, q: np.ndarray) -> np.ndarray:
        out = self._M_sp @ q
        if self.u.shape[1]:
            out += self.u @ (self._w2_dense * (self.u.T @ q))
        return out

    def _solve_once(self, rhs: np.ndarray) -> np.ndarray:
        q = self._lu.solve(rhs)
        if self.u.shape[1]:
            t = sla.lu_solve(self._cap, self.u.T @ q)
            q = q - self._su @ t
        return q

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        q = self._solve_once(rhs)
        for _ in range(2):
            r = rhs - self._apply_full(q)
            q += self._solve_once(r)
        return q


# ---------------------------------------------------------------------------


@dataclass
class _State:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    tau: float
    kappa: float


def _initial_state(it: _Internal) -> _State:
    x = np.zeros(it.n)
    for i, d in enumerate(it.psd_dims):
        off = it.svec_offsets[i]
        eye = _batch_svec(np.eye(d)[None])[0]
        x[off:off + sdim(d)] = eye
    x[it.n_psd:] = 1.0
    return _State(x=x, y=np.zeros(it.m), z=x.copy(), tau=1.0, kappa=1.0)


def solve(program: ConicProgram, tol: float = 1e-7, max_iters: int = 100,
          use_presolve: bool = True) -> ConicSolution:
    """Solve a ConicProgram to relative KKT residuals <= tol.

    Returns a certified status: "optimal" with primal/dual/gap residuals
    below tol, "infeasible" or "unbounded" with a certificate, or
    "max_iters" with the best iterate found.
    """
    if use_presolve:
        reduced, keep, report = _presolve(program)
        if report.infeasible_row is not None:
            return ConicSolution(status="infeasible",
                                 certificate={"presolve_row": report.infeasible_row})
        if len(keep) != program.n_rows:
            sub = solve(reduced, tol=tol, max_iters=max_iters, use_presolve=False)
            if sub.y is not None and len(sub.y) == len(keep):
                y_full = np.zeros(program.n_rows)
                y_full[np.asarray(keep, dtype=int)] = sub.y
                sub.y = y_full
            return sub

    n_total = program.dims.total_svec + program.dims.nonneg + program.dims.free
    if program.n_rows == 0 or n_total == 0:
        return _solve_trivial(program)

    it = _Internal(program)
    it.equilibrate()

    schur = (_DenseSchur(it) if it.m <= DENSE_SCHUR_LIMIT else _SparseSchur(it))
    st = _initial_state(it)
    a, at = it.a, it.a.T.tocsr()
    best = None
    stall = 0
    prev_score = np.inf

    for iteration in range(1, max_iters + 1):
        mu = (st.x @ st.z + st.tau * st.kappa) / (it.nu + 1)

        sol, res = _check_termination(program, it, st, tol, iteration,
                                      allow_loose=stall >= 5)
        if sol is not None:
            return sol
        score = max(res["primal"], res["dual"], res["gap_rel"])
        stall = stall + 1 if score > 0.9 * prev_score else 0
        prev_score = min(prev_score, score)
        if best is None or score < best[0]:
            best = (score, _extract_solution(program, it, st, "max_iters",
                                             iteration))

        # NT scaling per dimension group
        g_by_block = {}
        scal = {}
        for d, idxs in it.groups.items():
            X = it.gather_mats(st.x, d)
            Z = it.gather_mats(st.z, d)
            R, Rinv, lam = _nt_scaling(X, Z)
            G = R @ R.transpose(0, 2, 1)
            scal[d] = (R, Rinv, lam, G)
            for k, b in enumerate(idxs):
                g_by_block[b] = G[k]
        x_lp = it.lp_part(st.x)
        z_lp = it.lp_part(st.z)
        w_lp = np.sqrt(x_lp / z_lp)
        lam_lp = np.sqrt(x_lp * z_lp)
        w2_lp = w_lp * w_lp

        try:
            schur.factor(g_by_block, w2_lp)
        except (np.linalg.LinAlgError, RuntimeError):
            return best[1] if best else ConicSolution(status="max_iters")

        def conj_g(v):
            out = np.empty_like(v)
            for d in it.groups:
                G = scal[d][3]
                mats = it.gather_mats(v, d)
                it.scatter_mats(out, G @ mats @ G, d)
            out[it.n_psd:] = w2_lp * v[it.n_psd:]
            return out

        r_p = a @ st.x - it.b * st.tau
        r_d = at @ st.y + st.z - it.c * st.tau
        r_g = st.kappa + it.c @ st.x - it.b @ st.y

        gcg = conj_g(it.c)
        u_vec = a @ gcg
        y1 = schur.solve(it.b + u_vec)
        grdg = conj_g(r_d)

        def direction(d_comp, d_lp, d_tk, eta):
            # D~ = Linv(d_comp); xD = R D~ R'
            xD = np.empty(it.n)
            for d in it.groups:
                R, _, lam, _ = scal[d]
                denom = lam[:, :, None] + lam[:, None, :]
                dt = 2.0 * d_comp[d] / denom
                it.scatter_mats(xD, R @ dt @ R.transpose(0, 2, 1), d)
            xD[it.n_psd:] = w_lp * (d_lp / lam_lp)

            v0 = -eta * r_p - a @ xD - eta * (a @ grdg)
            y0 = schur.solve(v0)
            x0 = xD + eta * grdg + conj_g(at @ y0)
            x1 = conj_g(at @ y1 - it.c)

            num = (-eta * r_g - d_tk / st.tau - it.c @ x0 + it.b @ y0)
            den = (it.c @ x1 - it.b @ y1 - st.kappa / st.tau)
            dtau = num / den
            dy = y0 + dtau * y1
            dx = x0 + dtau * x1
            dz = -eta * r_d - at @ dy + it.c * dtau
            dkap = (d_tk - st.kappa * dtau) / st.tau
            return dx, dy, dz, dtau, dkap

        # predictor (affine)
        d_comp_aff = {d: -_sym_diag(scal[d][2] ** 2) for d in it.groups}
        d_lp_aff = -lam_lp ** 2
        dxa, dya, dza, dta, dka = direction(d_comp_aff, d_lp_aff,
                                            -st.tau * st.kappa, eta=1.0)
        alpha_aff = _max_step(it, scal, lam_lp, w_lp, st, dxa, dza, dta, dka)
        mu_aff = (((st.x + alpha_aff * dxa) @ (st.z + alpha_aff * dza))
                  + (st.tau + alpha_aff * dta) * (st.kappa + alpha_aff * dka)) \
            / (it.nu + 1)
        sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

        # corrector
        d_comp = {}
        for d in it.groups:
            R, Rinv, lam, _ = scal[d]
            dxh = Rinv @ it.gather_mats(dxa, d) @ Rinv.transpose(0, 2, 1)
            dzh = R.transpose(0, 2, 1) @ it.gather_mats(dza, d) @ R
            cross = 0.5 * (dxh @ dzh + dzh @ dxh)
            d_comp[d] = _sym_diag(sigma * mu - lam ** 2) - cross
        dxa_lp = it.lp_part(dxa) / w_lp
        dza_lp = it.lp_part(dza) * w_lp
        d_lp = sigma * mu - lam_lp ** 2 - dxa_lp * dza_lp
        d_tk = sigma * mu - st.tau * st.kappa - dta * dka

        dx, dy, dz, dtau, dkap = direction(d_comp, d_lp, d_tk, eta=1.0)
        alpha = STEP_FRACTION * _max_step(it, scal, lam_lp, w_lp, st,
                                          dx, dz, dtau, dkap)
        alpha = min(alpha, 1.0)

        st.x += alpha * dx
        st.y += alpha * dy
        st.z += alpha * dz
        st.tau += alpha * dtau
        st.kappa += alpha * dkap

    sol, res = _check_termination(program, it, st, tol, max_iters,
                                  allow_loose=True)
    if sol is not None:
        return sol
    score = max(res["primal"], res["dual"], res["gap_rel"])
    if best is None or score < best[0]:
        best = (score, _extract_solution(program, it, st, "max_iters", max_iters))
    return best[1]


def _nt_scaling(X: np.ndarray, Z: np.ndarray):
    """Batched NT scaling: returns R, R^{-1}, lambda with
    R^{-1} X R^{-T} = R^T Z R = diag(lambda)."""
    try:
        Lx = np.linalg.cholesky(X)
        Lz = np.linalg.cholesky(Z)
    except np.linalg.LinAlgError:
        d = X.shape[-1]
        bump = 1e-14 * np.trace(X, axis1=-2, axis2=-1).max()
        Lx = np.linalg.cholesky(X + bump * np.eye(d))
        Lz = np.linalg.cholesky(Z + bump * np.eye(d))
    u, s, vt = np.linalg.svd(Lz.transpose(0, 2, 1) @ Lx)
    s_half = np.sqrt(s)
    R = (Lx @ vt.transpose(0, 2, 1)) / s_half[:, None, :]
    Rinv = (u.transpose(0, 2, 1) @ Lz.transpose(0, 2, 1)) / s_half[:, :, None]
    return R, Rinv, s


def _max_step(it, scal, lam_lp, w_lp, st, dx, dz, dtau, dkap) -> float:
    alpha = 1.0
    for d in it.groups:
        R, Rinv, lam, _ = scal[d]
        inv_sqrt = 1.0 / np.sqrt(lam)
        dxh = Rinv @ it.gather_mats(dx, d) @ Rinv.transpose(0, 2, 1)
        dzh = R.transpose(0, 2, 1) @ it.gather_mats(dz, d) @ R
        for mat in (dxh, dzh):
            n = mat * inv_sqrt[:, :, None] * inv_sqrt[:, None, :]
            w = np.linalg.eigvalsh(n)
            worst = float(w[:, 0].min())
            if worst < 0.0:
                alpha = min(alpha, -1.0 / worst)
    dx_lp = it.lp_part(dx) / w_lp / lam_lp
    dz_lp = it.lp_part(dz) * w_lp / lam_lp
    for v in (dx_lp, dz_lp):
        neg = v < 0.0
        if np.any(neg):
            alpha = min(alpha, float((-1.0 / v[neg]).min()))
    if dtau < 0.0:
        alpha = min(alpha, -st.tau / dtau)
    if dkap < 0.0:
        alpha = min(alpha, -st.kappa / dkap)
    return alpha


GAP_FLOOR = 1e-3   # gap accuracy is relative to max(objective, this floor)


def _original_residuals(program: ConicProgram, it: _Internal, st: _State):
    sol = _candidate(program, it, st)
    bn, cn = program.data_norms()
    ax = program.apply_a(sol["x_psd"], sol["x_nonneg"], sol["x_free"])
    pres = float(np.linalg.norm(ax - program.b)) / (1.0 + bn)
    at_mats, at_nn, at_fr = program.apply_at(sol["y"])
    d_terms = []
    for mat, z, c in zip(at_mats, sol["z_psd"], program.c_psd):
        d_terms.append((mat + z - c).ravel())
    d_terms.append(at_nn + sol["z_nonneg"] - program.c_nonneg)
    d_terms.append(at_fr - program.c_free)
    dres = float(np.linalg.norm(np.concatenate(d_terms))) / (1.0 + cn)
    pobj = program.objective_value(sol["x_psd"], sol["x_nonneg"], sol["x_free"])
    dobj = float(program.b @ sol["y"])
    gap_abs = abs(pobj - dobj)
    gap = gap_abs / (1.0 + abs(pobj) + abs(dobj))
    gap_rel = gap_abs / max(GAP_FLOOR, abs(pobj), abs(dobj))
    return {"primal": pres, "dual": dres, "gap": gap, "gap_rel": gap_rel,
            "pobj": pobj, "dobj": dobj, "sol": sol}


def _candidate(program: ConicProgram, it: _Internal, st: _State, tau=None):
    """Unscale the current iterate to original units, dividing by tau."""
    t = st.tau if tau is None else tau
    x = st.x * it.col_scale * (it.sigma_b / t)
    z = st.z / it.col_scale * (it.sigma_c / t)
    y = st.y * it.row_scale * (it.sigma_c / t)
    dims = program.dims
    x_psd, z_psd = [], []
    for i, d in enumerate(it.psd_dims):
        off = it.svec_offsets[i]
        x_psd.append(_batch_unsvec(x[off:off + sdim(d)][None], d)[0])
        z_psd.append(_batch_unsvec(z[off:off + sdim(d)][None], d)[0])
    lp_x = x[it.n_psd:]
    lp_z = z[it.n_psd:]
    nn = dims.nonneg
    x_nonneg = lp_x[:nn]
    z_nonneg = lp_z[:nn]
    x_free = lp_x[nn:nn + dims.free] - lp_x[nn + dims.free:]
    return {"x_psd": x_psd, "x_nonneg": x_nonneg, "x_free": x_free,
            "z_psd": z_psd, "z_nonneg": z_nonneg, "y": y}


def _extract_solution(program, it, st, status, iteration) -> ConicSolution:
    res = _original_residuals(program, it, st)
    sol = res["sol"]
    at_mats, at_nn, at_fr = program.apply_at(sol["y"])
    z_free = program.c_free - at_fr
    return ConicSolution(
        status=status,
        x_psd=sol["x_psd"], x_nonneg=sol["x_nonneg"], x_free=sol["x_free"],
        z_psd=sol["z_psd"], z_nonneg=sol["z_nonneg"], z_free=z_free,
        y=sol["y"], objective=res["pobj"], dual_objective=res["dobj"],
        iterations=iteration,
        residuals={"primal": res["primal"], "dual": res["dual"],
                   "gap": res["gap"]},
    )


def _check_termination(program, it, st, tol, iteration, allow_loose=False):
    """Returns (solution or None, residual record)."""
    res = _original_residuals(program, it, st)
    strict = max(res["primal"], res["dual"], res["gap_rel"]) <= tol
    loose = max(res["primal"], res["dual"], res["gap"]) <= tol
    if strict or (allow_loose and loose):
        return _extract_solution(program, it, st, "optimal", iteration), res

    bn, cn = program.data_norms()

    # primal infeasibility: y with A'y + z = 0, z in K*, b'y > 0
    # (certificates use the raw iterate, not divided by tau)
    y_cert = st.y * it.row_scale * it.sigma_c
    by = float(program.b @ y_cert)
    if by > 0.0:
        z_cert = st.z / it.col_scale * it.sigma_c
        at_mats, at_nn, at_fr = program.apply_at(y_cert)
        terms = []
        for i, d in enumerate(it.psd_dims):
            off = it.svec_offsets[i]
            zm = _batch_unsvec(z_cert[off:off + sdim(d)][None], d)[0]
            terms.append((at_mats[i] + zm).ravel())
        nn = program.dims.nonneg
        lp = z_cert[it.n_psd:]
        terms.append(at_nn + lp[:nn])
        terms.append(at_fr)          # dual cone of the free block is {0}
        r = np.concatenate(terms) if terms else np.zeros(0)
        if float(np.linalg.norm(r)) * max(bn, 1e-12) <= tol * by:
            return ConicSolution(
                status="infeasible", y=y_cert / by, iterations=iteration,
                certificate={"type": "primal", "b_dot_y": by}), res

    # dual infeasibility (primal unbounded): x in K, A x = 0, <C, X> < 0
    c1 = _candidate(program, it, st, tau=1.0)
    cx = program.objective_value(c1["x_psd"], c1["x_nonneg"], c1["x_free"])
    if cx < 0.0:
        ax = program.apply_a(c1["x_psd"], c1["x_nonneg"], c1["x_free"])
        if float(np.linalg.norm(ax)) * max(cn, 1e-12) <= tol * (-cx):
            scale = -1.0 / cx
            return ConicSolution(
                status="unbounded",
                x_psd=[m * scale for m in c1["x_psd"]],
                x_nonneg=c1["x_nonneg"] * scale, x_free=c1["x_free"] * scale,
                iterations=iteration,
                certificate={"type": "dual", "c_dot_x": cx}), res
    return None, res


def _solve_trivial(program: ConicProgram) -> ConicSolution:
    zero = ConicSolution(
        status="optimal",
        x_psd=[np.zeros((d, d)) for d in program.dims.psd],
        x_nonneg=np.zeros(program.dims.nonneg),
        x_free=np.zeros(program.dims.free),
        z_psd=[c.copy() for c in program.c_psd],
        z_nonneg=program.c_nonneg.copy(), z_free=program.c_free.copy(),
        y=np.zeros(program.n_rows), objective=0.0, dual_objective=0.0,
        iterations=0, residuals={"primal": 0.0, "dual": 0.0, "gap": 0.0})
    if program.n_rows == 0:
        # no equality rows: X = 0 is optimal iff C is in the dual cone
        ok = bool(np.all(program.c_nonneg >= 0.0)) \
            and np.allclose(program.c_free, 0.0)
        for c in program.c_psd:
            if len(c) and np.linalg.eigvalsh(c)[0] < 0.0:
                ok = False
        return zero if ok else ConicSolution(status="unbounded",
                                             y=np.zeros(0), iterations=0)
    # rows but no variables: feasible iff b == 0
    if np.allclose(program.b, 0.0):
        return zero
    return ConicSolution(status="infeasible", y=np.zeros(program.n_rows),
                         iterations=0)
