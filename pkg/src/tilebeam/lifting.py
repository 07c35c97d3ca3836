"""Lifted convex subproblem for joint beamforming and mode selection.

Builds the per-iteration convex program over the beamforming covariance
blocks W_k, V_j, mode-selection weights b, their pair products beta and
the big-M lifted blocks, with constraints

    C1^, C2^   recast SINR and harvesting constraints,
    C3b, C4    box and one-mode-per-tile,
    C5a-C5d    beta linked to b,
    C6a-C7d    big-M sandwich tying lifted blocks to W, V and beta,

plus the penalized, linearized objective.  Pairs related by the
(s,t) <-> (p,q) swap share one lifted variable; the paired channel
coefficients are symmetrized accordingly, which halves the block count
without changing the optimum (checked against the unreduced form in the
tests).

Internally powers are measured in units of POWER_UNIT watts and
channels are normalized per receiver (noise for IRs, the RF threshold
for ERs) so the compiled programs are well scaled; decoded results are
in watts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np
import scipy.sparse as sp

from .channel import EffectiveChannels
from .eh import EhParams, min_rf_power
from .modeling import ConeModel, Constraint, LinExpr, MatExpr

log = logging.getLogger(__name__)

POWER_UNIT = 1e-3   # watts per internal power unit


@dataclass
class ProblemParams:
    """Instance data of the power-minimization problem."""

    channels: EffectiveChannels
    gamma_req: np.ndarray        # (K,) linear SINR requirements
    noise_w: np.ndarray          # (K,) receiver noise power, watts
    rf_thresholds: np.ndarray    # (J,) minimum received RF power, watts
    p_max: float = 1.0           # big-M transmit power bound, watts

    def __post_init__(self):
        self.gamma_req = np.atleast_1d(np.asarray(self.gamma_req, dtype=float))
        self.noise_w = np.atleast_1d(np.asarray(self.noise_w, dtype=float))
        self.rf_thresholds = np.atleast_1d(
            np.asarray(self.rf_thresholds, dtype=float))
        if np.any(self.gamma_req <= 0):
            raise ValueError("SINR requirements must be positive")
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")

    @classmethod
    def from_qos(cls, channels: EffectiveChannels, gamma_req_db: float,
                 eh: EhParams, noise_w: float, p_max: float = 1.0,
                 linear_eh_efficiency: float | None = None):
        """QoS in dB / EH-circuit form; thresholds converted here.

        With ``linear_eh_efficiency`` set, the harvesting constraint is
        the linear-model one (RF power >= e_req / efficiency) instead of
        the inverted non-linear circuit.
        """
        k, j = channels.n_ir, channels.n_er
        if linear_eh_efficiency is None:
            thresh = min_rf_power(eh)
        else:
            thresh = eh.e_req / linear_eh_efficiency
        return cls(channels=channels,
                   gamma_req=np.full(k, 10.0 ** (gamma_req_db / 10.0)),
                   noise_w=np.full(k, noise_w),
                   rf_thresholds=np.full(j, thresh),
                   p_max=p_max)


# ---------------------------------------------------------------------------
# exact evaluation of the original-space quantities


def collapse_channels(channels: EffectiveChannels, b: np.ndarray):
    """Effective per-receiver channels sum_{s,t} b[s,t] h[s,t,.]."""
    h_hat = np.einsum("st,stkn->kn", b, channels.h)
    g_hat = np.einsum("st,stjn->jn", b, channels.g)
    return h_hat, g_hat


def sinr(channels: EffectiveChannels, w: np.ndarray, v: np.ndarray,
         b: np.ndarray, noise_w: np.ndarray) -> np.ndarray:
    """Receive SINR of every IR for beamformers w (K,N), v (J,N)."""
    h_hat, _ = collapse_channels(channels, b)
    sig_all = np.abs(h_hat.conj() @ w.T) ** 2          # (K, K): |h_k^H w_r|^2
    er_all = np.abs(h_hat.conj() @ v.T) ** 2 if len(v) else np.zeros((len(h_hat), 0))
    out = np.empty(channels.n_ir)
    for k in range(channels.n_ir):
        signal = sig_all[k, k]
        interf = sig_all[k].sum() - signal + er_all[k].sum()
        out[k] = signal / (interf + noise_w[k])
    return out


def rf_power(channels: EffectiveChannels, w: np.ndarray, v: np.ndarray,
             b: np.ndarray, j: int) -> float:
    """Received RF power at ER j, watts."""
    _, g_hat = collapse_channels(channels, b)
    g = g_hat[j]
    total = float(np.sum(np.abs(g.conj() @ w.T) ** 2)) if len(w) else 0.0
    if len(v):
        total += float(np.sum(np.abs(g.conj() @ v.T) ** 2))
    return total


# ---------------------------------------------------------------------------
# constraint builders


def build_c3b_c4(b_vars: dict, n_modes: int, n_tiles_inc: int):
    """Box constraints on b and the one-mode-per-tile equalities."""
    cons = []
    for (s, t), var in b_vars.items():
        cons.append(Constraint(LinExpr(scalars={var: 1.0}), ">=",
                               label=f"C3b_lo[{s},{t}]"))
        cons.append(Constraint(LinExpr(scalars={var: -1.0}, const=1.0), ">=",
                               label=f"C3b_hi[{s},{t}]"))
    for t in range(n_tiles_inc):
        e = LinExpr(const=-1.0)
        for s in range(n_modes):
            e.add_scalar(b_vars[(s, t)], 1.0)
        cons.append(Constraint(e, "==", label=f"C4[{t}]"))
    return cons


def build_c5(beta_vars: dict, b_vars_flat: dict):
    """C5a-C5d linking each beta pair variable to its two b factors."""
    cons = []
    for (i, j), beta in beta_vars.items():
        bi, bj = b_vars_flat[i], b_vars_flat[j]
        cons.append(Constraint(LinExpr(scalars={beta: 1.0}), ">=",
                               label=f"C5a_lo[{i},{j}]"))
        cons.append(Constraint(LinExpr(scalars={beta: -1.0}, const=1.0), ">=",
                               label=f"C5a_hi[{i},{j}]"))
        cons.append(Constraint(LinExpr(scalars={bi: 1.0, beta: -1.0}), ">=",
                               label=f"C5b[{i},{j}]"))
        if i != j:
            cons.append(Constraint(LinExpr(scalars={bj: 1.0, beta: -1.0}), ">=",
                                   label=f"C5c[{i},{j}]"))
        if i == j:
            e = LinExpr(scalars={beta: 1.0}, const=1.0).add_scalar(bi, -2.0)
        else:
            e = LinExpr(scalars={beta: 1.0, bi: -1.0, bj: -1.0}, const=1.0)
        cons.append(Constraint(e, ">=", label=f"C5d[{i},{j}]"))
    return cons


def build_bigm(lifted_var, base_var, beta_var, p_max_units: float, tag=""):
    """Big-M sandwich C6a-C6d (or C7a-C7d) for one lifted block."""
    dim = lifted_var.dim
    eye = np.eye(dim)
    c_a = MatExpr(dim).add_scalar(beta_var, p_max_units * eye) \
        .add_mat(lifted_var, -1.0)
    c_b = MatExpr(dim, const=p_max_units * eye) \
        .add_mat(lifted_var, 1.0).add_mat(base_var, -1.0) \
        .add_scalar(beta_var, -p_max_units * eye)
    c_c = MatExpr(dim).add_mat(base_var, 1.0).add_mat(lifted_var, -1.0)
    c_d = MatExpr(dim).add_mat(lifted_var, 1.0)
    return [Constraint(c_a, ">=", label=f"C6a{tag}"),
            Constraint(c_b, ">=", label=f"C6b{tag}"),
            Constraint(c_c, ">=", label=f"C6c{tag}"),
            Constraint(c_d, ">=", label=f"C6d{tag}")]


def pair_coefficient(h_i: np.ndarray, h_j: np.ndarray, reduced: bool):
    """Channel coefficient matrix of one lifted block in C1^ / C2^.

    For the ordered tuple the coefficient is h_j h_i^H; with pair
    reduction the two swap-related tuples share one variable and the
    coefficient is symmetrized.
    """
    q = np.outer(h_j, h_i.conj())
    if reduced:
        q = q + q.conj().T
    return q


def build_c1hat(what_vars, vhat_vars, h_scaled, pairs, gamma_req, k, reduced):
    """Recast SINR constraint of IR k over the lifted blocks."""
    n_ir = len(what_vars)
    expr = LinExpr(const=-1.0)   # noise normalized to 1
    for (i, j) in pairs:
        sym = reduced and i != j
        q = pair_coefficient(h_scaled[k][i], h_scaled[k][j], sym)
        expr.add_mat(what_vars[k][(i, j)], q / gamma_req[k])
        for r in range(n_ir):
            if r != k:
                expr.add_mat(what_vars[r][(i, j)], -q)
        for jj in range(len(vhat_vars)):
            expr.add_mat(vhat_vars[jj][(i, j)], -q)
    return Constraint(expr, ">=", label=f"C1hat[{k}]")


def build_c2hat(what_vars, vhat_vars, g_scaled, pairs, j, reduced,
                active: bool):
    """Recast harvesting constraint of ER j, as a linear threshold.

    The exponential form C_req >= exp(-rho P) is equivalent to
    P >= -ln(C_req)/rho; channels are pre-scaled by that threshold so
    the right-hand side is 1 (or 0 when no energy is required).
    """
    expr = LinExpr(const=-1.0 if active else 0.0)
    for (i, jj) in pairs:
        sym = reduced and i != jj
        q = pair_coefficient(g_scaled[j][i], g_scaled[j][jj], sym)
        for k in range(len(what_vars)):
            expr.add_mat(what_vars[k][(i, jj)], q)
        for j2 in range(len(vhat_vars)):
            expr.add_mat(vhat_vars[j2][(i, jj)], q)
    return Constraint(expr, ">=", label=f"C2hat[{j}]")


def sca_objective(w_vars, v_vars, b_vars: dict, b_prev: np.ndarray,
                  chi_units: float) -> LinExpr:
    """Linearized penalty objective: power plus the b^2 underestimator.

    In internal power units; equals (power + chi sum(b - 2 b b_prev +
    b_prev^2)) / POWER_UNIT at any assignment.
    """
    expr = LinExpr()
    for wv in w_vars:
        expr.add_mat(wv, np.eye(wv.dim))
    for vv in v_vars:
        expr.add_mat(vv, np.eye(vv.dim))
    const = 0.0
    for (s, t), var in b_vars.items():
        prev = float(b_prev[s, t])
        expr.add_scalar(var, chi_units * (1.0 - 2.0 * prev))
        const += chi_units * prev * prev
    expr.const += const
    return expr


@dataclass
class VariableCounts:
    """Block and scalar counts of the lifted problem (unreduced form)."""

    lifted_matrix_blocks: int    # (K+J) S^2 (T+1)^2
    matrix_blocks_total: int     # lifted + K + J
    scalar_vars: int             # S(T+1) + S^2 (T+1)^2
    dominant_cost: int           # (K+J) S^2 (T+1)^2 N_T^3


def count_variables(n_ir: int, n_er: int, n_modes: int, n_tiles: int,
                    n_tx: int) -> VariableCounts:
    lifted = (n_ir + n_er) * n_modes ** 2 * (n_tiles + 1) ** 2
    scalars = n_modes * (n_tiles + 1) + n_modes ** 2 * (n_tiles + 1) ** 2
    return VariableCounts(
        lifted_matrix_blocks=lifted,
        matrix_blocks_total=lifted + n_ir + n_er,
        scalar_vars=scalars,
        dominant_cost=lifted * n_tx ** 3,
    )


# ---------------------------------------------------------------------------


@dataclass
class LiftedSolution:
    status: str
    w_mats: np.ndarray = None        # (K, N, N) complex, watts
    v_mats: np.ndarray = None        # (J, N, N)
    b: np.ndarray = None             # (S, T+1)
    beta: np.ndarray = None          # (n_st, n_st) symmetric in pair indices
    objective_w: float = np.nan      # power + chi * penalty, watts
    power_w: float = np.nan
    penalty: float = np.nan          # sum(b - b^2)
    values: dict = None
    iterations: int = 0


class LiftedProblem:
    """Assembles and solves the per-iteration convex subproblem.

    The constraint set does not depend on the linearization point; only
    the objective does, so one compiled program is reused across SCA
    iterations with updated cost rows.
    """

    def __init__(self, params: ProblemParams, chi: float,
                 pair_reduce: bool = True, pinned_b: np.ndarray = None):
        self.params = params
        self.chi = chi
        self.pair_reduce = pair_reduce
        ch = params.channels
        self.n_modes, self.n_tiles_inc = ch.n_modes, ch.n_tiles + 1
        self.n_st = self.n_modes * self.n_tiles_inc
        n = ch.n_tx

        # scaled channels, flattened over (s, t): h[k][i], i = s*(T+1)+t
        self.h_scaled = [
            (ch.h[:, :, k, :] * np.sqrt(POWER_UNIT / params.noise_w[k]))
            .reshape(self.n_st, n)
            for k in range(ch.n_ir)]
        self.g_scaled = []
        self.c2_active = []
        for j in range(ch.n_er):
            thresh = params.rf_thresholds[j]
            active = thresh > 0.0
            scale = np.sqrt(POWER_UNIT / thresh) if active else np.sqrt(POWER_UNIT)
            self.g_scaled.append(
                (ch.g[:, :, j, :] * scale).reshape(self.n_st, n))
            self.c2_active.append(active)

        model = ConeModel()
        self.model = model
        self.w_vars = [model.hermitian(f"W[{k}]", n) for k in range(ch.n_ir)]
        self.v_vars = [model.hermitian(f"V[{j}]", n) for j in range(ch.n_er)]
        self.b_vars = {}
        for s in range(self.n_modes):
            for t in range(self.n_tiles_inc):
                self.b_vars[(s, t)] = model.scalar(f"b[{s},{t}]")
        b_flat = {s * self.n_tiles_inc + t: v
                  for (s, t), v in self.b_vars.items()}

        if pair_reduce:
            self.pairs = [(i, j) for i in range(self.n_st)
                          for j in range(i, self.n_st)]
        else:
            self.pairs = [(i, j) for i in range(self.n_st)
                          for j in range(self.n_st)]
        self.beta_vars = {p: model.scalar(f"beta[{p[0]},{p[1]}]")
                          for p in self.pairs}
        self.what_vars = [
            {p: model.hermitian(f"What[{k}][{p[0]},{p[1]}]", n)
             for p in self.pairs}
            for k in range(ch.n_ir)]
        self.vhat_vars = [
            {p: model.hermitian(f"Vhat[{j}][{p[0]},{p[1]}]", n)
             for p in self.pairs}
            for j in range(ch.n_er)]

        for wv in self.w_vars + self.v_vars:
            model.add(Constraint(MatExpr(n).add_mat(wv, 1.0), ">=",
                                 label=f"psd[{wv.name}]"))
        model.add(build_c3b_c4(self.b_vars, self.n_modes, self.n_tiles_inc))
        model.add(build_c5(self.beta_vars, b_flat))
        p_units = params.p_max / POWER_UNIT
        for k in range(ch.n_ir):
            for p in self.pairs:
                model.add(build_bigm(self.what_vars[k][p], self.w_vars[k],
                                     self.beta_vars[p], p_units,
                                     tag=f"[W{k}]{p}"))
        for j in range(ch.n_er):
            for p in self.pairs:
                model.add(build_bigm(self.vhat_vars[j][p], self.v_vars[j],
                                     self.beta_vars[p], p_units,
                                     tag=f"[V{j}]{p}"))
        for k in range(ch.n_ir):
            model.add(build_c1hat(self.what_vars, self.vhat_vars,
                                  self.h_scaled, self.pairs,
                                  params.gamma_req, k, pair_reduce))
        for j in range(ch.n_er):
            model.add(build_c2hat(self.what_vars, self.vhat_vars,
                                  self.g_scaled, self.pairs, j, pair_reduce,
                                  self.c2_active[j]))
        if pinned_b is not None:
            for (s, t), var in self.b_vars.items():
                model.add(Constraint(
                    LinExpr(scalars={var: 1.0}, const=-float(pinned_b[s, t])),
                    "==", label=f"pin_b[{s},{t}]"))

        # the linearized penalty enters through epigraph slacks so the
        # compiled objective has the scale of the true cost: pi_i bounds
        # (1 - 2 b_prev_i) b_i + b_prev_i^2 from above, and the cost is
        # power + chi * sum(pi).  Only the epigraph rows depend on the
        # linearization point, so one compiled program is patched per
        # iteration instead of rebuilt.
        self.pen_vars = {}
        for s in range(self.n_modes):
            for t in range(self.n_tiles_inc):
                self.pen_vars[(s, t)] = model.scalar(f"pen[{s},{t}]")
        self._pen_order = list(self.pen_vars)
        for key in self._pen_order:
            # placeholder coefficients; patched before every solve
            e = LinExpr(scalars={self.pen_vars[key]: 1.0,
                                 self.b_vars[key]: -0.5}, const=-0.25)
            model.add(Constraint(e, ">=", label=f"pen_epi[{key}]"))

        self._program = None
        self._offsets = None
        self._epi_slots = None

    @property
    def chi_units(self) -> float:
        return self.chi / POWER_UNIT

    def compile(self):
        if self._program is None:
            obj = LinExpr()
            for wv in self.w_vars:
                obj.add_mat(wv, np.eye(wv.dim))
            for vv in self.v_vars:
                obj.add_mat(vv, np.eye(vv.dim))
            for key in self._pen_order:
                obj.add_scalar(self.pen_vars[key], 1.0)  # chi set in rhs
            self.model.minimize(obj)
            self._program, self._offsets = self.model.compile()
            self._locate_epigraph_entries()
        return self._program, self._offsets

    def _locate_epigraph_entries(self):
        """Data positions of the per-iteration epigraph coefficients."""
        a = self._program.a_nonneg
        nn = self._program.dims.nonneg
        n_pen = len(self._pen_order)
        self._epi_slots = []
        for idx, key in enumerate(self._pen_order):
            col = nn - n_pen + idx
            row_b = self._offsets[self.b_vars[key].name][0]
            sl = slice(a.indptr[row_b], a.indptr[row_b + 1])
            pos = sl.start + int(np.where(a.indices[sl] == col)[0][0])
            self._epi_slots.append((col, pos))

    def objective_expr(self, b_prev: np.ndarray) -> LinExpr:
        return sca_objective(self.w_vars, self.v_vars, self.b_vars, b_prev,
                             self.chi_units)

    def _patched_program(self, b_prev: np.ndarray):
        """Program with epigraph rows linearized at b_prev."""
        program, offsets = self.compile()
        a = program.a_nonneg
        data = a.data.copy()
        c_nonneg = program.c_nonneg.copy()
        rhs = np.zeros(program.n_rows)
        for k in range(len(self.w_vars)):
            base, _ = offsets[f"W[{k}]"]
            rhs[base:base + self.w_vars[k].dim] = -1.0   # diagonal params
        for j in range(len(self.v_vars)):
            base, _ = offsets[f"V[{j}]"]
            rhs[base:base + self.v_vars[j].dim] = -1.0
        for (col, pos), key in zip(self._epi_slots, self._pen_order):
            prev = float(b_prev[key])
            # slack = C - sum y A = -prev^2 + pi - (1 - 2 prev) b >= 0
            data[pos] = 1.0 - 2.0 * prev
            c_nonneg[col] = -prev * prev
            base = offsets[self.pen_vars[key].name][0]
            rhs[base] = -self.chi_units
        a_new = sp.csr_matrix((data, a.indices, a.indptr), shape=a.shape)
        return dc_replace(program, a_nonneg=a_new, c_nonneg=c_nonneg,
                          b=rhs), offsets

    def solve_at(self, b_prev: np.ndarray, tol: float = 1e-7,
                 max_iters: int = 100) -> LiftedSolution:
        """Solve the subproblem linearized at b_prev."""
        prog, offsets = self._patched_program(b_prev)
        ms = self.model.solve(tol=tol, max_iters=max_iters,
                              program=prog, offsets=offsets)
        if ms.status in ("infeasible", "unbounded"):
            return LiftedSolution(status=ms.status,
                                  iterations=ms.conic.iterations)
        return self._decode(ms, self.objective_expr(b_prev))

    def _decode(self, ms, objective: LinExpr) -> LiftedSolution:
        vals = ms.values
        ch = self.params.channels
        w = np.array([vals[f"W[{k}]"] for k in range(ch.n_ir)]) * POWER_UNIT
        v = (np.array([vals[f"V[{j}]"] for j in range(ch.n_er)]) * POWER_UNIT
             if ch.n_er else np.zeros((0, ch.n_tx, ch.n_tx), dtype=complex))
        b = np.zeros((self.n_modes, self.n_tiles_inc))
        for (s, t), var in self.b_vars.items():
            b[s, t] = vals[var.name]
        beta = np.zeros((self.n_st, self.n_st))
        for (i, j), var in self.beta_vars.items():
            beta[i, j] = vals[var.name]
            beta[j, i] = vals[var.name]
        power_units = float(sum(np.trace(m).real for m in w)
                            + sum(np.trace(m).real for m in v)) / POWER_UNIT
        penalty = float(np.sum(b - b * b))
        obj_units = objective.value(vals)
        return LiftedSolution(
            status="optimal", w_mats=w, v_mats=v, b=b, beta=beta,
            objective_w=obj_units * POWER_UNIT, power_w=power_units * POWER_UNIT,
            penalty=penalty, values=vals, iterations=ms.conic.iterations)

    def objective_w_at(self, w_mats, v_mats, b: np.ndarray) -> float:
        """True penalty objective (watts) at explicit covariances and b."""
        power = float(sum(np.trace(m).real for m in w_mats)
                      + sum(np.trace(m).real for m in v_mats))
        return power + self.chi * float(np.sum(b - b * b))
