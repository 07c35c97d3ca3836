"""Reference solvers: fixed-mode SDP, exhaustive oracle, baseline schemes.

With the mode assignment fixed, the selection variables disappear and
the problem collapses to a small SDP in the beamforming covariances
over the summed effective channels.  The exhaustive oracle enumerates
every assignment and keeps the best, which bounds what the relaxation
pipeline can achieve on desk-scale instances.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import EffectiveChannels
from .eh import EhParams, harvested_power
from .lifting import (
    POWER_UNIT,
    ProblemParams,
    collapse_channels,
    rf_power,
    sinr,
)
from .modeling import ConeModel, Constraint, LinExpr, MatExpr

log = logging.getLogger(__name__)

ORACLE_CAP = 10_000
RANK_ONE_THRESHOLD = 0.999


class OracleCapExceeded(ValueError):
    pass


@dataclass
class FixedModeProblem:
    """One mode per real tile, channels already collapsed."""

    mode_assignment: tuple
    h_hat: np.ndarray            # (K, N)
    g_hat: np.ndarray            # (J, N)
    params: ProblemParams

    @classmethod
    def from_assignment(cls, params: ProblemParams, assignment) -> "FixedModeProblem":
        ch = params.channels
        b = assignment_to_b(ch.n_modes, ch.n_tiles, assignment)
        h_hat, g_hat = collapse_channels(ch, b)
        return cls(mode_assignment=tuple(int(a) for a in assignment),
                   h_hat=h_hat, g_hat=g_hat, params=params)


def assignment_to_b(n_modes: int, n_tiles: int, assignment) -> np.ndarray:
    """Binary selection matrix for one mode per real tile.

    The virtual tile t=0 always uses mode 0; its channel does not
    depend on the mode index.
    """
    if len(assignment) != n_tiles:
        raise ValueError("assignment length must equal the tile count")
    b = np.zeros((n_modes, n_tiles + 1))
    b[0, 0] = 1.0
    for t, s in enumerate(assignment, start=1):
        if not 0 <= s < n_modes:
            raise ValueError(f"mode index {s} out of range")
        b[s, t] = 1.0
    return b


def extract_rank_one(mat: np.ndarray):
    """Dominant eigenpair beamformer and the rank-one energy ratio.

    Numerically-zero matrices count as rank one with a zero beamformer.
    """
    w, v = np.linalg.eigh(mat)
    total = float(w.sum())
    if total <= 1e-300 or w[-1] <= 0.0:
        return np.zeros(mat.shape[0], dtype=complex), 1.0
    vec = np.sqrt(w[-1]) * v[:, -1]
    return vec, min(float(w[-1] / total), 1.0)


@dataclass
class FixedModeResult:
    status: str
    power_w: float = np.inf
    w_mats: np.ndarray = None
    v_mats: np.ndarray = None
    w_vecs: np.ndarray = None
    v_vecs: np.ndarray = None
    rank_ratios_w: np.ndarray = None
    rank_ratios_v: np.ndarray = None
    mode_assignment: tuple = ()


def solve_collapsed(h_hat: np.ndarray, g_hat: np.ndarray,
                    params: ProblemParams, tol: float = 1e-7,
                    max_iters: int = 100) -> FixedModeResult:
    """Power-minimizing SDP for fixed effective channels.

    Covariance-only problem: SINR and RF-power constraints with a
    single collapsed channel per receiver, no selection variables.
    """
    n_ir, n = h_hat.shape
    n_er = g_hat.shape[0]
    model = ConeModel()
    w_vars = [model.hermitian(f"W[{k}]", n) for k in range(n_ir)]
    v_vars = [model.hermitian(f"V[{j}]", n) for j in range(n_er)]
    for mv in w_vars + v_vars:
        model.add(Constraint(MatExpr(n).add_mat(mv, 1.0), ">="))

    for k in range(n_ir):
        hk = h_hat[k] * np.sqrt(POWER_UNIT / params.noise_w[k])
        q = np.outer(hk, hk.conj())
        e = LinExpr(const=-1.0)
        e.add_mat(w_vars[k], q / params.gamma_req[k])
        for r in range(n_ir):
            if r != k:
                e.add_mat(w_vars[r], -q)
        for j in range(n_er):
            e.add_mat(v_vars[j], -q)
        model.add(Constraint(e, ">=", label=f"C1[{k}]"))

    for j in range(n_er):
        thresh = params.rf_thresholds[j]
        if thresh <= 0.0:
            continue
        gj = g_hat[j] * np.sqrt(POWER_UNIT / thresh)
        q = np.outer(gj, gj.conj())
        e = LinExpr(const=-1.0)
        for mv in w_vars + v_vars:
            e.add_mat(mv, q)
        model.add(Constraint(e, ">=", label=f"C2[{j}]"))

    obj = LinExpr()
    for mv in w_vars + v_vars:
        obj.add_mat(mv, np.eye(n))
    model.minimize(obj)

    ms = model.solve(tol=tol, max_iters=max_iters)
    if ms.status != "optimal":
        return FixedModeResult(status="infeasible"
                               if ms.status == "infeasible" else "solver_fail")

    w_mats = np.array([ms.values[f"W[{k}]"] for k in range(n_ir)]) * POWER_UNIT
    v_mats = (np.array([ms.values[f"V[{j}]"] for j in range(n_er)]) * POWER_UNIT
              if n_er else np.zeros((0, n, n), dtype=complex))
    w_out = [extract_rank_one(m) for m in w_mats]
    v_out = [extract_rank_one(m) for m in v_mats]
    w_vecs = np.array([w for w, _ in w_out]) if n_ir else np.zeros((0, n), complex)
    v_vecs = np.array([w for w, _ in v_out]) if n_er else np.zeros((0, n), complex)
    power = float(sum(np.trace(m).real for m in w_mats)
                  + sum(np.trace(m).real for m in v_mats))
    if power > params.p_max * (1 + 1e-9):
        log.warning("fixed-mode optimum %.3g W exceeds p_max %.3g W",
                    power, params.p_max)
    return FixedModeResult(
        status="ok", power_w=power, w_mats=w_mats, v_mats=v_mats,
        w_vecs=w_vecs, v_vecs=v_vecs,
        rank_ratios_w=np.array([r for _, r in w_out]),
        rank_ratios_v=np.array([r for _, r in v_out]))


def fixed_mode_solve(fp: FixedModeProblem, tol: float = 1e-7) -> FixedModeResult:
    res = solve_collapsed(fp.h_hat, fp.g_hat, fp.params, tol=tol)
    res.mode_assignment = fp.mode_assignment
    return res


@dataclass
class OracleResult:
    status: str
    power_w: float = np.inf
    assignment: tuple = ()
    n_assignments: int = 0
    n_feasible: int = 0
    all_powers: dict = field(default_factory=dict)


def exhaustive_oracle(params: ProblemParams, cap: int = ORACLE_CAP) -> OracleResult:
    """Global minimum over every mode assignment (desk scale only)."""
    ch = params.channels
    total = ch.n_modes ** ch.n_tiles
    if total > cap:
        raise OracleCapExceeded(
            f"{ch.n_modes}^{ch.n_tiles} = {total} assignments exceed cap {cap}")
    best = OracleResult(status="infeasible", n_assignments=total)
    for assignment in itertools.product(range(ch.n_modes), repeat=ch.n_tiles):
        res = fixed_mode_solve(FixedModeProblem.from_assignment(params, assignment))
        if res.status == "ok":
            best.n_feasible += 1
            best.all_powers[assignment] = res.power_w
            if res.power_w < best.power_w:
                best.status = "ok"
                best.power_w = res.power_w
                best.assignment = assignment
    return best


@dataclass
class BaselineResult:
    status: str
    power_w: float = np.inf
    assignment: tuple = ()
    w_vecs: np.ndarray = None
    v_vecs: np.ndarray = None
    attempts: int = 0


def baseline1_random_mrt(params: ProblemParams, seed: int,
                         max_attempts: int = 20) -> BaselineResult:
    """Random tile modes, maximum ratio transmission, power-only LP.

    Beam directions are fixed to the collapsed channels; the remaining
    per-user transmit powers solve a small LP.  Infeasible draws are
    resampled up to the attempt cap.
    """
    ch = params.channels
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_attempts + 1):
        assignment = tuple(int(s) for s in
                           rng.integers(0, ch.n_modes, size=ch.n_tiles))
        fp = FixedModeProblem.from_assignment(params, assignment)
        res = _mrt_power_lp(fp)
        if res.status == "ok":
            res.attempts = attempt
            return res
    return BaselineResult(status="infeasible", attempts=max_attempts)


def _mrt_power_lp(fp: FixedModeProblem) -> BaselineResult:
    params = fp.params
    n_ir, n = fp.h_hat.shape
    n_er = fp.g_hat.shape[0]
    dir_w = np.array([h / np.linalg.norm(h) if np.linalg.norm(h) > 0 else h
                      for h in fp.h_hat])
    dir_v = np.array([g / np.linalg.norm(g) if np.linalg.norm(g) > 0 else g
                      for g in fp.g_hat]) if n_er else np.zeros((0, n), complex)

    model = ConeModel()
    p_vars = [model.scalar(f"p[{k}]") for k in range(n_ir)]
    q_vars = [model.scalar(f"q[{j}]") for j in range(n_er)]
    for var in p_vars + q_vars:
        model.add(Constraint(LinExpr(scalars={var: 1.0}), ">="))

    # units: powers in POWER_UNIT watts
    for k in range(n_ir):
        hk = fp.h_hat[k]
        scale = POWER_UNIT / params.noise_w[k]
        e = LinExpr(const=-1.0)
        e.add_scalar(p_vars[k],
                     float(np.abs(hk.conj() @ dir_w[k]) ** 2) * scale
                     / params.gamma_req[k])
        for r in range(n_ir):
            if r != k:
                e.add_scalar(p_vars[r],
                             -float(np.abs(hk.conj() @ dir_w[r]) ** 2) * scale)
        for j in range(n_er):
            e.add_scalar(q_vars[j],
                         -float(np.abs(hk.conj() @ dir_v[j]) ** 2) * scale)
        model.add(Constraint(e, ">=", label=f"C1[{k}]"))
    for j in range(n_er):
        thresh = params.rf_thresholds[j]
        if thresh <= 0.0:
            continue
        gj = fp.g_hat[j]
        scale = POWER_UNIT / thresh
        e = LinExpr(const=-1.0)
        for k in range(n_ir):
            e.add_scalar(p_vars[k],
                         float(np.abs(gj.conj() @ dir_w[k]) ** 2) * scale)
        for i in range(n_er):
            e.add_scalar(q_vars[i],
                         float(np.abs(gj.conj() @ dir_v[i]) ** 2) * scale)
        model.add(Constraint(e, ">=", label=f"C2[{j}]"))

    obj = LinExpr()
    for var in p_vars + q_vars:
        obj.add_scalar(var, 1.0)
    model.minimize(obj)
    ms = model.solve()
    if ms.status != "optimal":
        return BaselineResult(status="infeasible")

    p = np.array([max(ms.values[f"p[{k}]"], 0.0) for k in range(n_ir)])
    q = np.array([max(ms.values[f"q[{j}]"], 0.0) for j in range(n_er)])
    w_vecs = np.sqrt(p * POWER_UNIT)[:, None] * dir_w
    v_vecs = (np.sqrt(q * POWER_UNIT)[:, None] * dir_v if n_er
              else np.zeros((0, n), complex))
    return BaselineResult(status="ok",
                          power_w=float((p.sum() + q.sum()) * POWER_UNIT),
                          assignment=fp.mode_assignment,
                          w_vecs=w_vecs, v_vecs=v_vecs)


def no_irs_channels(channels: EffectiveChannels):
    """Direct-link-only collapsed channels (IRS absent)."""
    return channels.h[0, 0, :, :].copy(), channels.g[0, 0, :, :].copy()


def baseline2_no_irs(params: ProblemParams) -> FixedModeResult:
    """Beamforming-only power minimization without the IRS."""
    h_hat, g_hat = no_irs_channels(params.channels)
    return solve_collapsed(h_hat, g_hat, params)


@dataclass
class Baseline3Result:
    status: str
    power_w: float = np.inf
    repair_factor: float = 1.0
    repaired: bool = False
    run: object = None


def baseline3_linear_eh(params: ProblemParams, eh: EhParams,
                        efficiency: float = 0.5, sca_config=None,
                        bisect_iters: int = 50,
                        bracket_max: float = 1e6) -> Baseline3Result:
    """Full pipeline under the linear EH model, repaired afterwards.

    Solves the joint design with the harvesting constraint replaced by
    efficiency * P_rf >= e_req, then evaluates the non-linear circuit.
    If the true harvested power falls short, every ER beam is scaled by
    one common factor found by bisection on [1, bracket_max] until the
    requirement holds.
    """
    from .sca import ScaConfig, run as sca_run

    if sca_config is None:
        sca_config = ScaConfig()
    ch = params.channels
    lin_params = ProblemParams(
        channels=ch, gamma_req=params.gamma_req, noise_w=params.noise_w,
        rf_thresholds=np.full(ch.n_er, eh.e_req / efficiency),
        p_max=params.p_max)
    result = sca_run(lin_params, eh=None, config=sca_config)
    if result.status != "ok":
        return Baseline3Result(status=result.status, run=result)

    b = assignment_to_b(ch.n_modes, ch.n_tiles, result.mode_assignment)
    w = result.w_vecs
    v = result.v_vecs

    def harvested_min(scale):
        vs = np.sqrt(scale) * v
        vals = [harvested_power(rf_power(ch, w, vs, b, j), eh)
                for j in range(ch.n_er)]
        return min(vals) if vals else np.inf

    req = eh.e_req
    if ch.n_er == 0 or req <= 0.0 or harvested_min(1.0) >= req * (1 - 1e-12):
        return Baseline3Result(status="ok", power_w=result.transmit_power_w,
                               run=result)

    if float(np.sum(np.abs(v) ** 2)) < 1e-18:
        # linear stage left the ER beams empty; seed MRT beams to scale
        _, g_hat = collapse_channels(ch, b)
        v = np.array([g / np.linalg.norm(g) * np.sqrt(POWER_UNIT)
                      if np.linalg.norm(g) > 0.0 else g for g in g_hat])
        if harvested_min(1.0) >= req * (1 - 1e-12):
            power = float(np.sum(np.abs(w) ** 2) + np.sum(np.abs(v) ** 2))
            return Baseline3Result(status="ok", power_w=power, repaired=True,
                                   run=result)

    lo, hi = 1.0, 2.0
    while harvested_min(hi) < req and hi < bracket_max:
        lo, hi = hi, hi * 4.0
    if harvested_min(hi) < req:
        return Baseline3Result(status="infeasible", run=result)
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        if harvested_min(mid) >= req:
            hi = mid
        else:
            lo = mid
    v_rep = np.sqrt(hi) * v
    power = float(np.sum(np.abs(w) ** 2) + np.sum(np.abs(v_rep) ** 2))
    return Baseline3Result(status="ok", power_w=power, repair_factor=hi,
                           repaired=True, run=result)
