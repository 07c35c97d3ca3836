"""Penalty-SCA outer loop: solve, linearize, repeat, round, certify.

Each iteration solves the rank-relaxed lifted subproblem linearized at
the previous selection weights.  The recorded objective is the true
penalized cost (power plus chi * sum(b - b^2)), which decreases
monotonically because the linearized subproblem majorizes it.  After
the stopping rule fires, each tile takes its largest-weight mode, a
clean fixed-mode problem is re-solved to strip the penalty bias from
the reported power, beamformers are extracted from the rank-one
covariances, and the result is certified against the original SINR and
harvesting constraints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bench import (
    FixedModeProblem,
    FixedModeResult,
    RANK_ONE_THRESHOLD,
    assignment_to_b,
    extract_rank_one,
    fixed_mode_solve,
    solve_collapsed,
)
from .eh import EhParams, harvested_power
from .lifting import (
    LiftedProblem,
    ProblemParams,
    collapse_channels,
    rf_power,
    sinr,
)

log = logging.getLogger(__name__)

FEAS_SLACK = 1e-6   # QoS certified at requirement * (1 - FEAS_SLACK)


@dataclass
class ScaConfig:
    chi: float = 1e3                 # penalty factor
    epsilon: float = 1e-3            # relative-decrease stopping tolerance
    max_outer_iters: int = 50
    penalty_growth: float = 10.0     # applied when b fails binary_tol
    chi_growth_max: float = 1e3      # cap on cumulative growth
    binary_tol: float = 1e-2
    solver_tol: float = 1e-7
    solver_max_iters: int = 100
    pair_reduce: bool = True
    # "auto": chi multiplies the initialization power, keeping the
    # penalty-to-power ratio at the intended order of magnitude for any
    # link budget; a float fixes the power scale (1.0 = literal watts).
    chi_power_scale: object = "auto"

    def __post_init__(self):
        if self.chi <= 0.0:
            raise ValueError("chi must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.penalty_growth < 1.0:
            raise ValueError("penalty_growth must be >= 1")

    def effective_chi(self, init_power_w: float) -> float:
        if self.chi_power_scale == "auto":
            return self.chi * max(init_power_w, 1e-30)
        return self.chi * float(self.chi_power_scale)


@dataclass
class FeasibilityReport:
    sinr: np.ndarray
    sinr_margins: np.ndarray         # sinr / gamma_req - 1
    rf_powers: np.ndarray
    harvested: np.ndarray
    eh_margins: np.ndarray           # harvested / e_req - 1 (inf if free)
    feasible: bool


@dataclass
class RunResult:
    status: str                      # ok | infeasible | solver_fail
    objective_trace: list = field(default_factory=list)
    trace_rows: list = field(default_factory=list)
    w_vecs: np.ndarray = None
    v_vecs: np.ndarray = None
    w_mats: np.ndarray = None
    v_mats: np.ndarray = None
    mode_assignment: tuple = ()
    transmit_power_w: float = np.inf
    feasibility: FeasibilityReport = None
    rank_ratios_w: np.ndarray = None
    rank_ratios_v: np.ndarray = None
    iterations_used: int = 0
    max_binary_dev: float = np.nan
    chi_final: float = np.nan
    events: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def check_convergence(trace, epsilon: float) -> bool:
    """Relative-decrease stopping rule on the objective trace."""
    if len(trace) < 2:
        return False
    prev, cur = trace[-2], trace[-1]
    return (prev - cur) / cur <= epsilon


def initialize(params: ProblemParams, config: ScaConfig):
    """Starting point: uniform selection weights and the beamformers of
    the matching collapsed-channel SDP (penalty plays no role here)."""
    ch = params.channels
    b0 = np.full((ch.n_modes, ch.n_tiles + 1), 1.0 / ch.n_modes)
    h_hat, g_hat = collapse_channels(ch, b0)
    warm = solve_collapsed(h_hat, g_hat, params, tol=config.solver_tol)
    return b0, warm


_initialize_point = initialize


def iterate(problem: LiftedProblem, b_prev: np.ndarray, config: ScaConfig):
    """One SCA step; a failed solve is retried once with more iterations."""
    sol = problem.solve_at(b_prev, tol=config.solver_tol,
                           max_iters=config.solver_max_iters)
    if sol.status == "max_iters":
        sol = problem.solve_at(b_prev, tol=config.solver_tol,
                               max_iters=10 * config.solver_max_iters)
    return sol


def certify(channels, w_vecs, v_vecs, b, params: ProblemParams,
            eh) -> FeasibilityReport:
    """Original-problem feasibility via the exact SINR and RF expressions."""
    gammas = sinr(channels, w_vecs, v_vecs, b, params.noise_w)
    sinr_margins = gammas / params.gamma_req - 1.0
    rf = np.array([rf_power(channels, w_vecs, v_vecs, b, j)
                   for j in range(channels.n_er)])
    eh_list = _eh_list(eh, channels.n_er)
    harvested = np.zeros(channels.n_er)
    eh_margins = np.full(channels.n_er, np.inf)
    for j in range(channels.n_er):
        if eh_list is not None:
            harvested[j] = harvested_power(rf[j], eh_list[j])
            if eh_list[j].e_req > 0.0:
                eh_margins[j] = harvested[j] / eh_list[j].e_req - 1.0
        else:
            # no circuit given: certify the RF threshold directly
            if params.rf_thresholds[j] > 0.0:
                eh_margins[j] = rf[j] / params.rf_thresholds[j] - 1.0
    feasible = bool(np.all(sinr_margins >= -FEAS_SLACK)
                    and np.all(eh_margins >= -FEAS_SLACK))
    return FeasibilityReport(sinr=gammas, sinr_margins=sinr_margins,
                             rf_powers=rf, harvested=harvested,
                             eh_margins=eh_margins, feasible=feasible)


def _eh_list(eh, n_er):
    if eh is None:
        return None
    if isinstance(eh, EhParams):
        return [eh] * n_er
    return list(eh)


def round_and_polish(b_final: np.ndarray, params: ProblemParams,
                     config: ScaConfig, eh,
                     seen_assignments=()) -> RunResult:
    """Largest-weight mode per tile, then a clean fixed-mode re-solve.

    If the rounded assignment is infeasible, the best feasible
    assignment recorded during the iterations is used instead.
    """
    ch = params.channels
    assignment = tuple(int(np.argmax(b_final[:, t]))
                       for t in range(1, ch.n_tiles + 1))
    events = []
    res = fixed_mode_solve(FixedModeProblem.from_assignment(params, assignment),
                           tol=config.solver_tol)
    if res.status != "ok":
        events.append(f"rounded assignment {assignment} infeasible; "
                      "falling back to assignments seen during the run")
        best = None
        for cand in dict.fromkeys(tuple(a) for a in seen_assignments):
            r = fixed_mode_solve(FixedModeProblem.from_assignment(params, cand),
                                 tol=config.solver_tol)
            if r.status == "ok" and (best is None or r.power_w < best.power_w):
                best = r
        if best is None:
            return RunResult(status="infeasible", events=events)
        res = best
        assignment = res.mode_assignment

    return finalize_fixed(res, assignment, params, config, eh, events)


def finalize_fixed(res: FixedModeResult, assignment, params: ProblemParams,
                   config: ScaConfig, eh, events) -> RunResult:
    """Extract beamformers from a fixed-mode solution and certify."""
    ch = params.channels
    w_mats, v_mats = res.w_mats, res.v_mats
    total = res.power_w
    w_vecs, ratios_w = zip(*[_guarded_extract(m, events, f"W[{k}]")
                             for k, m in enumerate(w_mats)]) \
        if len(w_mats) else ((), ())
    v_out = []
    for j, m in enumerate(v_mats):
        if float(np.trace(m).real) <= 1e-9 * total:
            # numerically zero energy covariance counts as rank <= 1
            v_out.append((np.zeros(ch.n_tx, dtype=complex), 1.0))
        else:
            v_out.append(_guarded_extract(m, events, f"V[{j}]"))
    v_vecs, ratios_v = zip(*v_out) if v_out else ((), ())
    w_vecs = np.array(w_vecs) if len(w_vecs) else np.zeros((0, ch.n_tx), complex)
    v_vecs = np.array(v_vecs) if len(v_vecs) else np.zeros((0, ch.n_tx), complex)
    b = assignment_to_b(ch.n_modes, ch.n_tiles, assignment)
    report = certify(ch, w_vecs, v_vecs, b, params, eh)
    power = float(np.sum(np.abs(w_vecs) ** 2) + np.sum(np.abs(v_vecs) ** 2))
    return RunResult(
        status="ok", w_vecs=w_vecs, v_vecs=v_vecs, w_mats=w_mats,
        v_mats=v_mats, mode_assignment=tuple(assignment),
        transmit_power_w=power, feasibility=report,
        rank_ratios_w=np.asarray(ratios_w, dtype=float),
        rank_ratios_v=np.asarray(ratios_v, dtype=float), events=events)


def _guarded_extract(mat, events, tag):
    vec, ratio = extract_rank_one(mat)
    if ratio < RANK_ONE_THRESHOLD:
        events.append(f"{tag} rank ratio {ratio:.6f} below threshold; "
                      "using best rank-one approximation")
    return vec, ratio


def run(params: ProblemParams, eh=None, config: ScaConfig = None) -> RunResult:
    """Full pipeline: initialize, iterate to convergence, round, certify."""
    if config is None:
        config = ScaConfig()
    ch = params.channels

    b_prev, warm = _initialize_point(params, config)
    if warm.status == "infeasible":
        return RunResult(status="infeasible",
                         events=["relaxed initialization infeasible"])
    if warm.status != "ok":
        return RunResult(status="solver_fail",
                         events=["initialization solve failed"])

    chi = config.effective_chi(warm.power_w)
    chi_cap = chi * config.chi_growth_max
    problem = LiftedProblem(params, chi=chi, pair_reduce=config.pair_reduce)

    f0 = float(warm.power_w + chi * np.sum(b_prev - b_prev ** 2))
    trace = [f0]
    trace_rows = [{
        "iteration": 0, "objective_w": f0, "power_w": warm.power_w,
        "penalty": float(np.sum(b_prev - b_prev ** 2)),
        "max_binary_dev": float(np.max(np.abs(b_prev - np.round(b_prev)))),
        "chi": chi,
    }]
    events = []
    seen = []
    stage_start = 0
    iters = 0

    while iters < config.max_outer_iters:
        iters += 1
        sol = iterate(problem, b_prev, config)
        if sol.status in ("infeasible", "unbounded"):
            return RunResult(status="infeasible", objective_trace=trace,
                             trace_rows=trace_rows, iterations_used=iters,
                             events=events + ["subproblem infeasible"])
        if sol.status == "max_iters":
            return RunResult(status="solver_fail", objective_trace=trace,
                             trace_rows=trace_rows, iterations_used=iters,
                             events=events + ["subproblem solver failed"])

        b_prev = np.clip(sol.b, 0.0, 1.0)
        f_val = problem.objective_w_at(sol.w_mats, sol.v_mats, sol.b)
        trace.append(f_val)
        dev = float(np.max(np.abs(sol.b - np.round(sol.b))))
        trace_rows.append({
            "iteration": iters, "objective_w": f_val, "power_w": sol.power_w,
            "penalty": sol.penalty, "max_binary_dev": dev, "chi": chi,
        })
        seen.append(tuple(int(np.argmax(sol.b[:, t]))
                          for t in range(1, ch.n_tiles + 1)))

        if check_convergence(trace[stage_start:], config.epsilon):
            if dev <= config.binary_tol:
                break
            if chi * config.penalty_growth <= chi_cap:
                chi *= config.penalty_growth
                problem.chi = chi
                events.append(f"penalty growth to chi={chi:g} "
                              f"(binary deviation {dev:.3g})")
                stage_start = len(trace) - 1
            else:
                events.append(f"binary deviation {dev:.3g} above tolerance "
                              f"at the penalty growth cap")
                break

    result = round_and_polish(b_prev, params, config, eh,
                              seen_assignments=seen)
    result.objective_trace = trace
    result.trace_rows = trace_rows
    result.iterations_used = iters
    result.max_binary_dev = float(np.max(np.abs(b_prev - np.round(b_prev))))
    result.chi_final = chi
    result.events = events + result.events
    return result
