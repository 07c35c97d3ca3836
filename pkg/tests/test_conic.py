"""Conic solver: analytic optima, certificates, determinism, presolve."""

import numpy as np
import pytest

from tilebeam.conic import (
    ConeDims,
    ProgramBuilder,
    check_kkt,
    presolve,
    solve,
)
from tilebeam.conic.blocks import embed_hermitian, svec

TOL = 1e-7


def _lp_shift():
    b = ProgramBuilder(ConeDims(nonneg=1), n_rows=1)
    b.add_nonneg_entry(0, 0, 1.0)
    b.set_b(0, 3.0)
    b.set_c_nonneg(0, 1.0)
    return b.build(), 3.0


def _lp_two_var():
    # min x + 2y s.t. x + y = 4 -> 4
    b = ProgramBuilder(ConeDims(nonneg=2), n_rows=1)
    b.add_nonneg_entry(0, 0, 1.0)
    b.add_nonneg_entry(0, 1, 1.0)
    b.set_b(0, 4.0)
    b.set_c_nonneg(0, 1.0)
    b.set_c_nonneg(1, 2.0)
    return b.build(), 4.0


def _lp_box():
    # min -x s.t. x + s = 1 -> -1
    b = ProgramBuilder(ConeDims(nonneg=2), n_rows=1)
    b.add_nonneg_entry(0, 0, 1.0)
    b.add_nonneg_entry(0, 1, 1.0)
    b.set_b(0, 1.0)
    b.set_c_nonneg(0, -1.0)
    return b.build(), -1.0


def _sdp_eigmin():
    # min tr(diag(1,2) X), tr X = 1 -> smallest eigenvalue 1
    b = ProgramBuilder(ConeDims(psd=(2,)), n_rows=1)
    b.add_psd_entry(0, 0, 0, 0, 1.0)
    b.add_psd_entry(0, 0, 1, 1, 1.0)
    b.set_b(0, 1.0)
    b.set_c_psd_entry(0, 0, 0, 1.0)
    b.set_c_psd_entry(0, 1, 1, 2.0)
    return b.build(), 1.0


def _sdp_eigmax_dual():
    # dual reading: min t s.t. t I - diag(1,2) >= 0 has t* = 2, and the
    # stored primal value is -2
    b = ProgramBuilder(ConeDims(psd=(2,)), n_rows=1)
    b.add_psd_entry(0, 0, 0, 0, -1.0)
    b.add_psd_entry(0, 0, 1, 1, -1.0)
    b.set_b(0, -1.0)
    b.set_c_psd_entry(0, 0, 0, -1.0)
    b.set_c_psd_entry(0, 1, 1, -2.0)
    return b.build(), -2.0


def _sdp_geometric():
    # min x + y s.t. [[x, 1], [1, y]] >= 0  ->  2 at x = y = 1;
    # stored primal value is -2
    b = ProgramBuilder(ConeDims(psd=(2,)), n_rows=2)
    b.add_psd_entry(0, 0, 0, 0, -1.0)
    b.set_b(0, -1.0)
    b.add_psd_entry(1, 0, 1, 1, -1.0)
    b.set_b(1, -1.0)
    b.set_c_psd_entry(0, 0, 1, -1.0)
    return b.build(), -2.0


def _theta_c5():
    n = 5
    edges = [(i, (i + 1) % n) for i in range(n)]
    b = ProgramBuilder(ConeDims(psd=(n,)), n_rows=1 + len(edges))
    for i in range(n):
        b.add_psd_entry(0, 0, i, i, 1.0)
    b.set_b(0, 1.0)
    for r, (i, j) in enumerate(edges, start=1):
        b.add_psd_entry(r, 0, i, j, 1.0)
        b.set_b(r, 0.0)
    for i in range(n):
        for j in range(i, n):
            b.set_c_psd_entry(0, i, j, -1.0)
    return b.build(), -np.sqrt(5.0)


def _maxcut_triangle():
    # SDP relaxation of max-cut on K3: optimal cut value 9/4, reached at
    # X_ij = -1/2; the stored objective is -3/4
    b = ProgramBuilder(ConeDims(psd=(3,)), n_rows=3)
    for i in range(3):
        b.add_psd_entry(i, 0, i, i, 1.0)
        b.set_b(i, 1.0)
    for i in range(3):
        for j in range(i + 1, 3):
            b.set_c_psd_entry(0, i, j, 0.25)
    return b.build(), -0.75


def _mrt():
    # single-user transmit power minimization: min tr W s.t.
    # tr(h h^H W) >= Gamma sigma^2, W >= 0  ->  Gamma sigma^2 / ||h||^2
    rng = np.random.default_rng(1)
    n = 4
    h = rng.normal(size=n) + 1j * rng.normal(size=n)
    gam, sig2 = 10.0, 1e-3
    q = embed_hermitian(np.outer(h, h.conj())) / 2.0
    b = ProgramBuilder(ConeDims(psd=(2 * n,), nonneg=1), n_rows=1)
    b.add_psd_svec_row(0, 0, svec(q))
    b.add_nonneg_entry(0, 0, -1.0)
    b.set_b(0, gam * sig2)
    b.add_c_psd(0, np.eye(2 * n) / 2.0)
    return b.build(), gam * sig2 / float(np.linalg.norm(h) ** 2)


def _free_equality():
    b = ProgramBuilder(ConeDims(free=1), n_rows=1)
    b.add_free_entry(0, 0, 1.0)
    b.set_b(0, 5.0)
    b.set_c_free(0, 1.0)
    return b.build(), 5.0


def _mixed_cones():
    # min tr X + u + f  s.t. tr X = 2, u = 1, f = -3  -> 0
    b = ProgramBuilder(ConeDims(psd=(2,), nonneg=1, free=1), n_rows=3)
    b.add_psd_entry(0, 0, 0, 0, 1.0)
    b.add_psd_entry(0, 0, 1, 1, 1.0)
    b.set_b(0, 2.0)
    b.add_nonneg_entry(1, 0, 1.0)
    b.set_b(1, 1.0)
    b.add_free_entry(2, 0, 1.0)
    b.set_b(2, -3.0)
    b.add_c_psd(0, np.eye(2))
    b.set_c_nonneg(0, 1.0)
    b.set_c_free(0, 1.0)
    return b.build(), 0.0


ANALYTIC_CASES = {
    "lp_shift": _lp_shift,
    "lp_two_var": _lp_two_var,
    "lp_box": _lp_box,
    "sdp_eigmin": _sdp_eigmin,
    "sdp_eigmax_dual": _sdp_eigmax_dual,
    "sdp_geometric": _sdp_geometric,
    "theta_c5": _theta_c5,
    "maxcut_triangle": _maxcut_triangle,
    "mrt": _mrt,
    "free_equality": _free_equality,
    "mixed_cones": _mixed_cones,
}


@pytest.mark.parametrize("name", sorted(ANALYTIC_CASES))
def test_analytic_case(name):
    program, expect = ANALYTIC_CASES[name]()
    sol = solve(program, tol=TOL)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(expect, rel=1e-6, abs=1e-8)
    report = check_kkt(program, sol, tol=TOL)
    assert report.ok, report


def test_infeasible_lp():
    b = ProgramBuilder(ConeDims(nonneg=1), n_rows=1)
    b.add_nonneg_entry(0, 0, 1.0)
    b.set_b(0, -1.0)
    b.set_c_nonneg(0, 1.0)
    sol = solve(b.build())
    assert sol.status == "infeasible"
    assert check_kkt(b.build(), sol).ok


def test_unbounded_lp():
    b = ProgramBuilder(ConeDims(nonneg=2), n_rows=1)
    b.add_nonneg_entry(0, 0, 1.0)
    b.add_nonneg_entry(0, 1, -1.0)
    b.set_c_nonneg(0, -1.0)
    sol = solve(b.build())
    assert sol.status == "unbounded"
    assert check_kkt(b.build(), sol).ok


def test_infeasible_sdp_qos():
    # tr(hh^H W) >= 1 together with tr W <= 0.1 is infeasible for this h
    h = np.array([1.0, 0.5])
    q = np.outer(h, h)
    bb = ProgramBuilder(ConeDims(psd=(2,), nonneg=2), n_rows=2)
    bb.add_psd_svec_row(0, 0, svec(q))
    bb.add_nonneg_entry(0, 0, -1.0)
    bb.set_b(0, 1.0)
    bb.add_psd_entry(1, 0, 0, 0, 1.0)
    bb.add_psd_entry(1, 0, 1, 1, 1.0)
    bb.add_nonneg_entry(1, 1, 1.0)
    bb.set_b(1, 0.1)
    sol = solve(bb.build())
    assert sol.status == "infeasible"


def test_determinism_identical_bytes():
    program, _ = _theta_c5()
    s1 = solve(program)
    s2 = solve(program)
    assert s1.objective == s2.objective
    assert s1.y.tobytes() == s2.y.tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(s1.x_psd, s2.x_psd))


def test_kkt_detects_corruption():
    program, _ = _lp_two_var()
    sol = solve(program)
    assert check_kkt(program, sol).ok
    sol.x_nonneg = sol.x_nonneg + 0.05
    assert not check_kkt(program, sol).ok


def test_max_iters_status():
    program, _ = _theta_c5()
    sol = solve(program, max_iters=2)
    assert sol.status in ("max_iters", "optimal")
    if sol.status == "max_iters":
        assert np.isfinite(sol.objective)


def test_presolve_zero_and_duplicate_rows():
    b = ProgramBuilder(ConeDims(nonneg=2), n_rows=4)
    b.add_nonneg_entry(0, 0, 1.0)
    b.add_nonneg_entry(0, 1, 1.0)
    b.set_b(0, 4.0)
    b.add_nonneg_entry(1, 0, 1.0)     # duplicate of row 3
    b.set_b(1, 1.0)
    # row 2 all zero with zero rhs
    b.add_nonneg_entry(3, 0, 1.0)
    b.set_b(3, 1.0)
    b.set_c_nonneg(0, 1.0)
    b.set_c_nonneg(1, 2.0)
    program = b.build()
    reduced, keep, report = presolve(program)
    assert report.dropped_zero_rows == [2]
    assert report.dropped_duplicate_rows == [3]
    assert reduced.n_rows == 2
    sol = solve(program)
    assert sol.status == "optimal"
    assert len(sol.y) == 4
    # x = (1, 3): objective 7
    assert sol.objective == pytest.approx(7.0, rel=1e-6)


def test_presolve_detects_contradictions():
    b = ProgramBuilder(ConeDims(nonneg=1), n_rows=2)
    b.add_nonneg_entry(0, 0, 1.0)
    b.set_b(0, 1.0)
    b.add_nonneg_entry(1, 0, 1.0)
    b.set_b(1, 2.0)
    _, _, report = presolve(b.build())
    assert report.infeasible_row == 1
    assert solve(b.build()).status == "infeasible"

    b = ProgramBuilder(ConeDims(nonneg=1), n_rows=2)
    b.add_nonneg_entry(0, 0, 1.0)
    b.set_b(0, 1.0)
    b.set_b(1, 5.0)  # zero row, nonzero rhs
    assert solve(b.build()).status == "infeasible"


def test_weak_duality_at_optimum():
    for name in ("theta_c5", "mrt", "mixed_cones"):
        program, _ = ANALYTIC_CASES[name]()
        sol = solve(program)
        assert sol.dual_objective <= sol.objective + 1e-6 * (1 + abs(sol.objective))


def test_psd_blocks_nearly_psd():
    program, _ = _theta_c5()
    sol = solve(program)
    for x in sol.x_psd:
        assert np.linalg.eigvalsh(x)[0] >= -1e-7 * max(1.0, np.linalg.norm(x))


def test_reference_solver_agreement():
    cp = pytest.importorskip("cvxpy")
    from reference import solve_with_reference

    rng = np.random.default_rng(7)
    d, m = 6, 8
    mats = [rng.normal(size=(d, d)) for _ in range(m)]
    mats = [(a + a.T) / 2 for a in mats]
    x0 = rng.normal(size=(d, d))
    x0 = x0 @ x0.T + np.eye(d)
    rhs = np.array([float(np.tensordot(a, x0)) for a in mats])
    cm = rng.normal(size=(d, d))
    cm = (cm + cm.T) / 2 + 3 * np.eye(d)
    b = ProgramBuilder(ConeDims(psd=(d,)), n_rows=m)
    for r, a in enumerate(mats):
        b.add_psd_svec_row(r, 0, svec(a))
        b.set_b(r, rhs[r])
    b.add_c_psd(0, cm)
    program = b.build()
    sol = solve(program)
    status, ref = solve_with_reference(program)
    assert status == "optimal"
    assert sol.objective == pytest.approx(ref, rel=1e-4)
