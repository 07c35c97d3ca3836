"""Rebuild a ConicProgram as a cvxpy problem, for external cross-checks."""

import cvxpy as cp
import numpy as np

from tilebeam.conic.blocks import sdim, unsvec


def solve_with_reference(program, solver=cp.CLARABEL):
    """Solve the stored primal with an external solver.

    Returns (status, objective) where objective is <C, X> at the
    external optimum.
    """
    dims = program.dims
    xs = [cp.Variable((d, d), symmetric=True) for d in dims.psd]
    x_nn = cp.Variable(dims.nonneg, nonneg=True) if dims.nonneg else None
    x_fr = cp.Variable(dims.free) if dims.free else None

    obj = 0
    for c, x in zip(program.c_psd, xs):
        obj = obj + cp.sum(cp.multiply(c, x))
    if x_nn is not None:
        obj = obj + program.c_nonneg @ x_nn
    if x_fr is not None:
        obj = obj + program.c_free @ x_fr

    cons = [x >> 0 for x in xs]
    for i in range(program.n_rows):
        expr = 0
        for blk, (a, d) in enumerate(zip(program.a_psd, dims.psd)):
            row = np.asarray(a[i].todense()).ravel()
            if np.any(row):
                mat = unsvec(row, d)
                expr = expr + cp.sum(cp.multiply(mat, xs[blk]))
        if x_nn is not None:
            row = np.asarray(program.a_nonneg[i].todense()).ravel()
            if np.any(row):
                expr = expr + row @ x_nn
        if x_fr is not None:
            row = np.asarray(program.a_free[i].todense()).ravel()
            if np.any(row):
                expr = expr + row @ x_fr
        cons.append(expr == program.b[i])

    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=solver)
    return prob.status, prob.value
