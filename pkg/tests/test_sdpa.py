"""SDPA text interchange: round trips and external readability."""

import numpy as np
import pytest

from tilebeam.conic import (
    ConeDims,
    ProgramBuilder,
    export_standard_text,
    import_standard_text,
    solve,
)
from tilebeam.conic.blocks import svec


def _toy_mixed():
    b = ProgramBuilder(ConeDims(psd=(2, 3), nonneg=2, free=1), n_rows=3)
    b.add_psd_entry(0, 0, 0, 1, 1.5)
    b.add_psd_entry(0, 1, 2, 2, -2.0)
    b.add_nonneg_entry(0, 1, 0.25)
    b.set_b(0, 1.0)
    b.add_psd_entry(1, 0, 0, 0, 1.0)
    b.add_free_entry(1, 0, -3.0)
    b.set_b(1, -0.5)
    b.add_psd_entry(2, 1, 0, 2, 0.125)
    b.add_nonneg_entry(2, 0, 1.0)
    b.set_b(2, 2.0)
    b.set_c_psd_entry(0, 0, 0, 1.0)
    b.set_c_psd_entry(1, 1, 2, -0.5)
    b.set_c_nonneg(0, 0.75)
    b.set_c_free(0, 2.0)
    return b.build()


def test_round_trip_structural_equality():
    p = _toy_mixed()
    text = export_standard_text(p)
    q = import_standard_text(text)
    assert p.structurally_equal(q)
    # and the round trip is a fixed point of export
    assert export_standard_text(q) == text


def test_empty_program_round_trips():
    p = ProgramBuilder(ConeDims(), n_rows=0).build()
    q = import_standard_text(export_standard_text(p))
    assert p.structurally_equal(q)


def test_round_trip_preserves_solution():
    b = ProgramBuilder(ConeDims(psd=(2,), nonneg=1), n_rows=2)
    b.add_psd_entry(0, 0, 0, 0, 1.0)
    b.add_psd_entry(0, 0, 1, 1, 1.0)
    b.set_b(0, 1.0)
    b.add_psd_entry(1, 0, 0, 1, 1.0)
    b.add_nonneg_entry(1, 0, 1.0)
    b.set_b(1, 0.25)
    b.set_c_psd_entry(0, 0, 0, 2.0)
    b.set_c_psd_entry(0, 1, 1, 1.0)
    p = b.build()
    q = import_standard_text(export_standard_text(p))
    s1, s2 = solve(p), solve(q)
    assert s1.status == s2.status == "optimal"
    assert s1.objective == pytest.approx(s2.objective, rel=1e-10)


def test_exported_file_solvable_by_reference():
    cp = pytest.importorskip("cvxpy")
    from reference import solve_with_reference

    rng = np.random.default_rng(3)
    d = 4
    a1 = rng.normal(size=(d, d))
    a1 = (a1 + a1.T) / 2
    b = ProgramBuilder(ConeDims(psd=(d,), nonneg=1), n_rows=2)
    b.add_psd_svec_row(0, 0, svec(np.eye(d)))
    b.set_b(0, 1.0)
    b.add_psd_svec_row(1, 0, svec(a1))
    b.add_nonneg_entry(1, 0, 1.0)
    b.set_b(1, 0.3)
    cm = rng.normal(size=(d, d))
    b.add_c_psd(0, (cm + cm.T) / 2 + 2 * np.eye(d))
    b.set_c_nonneg(0, 0.1)
    p = b.build()

    # external solver consumes the re-imported text
    q = import_standard_text(export_standard_text(p))
    sol = solve(p)
    status, ref = solve_with_reference(q)
    assert status == "optimal"
    assert sol.objective == pytest.approx(ref, rel=1e-4)


def test_import_plain_sdpa_without_free_marker():
    text = """\"comment line
2
2
2 -1
1.0 2.0
0 1 1 1 -1.0
1 1 1 1 1.0
1 2 1 1 1.0
2 1 1 2 0.5
"""
    p = import_standard_text(text)
    assert p.dims.psd == (2,)
    assert p.dims.nonneg == 1
    assert p.dims.free == 0
    assert p.n_rows == 2
    assert p.b[1] == 2.0
