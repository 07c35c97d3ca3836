"""Sparse SDPA text interchange for ConicProgram values.

The written file is a standard sparse SDPA problem

    (P)  min  c'u   s.t.  sum_i u_i F_i - F_0 >= 0
    (D)  max  tr(F_0 Y)  s.t.  tr(F_i Y) = c_i,  Y >= 0,

with our stored program mapped onto the (D) side: F_i = A_i, c_i = b_i
and F_0 = -C, so an external solver's objective equals the negated
objective of the stored program.  The nonnegative block is written with
a negative block size, per the format.  Free variables have no SDPA
encoding; they are written split into a pair of nonnegative entries,
with a comment line "*FREE k" that lets our reader reassemble the
original block exactly (external readers simply see the equivalent
split program).
"""

from __future__ import annotations

import numpy as np

from .blocks import ConeDims, SQRT2, _triu
from .program import ConicProgram, ProgramBuilder


def _fmt(x: float) -> str:
    return repr(float(x))


def export_standard_text(program: ConicProgram) -> str:
    """Serialize in sparse SDPA format; entries are sorted canonically."""
    dims = program.dims
    n_free = dims.free
    lp_size = dims.nonneg + 2 * n_free
    lines = ["*tilebeam conic program"]
    if n_free:
        lines.append(f"*FREE {n_free}")
    m = program.n_rows
    lines.append(f"{m}")
    n_blocks = len(dims.psd) + (1 if lp_size else 0)
    lines.append(f"{n_blocks}")
    sizes = [str(d) for d in dims.psd] + ([f"-{lp_size}"] if lp_size else [])
    lines.append(" ".join(sizes))
    lines.append(" ".join(_fmt(v) for v in program.b))

    entries = []

    def add_matrix(matno, blkno, mat):
        d = mat.shape[0]
        for i in range(d):
            for j in range(i, d):
                if mat[i, j] != 0.0:
                    entries.append((matno, blkno, i + 1, j + 1, mat[i, j]))

    lp_blk = len(dims.psd) + 1

    def add_lp(matno, vec_nonneg, vec_free):
        for idx, v in enumerate(vec_nonneg):
            if v != 0.0:
                entries.append((matno, lp_blk, idx + 1, idx + 1, v))
        for idx, v in enumerate(vec_free):
            if v != 0.0:
                base = dims.nonneg + 2 * idx
                entries.append((matno, lp_blk, base + 1, base + 1, v))
                entries.append((matno, lp_blk, base + 2, base + 2, -v))

    # objective: F_0 = -C
    for blk, c in enumerate(program.c_psd):
        add_matrix(0, blk + 1, -c)
    if lp_size:
        add_lp(0, -program.c_nonneg, -program.c_free)

    # constraints: F_i = A_i
    for blk, (a, d) in enumerate(zip(program.a_psd, dims.psd)):
        coo = a.tocoo()
        r_idx, c_idx = _triu(d)
        for row, col, val in zip(coo.row, coo.col, coo.data):
            i, j = int(r_idx[col]), int(c_idx[col])
            v = val / (SQRT2 if i != j else 1.0)
            entries.append((row + 1, blk + 1, i + 1, j + 1, v))
    if lp_size:
        ann = program.a_nonneg.tocoo()
        for row, col, val in zip(ann.row, ann.col, ann.data):
            entries.append((row + 1, lp_blk, col + 1, col + 1, val))
        afr = program.a_free.tocoo()
        for row, col, val in zip(afr.row, afr.col, afr.data):
            base = dims.nonneg + 2 * col
            entries.append((row + 1, lp_blk, base + 1, base + 1, val))
            entries.append((row + 1, lp_blk, base + 2, base + 2, -val))

    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    for matno, blkno, i, j, v in entries:
        lines.append(f"{matno} {blkno} {i} {j} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def import_standard_text(text: str) -> ConicProgram:
    """Parse sparse SDPA text written by export_standard_text.

    Also reads plain SDPA files produced elsewhere (without the *FREE
    marker), in which case the program has no free block.
    """
    n_free = 0
    body = []
    for raw in text.splitlines():
        line = raw.strip()
        if line[:1] in ("*", '"'):
            if line.startswith("*FREE"):
                n_free = int(line.split()[1])
            continue
        body.append(line)

    m = int(body[0].split()[0])
    n_blocks = int(body[1].split()[0])
    sizes = [int(tok.strip("{}(),")) for tok in body[2].replace(",", " ").split()]
    if len(sizes) != n_blocks:
        raise ValueError("block size line does not match block count")
    rhs = np.array([float(t) for t in body[3].replace(",", " ").split()])
    if len(rhs) != m:
        raise ValueError("rhs length does not match constraint count")

    psd_dims = tuple(d for d in sizes if d > 0)
    lp_sizes = [-d for d in sizes if d < 0]
    if len(lp_sizes) > 1:
        raise ValueError("at most one diagonal block is supported")
    lp_size = lp_sizes[0] if lp_sizes else 0
    if n_free and lp_size < 2 * n_free:
        raise ValueError("free marker inconsistent with diagonal block size")
    n_nonneg = lp_size - 2 * n_free

    dims = ConeDims(psd=psd_dims, nonneg=n_nonneg, free=n_free)
    builder = ProgramBuilder(dims, n_rows=m)
    builder.b = rhs.copy()

    psd_index = {}
    k = 0
    for blk, d in enumerate(sizes):
        if d > 0:
            psd_index[blk + 1] = k
            k += 1
    lp_blk = None
    for blk, d in enumerate(sizes):
        if d < 0:
            lp_blk = blk + 1

    free_main = {}   # (matno, free idx) -> value from the +1 slot

    for line in body[4:]:
        toks = line.split()
        if not toks:
            continue
        matno, blkno, i, j = (int(toks[0]), int(toks[1]),
                              int(toks[2]), int(toks[3]))
        val = float(toks[4])
        if blkno == lp_blk:
            if i != j:
                raise ValueError("diagonal block entries must be diagonal")
            idx = i - 1
            if idx < n_nonneg:
                if matno == 0:
                    builder.set_c_nonneg(idx, -val)
                else:
                    builder.add_nonneg_entry(matno - 1, idx, val)
            else:
                fidx, half = divmod(idx - n_nonneg, 2)
                if half == 0:
                    free_main[(matno, fidx)] = val
                else:
                    expect = -free_main.get((matno, fidx), 0.0)
                    if val != expect:
                        raise ValueError("free split halves are inconsistent")
                    if matno == 0:
                        builder.set_c_free(fidx, val)
                    else:
                        builder.add_free_entry(matno - 1, fidx, -val)
        else:
            blk = psd_index[blkno]
            if matno == 0:
                builder.set_c_psd_entry(blk, i - 1, j - 1, -val)
            else:
                builder.add_psd_entry(matno - 1, blk, i - 1, j - 1, val)
    return builder.build()
