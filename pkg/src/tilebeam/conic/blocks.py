"""Symmetric-vectorization and Hermitian embedding utilities.

All PSD blocks handled by the solver are real symmetric.  Complex
Hermitian matrices enter through the standard real embedding

    T(H) = [[Re H, -Im H], [Im H, Re H]],

which is PSD exactly when H is, doubles traces and inner products, and
commutes with linear combinations.  A Hermitian N x N matrix is
parameterized by N^2 real scalars: the diagonal, then the real parts of
the strict upper triangle (row-major), then the imaginary parts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ConeDims:
    """Block structure: PSD block sizes, a nonnegative and a free block."""

    psd: tuple = ()
    nonneg: int = 0
    free: int = 0

    def __post_init__(self):
        if any(d < 1 for d in self.psd):
            raise ValueError("PSD block dimensions must be >= 1")
        if self.nonneg < 0 or self.free < 0:
            raise ValueError("vector block sizes must be >= 0")

    @property
    def total_svec(self) -> int:
        return sum(sdim(d) for d in self.psd)


def sdim(d: int) -> int:
    return d * (d + 1) // 2


@lru_cache(maxsize=None)
def _triu(d: int):
    return np.triu_indices(d)


def svec(m: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization with tr(AB) = svec(A).svec(B)."""
    d = m.shape[-1]
    r, c = _triu(d)
    v = np.asarray(m)[..., r, c].copy()
    off = r != c
    v[..., off] *= SQRT2
    return v


def unsvec(v: np.ndarray, d: int) -> np.ndarray:
    r, c = _triu(d)
    w = np.asarray(v, dtype=float).copy()
    off = r != c
    w[..., off] /= SQRT2
    m = np.zeros(v.shape[:-1] + (d, d))
    m[..., r, c] = w
    m[..., c, r] = w
    return m


def embed_hermitian(h: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a complex Hermitian matrix."""
    a, b = h.real, h.imag
    return np.block([[a, -b], [b, a]])


def extract_hermitian(p: np.ndarray) -> np.ndarray:
    """Inverse of embed_hermitian, averaging over the embedding symmetry."""
    n = p.shape[0] // 2
    a = 0.5 * (p[:n, :n] + p[n:, n:])
    b = 0.5 * (p[n:, :n] - p[:n, n:])
    return a + 1j * b


def n_hermitian_params(n: int) -> int:
    return n * n


@lru_cache(maxsize=None)
def _strict_triu(n: int):
    return np.triu_indices(n, k=1)


def hermitian_params(h: np.ndarray) -> np.ndarray:
    """Real parameter vector (diag, Re upper, Im upper) of a Hermitian matrix."""
    n = h.shape[0]
    r, c = _strict_triu(n)
    return np.concatenate([h.real.diagonal(), h.real[r, c], h.imag[r, c]])


def hermitian_from_params(theta: np.ndarray, n: int) -> np.ndarray:
    r, c = _strict_triu(n)
    m = n * (n - 1) // 2
    h = np.zeros((n, n), dtype=complex)
    h[np.arange(n), np.arange(n)] = theta[:n]
    off = theta[n:n + m] + 1j * theta[n + m:]
    h[r, c] = off
    h[c, r] = off.conj()
    return h


def hermitian_param_coeffs(q: np.ndarray) -> np.ndarray:
    """Gradient of Re tr(q @ M) with respect to the parameters of M.

    Valid for any complex square q; for Hermitian q this equals the
    gradient of tr(q M), which is real.
    """
    n = q.shape[0]
    r, c = _strict_triu(n)
    d_diag = q.real.diagonal()
    d_re = (q[r, c] + q[c, r]).real
    d_im = q[r, c].imag - q[c, r].imag
    return np.concatenate([d_diag, d_re, d_im])


@lru_cache(maxsize=None)
def embedded_param_basis_svec(n: int) -> np.ndarray:
    """svec of the embedded basis matrix of each Hermitian parameter.

    Returns an (n^2, sdim(2n)) array B with, for any parameter vector
    theta, svec(T(M(theta))) = theta @ B.
    """
    dim = 2 * n
    out = np.zeros((n * n, sdim(dim)))
    for p in range(n * n):
        theta = np.zeros(n * n)
        theta[p] = 1.0
        out[p] = svec(embed_hermitian(hermitian_from_params(theta, n)))
    return out
