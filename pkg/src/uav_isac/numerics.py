"""Complex Hermitian linear algebra helpers.

Hermitian matrices are carried as plain ``numpy`` complex arrays.  The solver
works on a real parameter vector per Hermitian variable; the helpers at the
bottom of this module convert between the two views.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix

PSD_RTOL = 1e-8


class DimensionError(ValueError):
    pass


def hermitian(A: np.ndarray) -> np.ndarray:
    """Return the Hermitian part of ``A`` (exactly conjugate symmetric)."""
    A = np.asarray(A, dtype=complex)
    return 0.5 * (A + A.conj().T)


def quadratic_form(A: np.ndarray, v: np.ndarray) -> float:
    """Evaluate ``v^H A v`` for Hermitian ``A`` and return it as a real number."""
    A = np.asarray(A)
    v = np.asarray(v)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != v.shape[0]:
        raise DimensionError(f"matrix {A.shape} does not match vector {v.shape}")
    val = np.vdot(v, A @ v)
    if abs(val.imag) > 1e-9 * abs(val.real) + 1e-30:
        # only reachable when A is not Hermitian
        raise ValueError(f"quadratic form has imaginary part {val.imag:.3e}")
    return float(val.real)


def min_eigenvalue(A: np.ndarray) -> float:
    A = np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return float(np.linalg.eigvalsh(A)[0])


def is_psd(A: np.ndarray) -> bool:
    """PSD test with the tolerance used throughout the package.

    A matrix passes when its smallest eigenvalue is at least
    ``-1e-8 * max(1, trace)``; interior-point outputs carry tiny negative tails.
    """
    tr = float(np.real(np.trace(A)))
    return min_eigenvalue(A) >= -PSD_RTOL * max(1.0, tr)


def real_embedding(A: np.ndarray) -> np.ndarray:
    """Map an M x M Hermitian matrix to the 2M x 2M real symmetric matrix
    ``[[Re A, -Im A], [Im A, Re A]]``.

    The embedding is PSD iff ``A`` is, and carries each eigenvalue of ``A``
    twice.
    """
    A = np.asarray(A, dtype=complex)
    re, im = A.real, A.imag
    return np.block([[re, -im], [im, re]])


def psd_log_det(A: np.ndarray) -> float:
    """``log det A`` for a Hermitian positive definite matrix, via the real
    embedding (whose determinant is ``det(A)**2``).  Returns ``-inf`` when the
    matrix is not positive definite."""
    try:
        L = np.linalg.cholesky(real_embedding(A))
    except np.linalg.LinAlgError:
        return -np.inf
    return float(np.sum(np.log(np.diag(L))))


# --- real parameterisation of Hermitian matrices -------------------------
#
# An M x M Hermitian matrix X is described by M*M reals: the diagonal first,
# then (Re X[a, b], Im X[a, b]) for every a < b in row-major order.


_INDEX_CACHE: dict[int, tuple] = {}


def _param_index(M: int):
    out = _INDEX_CACHE.get(M)
    if out is None:
        out = _INDEX_CACHE[M] = np.triu_indices(M, 1)
    return out


def hermitian_from_params(z: np.ndarray, M: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    X = np.zeros((M, M), dtype=complex)
    idx = np.arange(M)
    X[idx, idx] = z[:M]
    iu, ju = _param_index(M)
    off = z[M:].reshape(-1, 2)
    vals = off[:, 0] + 1j * off[:, 1]
    X[iu, ju] = vals
    X[ju, iu] = vals.conj()
    return X


_GATHER_CACHE: dict[int, tuple] = {}


def _gather_maps(M: int):
    """Index maps between parameters and the interleaved (re, im) float view
    of a row-major complex M x M matrix."""
    out = _GATHER_CACHE.get(M)
    if out is not None:
        return out
    m2 = M * M
    # params -> matrix: entry 2*(i*M+j)+c takes sign * z[src] (src == m2 means 0)
    src = np.full(2 * m2, m2)
    sign = np.zeros(2 * m2)
    for a in range(M):
        src[2 * (a * M + a)] = a
        sign[2 * (a * M + a)] = 1.0
    iu, ju = _param_index(M)
    for t, (a, b) in enumerate(zip(iu, ju)):
        p = M + 2 * t
        for (i, j, s_im) in ((a, b, 1.0), (b, a, -1.0)):
            src[2 * (i * M + j)] = p
            sign[2 * (i * M + j)] = 1.0
            src[2 * (i * M + j) + 1] = p + 1
            sign[2 * (i * M + j) + 1] = s_im
    # matrix -> trace coefficients: g[p] = scale * view[gidx]
    gidx = np.empty(m2, dtype=np.intp)
    gscale = np.empty(m2)
    gidx[:M] = 2 * (np.arange(M) * (M + 1))
    gscale[:M] = 1.0
    flat = iu * M + ju
    gidx[M::2] = 2 * flat
    gidx[M + 1::2] = 2 * flat + 1
    gscale[M:] = 2.0
    out = _GATHER_CACHE[M] = (src, sign, gidx, gscale)
    return out


def batched_hermitian_from_params(Z: np.ndarray, M: int) -> np.ndarray:
    """Vectorised :func:`hermitian_from_params` over leading axes of ``Z``."""
    Z = np.asarray(Z, dtype=float)
    src, sign, _, _ = _gather_maps(M)
    Zext = np.concatenate([Z, np.zeros(Z.shape[:-1] + (1,))], axis=-1)
    F = np.ascontiguousarray(Zext[..., src] * sign)
    return F.view(complex).reshape(Z.shape[:-1] + (M, M))


def batched_params_from_hermitian(X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=complex)
    M = X.shape[-1]
    _, _, gidx, gscale = _gather_maps(M)
    V = X.reshape(X.shape[:-2] + (M * M,)).view(float)
    return V[..., gidx]


def params_from_hermitian(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    M = X.shape[0]
    iu, ju = _param_index(M)
    off = X[iu, ju]
    return np.concatenate([np.real(np.diag(X)), np.column_stack([off.real, off.imag]).ravel()])


def trace_coefficients(C: np.ndarray) -> np.ndarray:
    """Return ``g`` such that ``tr(C X) == g @ params_from_hermitian(X)`` for
    every Hermitian ``X`` (``C`` Hermitian)."""
    C = np.asarray(C)
    M = C.shape[0]
    iu, ju = _param_index(M)
    off = C[iu, ju]
    return np.concatenate(
        [np.real(np.diag(C)), 2.0 * np.column_stack([off.real, off.imag]).ravel()]
    )


def batched_trace_coefficients(C: np.ndarray) -> np.ndarray:
    """Vectorised :func:`trace_coefficients` over leading batch axes."""
    C = np.ascontiguousarray(C, dtype=complex)
    M = C.shape[-1]
    _, _, gidx, gscale = _gather_maps(M)
    V = C.reshape(C.shape[:-2] + (M * M,)).view(float)
    return V[..., gidx] * gscale


def _param_basis(M: int):
    """Entries of each basis matrix: (param, row, col, value) lists."""
    rows, cols, pidx, vals = [], [], [], []
    for a in range(M):
        pidx.append(a); rows.append(a); cols.append(a); vals.append(1.0)
    iu, ju = _param_index(M)
    for t, (a, b) in enumerate(zip(iu, ju)):
        p = M + 2 * t
        pidx += [p, p]; rows += [a, b]; cols += [b, a]; vals += [1.0, 1.0]
        pidx += [p + 1, p + 1]; rows += [a, b]; cols += [b, a]; vals += [1j, -1j]
    return np.array(pidx), np.array(rows), np.array(cols), np.array(vals, dtype=complex)


_BASIS_CACHE: dict[int, np.ndarray] = {}


def param_basis_matrix(M: int) -> np.ndarray:
    """Complex (M*M, M*M) matrix ``T`` with ``vec(X) = T @ params`` (row-major
    vec)."""
    T = _BASIS_CACHE.get(M)
    if T is None:
        pidx, rows, cols, vals = _param_basis(M)
        T = np.zeros((M * M, M * M), dtype=complex)
        T[rows * M + cols, pidx] = vals
        _BASIS_CACHE[M] = T
    return T


def congruence_operator(Y: np.ndarray) -> np.ndarray:
    """Matrix of ``E -> tr(Y E Y F)`` in Hermitian parameter coordinates.

    Entry ``[a, b]`` is ``tr(Y E_a Y E_b)`` for the parameter basis matrices
    ``E_a``; this is the Hessian of ``-log det X`` at ``X = Y^{-1}``.  ``Y``
    may carry a leading batch axis.
    """
    Y = np.asarray(Y)
    M = Y.shape[-1]
    T = param_basis_matrix(M)
    # row-major vec(Y E Y) = kron(Y, Y^T) vec(E)
    K = np.einsum("...ik,...lj->...ijkl", Y, Y).reshape(*Y.shape[:-2], M * M, M * M)
    # tr(Y E_a Y E_b) = vec(E_b^T)^T vec(Y E_a Y) = vec(E_b)^H vec(Y E_a Y)
    return np.real(T.conj().T @ K @ T)


_SPARSE_CACHE: dict[int, tuple] = {}


def _sparse_maps(M: int):
    """Sparse matrices taking stacked parameter columns to interleaved matrix
    entries and back (the inverse-Hessian scalings folded in)."""
    out = _SPARSE_CACHE.get(M)
    if out is None:
        m2 = M * M
        src, sign, gidx, gscale = _gather_maps(M)
        Nsc = inverse_congruence_scale(M)
        keep = src < m2
        rows = np.flatnonzero(keep)
        to_mat = csr_matrix((sign[keep] / Nsc[src[keep]], (rows, src[keep])), shape=(2 * m2, m2))
        to_par = csr_matrix((gscale / Nsc, (np.arange(m2), gidx)), shape=(m2, 2 * m2))
        out = _SPARSE_CACHE[M] = (to_mat, to_par)
    return out


def apply_inverse_logdet_hessian(X: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Apply the inverse Hessian of ``-log det`` at ``X`` to parameter vectors.

    ``X`` has shape (nb, M, M) and ``B`` shape (nb, M*M, r).  The inverse of
    ``E -> Y E Y`` (with ``Y = X^{-1}``) is ``E -> X E X``; in parameter
    coordinates the off-diagonal basis elements carry a factor 2 on both
    sides.
    """
    nb, M = X.shape[0], X.shape[-1]
    m2, r = M * M, B.shape[-1]
    to_mat, to_par = _sparse_maps(M)
    # (m2, nb * r) -> interleaved entries (2 m2, nb, r) -> (nb, r, M, M) complex
    E = to_mat @ np.ascontiguousarray(np.swapaxes(B, 0, 1)).reshape(m2, nb * r)
    E = np.ascontiguousarray(E.reshape(m2, 2, nb, r).transpose(2, 3, 0, 1))
    Bm = E.view(complex).reshape(nb * r, M, M)
    # flat batches run much faster than broadcasting X over the r axis
    Xr = np.repeat(X, r, axis=0)
    C = Xr @ Bm @ Xr
    V = C.view(float).reshape(nb * r, 2 * m2)
    g = to_par @ V.T  # (m2, nb * r)
    return np.ascontiguousarray(g.reshape(m2, nb, r).transpose(1, 0, 2))


def inverse_congruence_scale(M: int) -> np.ndarray:
    """Diagonal of ``T^H T``: 1 for diagonal parameters, 2 for the others."""
    return np.concatenate([np.ones(M), 2.0 * np.ones(M * M - M)])
