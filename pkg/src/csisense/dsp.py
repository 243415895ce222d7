"""Numerical kernels shared by the feature extractors.

Unitary DFT/IDFT (1/sqrt(N) both ways), Euclidean normalization, and the
dominant left singular vector of a tall complex matrix via a cyclic Jacobi
eigen-decomposition of its small Gram matrix. The Jacobi sweep runs on a
stack of matrices at once so that per-sample feature extraction stays cheap.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DegenerateInputError


def dft(x, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """Unitary discrete Fourier transform along `axis`.

    Works for arbitrary lengths (the subcarrier count 3276 = 2^2*3^2*7*13 in
    particular). inverse(dft(x)) == x to machine precision and the transform
    preserves the Euclidean norm.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[axis] < 1:
        raise ValueError("dft input must have length >= 1")
    if inverse:
        return np.fft.ifft(x, axis=axis, norm="ortho")
    return np.fft.fft(x, axis=axis, norm="ortho")


def unit_normalize(v) -> np.ndarray:
    """Scale a real or complex vector to unit Euclidean norm."""
    v = np.asarray(v)
    if np.iscomplexobj(v):
        v = v.astype(np.complex128)
    else:
        v = v.astype(np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateInputError("cannot normalize a zero (or non-finite) vector")
    return v / norm


def _offdiag_norms(a: np.ndarray) -> np.ndarray:
    """Frobenius norm of the off-diagonal part, per matrix in the stack.

    Summed over the off-diagonal entries directly; subtracting the diagonal
    energy from the total cancels catastrophically once the off-diagonal part
    is small, which is exactly when this norm steers convergence.
    """
    n = a.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.abs(a[..., mask]) ** 2, axis=-1))


def jacobi_hermitian(a, max_sweeps: int = 60):
    """Eigen-decomposition of a stack of Hermitian matrices by cyclic Jacobi.

    a has shape (..., n, n); returns (eigenvalues (..., n), eigenvectors with
    columns as vectors (..., n, n)), unsorted. Rotations for one (p, q) pair
    are applied to every matrix in the stack simultaneously; matrices whose
    pivot is already negligible receive the identity rotation, so each matrix
    converges to machine precision independently of the others.
    """
    a = np.array(a, dtype=np.complex128)
    single = a.ndim == 2
    if single:
        a = a[None]
    n = a.shape[-1]
    batch = a.shape[0]
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), a.shape).copy()
    scale = np.linalg.norm(a, axis=(-2, -1))
    tol = 1e-15 * np.maximum(scale, np.finfo(np.float64).tiny)

    for _ in range(max_sweeps):
        if np.all(_offdiag_norms(a) <= tol):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                r = np.abs(apq)
                active = r > tol / n
                if not np.any(active):
                    continue
                # Unitary 2x2 rotation zeroing a[p,q]: with a[p,q] = r e^{i alpha},
                # choose tan(2 theta) = 2 r / (a[p,p] - a[q,q]) as in the real case.
                safe_r = np.where(active, r, 1.0)
                alpha = np.where(active, apq / safe_r, 1.0)
                zeta = (a[:, p, p].real - a[:, q, q].real) / (2.0 * safe_r)
                t = np.where(
                    zeta != 0.0,
                    np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta)),
                    1.0,
                )
                t = np.where(active, t, 0.0)
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                w = s * alpha  # complex sine carrying the phase of a[p,q]

                # A <- J^H A J, columns then rows, vectorized over the stack.
                col_p = a[:, :, p].copy()
                col_q = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * col_p + np.conj(w)[:, None] * col_q
                a[:, :, q] = -w[:, None] * col_p + c[:, None] * col_q
                row_p = a[:, p, :].copy()
                row_q = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * row_p + w[:, None] * row_q
                a[:, q, :] = -np.conj(w)[:, None] * row_p + c[:, None] * row_q
                a[:, p, q] = np.where(active, 0.0, a[:, p, q])
                a[:, q, p] = np.where(active, 0.0, a[:, q, p])
                a[:, p, p] = a[:, p, p].real
                a[:, q, q] = a[:, q, q].real

                vec_p = v[:, :, p].copy()
                vec_q = v[:, :, q].copy()
                v[:, :, p] = c[:, None] * vec_p + np.conj(w)[:, None] * vec_q
                v[:, :, q] = -w[:, None] * vec_p + c[:, None] * vec_q

    evals = np.real(np.diagonal(a, axis1=-2, axis2=-1)).copy()
    if single:
        return evals[0], v[0]
    return evals, v


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Rotate complex vectors so each component sum is real non-negative.

    Falls back to making the largest-magnitude entry real positive when the
    component sum is numerically zero, so the result is deterministic.
    Operates on the last axis.
    """
    u = np.asarray(u, dtype=np.complex128)
    s = u.sum(axis=-1)
    tiny = np.abs(s) < 1e-9
    if np.any(tiny):
        k = np.argmax(np.abs(u), axis=-1)
        fallback = np.take_along_axis(u, k[..., None], axis=-1)[..., 0]
        s = np.where(tiny, fallback, s)
    return u * (np.conj(s) / np.abs(s))[..., None]


def dominant_left_singular_vectors(m) -> tuple:
    """Batched top left singular vector: (..., rows, cols) -> (..., rows).

    Forms the cols x cols Gram matrices M^H M, eigen-decomposes them with
    cyclic Jacobi, and maps the top eigenvectors back through M. Returned
    vectors are unit-norm with canonical phase; singular values come along
    as the second element. Raises on a numerically zero matrix.
    """
    m = np.asarray(m, dtype=np.complex128)
    rows, cols = m.shape[-2:]
    if rows < cols:
        raise ValueError(f"matrix must be tall (rows >= cols), got {rows}x{cols}")
    if cols > 64:
        raise ValueError("Gram-based path is intended for small column counts (<= 64)")

    gram = np.swapaxes(m, -2, -1).conj() @ m
    evals, evecs = jacobi_hermitian(gram)
    evals = np.atleast_2d(evals)
    single = m.ndim == 2
    evecs3 = evecs[None] if single else evecs

    order = np.argsort(evals, axis=-1)[:, ::-1]
    lam1 = np.take_along_axis(evals, order[:, :1], axis=-1)[:, 0]
    if np.any(lam1 <= 0.0):
        raise DegenerateInputError("matrix is numerically zero; no dominant singular vector")
    if cols > 1:
        lam2 = np.maximum(np.take_along_axis(evals, order[:, 1:2], axis=-1)[:, 0], 0.0)
        if np.any(np.sqrt(lam1) - np.sqrt(lam2) <= 1e-12 * np.sqrt(lam1)):
            warnings.warn(
                "top two singular values are equal to within 1e-12 relative; "
                "dominant singular vector is ambiguous",
                RuntimeWarning,
                stacklevel=2,
            )

    v1 = np.take_along_axis(evecs3, order[:, None, :1], axis=-1)[..., 0]
    u = np.einsum("...rc,...c->...r", m, v1[0] if single else v1)
    sigma = np.linalg.norm(u, axis=-1)
    u = canonical_phase(u / sigma[..., None])
    if single:
        return u, float(sigma)
    return u, sigma


def dominant_left_singular_vector(m) -> tuple:
    """Top left singular vector and singular value of one tall matrix."""
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    return dominant_left_singular_vectors(m)
