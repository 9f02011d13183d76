"""hermitian.py

Примитивы для комплексных эрмитовых матриц, которыми оперируют модель и решатель:
ковариации W_j и Λ, матрицы Грама G_j = h h^H и H_{0,i}.

- eig_hermitian: циклический метод Якоби для комплексных эрмитовых матриц
- gram, trace_product: Tr(A·B) = Re(Σ A_jk · conj(B_jk))
- rank_one_extract: w = sqrt(λ_max)·v_max и отношение λ_2/λ_max
- hermitian_basis / to_coords / from_coords: N² вещественных координат
  (диагональ, Re и Im наддиагональных элементов), в которых барьерный
  решатель ведёт PSD-блоки.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]
ComplexVector = NDArray[np.complex128]
RealVector = NDArray[np.float64]

HERMITIAN_TOL = 1e-12
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class HermitianError(ValueError):
    """Матрица не квадратная или не эрмитова."""


def as_hermitian(m: ArrayLike, tol: float = HERMITIAN_TOL) -> ComplexMatrix:
    """Приводит вход к complex128 и проверяет эрмитовость (относительно max|m|)."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise HermitianError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and float(np.max(np.abs(a - a.conj().T))) > tol * scale:
        raise HermitianError("matrix is not Hermitian")
    return a


def _off_norm(a: ComplexMatrix) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def eig_hermitian(m: ArrayLike) -> Tuple[RealVector, ComplexMatrix]:
    """Собственные значения (по возрастанию) и ортонормированные собственные векторы.

    Циклический комплексный Якоби: пара (p, q) сначала поворачивается фазой так,
    чтобы a_pq стал вещественным, затем обнуляется вещественным вращением.
    Векторы возвращаются столбцами: m @ v[:, k] = λ_k · v[:, k].
    """
    a = as_hermitian(m).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    total = float(np.linalg.norm(a))
    if n == 0:
        return np.zeros(0), v
    for _ in range(JACOBI_MAX_SWEEPS):
        if _off_norm(a) <= JACOBI_TOL * total:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300 or mag <= 1e-18 * total:
                    continue
                omega_bar = np.conj(apq) / mag
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * mag)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.array(
                    [[c, s], [-s * omega_bar, c * omega_bar]], dtype=np.complex128
                )
                idx = [p, q]
                a[:, idx] = a[:, idx] @ rot
                a[idx, :] = rot.conj().T @ a[idx, :]
                a[p, q] = 0.0
                a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ rot
    else:
        logger.warning("Jacobi: не сошёлся за %d проходов", JACOBI_MAX_SWEEPS)
    vals = np.real(np.diag(a))
    order = np.argsort(vals, kind="stable")
    return vals[order].astype(np.float64), v[:, order]


def gram(h: ArrayLike) -> ComplexMatrix:
    """h·h^H."""
    vec = np.asarray(h, dtype=np.complex128).reshape(-1)
    return np.outer(vec, vec.conj())


def trace_product(a: ArrayLike, b: ArrayLike) -> float:
    """Tr(A·B) для эрмитовых A, B: Re(Σ A_jk · conj(B_jk))."""
    aa = np.asarray(a, dtype=np.complex128)
    bb = np.asarray(b, dtype=np.complex128)
    if aa.shape != bb.shape:
        raise HermitianError(f"dimension mismatch: {aa.shape} vs {bb.shape}")
    return float(np.real(np.vdot(bb, aa)))


def rank_one_extract(w: ArrayLike, tol: float = 1e-5) -> Tuple[ComplexVector, float]:
    """Главный луч sqrt(λ_max)·v_max и отношение λ_2/λ_max.

    Глобальная фаза фиксируется: наибольший по модулю элемент луча вещественный
    и положительный. ratio <= tol считается сертификатом ранга 1.
    """
    vals, vecs = eig_hermitian(w)
    n = vals.shape[0]
    if n == 0 or vals[-1] <= 0.0:
        return np.zeros(n, dtype=np.complex128), 0.0
    lam_max = float(vals[-1])
    if vals[0] < -tol * lam_max:
        logger.debug("rank_one_extract: min eigenvalue %.3e below tolerance", vals[0])
    ratio = max(float(vals[-2]), 0.0) / lam_max if n > 1 else 0.0
    beam = np.sqrt(lam_max) * vecs[:, -1]
    k = int(np.argmax(np.abs(beam)))
    beam = beam * (np.conj(beam[k]) / abs(beam[k]))
    return beam.astype(np.complex128), ratio


# ---- координаты эрмитовых блоков ----


@lru_cache(maxsize=32)
def hermitian_basis(dim: int) -> NDArray[np.complex128]:
    """Базис E_k (dim² матриц): диагональ, Re-пары e_ij + e_ji, Im-пары i·e_ij − i·e_ji."""
    iu, ju = np.triu_indices(dim, 1)
    basis = np.zeros((dim * dim, dim, dim), dtype=np.complex128)
    for k in range(dim):
        basis[k, k, k] = 1.0
    off = len(iu)
    for r, (i, j) in enumerate(zip(iu, ju)):
        basis[dim + r, i, j] = 1.0
        basis[dim + r, j, i] = 1.0
        basis[dim + off + r, i, j] = 1j
        basis[dim + off + r, j, i] = -1j
    basis.setflags(write=False)
    return basis


def to_coords(x: ArrayLike) -> RealVector:
    """Координаты X = Σ x_k E_k."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[0]
    iu, ju = np.triu_indices(n, 1)
    upper = a[iu, ju]
    return np.concatenate([np.real(np.diag(a)), upper.real, upper.imag]).astype(
        np.float64
    )


def from_coords(coords: ArrayLike, dim: int) -> ComplexMatrix:
    c = np.asarray(coords, dtype=np.float64)
    iu, ju = np.triu_indices(dim, 1)
    off = len(iu)
    out = np.zeros((dim, dim), dtype=np.complex128)
    out[np.arange(dim), np.arange(dim)] = c[:dim]
    upper = c[dim : dim + off] + 1j * c[dim + off : dim + 2 * off]
    out[iu, ju] = upper
    out[ju, iu] = upper.conj()
    return out


def trace_coefficients(a: ArrayLike) -> RealVector:
    """c_k = Tr(A·E_k), так что Tr(A·X) = c · coords(X) для эрмитовой A."""
    m = np.asarray(a, dtype=np.complex128)
    n = m.shape[0]
    iu, ju = np.triu_indices(n, 1)
    upper = m[iu, ju]
    return np.concatenate(
        [np.real(np.diag(m)), 2.0 * upper.real, 2.0 * upper.imag]
    ).astype(np.float64)


__all__ = [
    "HermitianError",
    "as_hermitian",
    "eig_hermitian",
    "gram",
    "trace_product",
    "rank_one_extract",
    "hermitian_basis",
    "to_coords",
    "from_coords",
    "trace_coefficients",
]
