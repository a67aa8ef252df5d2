"""
Small dense symmetric matrices: PSD tests, Loewner order, square roots,
adjugates and the two spectral conditions used by the heat-flow engines.

Matrices are plain ``numpy.ndarray`` objects. :func:`sym` validates and
symmetrizes an array-like and is the entry point every operation uses, so
callers may pass nested lists (the JSON matrix literal format) directly.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError, InvalidInputError

MAX_DIM = 6

#: default relative tolerance for PSD classification
PSD_TOL = 1e-12

_JACOBI_OFF_TOL = 1e-14
_JACOBI_MAX_SWEEPS = 50


def sym(a) -> np.ndarray:
    """Return ``a`` as a read-only, exactly symmetric float64 matrix.

    Raises InvalidInputError for non-square, non-finite or oversized input.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise InvalidInputError(f"dimension {a.shape[0]} exceeds the supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    s = 0.5 * (a + a.T)
    s.setflags(write=False)
    return s


def exponents(p) -> np.ndarray:
    """Validate an exponent vector: a nonempty list of finite reals > 0."""
    p = np.array(p, dtype=float).reshape(-1)
    if p.size == 0:
        raise InvalidInputError("exponent vector is empty")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise InvalidInputError(f"exponents must be finite and > 0, got {p.tolist()}")
    p.setflags(write=False)
    return p


def _freeze(a: np.ndarray) -> np.ndarray:
    s = 0.5 * (a + a.T)
    s.setflags(write=False)
    return s


def eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ascending eigenvalues ``w`` and orthonormal
    eigenvectors in the columns of ``V``.
    """
    a = np.array(sym(a))
    d = a.shape[0]
    v = np.eye(d)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(d), v
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off < _JACOBI_OFF_TOL * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-20 * scale:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigvalsh(a) -> np.ndarray:
    return eigh(a)[0]


def opnorm(a) -> float:
    """Operator (spectral) norm of a symmetric matrix."""
    w = eigvalsh(a)
    return float(np.max(np.abs(w)))


def is_psd(a, tol: float = PSD_TOL) -> bool:
    """True iff every eigenvalue of ``a`` is >= -tol * (1 + ||a||)."""
    if tol < 0:
        raise InvalidInputError("tol must be >= 0")
    w = eigvalsh(a)
    return bool(w[0] >= -tol * (1.0 + np.max(np.abs(w))))


def loewner_leq(a, b, tol: float = PSD_TOL) -> bool:
    """``a <= b`` in the Loewner order, i.e. ``b - a`` is PSD."""
    a, b = sym(a), sym(b)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return is_psd(b - a, tol)


def psd_sqrt(a, tol: float = PSD_TOL) -> np.ndarray:
    """The unique PSD square root of a PSD matrix."""
    w, v = eigh(a)
    if w[0] < -tol * (1.0 + np.max(np.abs(w))):
        raise DomainError(f"matrix is not PSD (smallest eigenvalue {w[0]:.3e})")
    r = np.sqrt(np.clip(w, 0.0, None))
    return _freeze((v * r) @ v.T)


def det(a) -> float:
    return float(np.linalg.det(sym(a)))


def adjugate(a) -> np.ndarray:
    """Cofactor transpose of ``a``; equals det(a) * inv(a) when invertible."""
    a = sym(a)
    d = a.shape[0]
    if d == 1:
        return _freeze(np.ones((1, 1)))
    cof = np.empty((d, d))
    idx = np.arange(d)
    for i in range(d):
        rows = idx[idx != i]
        for j in range(i, d):
            cols = idx[idx != j]
            cof[i, j] = (-1) ** (i + j) * np.linalg.det(a[np.ix_(rows, cols)])
            cof[j, i] = cof[i, j]
    # cofactor matrix of a symmetric matrix is symmetric, so adj == cof.T == cof
    return _freeze(cof)


def is_singular(a) -> bool:
    """Scale-aware singularity test |det a| < 1e-12 (1 + ||a||)^d."""
    a = sym(a)
    d = a.shape[0]
    return bool(abs(np.linalg.det(a)) < 1e-12 * (1.0 + opnorm(a)) ** d)


def inverse(a) -> np.ndarray:
    a = sym(a)
    if is_singular(a):
        raise DomainError("matrix is singular")
    return _freeze(np.linalg.inv(a))


def lw_matrix(d: int, j: int) -> np.ndarray:
    """The j-th Loomis-Whitney matrix (1-based ``j``): identity with a 0 in slot j."""
    if not 1 <= d <= MAX_DIM:
        raise InvalidInputError(f"dimension {d} out of range")
    if not 1 <= j <= d:
        raise InvalidInputError(f"index j={j} out of range 1..{d}")
    diag = np.ones(d)
    diag[j - 1] = 0.0
    return _freeze(np.diag(diag))


def lw_matrices(d: int) -> list[np.ndarray]:
    return [lw_matrix(d, j) for j in range(1, d + 1)]


def _weighted_sum(matrices, p) -> np.ndarray:
    mats = [sym(m) for m in matrices]
    p = exponents(p)
    if len(mats) != p.size:
        raise DimensionError(f"{len(mats)} matrices but {p.size} exponents")
    if len({m.shape for m in mats}) != 1:
        raise DimensionError("matrices differ in dimension")
    return _freeze(sum(pj * m for pj, m in zip(p, mats)))


def check_condition_ajab(matrices, p, tol: float = PSD_TOL) -> bool:
    """Heat-flow monotonicity condition.

    True iff ``A_* = sum p_j A_j`` is non-singular and ``A_j <= A_*`` for
    every j.
    """
    a_star = _weighted_sum(matrices, p)
    if is_singular(a_star):
        return False
    return all(loewner_leq(m, a_star, tol) for m in matrices)


def gap_margin(base, p) -> float:
    """Smallest eigenvalue over j of ``I - M_j^{1/2} M_*^{-1} M_j^{1/2}``.

    Positive exactly when the strict gap condition ``M_* > M_j`` holds for
    every j.
    """
    m_star = _weighted_sum(base, p)
    inv = inverse(m_star)
    d = m_star.shape[0]
    margins = []
    for m in base:
        r = psd_sqrt(m)
        margins.append(eigvalsh(np.eye(d) - r @ inv @ r)[0])
    return float(min(margins))
