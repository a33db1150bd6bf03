"""Numeric primitives used by the bound formulas.

Every information quantity is in bits (base-2 logarithms).
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

PSD_TOL = 1e-9
PINV_RCOND = 1e-12


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array or raise InvalidInputError."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else A.reshape(0, 0)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _logdet_spd(A: np.ndarray) -> float:
    """log2 det of a symmetric matrix known to be >= I in the Loewner order."""
    A = 0.5 * (A + A.T)
    try:
        c = np.linalg.cholesky(A)
        return float(2.0 * np.sum(np.log2(np.diag(c))))
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(A)
        return float(np.sum(np.log2(np.clip(w, 1.0, None))))


def logdet_gram(M, scale: float) -> float:
    """log2 |I + scale * M M^T|, using whichever Gram orientation is smaller."""
    if not math.isfinite(scale) or scale < 0:
        raise InvalidInputError(f"scale must be finite and >= 0, got {scale}")
    A = as_matrix(M)
    if A.size == 0 or scale == 0.0:
        return 0.0
    r, c = A.shape
    gram = A @ A.T if r <= c else A.T @ A
    val = _logdet_spd(np.eye(gram.shape[0]) + scale * gram)
    return max(val, 0.0)


def logdet_eye_plus(A) -> float:
    """log2 |I + A| for a PSD matrix ``A`` (small negative eigenvalues clamped)."""
    A = as_matrix(A)
    if A.size == 0:
        return 0.0
    return max(_logdet_spd(np.eye(A.shape[0]) + A), 0.0)


def logdet_eye_plus_batch(A: np.ndarray) -> np.ndarray:
    """log2 |I + A_i| for a stack of PSD matrices of shape (..., n, n)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if n == 0:
        return np.zeros(A.shape[:-2])
    B = np.eye(n) + 0.5 * (A + np.swapaxes(A, -1, -2))
    try:
        c = np.linalg.cholesky(B)
        d = np.diagonal(c, axis1=-2, axis2=-1)
        out = 2.0 * np.sum(np.log2(d), axis=-1)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(B)
        out = np.sum(np.log2(np.clip(w, 1.0, None)), axis=-1)
    return np.maximum(out, 0.0)


def psd_sqrt_factor(G) -> np.ndarray:
    """Return F with F F^T = G for a PSD matrix, clamping tiny negative eigenvalues."""
    G = as_matrix(G)
    if G.shape[0] != G.shape[1]:
        raise InvalidInputError("PSD factor needs a square matrix")
    if G.size == 0:
        return G.copy()
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    top = max(float(np.max(np.abs(w))), 1.0)
    if np.min(w) < -PSD_TOL * top:
        raise InvalidInputError(f"matrix is not PSD (min eigenvalue {np.min(w):.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def is_psd(G, rtol: float = PSD_TOL) -> bool:
    G = as_matrix(G)
    if G.shape[0] != G.shape[1]:
        return False
    if G.size == 0:
        return True
    scale = max(float(np.max(np.abs(G))), 1e-300)
    if np.max(np.abs(G - G.T)) > 1e-10 * scale:
        return False
    w = np.linalg.eigvalsh(0.5 * (G + G.T))
    return bool(np.min(w) >= -rtol * max(float(np.max(np.abs(w))), 1.0))


def schur_conditional(Gamma, S: Iterable[int]) -> np.ndarray:
    """Conditional covariance Gamma_{S|S^c} = G_SS - G_SSc G_ScSc^+ G_ScS.

    A pseudoinverse (singular values below 1e-12 of the largest dropped) is
    used when the conditioning block is singular.
    """
    G = as_matrix(Gamma, "Gamma")
    n = G.shape[0]
    if G.shape[1] != n:
        raise InvalidInputError("Gamma must be square")
    idx = sorted(set(int(i) for i in S))
    if not idx:
        raise InvalidInputError("S must be nonempty")
    if idx[0] < 0 or idx[-1] >= n:
        raise InvalidInputError("S has indices outside Gamma")
    comp = [i for i in range(n) if i not in set(idx)]
    gss = G[np.ix_(idx, idx)]
    if not comp:
        return gss.copy()
    gsc = G[np.ix_(idx, comp)]
    gcc = G[np.ix_(comp, comp)]
    out = gss - gsc @ np.linalg.pinv(gcc, rcond=PINV_RCOND, hermitian=True) @ gsc.T
    return 0.5 * (out + out.T)


def water_fill(channel_gains: Sequence[float], budget: float) -> np.ndarray:
    """Powers maximizing sum log2(1 + g_i p_i) subject to sum p_i = budget."""
    g = np.asarray(channel_gains, dtype=float).ravel()
    if g.size == 0 or not np.all(np.isfinite(g)) or np.any(g < 0):
        raise InvalidInputError("gains must be finite and nonnegative")
    if not (math.isfinite(budget) and budget > 0):
        raise InvalidInputError("budget must be positive")
    if not np.any(g > 0):
        raise InvalidInputError("at least one gain must be positive")
    order = np.argsort(-g, kind="stable")
    with np.errstate(over="ignore"):
        inv = 1.0 / g[order[g[order] > 0]]
    level = 0.0
    # Largest active set whose water level sits above every active floor.
    for k in range(len(inv), 0, -1):
        level = (budget + inv[:k].sum()) / k
        if level > inv[k - 1]:
            break
    pos = g > 0
    p = np.zeros_like(g)
    with np.errstate(over="ignore"):
        p[pos] = np.clip(level - 1.0 / g[pos], 0.0, None)
    # Remove rounding drift so the budget is met exactly on the active set.
    active = p > 0
    p[active] += (budget - p.sum()) / active.sum()
    return p


def binary_entropy(p: float) -> float:
    """H(p) in bits with 0 log 0 = 0."""
    if not (0.0 <= p <= 1.0):
        raise InvalidInputError(f"p must be in [0, 1], got {p}")
    h = 0.0
    for q in (p, 1.0 - p):
        if q > 0:
            h -= q * math.log2(q)
    return h


def mp_edges(rho: float) -> tuple[float, float]:
    """Support edges ((sqrt(rho)-1)^2, (sqrt(rho)+1)^2) of the Marchenko-Pastur law."""
    if not rho >= 1:
        raise InvalidInputError(f"rho must be >= 1, got {rho}")
    s = math.sqrt(rho)
    return (s - 1.0) ** 2, (s + 1.0) ** 2


def _subset_matrix_sums(blocks: np.ndarray) -> np.ndarray:
    """S[mask] = sum of blocks[i] over the bits i of mask, shape (2**m, n, n)."""
    m, n = blocks.shape[0], blocks.shape[-1]
    out = np.zeros((1 << m, n, n))
    for i in range(m):
        out[1 << i : 1 << (i + 1)] = out[: 1 << i] + blocks[i]
    return out


def subset_logdet_table(blocks, scale: float) -> np.ndarray:
    """t[mask] = log2 |I + scale * sum_{i in mask} blocks[i]| for PSD blocks of shape (L, n, n).

    The 2**L sums are formed in two halves (low and high bits) to bound memory.
    """
    B = np.asarray(blocks, dtype=float)
    L = B.shape[0]
    low = min(L, 10)
    lo = scale * _subset_matrix_sums(B[:low])
    hi = scale * _subset_matrix_sums(B[low:])
    out = np.empty(1 << L)
    for h in range(hi.shape[0]):
        out[h << low : (h + 1) << low] = logdet_eye_plus_batch(lo + hi[h])
    return out


def masked_subset_logdet_table(blocks, group_size: int, scale: float) -> np.ndarray:
    """t[U, T] = log2 |I + scale * D_U (sum_{i in T} blocks[i]) D_U|.

    ``blocks`` has shape (L, n, n) with n = group_size * G; D_U keeps the
    coordinates of the groups in U. Zeroed rows and columns contribute a
    factor 1 to the determinant, so this equals the log-det of the U-block.
    """
    B = np.asarray(blocks, dtype=float)
    n = B.shape[-1]
    G = n // group_size
    sums = scale * _subset_matrix_sums(B)
    U = np.arange(1 << G)
    keep = np.repeat((U[:, None] >> np.arange(G)) & 1, group_size, axis=1).astype(float)
    masks = keep[:, :, None] * keep[:, None, :]
    out = np.empty((1 << G, sums.shape[0]))
    # batch several U at once while keeping the stack near 2^22 entries
    step = max(1, (1 << 22) // max(1, sums.size))
    for a in range(0, 1 << G, step):
        out[a : a + step] = logdet_eye_plus_batch(sums[None] * masks[a : a + step, None])
    return out
