"""Network instances, per-node input covariances and sum-rate reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidInputError
from .numkernel import as_matrix, is_psd, psd_sqrt_factor

UPLINK = "uplink"
DOWNLINK = "downlink"


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """A C-RAN with K users, L relays and a real channel gain matrix.

    Uplink gain has shape (n_r*L, n_u*K): rows are relay antennas and columns
    user antennas. Downlink gain has shape (n_u*K, n_r*L). ``fronthaul`` holds
    the L link capacities in bits per real dimension, or None when not needed.
    """

    direction: str
    K: int
    L: int
    gain: np.ndarray
    P: float
    fronthaul: tuple[float, ...] | None = None
    n_u: int = 1
    n_r: int = 1

    def __post_init__(self):
        if self.direction not in (UPLINK, DOWNLINK):
            raise InvalidInputError(f"direction must be uplink or downlink, got {self.direction!r}")
        for name in ("K", "L", "n_u", "n_r"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise InvalidInputError(f"{name} must be a positive integer, got {v!r}")
        if not (math.isfinite(self.P) and self.P > 0):
            raise InvalidInputError(f"P must be positive, got {self.P}")
        G = as_matrix(self.gain, "gain").copy()
        expected = (
            (self.n_r * self.L, self.n_u * self.K)
            if self.direction == UPLINK
            else (self.n_u * self.K, self.n_r * self.L)
        )
        if G.shape != expected:
            raise InvalidInputError(f"gain has shape {G.shape}, expected {expected}")
        G.setflags(write=False)
        object.__setattr__(self, "gain", G)
        if self.fronthaul is not None:
            C = tuple(float(c) for c in self.fronthaul)
            if len(C) != self.L:
                raise InvalidInputError(f"need {self.L} fronthaul capacities, got {len(C)}")
            if any(not (c >= 0) for c in C):
                raise InvalidInputError("fronthaul capacities must be nonnegative")
            object.__setattr__(self, "fronthaul", C)

    @property
    def siso(self) -> bool:
        return self.n_u == 1 and self.n_r == 1

    @property
    def capacities(self) -> np.ndarray:
        if self.fronthaul is None:
            raise InvalidInputError("instance has no fronthaul capacities")
        return np.array(self.fronthaul)

    def with_fronthaul(self, C: Sequence[float]) -> "NetworkInstance":
        return replace(self, fronthaul=tuple(float(c) for c in C))

    def relay_antennas(self, S: Iterable[int]) -> np.ndarray:
        return _block_indices(S, self.n_r, self.L)

    def user_antennas(self, S: Iterable[int]) -> np.ndarray:
        return _block_indices(S, self.n_u, self.K)


def _block_indices(S: Iterable[int], size: int, count: int) -> np.ndarray:
    idx = sorted(set(int(i) for i in S))
    if idx and (idx[0] < 0 or idx[-1] >= count):
        raise InvalidInputError(f"node index out of range 0..{count - 1}")
    return np.array([i * size + a for i in idx for a in range(size)], dtype=int)


@dataclass(frozen=True, eq=False)
class CovarianceSet:
    """Per-node input covariances: one per user (uplink) or per relay (downlink)."""

    mats: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(as_matrix(m, "covariance").copy() for m in self.mats)
        for m in mats:
            if not is_psd(m):
                raise InvalidInputError("covariance matrices must be symmetric PSD")
            m.setflags(write=False)
        object.__setattr__(self, "mats", mats)

    @classmethod
    def isotropic(cls, inst: NetworkInstance) -> "CovarianceSet":
        n, count = (inst.n_u, inst.K) if inst.direction == UPLINK else (inst.n_r, inst.L)
        return cls(tuple((inst.P / n) * np.eye(n) for _ in range(count)))

    def validate(self, inst: NetworkInstance) -> None:
        n, count = (inst.n_u, inst.K) if inst.direction == UPLINK else (inst.n_r, inst.L)
        if len(self.mats) != count:
            raise InvalidInputError(f"need {count} covariance matrices, got {len(self.mats)}")
        tol = 1e-9 * max(1.0, inst.P)
        for m in self.mats:
            if m.shape != (n, n):
                raise InvalidInputError(f"covariance must be {n}x{n}, got {m.shape}")
            tr = float(np.trace(m))
            if inst.direction == UPLINK and abs(tr - inst.P) > tol:
                raise InvalidInputError(f"uplink covariance trace {tr} differs from P={inst.P}")
            if inst.direction == DOWNLINK and tr > inst.P + tol:
                raise InvalidInputError(f"downlink covariance trace {tr} exceeds P={inst.P}")

    @cached_property
    def factor(self) -> np.ndarray:
        """Block-diagonal F with blockdiag(Gamma) = F F^T."""
        return scipy.linalg.block_diag(*[psd_sqrt_factor(m) for m in self.mats])


def resolve_cov(inst: NetworkInstance, cov: CovarianceSet | None) -> CovarianceSet:
    cov = CovarianceSet.isotropic(inst) if cov is None else cov
    cov.validate(inst)
    return cov


def effective_gain(inst: NetworkInstance, cov: CovarianceSet | None) -> np.ndarray:
    """Gain with the transmit covariance folded in: G F, so that G Gamma G^T = (GF)(GF)^T."""
    if cov is None:
        # isotropic default: F = sqrt(P/n) I
        n = inst.n_u if inst.direction == UPLINK else inst.n_r
        return inst.gain * math.sqrt(inst.P / n)
    return inst.gain @ resolve_cov(inst, cov).factor


def check_sigma(sigma_sq: float) -> float:
    s = float(sigma_sq)
    if not (math.isfinite(s) and s > 0):
        raise InvalidInputError(f"sigma^2 must be positive and finite, got {sigma_sq}")
    return s


@dataclass(frozen=True)
class SumRateReport:
    """Inner (scheme) and outer (cutset) sum-rates of one instance at one sigma^2."""

    inner: float
    outer: float
    unlimited: float
    c_star: float
    sigma_sq: float
    argmin_subset: frozenset = field(default_factory=frozenset)
    delta_per_user: float | None = None
    delta_sum: float | None = None

    @property
    def inner_clamped(self) -> float:
        return max(self.inner, 0.0)
