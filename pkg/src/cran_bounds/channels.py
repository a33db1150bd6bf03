"""Channel-matrix generators and the plain-text matrix file format.

Random draws come from a counter-based generator: every variate is a hash of
(seed, stream, structural indices), so any entry can be regenerated on its
own and results never depend on generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.special

from .errors import DegenerateScenarioError, InvalidInputError
from .numkernel import as_matrix, mp_edges

SPEED_OF_LIGHT = 299_792_458.0
_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)

# stream tags
_RICH = 1
_LOS_BRANCH = 2
_SHADOW = 3
_FADING = 4


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _hash(seed: int, stream: int, *indices) -> np.ndarray:
    """64-bit hash of (seed, stream, indices...), broadcast over index arrays."""
    with np.errstate(over="ignore"):
        h = _splitmix(np.uint64(int(seed) & _MASK64) ^ _splitmix(np.uint64(stream)))
        for idx in indices:
            h = _splitmix(h ^ np.asarray(idx, dtype=np.uint64))
    return np.asarray(h, dtype=np.uint64)


def uniforms(seed: int, stream: int, *indices) -> np.ndarray:
    """Uniform variates on the open interval (0, 1), one per index tuple."""
    h = _hash(seed, stream, *indices)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, stream: int, *indices) -> np.ndarray:
    """Standard normal variates by Box-Muller on two hashed uniforms."""
    u1 = uniforms(seed, stream, *indices, 0)
    u2 = uniforms(seed, stream, *indices, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


def rich_scattering(rows: int, cols: int, seed: int) -> np.ndarray:
    """i.i.d. standard normal matrix; entry (i, j) depends only on (seed, i, j)."""
    if rows < 1 or cols < 1:
        raise InvalidInputError("rows and cols must be >= 1")
    i, j = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    return normals(seed, _RICH, i, j)


def ppp_nodes(area_side: float, lam: float, seed: int, tag: int = 0) -> np.ndarray:
    """Poisson point process on [0, area_side]^2 with ``lam`` points per 10^4 m^2, as an (n, 2) array."""
    if not lam > 0:
        raise InvalidInputError("intensity must be positive")
    if area_side < 0:
        raise InvalidInputError("area_side must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & _MASK64, tag]))
    n = int(rng.poisson(lam * area_side**2 / 1e4))
    return rng.uniform(0.0, area_side, size=(n, 2))


@dataclass(frozen=True)
class GeometryScenario:
    """User and relay positions in meters on a square of side ``area_side``."""

    user_positions: np.ndarray
    relay_positions: np.ndarray
    area_side: float = 100.0
    r0: float = 1.0
    seed: int = 0
    lambda_u: float | None = None
    lambda_r: float | None = None

    def __post_init__(self):
        if not self.r0 > 0:
            raise InvalidInputError("r0 must be positive")
        for name in ("user_positions", "relay_positions"):
            pts = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            if np.any(pts < 0) or np.any(pts > self.area_side):
                raise InvalidInputError(f"{name} must lie inside the square")
            object.__setattr__(self, name, pts)

    @classmethod
    def draw(cls, lambda_u: float, lambda_r: float, seed: int, area_side: float = 100.0, r0: float = 1.0):
        """Independent PPPs for users (tag 0) and relays (tag 1)."""
        return cls(
            ppp_nodes(area_side, lambda_u, seed, 0),
            ppp_nodes(area_side, lambda_r, seed, 1),
            area_side,
            r0,
            seed,
            lambda_u,
            lambda_r,
        )

    @property
    def K(self) -> int:
        return len(self.user_positions)

    @property
    def L(self) -> int:
        return len(self.relay_positions)

    def distances(self) -> np.ndarray:
        """L x K relay-to-user distances."""
        if self.K == 0 or self.L == 0:
            raise DegenerateScenarioError(f"scenario has {self.K} users and {self.L} relays")
        d = self.relay_positions[:, None, :] - self.user_positions[None, :, :]
        return np.hypot(d[..., 0], d[..., 1])


@dataclass(frozen=True)
class MultipathParams:
    beta_los: float = 2.5
    beta_nlos: float = 3.5
    f_c: float = 2.1e9
    r0: float = 1.0
    nakagami_m: float = 2.0
    omega: float = 1.0
    rayleigh_omega: float = 1.0
    shadow_sigma_los_db: float = 3.0
    shadow_sigma_nlos_db: float = 4.0
    shadow_mean_db: float = 0.0
    fading: bool = True  # False forces every amplitude to 1

    def __post_init__(self):
        if not (self.beta_los > 0 and self.beta_nlos > 0):
            raise InvalidInputError("path-loss exponents must be positive")
        if self.shadow_sigma_los_db < 0 or self.shadow_sigma_nlos_db < 0:
            raise InvalidInputError("shadowing standard deviations must be >= 0")
        if not (self.f_c > 0 and self.r0 > 0 and self.nakagami_m > 0 and self.omega > 0 and self.rayleigh_omega > 0):
            raise InvalidInputError("f_c, r0, m and omegas must be positive")

    @property
    def kappa(self) -> float:
        """Free-space amplitude loss at r0."""
        return 4.0 * math.pi * self.r0 * self.f_c / SPEED_OF_LIGHT


def los_gain_matrix(scenario: GeometryScenario, beta: float) -> np.ndarray:
    """G[l, k] = max(r0, r_lk)^-beta."""
    if not beta > 0:
        raise InvalidInputError("beta must be positive")
    return np.maximum(scenario.r0, scenario.distances()) ** (-beta)


def p_los(r):
    """UMi line-of-sight probability min(18/r, 1)(1 - e^(-r/36)) + e^(-r/36)."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise InvalidInputError("distance must be positive")
    e = np.exp(-r / 36.0)
    out = np.where(r <= 18.0, 1.0, np.minimum(18.0 / r, 1.0) * (1.0 - e) + e)
    return out if out.ndim else float(out)


def nakagami_amplitude(u: np.ndarray, m: float = 2.0, omega: float = 1.0) -> np.ndarray:
    """Nakagami-m amplitude by inverse transform: sqrt of a Gamma(m, omega/m) variate."""
    return np.sqrt(scipy.special.gammaincinv(m, u) * omega / m)


def rayleigh_amplitude(u: np.ndarray, omega: float = 1.0) -> np.ndarray:
    """Rayleigh amplitude with E[A^2] = omega."""
    return np.sqrt(-omega * np.log(u))


def _block_draws(scenario: GeometryScenario, params: MultipathParams, seed: int):
    d = scenario.distances()
    l, k = np.meshgrid(np.arange(scenario.L), np.arange(scenario.K), indexing="ij")
    los = uniforms(seed, _LOS_BRANCH, l, k) < p_los(np.maximum(d, 1e-300))
    sd = np.where(los, params.shadow_sigma_los_db, params.shadow_sigma_nlos_db)
    theta = 10.0 ** ((params.shadow_mean_db + sd * normals(seed, _SHADOW, l, k)) / 20.0)
    beta = np.where(los, params.beta_los, params.beta_nlos)
    path = params.kappa * np.maximum(scenario.r0, d) ** beta
    return l, k, los, theta / path


def _amplitude(params: MultipathParams, los: np.ndarray, u: np.ndarray) -> np.ndarray:
    if not params.fading:
        return np.ones_like(u)
    return np.where(
        los,
        nakagami_amplitude(u, params.nakagami_m, params.omega),
        rayleigh_amplitude(u, params.rayleigh_omega),
    )


def multipath_gain_matrix(scenario: GeometryScenario, params: MultipathParams, seed: int) -> np.ndarray:
    """L x K nonnegative gains A * Theta / (kappa * max(r0, r)^beta) with a LOS/NLOS branch per link."""
    l, k, los, scale = _block_draws(scenario, params, seed)
    u = uniforms(seed, _FADING, l, k, 0, 0)
    return _amplitude(params, los, u) * scale


def mimo_expand(scenario: GeometryScenario, params: MultipathParams, N_u: int, N_r: int, seed: int) -> np.ndarray:
    """(N_r L) x (N_u K) multipath gains.

    Shadowing, LOS branch and path loss are shared across each relay-user
    block; the fading amplitude is drawn per antenna pair. With N_u = N_r = 1
    the result equals multipath_gain_matrix bit for bit.
    """
    if N_u < 1 or N_r < 1:
        raise InvalidInputError("antenna counts must be >= 1")
    l, k, los, scale = _block_draws(scenario, params, seed)
    i, j = np.arange(N_r), np.arange(N_u)
    u = uniforms(
        seed,
        _FADING,
        l[:, None, :, None],
        k[:, None, :, None],
        i[None, :, None, None],
        j[None, None, None, :],
    )
    amp = _amplitude(params, los[:, None, :, None], u)
    G = amp * scale[:, None, :, None]
    return G.reshape(N_r * scenario.L, N_u * scenario.K)


def mp_band_fraction(K: int, L: int, seed: int, slack: float = 0.3) -> float:
    """Fraction of eigenvalues of G^T G / K inside the widened Marchenko-Pastur band for ratio L/K.

    G is L x K rich scattering. The eigenvalues of G^T G / K concentrate on
    [(sqrt(L/K) - 1)^2, (sqrt(L/K) + 1)^2].
    """
    G = rich_scattering(L, K, seed)
    w = np.linalg.eigvalsh(G.T @ G / K)
    lo, hi = mp_edges(L / K)
    return float(np.mean((w >= lo - slack) & (w <= hi + slack)))


def write_matrix(path, M) -> None:
    """Write ``rows cols`` then one row per line, 17 significant digits."""
    A = as_matrix(M)
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix(path) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8").split("\n")
    except OSError as e:
        raise InvalidInputError(f"cannot read matrix file {path}: {e}") from e
    lines = [ln for ln in text if ln.strip()]
    try:
        rows, cols = (int(t) for t in lines[0].split())
        A = np.array([[float(t) for t in ln.split()] for ln in lines[1:]], dtype=float).reshape(-1, cols) if cols else None
    except (ValueError, IndexError) as e:
        raise InvalidInputError(f"malformed matrix file {path}: {e}") from e
    if A is None or A.shape != (rows, cols) or len(lines) - 1 != rows:
        raise InvalidInputError(f"matrix file {path} does not match its header {rows}x{cols}")
    return as_matrix(A)
