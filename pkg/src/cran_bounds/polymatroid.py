"""Set functions on a ground set [L] = {0, ..., L-1} and polymatroid tools.

Subsets are passed around as ``frozenset`` of 0-based indices; internally
they are bitmasks so that a whole set function can be tabulated as a numpy
array of length 2**L.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InfeasibleError, InvalidInputError, PreconditionError, SizeLimitError

MAX_GROUND = 20
MAX_CHECK = 16
TOL = 1e-9
_EPS = 1e-12


class Flag(enum.Enum):
    UNCHECKED = "unchecked"
    TRUE = "verified-true"
    FALSE = "verified-false"


def mask_of(S: Iterable[int]) -> int:
    m = 0
    for i in S:
        m |= 1 << int(i)
    return m


def subset_of(mask: int, L: int) -> frozenset:
    return frozenset(i for i in range(L) if mask >> i & 1)


def popcounts(L: int) -> np.ndarray:
    pc = np.zeros(1 << L, dtype=np.int64)
    for i in range(L):
        pc[1 << i : 1 << (i + 1)] = pc[: 1 << i] + 1
    return pc


def subset_sums(x: Sequence[float]) -> np.ndarray:
    """Array s with s[mask] = sum of x over the bits of mask."""
    x = np.asarray(x, dtype=float)
    s = np.zeros(1 << len(x))
    for i, xi in enumerate(x):
        s[1 << i : 1 << (i + 1)] = s[: 1 << i] + xi
    return s


@dataclass(frozen=True, eq=False)
class SetFunctionView:
    """A set function f: 2^[L] -> R with verification flags.

    Flags start out unchecked and are only changed by :func:`check_polymatroid`,
    which returns a new view.
    """

    ground_size: int
    evaluator: Callable[[frozenset], float]
    normalized: Flag = Flag.UNCHECKED
    monotone: Flag = Flag.UNCHECKED
    submodular: Flag = Flag.UNCHECKED
    _table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not isinstance(self.ground_size, (int, np.integer)) or self.ground_size < 0:
            raise InvalidInputError("ground_size must be a nonnegative integer")
        if self.ground_size > MAX_GROUND:
            raise SizeLimitError(f"ground set of size {self.ground_size} exceeds {MAX_GROUND}")

    def __call__(self, S: Iterable[int]) -> float:
        S = frozenset(int(i) for i in S)
        if self._table is not None:
            return float(self._table[mask_of(S)])
        return float(self.evaluator(S))

    @cached_property
    def table(self) -> np.ndarray:
        """Values on all 2**L subsets, indexed by bitmask."""
        if self._table is not None:
            return self._table
        L = self.ground_size
        t = np.array([self.evaluator(subset_of(m, L)) for m in range(1 << L)], dtype=float)
        t.setflags(write=False)
        return t

    @property
    def verified(self) -> bool:
        return self.normalized is self.monotone is self.submodular is Flag.TRUE

    @classmethod
    def from_table(cls, values: Sequence[float]) -> "SetFunctionView":
        t = np.array(values, dtype=float)
        L = int(round(math.log2(len(t)))) if len(t) else -1
        if L < 0 or len(t) != 1 << L:
            raise InvalidInputError("table length must be a power of two")
        t.setflags(write=False)
        return cls(L, lambda S, _t=t: float(_t[mask_of(S)]), _table=t)

    @classmethod
    def modular(cls, weights: Sequence[float]) -> "SetFunctionView":
        return cls.from_table(subset_sums(weights))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    kind: str | None = None
    pair: tuple[frozenset, frozenset] | None = None


def check_polymatroid(f: SetFunctionView, tol: float = TOL) -> tuple[SetFunctionView, Verdict]:
    """Exhaustively test normalization, monotonicity and submodularity.

    Returns a view with the three flags set, and the first violation found
    (normalization first, then monotonicity, then submodularity).
    """
    L = f.ground_size
    if L > MAX_CHECK:
        raise SizeLimitError(f"exhaustive check limited to L <= {MAX_CHECK}, got {L}")
    t = f.table
    violations: list[Verdict] = []

    norm_ok = abs(t[0]) <= tol
    if not norm_ok:
        violations.append(Verdict(False, "normalization", (frozenset(), frozenset())))

    mono_ok = True
    masks = np.arange(1 << L)
    for i in range(L):
        without = masks[(masks >> i & 1) == 0]
        bad = np.nonzero(t[without | (1 << i)] < t[without] - tol)[0]
        if bad.size:
            mono_ok = False
            m = int(without[bad[0]])
            violations.append(Verdict(False, "monotonicity", (subset_of(m, L), subset_of(m | 1 << i, L))))
            break

    sub_ok = True
    for i in range(L):
        for j in range(i + 1, L):
            free = masks[((masks >> i & 1) == 0) & ((masks >> j & 1) == 0)]
            lhs = t[free | 1 << i] + t[free | 1 << j]
            rhs = t[free | 1 << i | 1 << j] + t[free]
            bad = np.nonzero(lhs < rhs - tol)[0]
            if bad.size:
                sub_ok = False
                m = int(free[bad[0]])
                violations.append(
                    Verdict(False, "submodularity", (subset_of(m | 1 << i, L), subset_of(m | 1 << j, L)))
                )
                break
        if not sub_ok:
            break

    flag = lambda ok: Flag.TRUE if ok else Flag.FALSE  # noqa: E731
    view = replace(f, normalized=flag(norm_ok), monotone=flag(mono_ok), submodular=flag(sub_ok), _table=t)
    return view, (violations[0] if violations else Verdict(True))


def _require_verified(*fs: SetFunctionView) -> None:
    for f in fs:
        if not f.verified:
            raise PreconditionError("set function is not a verified polymatroid rank function")


def min_combined(phi: SetFunctionView, psi: SetFunctionView) -> tuple[float, frozenset]:
    """Exact min over S of phi(S^c) + psi(S).

    Ties (within 1e-12 relative) go to the smallest |S|, then the smallest bitmask.
    """
    if phi.ground_size != psi.ground_size:
        raise InvalidInputError("ground sizes differ")
    L = phi.ground_size
    full = (1 << L) - 1
    masks = np.arange(1 << L)
    with np.errstate(invalid="ignore"):
        vals = phi.table[full ^ masks] + psi.table[masks]
    best = float(np.nanmin(vals))
    if math.isinf(best):
        return best, frozenset()
    cand = masks[vals <= best + _EPS * max(1.0, abs(best))]
    pc = popcounts(L)[cand]
    m = int(cand[np.lexsort((cand, pc))[0]])
    return float(vals[m]), subset_of(m, L)


def greedy_base(phi: SetFunctionView, order: Sequence[int]) -> np.ndarray:
    """Greedy vertex of the base polytope along ``order``."""
    _require_verified(phi)
    L = phi.ground_size
    if sorted(int(i) for i in order) != list(range(L)):
        raise InvalidInputError("order must be a permutation of the ground set")
    y = np.zeros(L)
    prefix: set[int] = set()
    prev = phi(prefix)
    for i in order:
        prefix.add(int(i))
        cur = phi(prefix)
        y[int(i)] = cur - prev
        prev = cur
    return y


def symmetric_base(phi: SetFunctionView) -> np.ndarray:
    """Average of the greedy vertices over all L! orders (the Shapley point).

    It is a convex combination of base vectors, hence a base vector, and it
    treats interchangeable elements identically.
    """
    _require_verified(phi)
    L = phi.ground_size
    if L == 0:
        return np.zeros(0)
    t = phi.table
    pc = popcounts(L)
    w = np.array([math.factorial(s) * math.factorial(L - s - 1) / math.factorial(L) for s in range(L)])
    masks = np.arange(1 << L)
    y = np.zeros(L)
    for i in range(L):
        without = masks[(masks >> i & 1) == 0]
        y[i] = float(np.sum(w[pc[without]] * (t[without | 1 << i] - t[without])))
    # Pin the total exactly to phi([L]) against summation rounding.
    y += (t[-1] - y.sum()) / L
    return y


def in_polymatroid(phi: SetFunctionView, x: Sequence[float], tol: float = TOL) -> tuple[bool, frozenset | None]:
    """Membership x >= 0 and x(S) <= phi(S) for all S; returns a violating set if any."""
    x = np.asarray(x, dtype=float)
    L = phi.ground_size
    if x.shape != (L,):
        raise InvalidInputError("vector length does not match the ground set")
    neg = np.nonzero(x < -tol)[0]
    if neg.size:
        return False, frozenset({int(neg[0])})
    bad = np.nonzero(subset_sums(x) > phi.table + tol)[0]
    if bad.size:
        return False, subset_of(int(bad[0]), L)
    return True, None


def is_base(phi: SetFunctionView, y: Sequence[float], tol: float = TOL) -> bool:
    ok, _ = in_polymatroid(phi, y, tol)
    return ok and abs(float(np.sum(y)) - float(phi.table[-1])) <= tol


def _exchange_capacity(slack: np.ndarray, masks: np.ndarray, into: int, out_of: int) -> float:
    """Largest a with x + a(e_into - e_out_of) still inside, ignoring x_out_of >= 0."""
    sel = ((masks >> into & 1) == 1) & ((masks >> out_of & 1) == 0)
    return float(np.min(slack[sel]))


def repair_base_to_floor(phi: SetFunctionView, y: Sequence[float], floor: float, tol: float = TOL) -> np.ndarray:
    """Move a base vector by exchanges until every coordinate is at least ``floor``.

    Each move takes mass from the largest coordinate that can give (one with
    surplus over the floor and positive exchange capacity toward the
    recipient) and hands it to the first deficient coordinate. If a deficient
    coordinate has no such donor, the smallest tight set containing it holds
    too little mass for any base vector to meet the floor, and
    InfeasibleError is raised.
    """
    _require_verified(phi)
    if floor < 0 or not math.isfinite(floor):
        raise InvalidInputError("floor must be a finite nonnegative number")
    L = phi.ground_size
    y = np.array(y, dtype=float)
    if not is_base(phi, y, tol=1e-7):
        raise InvalidInputError("y is not a base vector of phi")
    total = float(phi.table[-1])
    if total < L * floor - tol:
        raise InfeasibleError("phi([L]) is below L * floor", shortfall=L * floor - total)
    if np.all(y >= floor - tol):
        return y
    t = phi.table
    masks = np.arange(1 << L)
    for _ in range(50 * L * L + 50):
        deficient = np.nonzero(y < floor - tol)[0]
        if deficient.size == 0:
            return y
        r = int(deficient[0])
        slack = np.maximum(t - subset_sums(y), 0.0)
        moved = False
        for d in sorted(range(L), key=lambda i: (-y[i], i)):
            if d == r or y[d] <= floor + _EPS:
                continue
            cap = _exchange_capacity(slack, masks, r, d)
            if cap <= _EPS:
                continue
            amount = min(y[d] - floor, floor - y[r], cap)
            y[d] -= amount
            y[r] += amount
            moved = True
            break
        if not moved:
            raise InfeasibleError(
                f"no base vector meets the floor at coordinate {r}", shortfall=float(floor - y[r])
            )
    raise RuntimeError("exchange repair did not converge")


def edmonds_max(phi: SetFunctionView, psi: SetFunctionView) -> tuple[float, np.ndarray]:
    """max{x([L]) : x in P(phi) and P(psi)} together with a maximizing point.

    The value is taken from the min side, min_S phi(S) + psi(S^c). The point is
    built independently by augmenting along shortest exchange paths until no
    path remains; its total is then checked against the min side.
    """
    _require_verified(phi, psi)
    value, _ = min_combined(phi, psi)
    x = _intersection_point(phi.table, psi.table, phi.ground_size)
    if abs(float(x.sum()) - value) > TOL * max(1.0, abs(value)):
        raise RuntimeError(f"augmenting paths reached {x.sum():.12g}, min side is {value:.12g}")
    return value, x


def _intersection_point(f1: np.ndarray, f2: np.ndarray, L: int, max_iter: int = 20000) -> np.ndarray:
    masks = np.arange(1 << L)
    x = np.zeros(L)
    if L == 0:
        return x
    contains = [(masks >> i & 1) == 1 for i in range(L)]
    for _ in range(max_iter):
        s = subset_sums(x)
        sl1 = np.maximum(f1 - s, 0.0)
        sl2 = np.maximum(f2 - s, 0.0)
        sat1 = np.array([sl1[contains[i]].min() for i in range(L)])
        sat2 = np.array([sl2[contains[i]].min() for i in range(L)])
        cap1 = np.zeros((L, L))
        cap2 = np.zeros((L, L))
        for z in range(L):
            for y in range(L):
                if z != y:
                    sel = contains[z] & ~contains[y]
                    cap1[z, y] = sl1[sel].min()
                    cap2[z, y] = sl2[sel].min()
        path = _shortest_path(sat1, sat2, cap1, cap2, x)
        if path is None:
            return np.maximum(x, 0.0)
        d = np.zeros(L)
        for role, e in path:
            d[e] += 1.0 if role == "z" else -1.0
        D = subset_sums(d)
        pos = D > _EPS
        steps = [np.min(sl1[pos] / D[pos]), np.min(sl2[pos] / D[pos])]
        neg = d < 0
        if np.any(neg):
            steps.append(float(np.min(x[neg] / -d[neg])))
        delta = float(min(steps))
        if delta <= _EPS:
            raise RuntimeError("augmenting path admits no positive step")
        x = x + delta * d
        x[np.abs(x) < _EPS] = 0.0
    raise RuntimeError("polymatroid intersection did not terminate")


def _shortest_path(sat1, sat2, cap1, cap2, x):
    """BFS over (role, element) states.

    A z-state is an element being increased; a y-state one being decreased.
    z -> y uses an exchange in the second polymatroid, y -> z one in the first.
    The path starts at an element with room in the first polymatroid and ends
    at one with room in the second.
    """
    L = len(x)
    prev: dict[tuple[str, int], tuple[str, int] | None] = {}
    queue: deque = deque()
    for z in range(L):
        if sat1[z] > _EPS:
            prev[("z", z)] = None
            queue.append(("z", z))
    while queue:
        state = queue.popleft()
        role, e = state
        if role == "z":
            if sat2[e] > _EPS:
                path = [state]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for v in range(L):
                nxt = ("y", v)
                if v != e and nxt not in prev and x[v] > _EPS and cap2[e, v] > _EPS:
                    prev[nxt] = state
                    queue.append(nxt)
        else:
            for w in range(L):
                nxt = ("z", w)
                if w != e and nxt not in prev and cap1[w, e] > _EPS:
                    prev[nxt] = state
                    queue.append(nxt)
    return None
