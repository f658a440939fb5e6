"""Domain types and the exact probability of grouped instrument/treatment data.

Participants belong to one of four latent types (never taker, defier,
complier, always taker).  Each is assigned to the intervention arm by an
independent Bernoulli(p) draw, and the observed data are the four (Z, D)
cell counts.  The probability of those counts given the type counts is a
sum over the number of never takers assigned to the intervention arm of a
product of four binomial pmfs.  Everything here is computed in log space.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

# Log-probability of an impossible event.
NEG_INF = -math.inf

TYPE_NAMES = ("never_taker", "defier", "complier", "always_taker")

# Ranges narrower than this are summed in full; wider ones are summed
# around the mode of the (log-concave) summand until terms fall below
# exp(-_TAIL_CUTOFF) relative to the largest one.
_FULL_SUM_WIDTH = 4096
_TAIL_CUTOFF = 60.0


def _check_count(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return int(value)


def check_p(p: float, *, closed: bool = False) -> float:
    """Validate an assignment probability; open interval unless ``closed``."""
    p = float(p)
    if math.isnan(p):
        raise ValueError("p must be a number, got nan")
    if closed:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
    elif not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in the open interval (0, 1), got {p}")
    return p


@dataclass(frozen=True, order=True)
class GroupedData:
    """Observed cell counts.

    g1: Z=1, D=1 (treated, intervention)
    g2: Z=1, D=0 (untreated, intervention)
    g3: Z=0, D=1 (treated, control)
    g4: Z=0, D=0 (untreated, control)
    """

    g1: int
    g2: int
    g3: int
    g4: int

    def __post_init__(self):
        for name in ("g1", "g2", "g3", "g4"):
            object.__setattr__(self, name, _check_count(name, getattr(self, name)))

    @classmethod
    def of(cls, values) -> GroupedData:
        values = tuple(values)
        if len(values) != 4:
            raise ValueError(f"expected 4 cell counts, got {len(values)}")
        return cls(*values)

    def __iter__(self):
        return iter((self.g1, self.g2, self.g3, self.g4))

    def __getitem__(self, j: int) -> int:
        return tuple(self)[j]

    @property
    def n(self) -> int:
        return self.g1 + self.g2 + self.g3 + self.g4

    @property
    def n_intervention(self) -> int:
        return self.g1 + self.g2

    @property
    def n_control(self) -> int:
        return self.g3 + self.g4

    @property
    def empirical_p(self) -> float:
        """Fraction of participants observed in the intervention arm."""
        if self.n == 0:
            raise ValueError("empirical p is undefined for empty data")
        return self.n_intervention / self.n

    def require_nonempty(self) -> GroupedData:
        if self.n == 0:
            raise ValueError("grouped data must contain at least one participant")
        return self

    def require_both_arms(self) -> GroupedData:
        if self.n_intervention == 0 or self.n_control == 0:
            raise ValueError(
                "both the intervention arm (g1+g2) and the control arm (g3+g4) "
                f"must be nonempty, got {tuple(self)}"
            )
        return self

    def swap_arms(self) -> GroupedData:
        """Relabel intervention as control and vice versa."""
        return GroupedData(self.g3, self.g4, self.g1, self.g2)


@dataclass(frozen=True, order=True)
class TypeVector:
    """Counts of never takers, defiers, compliers and always takers."""

    t1: int
    t2: int
    t3: int
    t4: int

    def __post_init__(self):
        for name in ("t1", "t2", "t3", "t4"):
            object.__setattr__(self, name, _check_count(name, getattr(self, name)))

    @classmethod
    def of(cls, values) -> TypeVector:
        values = tuple(values)
        if len(values) != 4:
            raise ValueError(f"expected 4 type counts, got {len(values)}")
        return cls(*(int(v) for v in values))

    def __iter__(self):
        return iter((self.t1, self.t2, self.t3, self.t4))

    def __getitem__(self, i: int) -> int:
        return tuple(self)[i]

    @property
    def n(self) -> int:
        return self.t1 + self.t2 + self.t3 + self.t4

    def shares(self) -> tuple[float, float, float, float]:
        n = self.n
        if n == 0:
            raise ValueError("shares are undefined for an empty type vector")
        return tuple(v / n for v in self)

    def swap_arms(self) -> TypeVector:
        """Defiers and compliers trade places when Z is relabelled."""
        return TypeVector(self.t1, self.t3, self.t2, self.t4)


# (type, group) cells that can be nonzero, 0-based.  A type's first cell is
# where its intervention-arm members land, the second its control-arm members.
INTERVENTION_CELL = {0: 1, 1: 1, 2: 0, 3: 0}
CONTROL_CELL = {0: 3, 1: 2, 2: 3, 3: 2}
STRUCTURAL_ZEROS = ((0, 0), (0, 2), (1, 0), (1, 3), (2, 1), (2, 2), (3, 1), (3, 3))


@dataclass(frozen=True)
class CountMatrix:
    """Type-by-group counts N[i][j] (0-based indices internally)."""

    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.shape != (4, 4):
            raise ValueError(f"count matrix must be 4x4, got shape {cells.shape}")
        if not np.all(np.equal(np.mod(cells, 1), 0)):
            raise ValueError("count matrix entries must be integers")
        cells = cells.astype(np.int64)
        if np.any(cells < 0):
            raise ValueError("count matrix entries must be nonnegative")
        for i, j in STRUCTURAL_ZEROS:
            if cells[i, j] != 0:
                raise ValueError(
                    f"cell N({i + 1},{j + 1}) is structurally zero but holds {cells[i, j]}"
                )
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_splits(cls, g: GroupedData, a: int, b: int, c: int, d: int) -> CountMatrix:
        """Build the matrix from its four free column splits.

        a = N(3,1) compliers in g1, b = N(1,2) never takers in g2,
        c = N(2,3) defiers in g3, d = N(1,4) never takers in g4; the
        other nonzero cell of each column takes the remainder.
        """
        g1, g2, g3, g4 = g
        for name, v, hi in (("a", a, g1), ("b", b, g2), ("c", c, g3), ("d", d, g4)):
            if not 0 <= v <= hi:
                raise ValueError(f"split {name}={v} outside [0, {hi}]")
        m = np.zeros((4, 4), dtype=np.int64)
        m[2, 0], m[3, 0] = a, g1 - a
        m[0, 1], m[1, 1] = b, g2 - b
        m[1, 2], m[3, 2] = c, g3 - c
        m[0, 3], m[2, 3] = d, g4 - d
        return cls(m)

    @classmethod
    def from_intervention_counts(cls, t: TypeVector, k) -> CountMatrix:
        """Place k[i] members of type i in the intervention arm, the rest in control."""
        m = np.zeros((4, 4), dtype=np.int64)
        for i, (ti, ki) in enumerate(zip(t, k)):
            if not 0 <= ki <= ti:
                raise ValueError(f"intervention count {ki} outside [0, {ti}] for type {i + 1}")
            m[i, INTERVENTION_CELL[i]] = ki
            m[i, CONTROL_CELL[i]] = ti - ki
        return cls(m)

    def __getitem__(self, ij):
        return int(self.cells[ij])

    def __eq__(self, other):
        if not isinstance(other, CountMatrix):
            return NotImplemented
        return bool(np.array_equal(self.cells, other.cells))

    def __hash__(self):
        return hash(self.cells.tobytes())

    def __repr__(self):
        return f"CountMatrix({self.cells.tolist()})"

    def type_vector(self) -> TypeVector:
        return TypeVector.of(self.cells.sum(axis=1))

    def grouped(self) -> GroupedData:
        return GroupedData.of(int(v) for v in self.cells.sum(axis=0))

    def intervention_counts(self) -> tuple[int, int, int, int]:
        return tuple(int(v) for v in self.cells[:, 0] + self.cells[:, 1])

    def splits(self) -> tuple[int, int, int, int]:
        return (self[2, 0], self[0, 1], self[1, 2], self[0, 3])

    def tolist(self) -> list[list[int]]:
        return self.cells.tolist()


class PMode(str, enum.Enum):
    FIXED = "fixed"
    EMPIRICAL = "empirical"
    ESTIMATE = "estimate"


@dataclass(frozen=True)
class DesignParams:
    """Assignment probability and how it is obtained."""

    p: float | None = None
    mode: PMode = PMode.FIXED

    def __post_init__(self):
        object.__setattr__(self, "mode", PMode(self.mode))
        if self.mode is PMode.FIXED:
            if self.p is None:
                raise ValueError("fixed mode requires a value of p")
            object.__setattr__(self, "p", check_p(self.p))

    def resolve(self, g: GroupedData) -> float | None:
        """p to use for ``g``: the fixed value, the empirical fraction, or None."""
        if self.mode is PMode.FIXED:
            return self.p
        if self.mode is PMode.EMPIRICAL:
            return check_p(g.require_both_arms().empirical_p)
        return None


def log_binom_pmf(k: int, r: int, p: float) -> float:
    """log of C(r, k) p^k (1-p)^(r-k); ``NEG_INF`` outside 0 <= k <= r."""
    p = check_p(p)
    if r < 0:
        raise ValueError(f"number of trials must be nonnegative, got {r}")
    if k < 0 or k > r:
        return NEG_INF
    return (
        math.lgamma(r + 1)
        - math.lgamma(k + 1)
        - math.lgamma(r - k + 1)
        + k * math.log(p)
        + (r - k) * math.log1p(-p)
    )


def _log_binom_array(k: np.ndarray, r, log_p: float, log_q: float) -> np.ndarray:
    # Caller guarantees 0 <= k <= r.
    k = np.asarray(k, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    return gammaln(r + 1) - gammaln(k + 1) - gammaln(r - k + 1) + k * log_p + (r - k) * log_q


def ell_bounds(t, g) -> tuple[int, int]:
    """Raw (lo, hi) bounds on the never takers assigned to intervention; lo > hi if void."""
    t1, t2, t3, t4 = t
    g1, g2, g3, g4 = g
    lo = max(0, g2 - t2, t1 - g4, t1 + t3 - g1 - g4)
    hi = min(t1, g2, t1 + t3 - g4, t1 + t3 + t4 - g1 - g4)
    return lo, hi


def feasible_ell_range(t: TypeVector, g: GroupedData) -> range:
    """Values of ell for which every binomial term has positive probability.

    ell is the number of never takers assigned to the intervention arm; it
    fixes the other three intervention counts at g2 - ell (defiers),
    t1 + t3 - g4 - ell (compliers) and g1 + g4 + ell - t1 - t3 (always takers).
    """
    lo, hi = ell_bounds(t, g)
    return range(lo, hi + 1) if lo <= hi else range(0)


def _ell_log_terms(t, g, ells: np.ndarray, log_p: float, log_q: float) -> np.ndarray:
    t1, t2, t3, t4 = t
    g1, g2, g3, g4 = g
    return (
        _log_binom_array(ells, t1, log_p, log_q)
        + _log_binom_array(g2 - ells, t2, log_p, log_q)
        + _log_binom_array(t1 + t3 - g4 - ells, t3, log_p, log_q)
        + _log_binom_array(g1 + g4 + ells - t1 - t3, t4, log_p, log_q)
    )


def _mode_window_logsumexp(t, g, lo: int, hi: int, log_p: float, log_q: float) -> float:
    # The summand is log-concave in ell, so its increments are decreasing and
    # the mode is the first ell whose forward increment is negative.
    def increment(ell: int) -> float:
        pair = _ell_log_terms(t, g, np.array([ell, ell + 1]), log_p, log_q)
        return pair[1] - pair[0]

    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        if increment(mid) > 0:
            a = mid + 1
        else:
            b = mid
    mode = a
    peak = float(_ell_log_terms(t, g, np.array([mode]), log_p, log_q)[0])

    half = 256
    while True:
        left, right = max(lo, mode - half), min(hi, mode + half)
        edges = _ell_log_terms(t, g, np.array([left, right]), log_p, log_q)
        left_ok = left == lo or edges[0] < peak - _TAIL_CUTOFF
        right_ok = right == hi or edges[1] < peak - _TAIL_CUTOFF
        if left_ok and right_ok:
            break
        half *= 2
    ells = np.arange(left, right + 1)
    return float(logsumexp(_ell_log_terms(t, g, ells, log_p, log_q)))


def log_data_probability(t: TypeVector, g: GroupedData, p: float) -> float:
    """log P(G = g | t, p), or ``NEG_INF`` when the data are impossible.

    Sums the four-binomial product over the feasible never-taker split.
    Wide ranges are summed around the mode of the summand, dropping terms
    more than exp(-60) below the peak, which is exact to double precision.
    """
    p = check_p(p)
    if sum(g) != sum(t):
        return NEG_INF
    lo, hi = ell_bounds(t, g)
    if lo > hi:
        return NEG_INF
    log_p, log_q = math.log(p), math.log1p(-p)
    if hi - lo + 1 <= _FULL_SUM_WIDTH:
        ells = np.arange(lo, hi + 1)
        return float(logsumexp(_ell_log_terms(t, g, ells, log_p, log_q)))
    return _mode_window_logsumexp(t, g, lo, hi, log_p, log_q)


def data_probability(t: TypeVector, g: GroupedData, p: float) -> float:
    return math.exp(log_data_probability(t, g, p))


def simplex_points(n: int) -> np.ndarray:
    """All nonnegative integer 4-vectors summing to n, in lexicographic order."""
    rows = [
        (t1, t2, t3, n - t1 - t2 - t3)
        for t1 in range(n + 1)
        for t2 in range(n - t1 + 1)
        for t3 in range(n - t1 - t2 + 1)
    ]
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def log_data_probability_batch(ts: np.ndarray, g: GroupedData, p: float) -> np.ndarray:
    """Vectorised ``log_data_probability`` over the rows of an (m, 4) array.

    Loops over ell and accumulates with logaddexp, so cost is
    O(m * min(g2, max t1)); meant for small n.
    """
    p = check_p(p)
    ts = np.asarray(ts, dtype=np.int64).reshape(-1, 4)
    t1, t2, t3, t4 = ts.T
    g1, g2, g3, g4 = g
    out = np.full(len(ts), NEG_INF)
    consistent = ts.sum(axis=1) == sum(g)
    lo = np.maximum.reduce([np.zeros_like(t1), g2 - t2, t1 - g4, t1 + t3 - g1 - g4])
    hi = np.minimum.reduce([t1, np.full_like(t1, g2), t1 + t3 - g4, t1 + t3 + t4 - g1 - g4])
    live = consistent & (lo <= hi)
    if not live.any():
        return out
    log_p, log_q = math.log(p), math.log1p(-p)
    lo_l, hi_l = lo[live], hi[live]
    tl = ts[live]
    acc = np.full(len(tl), NEG_INF)
    for ell in range(int(lo_l.min()), int(hi_l.max()) + 1):
        mask = (lo_l <= ell) & (ell <= hi_l)
        if not mask.any():
            continue
        a1, a2, a3, a4 = tl[mask].T
        ells = np.full(len(a1), ell)
        term = (
            _log_binom_array(ells, a1, log_p, log_q)
            + _log_binom_array(g2 - ells, a2, log_p, log_q)
            + _log_binom_array(a1 + a3 - g4 - ells, a3, log_p, log_q)
            + _log_binom_array(g1 + g4 + ells - a1 - a3, a4, log_p, log_q)
        )
        acc[mask] = np.logaddexp(acc[mask], term)
    out[live] = acc
    return out


def grouped_from_intervention_counts(t, k) -> tuple[int, int, int, int]:
    """Cell counts produced when k[i] members of type i land in intervention."""
    t1, t2, t3, t4 = t
    k1, k2, k3, k4 = k
    return (k3 + k4, k1 + k2, (t2 - k2) + (t4 - k4), (t1 - k1) + (t3 - k3))


def enumerate_distribution(t: TypeVector, p: float, cap: int = 20) -> dict[GroupedData, float]:
    """Exact distribution of the grouped data, by direct convolution.

    Walks every combination of per-type intervention counts, weighting each by
    the product of its four binomial probabilities.  Independent of the
    never-taker deconvolution in ``log_data_probability``; used as its oracle.
    """
    p = check_p(p)
    n = sum(t)
    if n > cap:
        raise ValueError(f"enumeration capped at n={cap}, got n={n}")
    pmfs = [
        [math.comb(ti, k) * p**k * (1 - p) ** (ti - k) for k in range(ti + 1)] for ti in t
    ]
    dist: dict[GroupedData, float] = {}
    for k in itertools.product(*(range(ti + 1) for ti in t)):
        prob = pmfs[0][k[0]] * pmfs[1][k[1]] * pmfs[2][k[2]] * pmfs[3][k[3]]
        key = GroupedData(*grouped_from_intervention_counts(t, k))
        dist[key] = dist.get(key, 0.0) + prob
    return dist


def enumerate_assignments(t: TypeVector, p: float, cap: int = 16) -> dict[GroupedData, float]:
    """Distribution of the grouped data over all 2^n individual assignment vectors."""
    p = check_p(p)
    n = sum(t)
    if n > cap:
        raise ValueError(f"assignment enumeration capped at n={cap}, got n={n}")
    types = [i for i, ti in enumerate(t) for _ in range(ti)]
    dist: dict[GroupedData, float] = {}
    for z in itertools.product((0, 1), repeat=n):
        k = [0, 0, 0, 0]
        for i, zi in zip(types, z):
            k[i] += zi
        ones = sum(z)
        prob = p**ones * (1 - p) ** (n - ones)
        key = GroupedData(*grouped_from_intervention_counts(t, k))
        dist[key] = dist.get(key, 0.0) + prob
    return dist
