"""Maximum-likelihood estimation of the type vector.

``mle_exact`` scores every point of the simplex sum(t) = n and is the
reference at small n.  ``mle_heuristic`` is a multi-start steepest-ascent
search over transfers between types and scales to large n without any
optimality guarantee.  ``mle_profile_p`` maximises the joint likelihood
over a grid of assignment probabilities.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .baseline import baseline_type_vector
from .model import (
    NEG_INF,
    GroupedData,
    TypeVector,
    check_p,
    log_data_probability,
    log_data_probability_batch,
    simplex_points,
)

EXACT_CAP = 200
DEFAULT_RESTARTS = 20
DEFAULT_P_GRID = tuple(round(0.01 * k, 2) for k in range(1, 100))

# Log-likelihoods within this distance are treated as tied.
TIE_TOL = 1e-9


class MleMethod(str, enum.Enum):
    EXACT = "exact_enumeration"
    HEURISTIC = "heuristic_search"


@dataclass(frozen=True)
class MleResult:
    t_hat: TypeVector
    p_used: float
    log_likelihood: float
    method: MleMethod
    converged: bool = True
    ties: tuple[TypeVector, ...] = ()
    diagnostics: dict = field(default_factory=dict, compare=False)


def _validate(g: GroupedData, p: float | None = None) -> None:
    g.require_nonempty()
    if p is not None:
        check_p(p)


def mle_exact(g: GroupedData, p: float, cap: int = EXACT_CAP) -> MleResult:
    """Maximise the likelihood by scoring every type vector with sum n.

    Ties are broken towards the lexicographically smallest vector and all
    tied maximisers are reported.
    """
    _validate(g, p)
    if g.n > cap:
        raise ValueError(f"exact MLE is capped at n={cap}, got n={g.n}; use mle_heuristic")
    pts = simplex_points(g.n)
    ll = log_data_probability_batch(pts, g, p)
    best = float(ll.max())
    tied = np.flatnonzero(ll >= best - TIE_TOL)
    ties = tuple(TypeVector.of(pts[i]) for i in tied)
    t_hat = ties[0]
    return MleResult(
        t_hat=t_hat,
        p_used=float(p),
        log_likelihood=log_data_probability(t_hat, g, p),
        method=MleMethod.EXACT,
        converged=True,
        ties=ties,
        diagnostics={"points_evaluated": len(pts)},
    )


def _transfer_sizes(n: int) -> list[int]:
    sizes, d = [], 1
    while d <= max(n, 1):
        sizes.append(d)
        d *= 10
    return sizes


# Unit moves: every nonzero v in {-1, 0, 1}^4 with sum(v) = 0, i.e. the
# twelve single transfers plus the six double swaps.  Scaled by each size.
_DIRECTIONS = np.array(
    [v for v in itertools.product((-1, 0, 1), repeat=4) if sum(v) == 0 and any(v)],
    dtype=np.int64,
)

# Above this many candidate never-taker splits the batch scorer (which loops
# over the split) is slower than scoring candidates one by one.
_BATCH_ELL_LIMIT = 2000


def _support_gap(ts: np.ndarray, g: GroupedData) -> np.ndarray:
    t1, t2, t3, t4 = ts.T
    g1, g2, g3, g4 = g
    lo = np.maximum.reduce([np.zeros_like(t1), g2 - t2, t1 - g4, t1 + t3 - g1 - g4])
    hi = np.minimum.reduce([t1, np.full_like(t1, g2), t1 + t3 - g4, t1 + t3 + t4 - g1 - g4])
    return hi - lo


def _loglik_rows(ts: np.ndarray, g: GroupedData, p: float) -> np.ndarray:
    if g.g2 <= _BATCH_ELL_LIMIT:
        return log_data_probability_batch(ts, g, p)
    return np.array([log_data_probability(TypeVector.of(t), g, p) for t in ts])


def _pick(cands: np.ndarray, values: np.ndarray) -> int:
    # Largest value; among exact ties the lexicographically smallest row.
    top = values.max()
    idx = np.flatnonzero(values == top)
    if len(idx) == 1:
        return int(idx[0])
    sub = cands[idx]
    return int(idx[np.lexsort(sub.T[::-1])[0]])


def _climb(start, g: GroupedData, p: float, sizes: list[int]):
    """Steepest ascent from ``start``; returns (t, log-likelihood, steps)."""
    cur = np.asarray(start, dtype=np.int64)
    gap = int(_support_gap(cur[None], g)[0])
    ll = float(_loglik_rows(cur[None], g, p)[0]) if gap >= 0 else NEG_INF
    steps = 0
    moves = np.concatenate([d * _DIRECTIONS for d in sizes])
    while True:
        cands = cur + moves
        cands = cands[(cands >= 0).all(axis=1)]
        gaps = _support_gap(cands, g)
        feasible = gaps >= 0
        if feasible.any():
            fc = cands[feasible]
            vals = _loglik_rows(fc, g, p)
            k = _pick(fc, vals)
            if not vals[k] > ll:
                break
            cur, ll, gap = fc[k], float(vals[k]), int(gaps[feasible][k])
        elif gap < 0:
            # Outside the support every candidate has zero likelihood; walk
            # towards it by shrinking the void in the never-taker split range.
            k = _pick(cands, gaps)
            if not gaps[k] > gap:
                break
            cur, gap = cands[k], int(gaps[k])
        else:
            break
        steps += 1
    return tuple(int(v) for v in cur), ll, steps


def _random_composition(rng: np.random.Generator, n: int) -> tuple[int, ...]:
    cuts = np.sort(rng.integers(0, n + 1, size=3))
    parts = np.diff(np.concatenate(([0], cuts, [n])))
    return tuple(int(v) for v in parts)


def _corner_starts(g: GroupedData) -> list[tuple[int, ...]]:
    """Type vectors obtained by giving each cell wholly to one of its two types."""
    g1, g2, g3, g4 = g
    out = []
    for a, b, c, d in itertools.product((0, g1), (0, g2), (0, g3), (0, g4)):
        t = (b + d, g2 - b + c, a + g4 - d, g1 - a + g3 - c)
        if t not in out:
            out.append(t)
    return out


def mle_heuristic(
    g: GroupedData, p: float, seed: int = 0, restarts: int = DEFAULT_RESTARTS
) -> MleResult:
    """Multi-start hill climbing on the simplex.

    Starts are the monotonicity baseline, the type vectors that assign every
    cell wholly to one of its two types, and ``restarts`` seeded random
    compositions of n.  Each climb takes the best move among transfers of
    delta = 1, 10, 100, ... participants between two types (and double swaps
    between two pairs), stopping when nothing strictly improves.  Points of
    zero likelihood are ranked by how void their never-taker split range is,
    so climbs started outside the support walk into it.
    """
    _validate(g, p)
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    rng = np.random.default_rng(seed)
    starts = [tuple(baseline_type_vector(g))]
    starts += [t for t in _corner_starts(g) if t not in starts]
    starts += [_random_composition(rng, g.n) for _ in range(restarts)]
    sizes = _transfer_sizes(g.n)

    found: dict[tuple[int, ...], float] = {}
    total_steps = 0
    for start in starts:
        t, ll, steps = _climb(start, g, p, sizes)
        total_steps += steps
        if ll > NEG_INF:
            found[t] = ll
    if not found:
        raise RuntimeError("no climb reached a point of positive likelihood")
    best = max(found.values())
    ties = tuple(sorted(TypeVector.of(t) for t, v in found.items() if v >= best - TIE_TOL))
    return MleResult(
        t_hat=ties[0],
        p_used=float(p),
        log_likelihood=log_data_probability(ties[0], g, p),
        method=MleMethod.HEURISTIC,
        converged=True,
        ties=ties,
        diagnostics={"starts": len(starts), "moves": total_steps},
    )


def mle_fixed_p(
    g: GroupedData,
    p: float,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    cap: int = EXACT_CAP,
) -> MleResult:
    """Exact enumeration when n <= cap, otherwise the heuristic."""
    if g.n <= cap:
        return mle_exact(g, p, cap=cap)
    return mle_heuristic(g, p, seed=seed, restarts=restarts)


def _joint_key(res: MleResult):
    # Higher likelihood first, then smaller p, then lexicographic t.
    return (-res.log_likelihood, res.p_used, tuple(res.t_hat))


def mle_profile_p(
    g: GroupedData,
    grid=DEFAULT_P_GRID,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    cap: int = EXACT_CAP,
    refine: bool = False,
) -> MleResult:
    """Maximise the joint likelihood over t and p, profiling p on a grid.

    With ``refine`` the best grid point is followed by a bounded 1-d search
    over p between its grid neighbours for the winning t, and t is re-solved
    at the refined p; the refinement is kept only if it raises the likelihood.
    """
    grid = sorted(check_p(v) for v in grid)
    if not grid:
        raise ValueError("the p grid must contain at least one value")
    _validate(g)
    results = [mle_fixed_p(g, p, seed=seed, restarts=restarts, cap=cap) for p in grid]
    best = min(results, key=_joint_key)

    if refine and len(grid) > 1:
        k = grid.index(best.p_used)
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        t = best.t_hat
        opt = minimize_scalar(
            lambda q: -log_data_probability(t, g, q),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-8},
        )
        if math.isfinite(opt.fun):
            p_ref = float(opt.x)
            res = mle_fixed_p(g, p_ref, seed=seed, restarts=restarts, cap=cap)
            if res.log_likelihood > best.log_likelihood + TIE_TOL:
                best = res

    diag = dict(best.diagnostics)
    diag["grid_size"] = len(grid)
    return MleResult(
        t_hat=best.t_hat,
        p_used=best.p_used,
        log_likelihood=best.log_likelihood,
        method=best.method,
        converged=best.converged,
        ties=best.ties,
        diagnostics=diag,
    )


__all__ = [
    "EXACT_CAP",
    "DEFAULT_P_GRID",
    "MleMethod",
    "MleResult",
    "NEG_INF",
    "mle_exact",
    "mle_fixed_p",
    "mle_heuristic",
    "mle_profile_p",
]
