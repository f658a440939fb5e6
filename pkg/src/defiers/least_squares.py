"""Least-squares estimation of the type-by-group count matrix.

The objective sums, over every nonempty subset I of types, the squared
randomization error in I (actual minus intended intervention count)
divided by its variance p(1-p) * sum_{i in I} t(i).

Column totals and the structural zeros leave four free integers, the
column splits

    a = N(3,1)  compliers among the treated in intervention   (0..g1)
    b = N(1,2)  never takers among the untreated in intervention (0..g2)
    c = N(2,3)  defiers among the treated in control           (0..g3)
    d = N(1,4)  never takers among the untreated in control    (0..g4)

so the search runs over a 4-dimensional integer box.

Every randomization error is unchanged by the step (a, b, c, d) +=
(-r, r, -1, 1) with r = p / (1 - p): it moves participants between types in
exactly the intended proportions.  The continuous minimisers therefore lie
along lines in that direction, and at the empirical p the objective is zero
along a whole segment.  After the multi-start descent the solver scans the
integer points hugging that line through the best continuous optimum.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import qmc

from .baseline import MonotonicityWarning, monotonicity_shares
from .model import CountMatrix, GroupedData, TypeVector, check_p

DEFAULT_RESTARTS = 64

# Objectives within TIE_RTOL * max(1, |best|) of the best are ties.
TIE_RTOL = 1e-12

_SCAN_CHUNK = 8192


def enumerate_subsets() -> list[tuple[int, ...]]:
    """The 15 nonempty subsets of {1, 2, 3, 4}, by size then lexicographically."""
    return [s for k in range(1, 5) for s in itertools.combinations((1, 2, 3, 4), k)]


SUBSETS = tuple(enumerate_subsets())
# Membership matrix, one row per subset.
_M = np.array([[1.0 if i in s else 0.0 for i in (1, 2, 3, 4)] for s in SUBSETS])

# Type totals and intervention counts are affine in v = (a, b, c, d):
# t = T0 + TA @ v,  x = X0 + XA @ v.
_TA = np.array([[0, 1, 0, 1], [0, -1, 1, 0], [1, 0, 0, -1], [-1, 0, -1, 0]], dtype=float)
_XA = np.array([[0, 1, 0, 0], [0, -1, 0, 0], [1, 0, 0, 0], [-1, 0, 0, 0]], dtype=float)


def _offsets(g) -> tuple[np.ndarray, np.ndarray]:
    g1, g2, g3, g4 = (float(v) for v in g)
    return np.array([0.0, g2, g4, g1 + g3]), np.array([0.0, g2, 0.0, g1])


def _as_subset(I) -> tuple[int, ...]:
    s = tuple(sorted(set(int(i) for i in I)))
    if not s or not set(s) <= {1, 2, 3, 4}:
        raise ValueError(f"subset must be a nonempty subset of {{1,2,3,4}}, got {I!r}")
    return s


def randomization_error(n: CountMatrix, I, p: float) -> float:
    """Intervention count of the types in I minus p times their total."""
    s = _as_subset(I)
    x = n.intervention_counts()
    t = tuple(n.type_vector())
    return sum(x[i - 1] for i in s) - p * sum(t[i - 1] for i in s)


def objective_S(n: CountMatrix, p: float) -> float:
    """Variance-weighted sum of squared randomization errors over all 15 subsets.

    A subset holding no participants contributes zero.
    """
    p = check_p(p)
    t = tuple(n.type_vector())
    total = 0.0
    for s in SUBSETS:
        mass = sum(t[i - 1] for i in s)
        if mass == 0:
            continue
        total += randomization_error(n, s, p) ** 2 / (p * (1 - p) * mass)
    return total


def _objective_rows(V: np.ndarray, g, p: float) -> np.ndarray:
    """Objective for each row of an (m, 4) array of splits."""
    t0, x0 = _offsets(g)
    V = np.asarray(V, dtype=float)
    t = t0 + V @ _TA.T
    e = (x0 + V @ _XA.T) - p * t
    T = t @ _M.T
    E = e @ _M.T
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(T > 0, E * E / np.where(T > 0, T, 1.0), 0.0)
    return terms.sum(axis=1) / (p * (1 - p))


def _relaxed(v: np.ndarray, g, p: float) -> tuple[float, np.ndarray]:
    """Objective and gradient of the continuous relaxation at v."""
    t0, x0 = _offsets(g)
    t = t0 + _TA @ v
    e = (x0 + _XA @ v) - p * t
    T = _M @ t
    E = _M @ e
    live = T > 1e-12
    Tl = np.where(live, T, 1.0)
    c = p * (1 - p)
    f = float(np.sum(np.where(live, E * E / Tl, 0.0))) / c
    dE = _M @ (_XA - p * _TA)
    dT = _M @ _TA
    coef_e = np.where(live, 2 * E / Tl, 0.0)
    coef_t = np.where(live, -(E * E) / (Tl * Tl), 0.0)
    grad = (coef_e @ dE + coef_t @ dT) / c
    return f, grad


@dataclass(frozen=True)
class LsSolution:
    n_hat: CountMatrix
    t_hat: TypeVector
    p_used: float
    objective: float
    ties: tuple[CountMatrix, ...] = ()
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def splits(self) -> tuple[int, int, int, int]:
        return self.n_hat.splits()


def _box(g) -> np.ndarray:
    return np.array([g.g1, g.g2, g.g3, g.g4], dtype=float)


def _baseline_splits(g: GroupedData) -> np.ndarray:
    """Splits matching the no-defier decomposition, clipped to the box."""
    hi = _box(g)
    if g.n_intervention == 0 or g.n_control == 0:
        return hi / 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MonotonicityWarning)
        b = monotonicity_shares(g)
    a = g.g1 - b.always_share * g.n_intervention
    d = b.never_share * g.n_control
    return np.clip(np.array([a, float(g.g2), 0.0, d]), 0.0, hi)


def _starts(g: GroupedData, restarts: int, seed: int) -> np.ndarray:
    hi = _box(g)
    pts = [_baseline_splits(g)]
    pts += [np.array(c, dtype=float) * hi for c in itertools.product((0, 1), repeat=4)]
    extra = restarts - len(pts)
    if extra > 0:
        m = max(int(math.ceil(math.log2(extra))), 0)
        sob = qmc.Sobol(d=4, scramble=True, seed=seed).random_base2(m)[:extra]
        pts += list(sob * hi)
    return np.array(pts[:restarts])


def _descend(v0: np.ndarray, g, p: float) -> np.ndarray:
    hi = _box(g)
    res = minimize(
        _relaxed,
        v0,
        args=(g, p),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, h) for h in hi],
        options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500},
    )
    return np.clip(res.x, 0.0, hi)


def _neighbours(v: np.ndarray, hi: np.ndarray) -> np.ndarray:
    lo_pt, hi_pt = np.floor(v), np.ceil(v)
    cands = np.array(list(itertools.product(*zip(lo_pt, hi_pt))))
    return np.unique(np.clip(cands, 0, hi), axis=0)


def _step_sizes(hi: np.ndarray) -> list[int]:
    out, d = [], 1
    top = max(int(hi.max()), 1)
    while d <= top:
        out.append(d)
        d *= 10
    return out


# Every nonzero direction in {-1, 0, 1}^4.  Single-split moves alone stall at
# the ends of chains of near-optimal points that shift all four splits at once.
_MOVE_DIRECTIONS = np.array(
    [v for v in itertools.product((-1, 0, 1), repeat=4) if any(v)], dtype=float
)


def _local_search(v: np.ndarray, g, p: float) -> tuple[np.ndarray, float, int]:
    """Steepest descent over delta * {-1,0,1}^4 moves; integer points only."""
    hi = _box(g)
    moves = np.concatenate([d * _MOVE_DIRECTIONS for d in _step_sizes(hi)])
    cur = np.asarray(v, dtype=float)
    f = float(_objective_rows(cur[None], g, p)[0])
    steps = 0
    while True:
        cands = cur + moves
        cands = cands[((cands >= 0) & (cands <= hi)).all(axis=1)]
        if len(cands) == 0:
            break
        vals = _objective_rows(cands, g, p)
        k = int(np.argmin(vals))
        if not vals[k] < f:
            break
        cur, f = cands[k], float(vals[k])
        steps += 1
    return cur, f, steps


def _valley_scan(v: np.ndarray, g, p: float, keep: int = 8) -> np.ndarray:
    """Best integer points near the error-preserving line through ``v``.

    Steps the coordinate that moves fastest along the line through every
    integer value in its range; the other three are rounded from the line
    and perturbed by -1, 0, +1.
    """
    hi = _box(g)
    r = p / (1 - p)
    u = np.array([-r, r, -1.0, 1.0])
    k = int(np.argmax(np.abs(u)))
    others = [j for j in range(4) if j != k]
    offs = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=3)))
    best_vals = np.empty(0)
    best_pts = np.empty((0, 4))
    top = int(hi[k])
    for start in range(0, top + 1, _SCAN_CHUNK):
        pivot = np.arange(start, min(start + _SCAN_CHUNK, top + 1), dtype=float)
        s = (pivot - v[k]) / u[k]
        line = v[None, :] + s[:, None] * u[None, :]
        base = np.rint(line[:, others])
        cand = np.empty((len(pivot), len(offs), 4))
        cand[:, :, k] = pivot[:, None]
        cand[:, :, others] = base[:, None, :] + offs[None, :, :]
        cand = cand.reshape(-1, 4)
        cand = cand[((cand >= 0) & (cand <= hi)).all(axis=1)]
        if len(cand) == 0:
            continue
        vals = _objective_rows(cand, g, p)
        if len(vals) > keep:
            idx = np.argpartition(vals, keep)[:keep]
            cand, vals = cand[idx], vals[idx]
        best_pts = np.concatenate([best_pts, cand])
        best_vals = np.concatenate([best_vals, vals])
        if len(best_vals) > keep:
            idx = np.argpartition(best_vals, keep)[:keep]
            best_pts, best_vals = best_pts[idx], best_vals[idx]
    return best_pts


def _type_key(g, v) -> tuple[int, ...]:
    a, b, c, d = (int(x) for x in v)
    return (b + d, g.g2 - b + c, a + g.g4 - d, g.g1 - a + g.g3 - c)


def _select(g: GroupedData, found: dict, p: float, diagnostics: dict) -> LsSolution:
    best = min(found.values())
    tol = TIE_RTOL * max(1.0, abs(best))
    tied = sorted(
        (v for v, f in found.items() if f <= best + tol),
        key=lambda v: (_type_key(g, v), v),
    )
    mats = tuple(CountMatrix.from_splits(g, *v) for v in tied)
    n_hat = mats[0]
    return LsSolution(
        n_hat=n_hat,
        t_hat=n_hat.type_vector(),
        p_used=float(p),
        objective=objective_S(n_hat, p),
        ties=mats,
        diagnostics=diagnostics,
    )


def _solve_fixed(
    g: GroupedData,
    p: float,
    starts: np.ndarray,
    scan: bool = True,
) -> tuple[dict, dict]:
    found: dict[tuple[int, ...], float] = {}
    hi = _box(g)
    best_cont, best_cont_f = None, math.inf
    moves = 0
    for v0 in starts:
        v = _descend(v0, g, p)
        f_cont = _relaxed(v, g, p)[0]
        if f_cont < best_cont_f:
            best_cont, best_cont_f = v, f_cont
        nb = _neighbours(v, hi)
        vals = _objective_rows(nb, g, p)
        # Polish both the rounded relaxed optimum and the rounded start: at
        # small counts the integer optimum can sit on a face of the box far
        # from where the relaxation settles.
        for w0 in (nb[int(np.argmin(vals))], np.clip(np.rint(v0), 0, hi)):
            w, f, steps = _local_search(w0, g, p)
            moves += steps
            found[tuple(int(x) for x in w)] = f
    scanned = 0
    if scan and best_cont is not None:
        for w0 in _valley_scan(best_cont, g, p):
            w, f, steps = _local_search(w0, g, p)
            moves += steps
            scanned += 1
            found[tuple(int(x) for x in w)] = f
    diag = {
        "starts": int(len(starts)),
        "local_moves": moves,
        "valley_candidates": scanned,
        "relaxed_objective": float(best_cont_f),
    }
    return found, diag


def ls_estimate(
    g: GroupedData,
    p: float,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    scan: bool = True,
) -> LsSolution:
    """Minimise the least-squares objective over integer count matrices at fixed p.

    Starts are the no-defier baseline, the 16 corners of the split box and
    scrambled Sobol points (``restarts`` in total).  Each start is descended
    in the continuous relaxation (L-BFGS-B on the box) and rounded to its best
    neighbouring integer point; that point and the rounded start itself are
    polished by integer local search with steps of 1, 10, 100, ... in every
    {-1, 0, 1}^4 direction.  With ``scan`` the integer points along the
    error-preserving line through the best relaxed optimum are scanned and
    polished too.  Ties go to the lexicographically smallest type vector.
    """
    p = check_p(p)
    g.require_nonempty()
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    found, diag = _solve_fixed(g, p, _starts(g, restarts, seed), scan=scan)
    return _select(g, found, p, diag)


def optimal_p_for_splits(g: GroupedData, v, lo: float, hi: float) -> float:
    """Closed-form minimiser over p in [lo, hi] of the objective for fixed splits.

    With X_I, T_I the intervention count and size of subset I, the objective is
    (A - 2pB + p^2 C) / (p(1-p)) for A = sum X^2/T, B = sum X, C = sum T; its
    stationary points solve (C - 2B) p^2 + 2A p - A = 0.
    """
    t0, x0 = _offsets(g)
    v = np.asarray(v, dtype=float)
    T = _M @ (t0 + _TA @ v)
    X = _M @ (x0 + _XA @ v)
    live = T > 0
    A = float(np.sum(X[live] ** 2 / T[live]))
    B = float(np.sum(X[live]))
    C = float(np.sum(T[live]))
    qa, qb, qc = C - 2 * B, 2 * A, -A
    cands = [lo, hi]
    if abs(qa) < 1e-300:
        if qb != 0:
            cands.append(-qc / qb)
    else:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            sq = math.sqrt(disc)
            cands += [(-qb + sq) / (2 * qa), (-qb - sq) / (2 * qa)]
    cands = [q for q in cands if lo <= q <= hi]
    return min(cands, key=lambda q: (float(_objective_rows(v[None], g, q)[0]), q))


def ls_estimate_free_p(
    g: GroupedData,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    grid_points: int = 16,
    scan: bool = True,
) -> LsSolution:
    """Minimise the objective jointly over the splits and p.

    The outer problem is one-dimensional in p on [1/n, 1 - 1/n].  A coarse
    grid (plus the empirical fraction) brackets the minimum and golden-section
    search (scipy's bounded Brent) refines it; every probe re-solves the
    integer splits, warm-started from the best splits of the previous probe.
    The winner is re-solved from all starts, then p is set to its exact
    optimum for those splits.  Ties prefer p closest to the empirical fraction.
    """
    g.require_nonempty().require_both_arms()
    n = g.n
    lo, hi = 1.0 / n, 1.0 - 1.0 / n
    p_emp = g.empirical_p
    if not lo <= p_emp <= hi:
        lo, hi = min(lo, p_emp), max(hi, p_emp)
    starts = _starts(g, restarts, seed)
    warm = {"v": starts[:1]}
    probes = 0

    def inner(p: float) -> tuple[float, tuple[int, ...]]:
        nonlocal probes
        probes += 1
        found, _ = _solve_fixed(g, p, warm["v"], scan=False)
        v, f = min(found.items(), key=lambda kv: (kv[1], kv[0]))
        warm["v"] = np.array([v, *starts[:1]], dtype=float)
        return f, v

    grid = sorted(set(np.linspace(lo, hi, grid_points).tolist()) | {p_emp})
    scores = [inner(q)[0] for q in grid]
    k = min(range(len(grid)), key=lambda i: (scores[i], abs(grid[i] - p_emp)))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if b > a:
        opt = minimize_scalar(
            lambda q: inner(q)[0], bounds=(a, b), method="bounded",
            options={"xatol": 1e-3 / n},
        )
        p_star = float(opt.x)
    else:
        p_star = grid[k]

    candidates: dict[tuple[tuple[int, ...], float], float] = {}
    diag_all = {}
    for q in sorted({p_star, p_emp}):
        found, diag = _solve_fixed(g, q, starts, scan=scan)
        diag_all = diag
        for v, f in found.items():
            candidates[(v, q)] = f
            q_opt = optimal_p_for_splits(g, v, lo, hi)
            candidates[(v, q_opt)] = float(_objective_rows(np.array([v], float), g, q_opt)[0])

    best = min(candidates.values())
    tol = TIE_RTOL * max(1.0, abs(best))
    tied = [key for key, f in candidates.items() if f <= best + tol]
    tied.sort(key=lambda key: (abs(key[1] - p_emp), _type_key(g, key[0]), key[0], key[1]))
    v_best, p_used = tied[0]
    same_p = {v: candidates[(v, q)] for (v, q) in tied if q == p_used}
    diag = dict(diag_all)
    diag["p_probes"] = probes
    diag["p_empirical"] = p_emp
    return _select(g, same_p, p_used, diag)
