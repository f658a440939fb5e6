"""Brute-force reference computations, kept independent of the package internals."""

from __future__ import annotations

import itertools
import math

import numpy as np


def assignment_probability(t, g, p) -> float:
    """P(G = g) by walking all 2^n individual assignment vectors."""
    types = [i for i, ti in enumerate(t) for _ in range(ti)]
    total = 0.0
    for z in itertools.product((0, 1), repeat=len(types)):
        cells = [0, 0, 0, 0]
        for i, zi in zip(types, z):
            treated = (i == 3) or (i == 2 and zi == 1) or (i == 1 and zi == 0)
            col = (0 if treated else 1) if zi else (2 if treated else 3)
            cells[col] += 1
        if tuple(cells) == tuple(g):
            ones = sum(z)
            total += p**ones * (1 - p) ** (len(z) - ones)
    return total


def binomial_convolution_probability(t, g, p) -> float:
    """P(G = g) summing over all per-type intervention counts."""
    total = 0.0
    t1, t2, t3, t4 = t
    for k in itertools.product(*(range(ti + 1) for ti in t)):
        k1, k2, k3, k4 = k
        cells = (k3 + k4, k1 + k2, t2 - k2 + t4 - k4, t1 - k1 + t3 - k3)
        if cells == tuple(g):
            w = 1.0
            for ti, ki in zip(t, k):
                w *= math.comb(ti, ki) * p**ki * (1 - p) ** (ti - ki)
            total += w
    return total


def all_count_matrices(g):
    """Every feasible 4x4 matrix with column sums g, as an (m, 4, 4) array."""
    g1, g2, g3, g4 = g
    grids = np.meshgrid(*(np.arange(x + 1) for x in g), indexing="ij")
    a, b, c, d = (x.ravel() for x in grids)
    N = np.zeros((len(a), 4, 4), dtype=np.int64)
    N[:, 2, 0], N[:, 3, 0] = a, g1 - a
    N[:, 0, 1], N[:, 1, 1] = b, g2 - b
    N[:, 1, 2], N[:, 3, 2] = c, g3 - c
    N[:, 0, 3], N[:, 2, 3] = d, g4 - d
    return N


def ls_objectives(N, p):
    """The least-squares objective for each matrix in an (m, 4, 4) stack."""
    t = N.sum(axis=2).astype(float)
    x = (N[:, :, 0] + N[:, :, 1]).astype(float)
    total = np.zeros(len(N))
    for k in range(1, 5):
        for s in itertools.combinations(range(4), k):
            s = list(s)
            mass = t[:, s].sum(axis=1)
            err = x[:, s].sum(axis=1) - p * mass
            safe = np.where(mass > 0, mass, 1.0)
            total += np.where(mass > 0, err**2 / (p * (1 - p) * safe), 0.0)
    return total


def ls_brute_minimum(g, p):
    """(minimum objective, type vectors attaining it) over all feasible matrices."""
    N = all_count_matrices(g)
    s = ls_objectives(N, p)
    best = s.min()
    hit = np.flatnonzero(s <= best + 1e-12 * max(1.0, best))
    types = sorted({tuple(int(v) for v in N[i].sum(axis=1)) for i in hit})
    return float(best), types


def mle_brute(g, p):
    """(max probability, maximising type vectors) over the simplex, in linear space."""
    n = sum(g)
    best, arg = -1.0, []
    for t1 in range(n + 1):
        for t2 in range(n - t1 + 1):
            for t3 in range(n - t1 - t2 + 1):
                t = (t1, t2, t3, n - t1 - t2 - t3)
                pr = binomial_convolution_probability(t, g, p)
                if pr > best * (1 + 1e-9):
                    best, arg = pr, [t]
                elif pr >= best * (1 - 1e-9) and pr > 0:
                    arg.append(t)
    return best, sorted(arg)
