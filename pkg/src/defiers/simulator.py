"""Draw grouped data from the Bernoulli assignment model.

Binomial draws come from numpy's ``Generator.binomial`` on a PCG64 stream,
which uses inversion for small n*p and the BTPE accept-reject algorithm
otherwise, so results are reproducible for a given seed and numpy version.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CONTROL_CELL,
    INTERVENTION_CELL,
    CountMatrix,
    GroupedData,
    TypeVector,
    check_p,
    grouped_from_intervention_counts,
)


@dataclass(frozen=True)
class SimConfig:
    t: TypeVector
    p: float
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p", check_p(self.p, closed=True))
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")


def _draw(t: TypeVector, p: float, rng: np.random.Generator) -> CountMatrix:
    k = rng.binomial(np.array(tuple(t), dtype=np.int64), p)
    m = np.zeros((4, 4), dtype=np.int64)
    for i, (ti, ki) in enumerate(zip(t, k)):
        m[i, INTERVENTION_CELL[i]] = ki
        m[i, CONTROL_CELL[i]] = ti - ki
    return CountMatrix(m)


def simulate_once(t: TypeVector, p: float, seed: int) -> CountMatrix:
    """One randomization: each type's intervention count is Binomial(t_i, p)."""
    p = check_p(p, closed=True)
    return _draw(t, p, np.random.default_rng(seed))


def replication_seeds(seed: int, replications: int) -> list[np.random.SeedSequence]:
    """Independent per-replication seed sequences derived from one seed."""
    return np.random.SeedSequence(seed).spawn(replications)


def simulate_matrices(cfg: SimConfig) -> list[CountMatrix]:
    return [
        _draw(cfg.t, cfg.p, np.random.default_rng(ss))
        for ss in replication_seeds(cfg.seed, cfg.replications)
    ]


def simulate_grouped(cfg: SimConfig) -> list[GroupedData]:
    """Column sums of ``cfg.replications`` independent draws, in replication order.

    Same draws as ``simulate_matrices``, without building the matrices.
    """
    t = np.array(tuple(cfg.t), dtype=np.int64)
    out = []
    for ss in replication_seeds(cfg.seed, cfg.replications):
        k = np.random.default_rng(ss).binomial(t, cfg.p)
        out.append(GroupedData(*(int(v) for v in grouped_from_intervention_counts(t, k))))
    return out
