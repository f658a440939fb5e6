"""Bootstrap standard errors for the type-count estimators.

Each individual's data is just its (Z, D) cell, so resampling individuals
with replacement is a multinomial draw over the four observed cells.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .estimators import EstimatorConfig, run_estimator
from .model import GroupedData, PMode

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.10


@dataclass(frozen=True)
class BootstrapReport:
    estimator: str
    replications: int
    seed: int
    se_t: tuple[float, float, float, float]
    se_shares: tuple[float, float, float, float]
    se_p: float
    failures: int
    reestimate_p: bool = True
    estimates: tuple | None = None

    def to_dict(self) -> dict:
        out = {
            "estimator": self.estimator,
            "replications": self.replications,
            "seed": self.seed,
            "reestimate_p": self.reestimate_p,
            "failures": self.failures,
            "se_t": list(self.se_t),
            "se_shares": list(self.se_shares),
            "se_p": self.se_p,
        }
        if self.estimates is not None:
            out["estimates"] = [
                {"replication": i, "t_hat": list(t), "p_used": p} for i, t, p in self.estimates
            ]
        return out


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def resample(g: GroupedData, seed) -> GroupedData:
    """Draw n individuals with replacement; returns the resampled cell counts."""
    g.require_nonempty()
    counts = _rng(seed).multinomial(g.n, np.array(tuple(g), dtype=float) / g.n)
    return GroupedData.of(int(c) for c in counts)


def bootstrap_se(
    g: GroupedData,
    estimator: EstimatorConfig,
    replications: int = 1000,
    seed: int = 0,
    reestimate_p: bool = True,
    keep_estimates: bool = False,
) -> BootstrapReport:
    """Standard deviations of the estimator across bootstrap resamples.

    Replication i resamples with, and seeds the estimator from, the i-th
    child of ``SeedSequence(seed)``, so results do not depend on the order in
    which replications run.  With ``reestimate_p=False`` an empirical or
    estimated p is frozen at the full-sample empirical fraction.  Replications
    whose estimator raises are excluded; more than 10% of them failing is an
    error.
    """
    if replications < 2:
        raise ValueError(f"bootstrap needs at least 2 replications, got {replications}")
    g.require_nonempty()
    cfg = estimator
    if not reestimate_p and cfg.design.mode is not PMode.FIXED:
        cfg = cfg.with_fixed_p(g.require_both_arms().empirical_p)

    rows: list[tuple[int, tuple[int, ...], float]] = []
    failures = 0
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(replications)):
        resample_seq, estimator_seq = ss.spawn(2)
        gb = resample(g, resample_seq)
        est_seed = int(estimator_seq.generate_state(1)[0])
        try:
            est = run_estimator(cfg, gb, seed=est_seed)
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            failures += 1
            log.warning("replication %d failed on %s: %s", i, tuple(gb), exc)
            continue
        rows.append((i, tuple(est.t_hat), float(est.p_used)))
        log.debug("replication %d: t=%s p=%.6f", i, tuple(est.t_hat), est.p_used)

    if failures > MAX_FAILURE_RATE * replications:
        raise RuntimeError(
            f"{failures} of {replications} bootstrap replications failed "
            f"(ceiling {MAX_FAILURE_RATE:.0%})"
        )
    if len(rows) < 2:
        raise RuntimeError("fewer than two successful replications")

    rows.sort(key=lambda r: r[0])
    t = np.array([r[1] for r in rows], dtype=float)
    p = np.array([r[2] for r in rows])
    se_t = t.std(axis=0, ddof=1)
    se_shares = (t / g.n).std(axis=0, ddof=1)
    return BootstrapReport(
        estimator=estimator.name,
        replications=replications,
        seed=seed,
        se_t=tuple(float(v) for v in se_t),
        se_shares=tuple(float(v) for v in se_shares),
        se_p=float(p.std(ddof=1)),
        failures=failures,
        reestimate_p=reestimate_p,
        estimates=tuple(rows) if keep_estimates else None,
    )
