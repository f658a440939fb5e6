"""Named estimator configurations shared by the pipeline and the bootstrap."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .least_squares import DEFAULT_RESTARTS as LS_RESTARTS
from .least_squares import LsSolution, ls_estimate, ls_estimate_free_p
from .mle import DEFAULT_P_GRID, DEFAULT_RESTARTS as MLE_RESTARTS
from .mle import MleResult, mle_fixed_p, mle_profile_p
from .model import DesignParams, GroupedData, PMode, TypeVector


class EstimatorKind(str, enum.Enum):
    LS = "ls"
    MLE = "mle"


@dataclass(frozen=True)
class EstimatorConfig:
    kind: EstimatorKind = EstimatorKind.LS
    design: DesignParams = field(default_factory=lambda: DesignParams(mode=PMode.EMPIRICAL))
    restarts: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.restarts is not None and self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")

    @property
    def name(self) -> str:
        mode = self.design.mode.value
        if self.design.mode is PMode.FIXED:
            mode = f"fixed={self.design.p:g}"
        return f"{self.kind.value}[{mode}]"

    def with_fixed_p(self, p: float) -> EstimatorConfig:
        return EstimatorConfig(self.kind, DesignParams(p=p, mode=PMode.FIXED), self.restarts)


@dataclass(frozen=True)
class Estimate:
    t_hat: TypeVector
    p_used: float
    value: float
    result: LsSolution | MleResult = field(repr=False)


def run_estimator(cfg: EstimatorConfig, g: GroupedData, seed: int = 0) -> Estimate:
    """Resolve p per ``cfg.design`` and run the selected estimator on ``g``.

    ``value`` is the least-squares objective or the log-likelihood.
    """
    g.require_nonempty()
    p = cfg.design.resolve(g)
    if cfg.kind is EstimatorKind.LS:
        restarts = cfg.restarts or LS_RESTARTS
        if p is None:
            res = ls_estimate_free_p(g, seed=seed, restarts=restarts)
        else:
            res = ls_estimate(g, p, seed=seed, restarts=restarts)
        return Estimate(res.t_hat, res.p_used, res.objective, res)
    restarts = cfg.restarts or MLE_RESTARTS
    if p is None:
        res = mle_profile_p(g, DEFAULT_P_GRID, seed=seed, restarts=restarts, refine=True)
    else:
        res = mle_fixed_p(g, p, seed=seed, restarts=restarts)
    return Estimate(res.t_hat, res.p_used, res.log_likelihood, res)
