"""First-stage estimate and the strata shares implied by monotonicity (no defiers)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import GroupedData, TypeVector


class MonotonicityWarning(UserWarning):
    """The first stage is negative, so a no-defier decomposition is untenable."""


@dataclass(frozen=True)
class BaselineShares:
    first_stage: float
    never_share: float
    defier_share: float
    complier_share: float
    always_share: float
    p_empirical: float
    monotonicity_violated: bool = False

    def shares(self) -> tuple[float, float, float, float]:
        return (self.never_share, self.defier_share, self.complier_share, self.always_share)


def first_stage(g: GroupedData) -> float:
    """Treated fraction in the intervention arm minus treated fraction in control."""
    g.require_both_arms()
    return g.g1 / (g.g1 + g.g2) - g.g3 / (g.g3 + g.g4)


def monotonicity_shares(g: GroupedData) -> BaselineShares:
    """Never/complier/always shares when defiers are ruled out.

    Always takers are estimated from the treated fraction of the control arm
    and never takers from the untreated fraction of the intervention arm;
    compliers are the remainder, which equals the first stage.  A negative
    first stage is flagged (and warned about) rather than raised.
    """
    fs = first_stage(g)
    violated = fs < 0
    if violated:
        warnings.warn(
            f"first stage {fs:.4f} is negative; monotonicity shares are not valid",
            MonotonicityWarning,
            stacklevel=2,
        )
    return BaselineShares(
        first_stage=fs,
        never_share=g.g2 / (g.g1 + g.g2),
        defier_share=0.0,
        complier_share=fs,
        always_share=g.g3 / (g.g3 + g.g4),
        p_empirical=g.empirical_p,
        monotonicity_violated=violated,
    )


def largest_remainder(shares, n: int) -> tuple[int, ...]:
    """Round nonnegative shares times n to integers summing to n.

    Negative shares are clipped to zero and the rest renormalised.  Remainders
    are awarded in decreasing order of fractional part, lowest index first on ties.
    """
    w = np.clip(np.asarray(shares, dtype=float), 0.0, None)
    total = w.sum()
    if n == 0:
        return tuple(0 for _ in w)
    if total <= 0:
        raise ValueError("at least one share must be positive")
    quotas = w / total * n
    base = np.floor(quotas).astype(int)
    short = n - int(base.sum())
    frac = quotas - base
    order = sorted(range(len(w)), key=lambda i: (-frac[i], i))
    for i in order[:short]:
        base[i] += 1
    return tuple(int(v) for v in base)


def baseline_type_vector(g: GroupedData) -> TypeVector:
    """Integer starting point on the simplex from the monotonicity shares."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MonotonicityWarning)
        if g.n_intervention == 0 or g.n_control == 0:
            # Degenerate design: fall back to an even split.
            return TypeVector.of(largest_remainder([1, 1, 1, 1], g.n))
        b = monotonicity_shares(g)
    shares = b.shares()
    if b.monotonicity_violated:
        # Mirror image: rule out compliers instead of defiers.
        shares = (g.g4 / g.n_control, -b.first_stage, 0.0, g.g1 / g.n_intervention)
    return TypeVector.of(largest_remainder(shares, g.n))
